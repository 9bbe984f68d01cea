#include "mmlab/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mmlab/rng.hpp"

namespace mmlab::synthgen {

namespace {

constexpr char kDataMagic[4] = {'M', 'M', 'L', 'Z'};
constexpr char kSplitMagic[4] = {'M', 'M', 'S', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

void fill_gaussian(Rng& rng, std::vector<double>& v) {
    double g0, g1;
    std::size_t i = 0;
    for (; i + 2 <= v.size(); i += 2) {
        rng.gaussian_pair(g0, g1);
        v[i] = g0;
        v[i + 1] = g1;
    }
    if (i < v.size()) {
        rng.gaussian_pair(g0, g1);
        v[i] = g0;  // second value of the pair discarded
    }
}

void normalize_unit(std::vector<double>& v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double norm = std::sqrt(ss);
    if (norm == 0.0) throw std::runtime_error("synthgen: zero-norm latent vector");
    for (double& x : v) x /= norm;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> sample_projection(Rng& rng, std::int64_t rows, std::int64_t cols) {
    std::vector<double> p(static_cast<std::size_t>(rows * cols));
    for (double& v : p) v = rng.uniform(-0.5, 0.5);
    return p;
}

void project_row(const std::vector<double>& p, std::int64_t rows, std::int64_t cols,
                 const std::vector<double>& x, float* out) {
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* prow = p.data() + r * cols;
        for (std::int64_t c = 0; c < cols; ++c) s += prow[c] * x[static_cast<std::size_t>(c)];
        out[r] = static_cast<float>(s);
    }
}

struct GenState {
    Rng rng;
    std::vector<double> p1, p2, z;
    std::vector<double> x, x1, x2;
    explicit GenState(const GenConfig& cfg)
        : rng(cfg.seed),
          z(static_cast<std::size_t>(cfg.d)),
          x(static_cast<std::size_t>(cfg.d)),
          x1(static_cast<std::size_t>(cfg.d)),
          x2(static_cast<std::size_t>(cfg.d)) {
        p1 = sample_projection(rng, cfg.d1, cfg.d);
        p2 = sample_projection(rng, cfg.d2, cfg.d);
    }
    void draw_unit(std::vector<double>& v) {
        fill_gaussian(rng, v);
        normalize_unit(v);
    }
};

[[noreturn]] void rejection_abort(const char* where, std::int64_t draws) {
    throw std::runtime_error(std::string("synthgen: rejection cap exceeded in ") + where +
                             " after " + std::to_string(draws) + " draws");
}

SyntheticDataset gen_alpha(const GenConfig& cfg) {
    SyntheticDataset ds;
    ds.n_classes = 2;
    ds.meta = cfg;
    ds.x1 = Matrix(cfg.n, cfg.d1);
    ds.x2 = Matrix(cfg.n, cfg.d2);
    ds.labels.resize(static_cast<std::size_t>(cfg.n));

    GenState st(cfg);
    st.draw_unit(st.z);
    for (std::int64_t i = 0; i < cfg.n; ++i) {
        std::int64_t attempts = 0;
        double dz;
        do {
            if (++attempts > kPerSampleRejectionCap) rejection_abort("gen_alpha", ds.total_draws);
            ++ds.total_draws;
            st.draw_unit(st.x);
            dz = dot(st.x, st.z);
        } while (std::abs(dz) <= 0.1);
        ++ds.accepted;
        project_row(st.p1, cfg.d1, cfg.d, st.x, ds.x1.row(i));
        project_row(st.p2, cfg.d2, cfg.d, st.x, ds.x2.row(i));
        ds.labels[static_cast<std::size_t>(i)] = dz > 0.1 ? 1u : 0u;
    }
    return ds;
}

SyntheticDataset gen_beta(const GenConfig& cfg) {
    SyntheticDataset ds;
    ds.n_classes = 2;
    ds.meta = cfg;
    ds.x1 = Matrix(cfg.n, cfg.d1);
    ds.x2 = Matrix(cfg.n, cfg.d2);
    ds.labels.resize(static_cast<std::size_t>(cfg.n));

    GenState st(cfg);
    for (std::int64_t i = 0; i < cfg.n; ++i) {
        double dd;
        do {
            if (ds.total_draws >= kTotalDrawCap) rejection_abort("gen_beta", ds.total_draws);
            ++ds.total_draws;
            st.draw_unit(st.x1);
            st.draw_unit(st.x2);
            dd = dot(st.x1, st.x2);
        } while (std::abs(dd) <= 0.25);
        ++ds.accepted;
        project_row(st.p1, cfg.d1, cfg.d, st.x1, ds.x1.row(i));
        project_row(st.p2, cfg.d2, cfg.d, st.x2, ds.x2.row(i));
        ds.labels[static_cast<std::size_t>(i)] = dd > 0.25 ? 1u : 0u;
    }
    return ds;
}

SyntheticDataset gen_gamma(const GenConfig& cfg) {
    constexpr std::int64_t kPhase1 = 2500;
    constexpr std::int64_t kPhase2 = 5000;
    constexpr std::int64_t kTotal = kPhase1 + kPhase2;

    SyntheticDataset ds;
    ds.n_classes = 3;
    ds.meta = cfg;
    ds.meta.n = kTotal;
    ds.x1 = Matrix(kTotal, cfg.d1);
    ds.x2 = Matrix(kTotal, cfg.d2);
    ds.labels.resize(static_cast<std::size_t>(kTotal));

    GenState st(cfg);
    st.draw_unit(st.z);

    // phase 1: x.z >= 0.1, label 0, same latent projected into both modalities
    for (std::int64_t i = 0; i < kPhase1; ++i) {
        std::int64_t attempts = 0;
        do {
            if (++attempts > kPerSampleRejectionCap) rejection_abort("gen_gamma/1", ds.total_draws);
            ++ds.total_draws;
            st.draw_unit(st.x);
        } while (dot(st.x, st.z) < 0.1);
        ++ds.accepted;
        project_row(st.p1, cfg.d1, cfg.d, st.x, ds.x1.row(i));
        project_row(st.p2, cfg.d2, cfg.d, st.x, ds.x2.row(i));
        ds.labels[static_cast<std::size_t>(i)] = 0;
    }

    // phase 2: both latents on the far side of z, label by the sign of
    // x1.x2 at the 0.25 threshold
    std::int64_t row = kPhase1;
    std::int64_t n1 = 0, n2 = 0;
    const std::int64_t per_class = kPhase2 / 2;
    while (row < kTotal) {
        if (ds.total_draws >= kTotalDrawCap) rejection_abort("gen_gamma/2", ds.total_draws);
        ++ds.total_draws;
        st.draw_unit(st.x1);
        st.draw_unit(st.x2);
        if (dot(st.x1, st.z) > -0.1 || dot(st.x2, st.z) > -0.1) continue;
        const double dd = dot(st.x1, st.x2);
        if (std::abs(dd) <= 0.25) continue;
        const std::uint32_t y = dd > 0.25 ? 2u : 1u;
        if (cfg.gamma_balanced) {
            if (y == 1 && n1 >= per_class) continue;
            if (y == 2 && n2 >= per_class) continue;
        }
        (y == 1 ? n1 : n2) += 1;
        ++ds.accepted;
        project_row(st.p1, cfg.d1, cfg.d, st.x1, ds.x1.row(row));
        project_row(st.p2, cfg.d2, cfg.d, st.x2, ds.x2.row(row));
        ds.labels[static_cast<std::size_t>(row)] = y;
        ++row;
    }
    return ds;
}

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& f, T& v, const char* what) {
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error(std::string("synthgen: truncated file (") + what + ")");
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Alpha: return "alpha";
        case Variant::Beta: return "beta";
        case Variant::Gamma: return "gamma";
    }
    return "?";
}

void GenConfig::validate() const {
    if (d1 <= 0 || d2 <= 0 || d <= 0 || n <= 0)
        throw std::invalid_argument("GenConfig: dimensions and N must be positive");
}

void SyntheticDataset::check_invariants() const {
    const auto n_rows = static_cast<std::int64_t>(labels.size());
    if (x1.rows() != n_rows || x2.rows() != n_rows)
        throw std::runtime_error("dataset: row count mismatch between X1, X2, labels");
    for (std::uint32_t y : labels)
        if (y >= n_classes) throw std::runtime_error("dataset: label out of range");
    if (meta.variant == Variant::Gamma) {
        std::int64_t zeros = 0, rest = 0;
        for (std::uint32_t y : labels) (y == 0 ? zeros : rest) += 1;
        if (zeros != 2500 || rest != 5000)
            throw std::runtime_error("dataset: gamma must have exactly 2500 zeros and 5000 others");
    }
}

SyntheticDataset generate(const GenConfig& cfg) {
    cfg.validate();
    SyntheticDataset ds;
    switch (cfg.variant) {
        case Variant::Alpha: ds = gen_alpha(cfg); break;
        case Variant::Beta: ds = gen_beta(cfg); break;
        case Variant::Gamma: ds = gen_gamma(cfg); break;
    }
    ds.check_invariants();
    return ds;
}

std::vector<std::uint32_t> SplitSpec::train_indices() const {
    std::vector<bool> is_test(static_cast<std::size_t>(n_total), false);
    for (std::uint32_t i : test_indices) is_test[i] = true;
    std::vector<std::uint32_t> out;
    out.reserve(static_cast<std::size_t>(n_total) - test_indices.size());
    for (std::int64_t i = 0; i < n_total; ++i)
        if (!is_test[static_cast<std::size_t>(i)]) out.push_back(static_cast<std::uint32_t>(i));
    return out;
}

SplitSpec split(const SyntheticDataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    const std::int64_t n = ds.n();
    std::vector<std::uint32_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0u);
    Rng rng(seed);
    for (std::int64_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    const auto n_train = static_cast<std::int64_t>(std::ceil(train_fraction * static_cast<double>(n)));
    SplitSpec sp;
    sp.train_fraction = train_fraction;
    sp.n_total = n;
    sp.test_indices.assign(perm.begin() + n_train, perm.end());
    std::sort(sp.test_indices.begin(), sp.test_indices.end());
    return sp;
}

void save(const SyntheticDataset& ds, const std::string& path) {
    ds.check_invariants();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("synthgen: cannot open for write: " + path);
    f.write(kDataMagic, 4);
    write_pod(f, kFormatVersion);
    write_pod(f, static_cast<std::uint8_t>(ds.meta.variant));
    write_pod(f, ds.n_classes);
    write_pod(f, static_cast<std::uint32_t>(ds.n()));
    write_pod(f, static_cast<std::uint32_t>(ds.x1.cols()));
    write_pod(f, static_cast<std::uint32_t>(ds.x2.cols()));
    write_pod(f, ds.meta.seed);
    f.write(reinterpret_cast<const char*>(ds.x1.data()), ds.x1.size() * 4);
    f.write(reinterpret_cast<const char*>(ds.x2.data()), ds.x2.size() * 4);
    f.write(reinterpret_cast<const char*>(ds.labels.data()),
            static_cast<std::streamsize>(ds.labels.size() * 4));
    if (!f) throw std::runtime_error("synthgen: write failed: " + path);

    nlohmann::json j;
    j["variant"] = variant_name(ds.meta.variant);
    j["d1"] = ds.meta.d1;
    j["d2"] = ds.meta.d2;
    j["d"] = ds.meta.d;
    j["n"] = ds.n();
    j["seed"] = ds.meta.seed;
    j["n_classes"] = ds.n_classes;
    j["gamma_balanced"] = ds.meta.gamma_balanced;
    j["generator_version"] = ds.generator_version;
    j["acceptance_rate"] = ds.acceptance_rate();
    j["total_draws"] = ds.total_draws;
    std::ofstream sidecar(path + ".json");
    sidecar << j.dump(2) << "\n";
}

SyntheticDataset load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("synthgen: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kDataMagic, 4) != 0)
        throw std::runtime_error("synthgen: bad magic in " + path);
    std::uint32_t version;
    read_pod(f, version, "version");
    if (version != kFormatVersion)
        throw std::runtime_error("synthgen: unsupported format version in " + path);

    SyntheticDataset ds;
    std::uint8_t variant;
    std::uint32_t n, d1, d2;
    read_pod(f, variant, "variant");
    if (variant > 2) throw std::runtime_error("synthgen: unknown variant in " + path);
    read_pod(f, ds.n_classes, "n_classes");
    read_pod(f, n, "N");
    read_pod(f, d1, "d1");
    read_pod(f, d2, "d2");
    read_pod(f, ds.meta.seed, "seed");
    ds.meta.variant = static_cast<Variant>(variant);
    ds.meta.d1 = d1;
    ds.meta.d2 = d2;
    ds.meta.n = n;

    ds.x1 = Matrix(n, d1);
    ds.x2 = Matrix(n, d2);
    ds.labels.resize(n);
    f.read(reinterpret_cast<char*>(ds.x1.data()), ds.x1.size() * 4);
    if (!f) throw std::runtime_error("synthgen: truncated file (X1) in " + path);
    f.read(reinterpret_cast<char*>(ds.x2.data()), ds.x2.size() * 4);
    if (!f) throw std::runtime_error("synthgen: truncated file (X2) in " + path);
    f.read(reinterpret_cast<char*>(ds.labels.data()), static_cast<std::streamsize>(ds.labels.size() * 4));
    if (!f) throw std::runtime_error("synthgen: truncated file (labels) in " + path);

    ds.check_invariants();
    return ds;
}

void save_split(const SplitSpec& sp, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("synthgen: cannot open for write: " + path);
    f.write(kSplitMagic, 4);
    write_pod(f, kFormatVersion);
    write_pod(f, static_cast<std::uint32_t>(sp.n_total));
    write_pod(f, static_cast<std::uint32_t>(sp.test_indices.size()));
    f.write(reinterpret_cast<const char*>(sp.test_indices.data()),
            static_cast<std::streamsize>(sp.test_indices.size() * 4));
    if (!f) throw std::runtime_error("synthgen: write failed: " + path);
}

SplitSpec load_split(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("synthgen: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kSplitMagic, 4) != 0)
        throw std::runtime_error("synthgen: bad magic in " + path);
    std::uint32_t version, n, n_test;
    read_pod(f, version, "version");
    read_pod(f, n, "N");
    read_pod(f, n_test, "n_test");
    SplitSpec sp;
    sp.n_total = n;
    sp.test_indices.resize(n_test);
    f.read(reinterpret_cast<char*>(sp.test_indices.data()), static_cast<std::streamsize>(n_test * 4));
    if (!f) throw std::runtime_error("synthgen: truncated file (indices) in " + path);
    for (std::size_t i = 0; i < sp.test_indices.size(); ++i) {
        if (sp.test_indices[i] >= n) throw std::runtime_error("synthgen: split index out of range");
        if (i > 0 && sp.test_indices[i] <= sp.test_indices[i - 1])
            throw std::runtime_error("synthgen: split indices not strictly increasing");
    }
    sp.train_fraction = n > 0 ? 1.0 - static_cast<double>(n_test) / static_cast<double>(n) : 0.8;
    return sp;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::uint32_t>& idx) {
    Matrix out(static_cast<std::int64_t>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= static_cast<std::uint32_t>(m.rows()))
            throw std::out_of_range("gather_rows: index out of range");
        std::memcpy(out.row(static_cast<std::int64_t>(i)), m.row(idx[i]),
                    static_cast<std::size_t>(m.cols()) * sizeof(float));
    }
    return out;
}

std::vector<std::uint32_t> gather_labels(const std::vector<std::uint32_t>& labels,
                                         const std::vector<std::uint32_t>& idx) {
    std::vector<std::uint32_t> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels.at(idx[i]);
    return out;
}

}  // namespace mmlab::synthgen
