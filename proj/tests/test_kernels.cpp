#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "mmlab/kernels.hpp"
#include "mmlab/rng.hpp"

using namespace mmlab;
using namespace mmlab::kernels;

namespace {

std::vector<float> randn(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (std::size_t i = 0; i + 1 < n; i += 2) {
        double g0, g1;
        rng.gaussian_pair(g0, g1);
        v[i] = static_cast<float>(g0);
        v[i + 1] = static_cast<float>(g1);
    }
    if (n % 2) {
        double g0, g1;
        rng.gaussian_pair(g0, g1);
        v[n - 1] = static_cast<float>(g0);
    }
    return v;
}

// worst |a-b| relative to the magnitude of the reference entry (floored at
// 1 so near-cancelled entries compare absolutely)
double max_rel_diff(const std::vector<float>& a, const std::vector<float>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double den = std::max(1.0, std::fabs(static_cast<double>(b[i])));
        worst = std::max(worst, std::fabs(static_cast<double>(a[i]) - b[i]) / den);
    }
    return worst;
}

// f32 accumulation error grows with the reduction length
double matmul_tol(std::int64_t k) { return 1e-6 * std::sqrt(static_cast<double>(k)) * 40.0; }

struct ShapeCase {
    std::int64_t n, k, m;
};

const ShapeCase kShapes[] = {
    {1, 1, 1},   {2, 3, 5},    {7, 13, 9},  {12, 32, 16}, {13, 33, 31},
    {24, 64, 48}, {37, 100, 3}, {5, 1, 17},  {100, 200, 33}, {257, 129, 65},
};

void check_backend_matches_scalar(Backend b) {
    if (b == Backend::Avx2 && !detail::avx2_supported()) return;
    if (b == Backend::Avx512 && !detail::avx512_supported()) return;
    for (const auto& s : kShapes) {
        const auto a = randn(static_cast<std::size_t>(s.n * s.k), 10 + s.n);
        const auto bt = randn(static_cast<std::size_t>(s.m * s.k), 20 + s.m);
        const auto bn = randn(static_cast<std::size_t>(s.k * s.m), 30 + s.k);
        std::vector<float> ref(static_cast<std::size_t>(s.n * s.m)), got(ref.size());

        force_backend(Backend::Scalar);
        matmul_nt(a.data(), bt.data(), ref.data(), s.n, s.k, s.m);
        force_backend(b);
        matmul_nt(a.data(), bt.data(), got.data(), s.n, s.k, s.m);
        CHECK(max_rel_diff(got, ref) < matmul_tol(s.k));

        force_backend(Backend::Scalar);
        matmul_nn(a.data(), bn.data(), ref.data(), s.n, s.k, s.m);
        force_backend(b);
        matmul_nn(a.data(), bn.data(), got.data(), s.n, s.k, s.m);
        CHECK(max_rel_diff(got, ref) < matmul_tol(s.k));

        // tn: reduction runs over n (the sample axis)
        const auto g = randn(static_cast<std::size_t>(s.n * s.m), 40 + s.m);
        std::vector<float> ref2(static_cast<std::size_t>(s.m * s.k)), got2(ref2.size());
        force_backend(Backend::Scalar);
        matmul_tn(g.data(), a.data(), ref2.data(), s.n, s.m, s.k);
        force_backend(b);
        matmul_tn(g.data(), a.data(), got2.data(), s.n, s.m, s.k);
        CHECK(max_rel_diff(got2, ref2) < matmul_tol(s.n));
    }
    force_backend(Backend::Scalar);
}

}  // namespace

TEST_CASE("backend forcing and naming") {
    const Backend orig = active_backend();
    force_backend(Backend::Scalar);
    CHECK(active_backend() == Backend::Scalar);
    CHECK(std::strcmp(backend_name(), "scalar") == 0);
    if (detail::avx2_supported()) {
        force_backend(Backend::Avx2);
        CHECK(std::strcmp(backend_name(), "avx2") == 0);
    }
    if (detail::avx512_supported()) {
        force_backend(Backend::Avx512);
        CHECK(std::strcmp(backend_name(), "avx512") == 0);
    }
    force_backend(orig);
}

TEST_CASE("avx2 matmuls match scalar within f32-accumulation tolerance") {
    check_backend_matches_scalar(Backend::Avx2);
}

TEST_CASE("avx512 matmuls match scalar within f32-accumulation tolerance") {
    check_backend_matches_scalar(Backend::Avx512);
}

TEST_CASE("each backend is bit-deterministic across repeated calls") {
    for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Avx512}) {
        if (b == Backend::Avx2 && !detail::avx2_supported()) continue;
        if (b == Backend::Avx512 && !detail::avx512_supported()) continue;
        force_backend(b);
        const std::int64_t n = 33, k = 65, m = 47;
        const auto a = randn(static_cast<std::size_t>(n * k), 1);
        const auto bm = randn(static_cast<std::size_t>(m * k), 2);
        std::vector<float> c1(static_cast<std::size_t>(n * m)), c2(c1.size());
        matmul_nt(a.data(), bm.data(), c1.data(), n, k, m);
        matmul_nt(a.data(), bm.data(), c2.data(), n, k, m);
        CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * 4) == 0);
    }
    force_backend(Backend::Scalar);
}

TEST_CASE("row partitioning does not change results bitwise") {
    // the threaded driver splits rows and calls the per-backend op on each
    // slice; emulate arbitrary splits and compare with the whole-range call
    for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Avx512}) {
        if (b == Backend::Avx2 && !detail::avx2_supported()) continue;
        if (b == Backend::Avx512 && !detail::avx512_supported()) continue;
        const detail::Ops& ops = b == Backend::Scalar ? detail::scalar_ops()
                               : b == Backend::Avx2   ? detail::avx2_ops()
                                                      : detail::avx512_ops();
        const std::int64_t n = 53, k = 70, m = 39;
        const auto a = randn(static_cast<std::size_t>(n * k), 3);
        const auto bm = randn(static_cast<std::size_t>(m * k), 4);
        std::vector<float> whole(static_cast<std::size_t>(n * m)), parts(whole.size());
        ops.matmul_nt(a.data(), bm.data(), whole.data(), n, k, m);
        const std::int64_t cuts[] = {0, 1, 7, 24, 52, 53};
        for (std::size_t i = 0; i + 1 < std::size(cuts); ++i) {
            const std::int64_t lo = cuts[i], hi = cuts[i + 1];
            ops.matmul_nt(a.data() + lo * k, bm.data(), parts.data() + lo * m, hi - lo, k, m);
        }
        CHECK(std::memcmp(whole.data(), parts.data(), whole.size() * 4) == 0);
    }
}

TEST_CASE("dot accumulates in f64") {
    // alternating large/small magnitudes would collapse under f32 sums
    const std::int64_t n = 4097;
    std::vector<float> a(n), b(n);
    long double want = 0.0L;
    Rng rng(9);
    for (std::int64_t i = 0; i < n; ++i) {
        a[i] = static_cast<float>(rng.uniform(-1.0, 1.0)) * ((i % 2) ? 1e4f : 1e-4f);
        b[i] = static_cast<float>(rng.uniform(-1.0, 1.0)) * ((i % 2) ? 1e-4f : 1e4f);
        want += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
    }
    for (Backend bk : {Backend::Scalar, Backend::Avx2, Backend::Avx512}) {
        if (bk == Backend::Avx2 && !detail::avx2_supported()) continue;
        if (bk == Backend::Avx512 && !detail::avx512_supported()) continue;
        force_backend(bk);
        const double got = dot(a.data(), b.data(), n);
        CHECK(std::fabs(got - static_cast<double>(want)) <
              1e-9 * std::fabs(static_cast<double>(want)) + 1e-12);
    }
    force_backend(Backend::Scalar);
}

TEST_CASE("elementwise kernels agree across backends") {
    const std::int64_t n = 1003;  // odd to exercise tails
    const auto x = randn(static_cast<std::size_t>(n), 5);
    const auto g = randn(static_cast<std::size_t>(n), 6);
    for (Backend bk : {Backend::Avx2, Backend::Avx512}) {
        if (bk == Backend::Avx2 && !detail::avx2_supported()) continue;
        if (bk == Backend::Avx512 && !detail::avx512_supported()) continue;

        std::vector<float> r_ref(x.size()), r_got(x.size());
        force_backend(Backend::Scalar);
        relu(x.data(), r_ref.data(), n);
        force_backend(bk);
        relu(x.data(), r_got.data(), n);
        CHECK(std::memcmp(r_ref.data(), r_got.data(), r_ref.size() * 4) == 0);

        force_backend(Backend::Scalar);
        relu_backward(x.data(), g.data(), r_ref.data(), n);
        force_backend(bk);
        relu_backward(x.data(), g.data(), r_got.data(), n);
        CHECK(std::memcmp(r_ref.data(), r_got.data(), r_ref.size() * 4) == 0);

        // axpy uses a fused multiply-add on SIMD backends, so allow the
        // one-rounding difference vs the scalar mul+add
        std::vector<float> y_ref = g, y_got = g;
        force_backend(Backend::Scalar);
        axpy(0.37f, x.data(), y_ref.data(), n);
        force_backend(bk);
        axpy(0.37f, x.data(), y_got.data(), n);
        CHECK(max_rel_diff(y_got, y_ref) < 1e-6);
    }
    force_backend(Backend::Scalar);
}

TEST_CASE("add_bias and colsum agree across backends") {
    const std::int64_t n = 37, m = 29;
    const auto a = randn(static_cast<std::size_t>(n * m), 7);
    const auto bias = randn(static_cast<std::size_t>(m), 8);
    for (Backend bk : {Backend::Avx2, Backend::Avx512}) {
        if (bk == Backend::Avx2 && !detail::avx2_supported()) continue;
        if (bk == Backend::Avx512 && !detail::avx512_supported()) continue;

        std::vector<float> y_ref = a, y_got = a;
        force_backend(Backend::Scalar);
        add_bias(y_ref.data(), bias.data(), n, m);
        force_backend(bk);
        add_bias(y_got.data(), bias.data(), n, m);
        CHECK(std::memcmp(y_ref.data(), y_got.data(), y_ref.size() * 4) == 0);

        std::vector<float> s_ref(static_cast<std::size_t>(m)), s_got(s_ref.size());
        force_backend(Backend::Scalar);
        colsum(a.data(), s_ref.data(), n, m);
        force_backend(bk);
        colsum(a.data(), s_got.data(), n, m);
        for (std::int64_t j = 0; j < m; ++j)
            CHECK(s_got[static_cast<std::size_t>(j)] ==
                  doctest::Approx(s_ref[static_cast<std::size_t>(j)]).epsilon(1e-6));
    }
    force_backend(Backend::Scalar);
}

TEST_CASE("relu semantics") {
    const float x[5] = {-1.0f, 0.0f, 2.5f, -0.0f, 3.0f};
    float y[5];
    relu(x, y, 5);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 0.0f);
    CHECK(y[2] == 2.5f);
    CHECK(y[3] == 0.0f);
    CHECK(y[4] == 3.0f);
    const float g[5] = {1, 2, 3, 4, 5};
    float out[5];
    relu_backward(x, g, out, 5);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.0f);  // subgradient at 0 is 0
    CHECK(out[2] == 3.0f);
    CHECK(out[3] == 0.0f);
    CHECK(out[4] == 5.0f);
}
