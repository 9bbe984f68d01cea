#include "mmlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace mmlab::theory {

namespace {

constexpr double kEpsTolerance = 1e-12;

int tie_break_modality(const FeatureSpec& f, int n_modalities) {
    // paired features sort after every uni-modal modality on p-ties
    return f.kind == FeatureKind::Paired ? n_modalities + 1 : f.modality;
}

}  // namespace

void FeatureUniverse::validate() const {
    if (c <= 1.0) throw std::invalid_argument("universe: c must be > 1");
    if (n_modalities < 2) throw std::invalid_argument("universe: need at least 2 modalities");
    std::set<std::string> seen;
    for (const auto& f : features) {
        if (!seen.insert(f.id).second)
            throw std::invalid_argument("universe: duplicate feature id '" + f.id + "'");
        if (f.p < 0.0 || f.p > 1.0 || f.eps < 0.0 || f.eps > 1.0)
            throw std::invalid_argument("universe: probabilities out of range for '" + f.id + "'");
        if (f.p + f.eps > 1.0 + kEpsTolerance)
            throw std::invalid_argument("universe: p + eps > 1 for '" + f.id + "'");
        const bool empty = (f.p == 0.0 && f.eps == 0.0);
        if ((f.kind == FeatureKind::Empty) != empty)
            throw std::invalid_argument("universe: EMPTY kind requires p = eps = 0 ('" + f.id + "')");
        if (!empty && !f.custom_eps && std::abs(f.eps - f.p / c) > kEpsTolerance)
            throw std::invalid_argument("universe: eps != p/c for '" + f.id + "'");
        if (f.kind == FeatureKind::Unimodal && (f.modality < 1 || f.modality > n_modalities))
            throw std::invalid_argument("universe: bad modality index for '" + f.id + "'");
    }
}

std::size_t FeatureUniverse::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].id == id) return i;
    throw std::invalid_argument("universe: unknown feature id '" + id + "'");
}

FeatureUniverse FeatureUniverse::from_json_text(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    FeatureUniverse u;
    u.c = j.value("c", 4.0);
    u.n_modalities = j.value("n_modalities", 2);
    for (const auto& jf : j.at("features")) {
        FeatureSpec f;
        f.id = jf.at("id").get<std::string>();
        f.p = jf.value("p", 0.0);
        const std::string mod = jf.at("modality").get<std::string>();
        if (mod == "paired" || mod == "PAIRED") {
            f.modality = 0;
            f.kind = FeatureKind::Paired;
        } else {
            f.modality = std::stoi(mod.substr(mod.find_first_of("0123456789")));
            f.kind = FeatureKind::Unimodal;
        }
        if (jf.contains("eps")) {
            f.eps = jf.at("eps").get<double>();
            f.custom_eps = true;
        } else {
            f.eps = f.p / u.c;
        }
        if (f.p == 0.0 && f.eps == 0.0) f.kind = FeatureKind::Empty;
        u.features.push_back(std::move(f));
    }
    u.validate();
    return u;
}

std::string FeatureUniverse::to_json_text() const {
    nlohmann::json j;
    j["c"] = c;
    j["n_modalities"] = n_modalities;
    j["features"] = nlohmann::json::array();
    for (const auto& f : features) {
        nlohmann::json jf;
        jf["id"] = f.id;
        jf["modality"] = f.kind == FeatureKind::Paired ? std::string("paired")
                                                       : "m" + std::to_string(f.modality);
        jf["p"] = f.p;
        if (f.custom_eps) jf["eps"] = f.eps;
        j["features"].push_back(std::move(jf));
    }
    return j.dump(2);
}

Realization sample_realization(const FeatureUniverse& universe, Rng& rng) {
    Realization r;
    r.y = rng.coin() ? 1 : -1;
    r.signs.resize(universe.features.size());
    for (std::size_t i = 0; i < universe.features.size(); ++i) {
        const auto& f = universe.features[i];
        const double u = rng.uniform();
        r.signs[i] = (u < f.p) ? 1 : (u < f.p + f.eps) ? -1 : 0;
    }
    return r;
}

int vote_predict(const FeatureUniverse& universe, const LearnedSet& learned,
                 const Realization& point, Rng& rng) {
    int pos = 0, neg = 0;
    for (std::size_t idx : learned.indices) {
        if (idx >= universe.features.size() || idx >= point.signs.size())
            throw std::invalid_argument("vote_predict: learned index out of range");
        const int s = point.signs[idx];  // sign of y*r
        const int r_sign = s * point.y;  // decode back to sign of r
        if (r_sign > 0) ++pos;
        else if (r_sign < 0) ++neg;
    }
    if (pos == neg) return rng.coin() ? 1 : -1;
    return pos > neg ? 1 : -1;
}

int point_error(const FeatureUniverse& universe, const LearnedSet& learned,
                const Realization& point) {
    int err = 0;
    for (std::size_t idx : learned.indices) {
        if (idx >= point.signs.size())
            throw std::invalid_argument("point_error: learned index out of range");
        err -= point.signs[idx];  // sign>0 agrees (-1 to error), sign<0 disagrees (+1)
    }
    return err;
}

std::vector<std::string> effective_priority(const FeatureUniverse& universe,
                                            const std::vector<std::string>& boosted,
                                            double p0) {
    if (p0 < 0.0) throw std::invalid_argument("effective_priority: p0 must be >= 0");
    std::set<std::size_t> boosted_idx;
    for (const auto& id : boosted) boosted_idx.insert(universe.index_of(id));

    std::vector<std::size_t> order(universe.features.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double pa = universe.features[a].p + (boosted_idx.count(a) ? p0 : 0.0);
        const double pb = universe.features[b].p + (boosted_idx.count(b) ? p0 : 0.0);
        if (pa != pb) return pa > pb;
        const int ma = tie_break_modality(universe.features[a], universe.n_modalities);
        const int mb = tie_break_modality(universe.features[b], universe.n_modalities);
        if (ma != mb) return ma < mb;
        return a < b;  // declaration order
    });

    std::vector<std::string> ids;
    ids.reserve(order.size());
    for (std::size_t i : order) ids.push_back(universe.features[i].id);
    return ids;
}

namespace {

// Expected misclassification of the current (pos, neg) agreement counts on
// one point: a vote tie counts 0.5.
inline double point_score(int pos, int neg) {
    if (pos > neg) return 0.0;
    if (pos < neg) return 1.0;
    return 0.5;
}

}  // namespace

LearnedSet greedy_learn(const FeatureUniverse& universe,
                        const std::vector<Realization>& train_points,
                        const std::vector<std::string>& candidates,
                        std::optional<int> budget) {
    if (train_points.empty()) throw std::invalid_argument("greedy_learn: no training points");

    const std::size_t n = train_points.size();
    // per point: counts of learned features agreeing / disagreeing with y
    std::vector<int> pos(n, 0), neg(n, 0);
    double score = 0.5 * static_cast<double>(n);  // empty set: every point is a tie

    LearnedSet learned;
    for (const auto& id : candidates) {
        if (budget && static_cast<int>(learned.ids.size()) >= *budget) break;
        if (score == 0.0) break;
        const std::size_t idx = universe.index_of(id);

        double new_score = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const int s = train_points[t].signs[idx];
            new_score += point_score(pos[t] + (s > 0), neg[t] + (s < 0));
        }
        if (new_score < score) {
            for (std::size_t t = 0; t < n; ++t) {
                const int s = train_points[t].signs[idx];
                if (s > 0) ++pos[t];
                else if (s < 0) ++neg[t];
            }
            score = new_score;
            learned.ids.push_back(id);
            learned.indices.push_back(idx);
        }
    }
    return learned;
}

namespace {

LearnedSet union_sets(const std::vector<LearnedSet>& sets) {
    LearnedSet out;
    std::set<std::size_t> seen;
    for (const auto& s : sets)
        for (std::size_t i = 0; i < s.indices.size(); ++i)
            if (seen.insert(s.indices[i]).second) {
                out.ids.push_back(s.ids[i]);
                out.indices.push_back(s.indices[i]);
            }
    return out;
}

void count_features(const FeatureUniverse& u, const LearnedSet& s,
                    std::vector<int>& uni_counts, int& paired_count) {
    uni_counts.assign(static_cast<std::size_t>(u.n_modalities), 0);
    paired_count = 0;
    for (std::size_t idx : s.indices) {
        const auto& f = u.features[idx];
        if (f.kind == FeatureKind::Paired) ++paired_count;
        else if (f.kind == FeatureKind::Unimodal) ++uni_counts[static_cast<std::size_t>(f.modality - 1)];
    }
}

}  // namespace

StrategyResult run_strategy(const FeatureUniverse& universe, Strategy strategy,
                            int n_train, int n_test, std::uint64_t seed, double p0) {
    if (n_train < 1 || n_test < 1)
        throw std::invalid_argument("run_strategy: n_train and n_test must be >= 1");
    universe.validate();

    Rng train_rng(derive_seed(seed, 0));
    std::vector<Realization> train(static_cast<std::size_t>(n_train));
    for (auto& pt : train) pt = sample_realization(universe, train_rng);

    StrategyResult result;
    if (strategy == Strategy::UniEnsemble) {
        for (int m = 1; m <= universe.n_modalities; ++m) {
            std::vector<std::string> cands;
            for (const auto& id : effective_priority(universe, {}, 0.0)) {
                const auto& f = universe.features[universe.index_of(id)];
                if (f.kind != FeatureKind::Paired && f.modality == m) cands.push_back(id);
            }
            result.per_modality.push_back(greedy_learn(universe, train, cands));
        }
        result.combined = union_sets(result.per_modality);
    } else {
        std::vector<std::string> boosted;
        if (strategy == Strategy::JointBoosted) {
            for (const auto& f : universe.features)
                if (f.kind == FeatureKind::Unimodal) boosted.push_back(f.id);
        }
        const auto cands = effective_priority(universe, boosted,
                                              strategy == Strategy::JointBoosted ? p0 : 0.0);
        result.combined = greedy_learn(universe, train, cands);
    }

    count_features(universe, result.combined, result.b_or_k_counts, result.k_pa);

    Rng test_rng(derive_seed(seed, 1));
    Rng tie_rng(derive_seed(seed, 2));
    int correct = 0;
    for (int t = 0; t < n_test; ++t) {
        const Realization pt = sample_realization(universe, test_rng);
        if (vote_predict(universe, result.combined, pt, tie_rng) == pt.y) ++correct;
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(n_test);
    return result;
}

Theorem1cResult theorem1c_check(int k_pa, int k_m1, int k_m2, int b_m1, int b_m2,
                                const std::vector<double>& p_paired,
                                const std::vector<double>& p_sorted, double delta) {
    if (k_pa < 0 || k_m1 < 0 || k_m2 < 0 || b_m1 < 0 || b_m2 < 0)
        throw std::invalid_argument("theorem1c_check: negative counts");
    if (b_m1 < k_m1 || b_m2 < k_m2)
        throw std::invalid_argument("theorem1c_check: b must be >= k per modality");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("theorem1c_check: delta must be in (0,1)");

    Theorem1cResult r;
    const double radicand = 8.0 * static_cast<double>(k_pa + (b_m1 - k_m1) + (b_m2 - k_m2)) *
                            std::log(1.0 / delta);
    r.margin = std::sqrt(radicand);
    r.lhs = std::accumulate(p_paired.begin(), p_paired.end(), 0.0);
    double tail = 0.0;
    for (int i = b_m1; i < b_m1 + b_m2 && i < static_cast<int>(p_sorted.size()); ++i)
        tail += p_sorted[static_cast<std::size_t>(i)];
    r.rhs = tail + r.margin;
    r.inequality_holds = r.lhs <= r.rhs;
    return r;
}

RatioEstimate lemma_complementary_check(const FeatureUniverse& universe,
                                        std::int64_t n_trials, std::uint64_t seed) {
    universe.validate();
    Rng rng(seed);
    std::int64_t plus = 0, minus = 0;
    for (std::int64_t t = 0; t < n_trials; ++t) {
        const Realization pt = sample_realization(universe, rng);
        int sum = 0;
        for (int s : pt.signs) sum += s;  // signs already encode y*r
        if (sum == 1) ++plus;
        else if (sum == -1) ++minus;
    }
    RatioEstimate est;
    est.p_plus = static_cast<double>(plus) / static_cast<double>(n_trials);
    est.p_minus = static_cast<double>(minus) / static_cast<double>(n_trials);
    if (plus == 0 || minus == 0) {
        est.inconclusive = true;
        return est;
    }
    est.ratio = est.p_plus / est.p_minus;
    // 99% CI, normal approximation on the log of the count ratio
    const double se = std::sqrt(1.0 / static_cast<double>(plus) + 1.0 / static_cast<double>(minus));
    const double z = 2.5758293035489004;  // Phi^-1(0.995)
    est.ci_low = est.ratio * std::exp(-z * se);
    est.ci_high = est.ratio * std::exp(z * se);
    return est;
}

Theorem2Report theorem2_check(const FeatureUniverse& universe, double p0,
                              int n_train, int n_test,
                              const std::vector<std::uint64_t>& seeds) {
    if (p0 <= 0.0) throw std::invalid_argument("theorem2_check: p0 must be > 0");
    Theorem2Report report;
    std::vector<std::size_t> s_idx;
    for (std::size_t i = 0; i < universe.features.size(); ++i) {
        const auto& f = universe.features[i];
        if (f.kind == FeatureKind::Paired && f.p > p0) {
            report.s_set.push_back(f.id);
            s_idx.push_back(i);
        }
    }
    for (const auto seed : seeds) {
        const auto boosted = run_strategy(universe, Strategy::JointBoosted, n_train, n_test, seed, p0);
        const auto ensemble = run_strategy(universe, Strategy::UniEnsemble, n_train, n_test, seed);
        const auto joint = run_strategy(universe, Strategy::Joint, n_train, n_test, seed);

        Theorem2SeedResult sr;
        sr.boosted_acc = boosted.accuracy;
        sr.ensemble_acc = ensemble.accuracy;
        sr.joint_acc = joint.accuracy;
        sr.boosted_ids = boosted.combined.ids;

        std::set<std::size_t> have(boosted.combined.indices.begin(), boosted.combined.indices.end());
        sr.superset_holds = true;
        for (std::size_t idx : ensemble.combined.indices)
            if (!have.count(idx)) sr.superset_holds = false;
        for (std::size_t idx : s_idx)
            if (!have.count(idx)) sr.superset_holds = false;
        report.per_seed.push_back(std::move(sr));
    }
    return report;
}

}  // namespace mmlab::theory
