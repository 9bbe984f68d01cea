#pragma once
// Abstract feature-learning regime: features with predicting probability p
// and error probability eps = p/c, greedy learning in priority order, and
// majority-vote evaluation. Used to check the laziness bounds by
// deterministic replay and Monte-Carlo simulation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmlab/rng.hpp"

namespace mmlab::theory {

enum class FeatureKind { Unimodal, Paired, Empty };

struct FeatureSpec {
    std::string id;
    int modality = 1;  // 1-based modality index; 0 for paired features
    double p = 0.0;
    double eps = 0.0;
    FeatureKind kind = FeatureKind::Empty;
    bool custom_eps = false;  // set when eps was given explicitly instead of p/c
};

struct FeatureUniverse {
    std::vector<FeatureSpec> features;
    double c = 4.0;
    int n_modalities = 2;

    void validate() const;  // throws std::invalid_argument on violation
    std::size_t index_of(const std::string& id) const;  // throws on unknown id

    static FeatureUniverse from_json_text(const std::string& text);
    std::string to_json_text() const;
};

// One sampled data point: the label and, per feature, the sign of y*r.
struct Realization {
    int y = 1;                 // -1 or +1
    std::vector<int> signs;    // indexed like universe.features; -1/0/+1
};

struct LearnedSet {
    std::vector<std::string> ids;       // in the order they were accepted
    std::vector<std::size_t> indices;   // same order, indices into the universe
};

struct LazinessReport {
    std::vector<int> b_counts;   // per modality, uni-modal training
    std::vector<int> k_counts;   // per modality, joint training (uni-modal features)
    int k_pa = 0;
    double ens_acc = 0.0;
    double joint_acc = 0.0;
    double boosted_acc = 0.0;
    double delta = 0.0;
    double margin = 0.0;
    bool inequality_holds = false;
    int trials = 0;
};

Realization sample_realization(const FeatureUniverse& universe, Rng& rng);

// Majority vote over learned features; exact ties are broken by a seeded
// coin flip. Returns the predicted label in {-1, +1}.
int vote_predict(const FeatureUniverse& universe, const LearnedSet& learned,
                 const Realization& point, Rng& rng);

// (#features disagreeing with y) - (#agreeing), over the learned set.
int point_error(const FeatureUniverse& universe, const LearnedSet& learned,
                const Realization& point);

// Feature ids sorted by p + p0*I(boosted), descending. Ties break by
// modality index ascending (paired features sort after all uni-modal
// ones), then declaration order.
std::vector<std::string> effective_priority(const FeatureUniverse& universe,
                                            const std::vector<std::string>& boosted,
                                            double p0);

// Scans candidates in the given order; accepts a candidate only if it
// strictly lowers the expected misclassification count on train_points
// (vote ties scored as 0.5). Stops at zero error, budget, or exhaustion.
LearnedSet greedy_learn(const FeatureUniverse& universe,
                        const std::vector<Realization>& train_points,
                        const std::vector<std::string>& candidates,
                        std::optional<int> budget = std::nullopt);

enum class Strategy { UniEnsemble, Joint, JointBoosted };

struct StrategyResult {
    std::vector<LearnedSet> per_modality;  // UNI_ENSEMBLE: one per modality
    LearnedSet combined;                   // union (or the joint set itself)
    std::vector<int> b_or_k_counts;        // uni-modal feature count per modality
    int k_pa = 0;
    double accuracy = 0.0;
};

StrategyResult run_strategy(const FeatureUniverse& universe, Strategy strategy,
                            int n_train, int n_test, std::uint64_t seed,
                            double p0 = 0.0);

struct Theorem1cResult {
    double margin = 0.0;  // Delta(delta)
    double lhs = 0.0;     // sum of paired predicting probabilities
    double rhs = 0.0;     // tail sum + margin
    bool inequality_holds = false;
};

// Delta(delta) = sqrt(8 (k_pa + b_m1 - k_m1 + b_m2 - k_m2) log(1/delta));
// checks sum p(h_i) <= sum_{i in [b_m1+1, b_m1+b_m2]} p_[i] + Delta.
// p_sorted must be all uni-modal predicting probabilities in descending
// order. Throws on negative counts, b < k, or delta outside (0,1).
Theorem1cResult theorem1c_check(int k_pa, int k_m1, int k_m2, int b_m1, int b_m2,
                                const std::vector<double>& p_paired,
                                const std::vector<double>& p_sorted, double delta);

struct RatioEstimate {
    double ratio = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p_plus = 0.0;   // P(sum y*r = +1)
    double p_minus = 0.0;  // P(sum y*r = -1)
    bool inconclusive = false;
};

// Monte-Carlo estimate of P(sum y*r = +1) / P(sum y*r = -1), which should
// equal c. 99% CI via normal approximation on the log-ratio.
RatioEstimate lemma_complementary_check(const FeatureUniverse& universe,
                                        std::int64_t n_trials, std::uint64_t seed);

struct Theorem2SeedResult {
    bool superset_holds = false;  // boosted set contains union of uni sets and S
    double boosted_acc = 0.0;
    double ensemble_acc = 0.0;
    double joint_acc = 0.0;
    std::vector<std::string> boosted_ids;
};

struct Theorem2Report {
    std::vector<std::string> s_set;  // paired features with p > p0
    std::vector<Theorem2SeedResult> per_seed;
};

Theorem2Report theorem2_check(const FeatureUniverse& universe, double p0,
                              int n_train, int n_test,
                              const std::vector<std::uint64_t>& seeds);

}  // namespace mmlab::theory
