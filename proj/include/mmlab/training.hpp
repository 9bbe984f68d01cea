#pragma once
// Training strategies for the synthetic experiments: uni-modal baselines,
// naive late fusion, uni-modal teacher distillation (UMT), uni-modal
// ensemble (UME), auxiliary-CE, modality dropout, and the decision trick.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmlab/model.hpp"
#include "mmlab/synthgen.hpp"

namespace mmlab::training {

using model::FusionModel;
using model::HeadKind;
using model::ModelBundle;
using model::RunMetrics;
using model::TrainConfig;
using model::UniModel;
using synthgen::SplitSpec;
using synthgen::SyntheticDataset;

struct UMTConfig {
    double lambda_task = 1.0;
    double lambda_distill = 50.0;
    const UniModel* teacher1 = nullptr;
    const UniModel* teacher2 = nullptr;
};

// Knobs for the shared fusion training loop. Every fusion strategy is this
// loop with a different subset enabled; with everything off it is naive
// late fusion, so reductions (lambda_distill=0, drop_prob=0) are exact.
struct FusionOptions {
    HeadKind head = HeadKind::Mlp;
    model::EncActivation enc_act = model::EncActivation::Identity;
    std::int64_t hidden_per_enc = 100;  // concatenated feature is 2x this
    std::int64_t head_hidden = 200;
    double lambda_task = 1.0;
    double lambda_distill = 0.0;
    const UniModel* teacher1 = nullptr;  // required when lambda_distill > 0
    const UniModel* teacher2 = nullptr;
    bool aux_ce = false;  // per-modality linear heads, equal loss weights
    double drop_prob = 0.0;
    // false: one drop event w.p. drop_prob, modality chosen uniformly.
    // true: each modality dropped independently w.p. drop_prob.
    bool independent_drops = false;
};

// Components of the most recent iteration's loss, for bookkeeping checks.
struct LossBreakdown {
    double task = 0.0;
    double distill1 = 0.0, distill2 = 0.0;
    double aux1 = 0.0, aux2 = 0.0;
    double total = 0.0;
};

struct FusionTrainResult {
    FusionModel model;
    RunMetrics metrics;
    LossBreakdown last_loss;
    // per-modality drop counts over the run (dropout diagnostics)
    std::int64_t drops1 = 0, drops2 = 0;
};

// Core loop shared by all fusion strategies; operates on pre-gathered
// train/test matrices so test rows can never enter a gradient.
FusionTrainResult train_fusion_engine(const Matrix& x1_train, const Matrix& x2_train,
                                      const std::vector<std::uint32_t>& y_train,
                                      const Matrix& x1_test, const Matrix& x2_test,
                                      const std::vector<std::uint32_t>& y_test,
                                      std::uint32_t n_classes, const TrainConfig& cfg,
                                      const FusionOptions& opts);

ModelBundle train_unimodal(const SyntheticDataset& ds, const SplitSpec& split, int modality,
                           const TrainConfig& cfg, std::int64_t hidden = 100);

ModelBundle train_naive_fusion(const SyntheticDataset& ds, const SplitSpec& split,
                               HeadKind head, const TrainConfig& cfg,
                               model::EncActivation enc_act = model::EncActivation::Identity);

// Teachers must be trained on the same split. Throws if encoder output
// dims differ from the student's.
ModelBundle train_umt(const SyntheticDataset& ds, const SplitSpec& split,
                      const UMTConfig& umt, const TrainConfig& cfg,
                      HeadKind head = HeadKind::Mlp,
                      model::EncActivation enc_act = model::EncActivation::Identity);

ModelBundle train_aux_ce(const SyntheticDataset& ds, const SplitSpec& split,
                         const TrainConfig& cfg, HeadKind head = HeadKind::Mlp,
                         model::EncActivation enc_act = model::EncActivation::Identity);

ModelBundle train_modality_dropout(const SyntheticDataset& ds, const SplitSpec& split,
                                   double drop_prob, const TrainConfig& cfg,
                                   HeadKind head = HeadKind::Mlp,
                                   bool independent_drops = false,
                                   model::EncActivation enc_act = model::EncActivation::Identity);

// Weighted average of the two models' softmax outputs, argmax per row.
// Weights are normalized internally; both must be positive-summed.
std::vector<std::uint32_t> ume_predict(const UniModel& m1, const UniModel& m2,
                                       const Matrix& x1, const Matrix& x2,
                                       double w1 = 0.5, double w2 = 0.5);
// Averaged probability matrix (same normalization), for callers that need
// more than the argmax.
Matrix ume_probs(const UniModel& m1, const UniModel& m2, const Matrix& x1, const Matrix& x2,
                 double w1 = 0.5, double w2 = 0.5);

struct DecisionResult {
    std::string recommendation;  // "UMT" or "UME"
    double mm_clf_acc = 0.0;     // linear classifier on frozen concat features
    double avg_pred_acc = 0.0;   // ume_predict accuracy
    bool degenerate = false;     // single-class data; result trivial
};

DecisionResult decision_trick(const SyntheticDataset& ds, const SplitSpec& split,
                              const TrainConfig& cfg);

// Splits a linear head over concatenated features into two per-modality
// classifiers; each keeps the full bias, so
// logits1 + logits2 - bias == full logits exactly.
std::pair<nn::DenseLayer, nn::DenseLayer> split_mm_classifier(const nn::DenseLayer& head,
                                                              std::int64_t dim1);

double accuracy(const Matrix& logits, const std::vector<std::uint32_t>& labels);
std::vector<std::uint32_t> argmax_rows(const Matrix& logits);

struct LinearFit {
    nn::DenseLayer clf;
    double train_acc = 0.0;
    double test_acc = 0.0;
    int iters_run = 0;
};

// Softmax-regression fit on fixed feature matrices (same SGD settings as
// the main loops). Used for frozen-feature probes and the decision trick.
LinearFit fit_linear_softmax(const Matrix& f_train, const std::vector<std::uint32_t>& y_train,
                             const Matrix& f_test, const std::vector<std::uint32_t>& y_test,
                             std::uint32_t n_classes, const TrainConfig& cfg);

}  // namespace mmlab::training
