#pragma once
// Concrete network shapes used by the synthetic experiments, plus the
// serializable ModelBundle wrapper (JSON, base64 parameter blocks).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmlab/matrix.hpp"
#include "mmlab/nn.hpp"

namespace mmlab::model {

enum class HeadKind { Linear, Mlp };

// Fusion encoder activation. Identity keeps the encoders affine so the
// network factorizes the reference two-layer MLP (the nonlinearity lives
// in the head); Relu gives per-modality nonlinear features.
enum class EncActivation { Identity, Relu };

struct TrainConfig {
    double lr = 0.2;
    int max_iters = 3000;
    std::uint64_t seed = 0;
    // stop once training accuracy has been 100% for this many consecutive
    // iterations; 0 disables
    int early_stop_window = 50;
    int record_every = 10;  // loss-curve sampling stride
};

// Single-modality network: affine -> ReLU -> linear head.
struct UniModel {
    nn::DenseLayer enc;
    nn::DenseLayer head;

    UniModel() = default;
    UniModel(std::int64_t in_dim, std::int64_t hidden, std::int64_t n_classes)
        : enc(in_dim, hidden), head(hidden, n_classes) {}

    void init(Rng& rng) { enc.init(rng); head.init(rng); }

    Matrix features(const Matrix& x) const { return nn::relu_forward(enc.forward(x)); }
    Matrix logits(const Matrix& x) const { return head.forward(features(x)); }
};

// Late-fusion network: one affine encoder per modality (optionally ReLU),
// features concatenated, then a linear or one-hidden-layer MLP head.
struct FusionModel {
    nn::DenseLayer enc1, enc2;
    HeadKind head_kind = HeadKind::Mlp;
    EncActivation enc_act = EncActivation::Identity;
    nn::DenseLayer head_hidden;  // used when head_kind == Mlp
    nn::DenseLayer head_out;
    // optional per-modality linear heads (auxiliary-CE training)
    std::optional<nn::DenseLayer> aux1, aux2;

    FusionModel() = default;
    FusionModel(std::int64_t d1, std::int64_t d2, std::int64_t hidden_per_enc,
                std::int64_t head_hidden_dim, std::int64_t n_classes, HeadKind head);

    void init(Rng& rng);

    Matrix features1(const Matrix& x1) const {
        Matrix h = enc1.forward(x1);
        return enc_act == EncActivation::Relu ? nn::relu_forward(h) : h;
    }
    Matrix features2(const Matrix& x2) const {
        Matrix h = enc2.forward(x2);
        return enc_act == EncActivation::Relu ? nn::relu_forward(h) : h;
    }
    Matrix fused(const Matrix& f1, const Matrix& f2) const;  // concat columns
    Matrix head_logits(const Matrix& fused_features) const;
    Matrix logits(const Matrix& x1, const Matrix& x2) const {
        return head_logits(fused(features1(x1), features2(x2)));
    }
};

struct RunMetrics {
    double train_acc = 0.0;
    double test_acc = 0.0;
    int iters_run = 0;
    double final_loss = 0.0;
    std::vector<double> loss_curve;  // sampled every record_every iters
    double wall_seconds = 0.0;
};

// Serializable model + provenance. kind is "uni" or "fusion".
struct ModelBundle {
    std::string kind;
    int modality = 0;  // uni models: which modality they read (1 or 2)
    std::uint32_t n_classes = 2;
    TrainConfig config;
    RunMetrics metrics;
    std::string strategy;  // e.g. "uni1", "naive", "umt"

    std::optional<UniModel> uni;
    std::optional<FusionModel> fusion;

    std::string to_json_text() const;
    static ModelBundle from_json_text(const std::string& text);

    void save(const std::string& path) const;
    static ModelBundle load(const std::string& path);
};

// little-endian f32 block <-> base64
std::string encode_params(const std::vector<float>& v);
std::vector<float> decode_params(const std::string& b64);

}  // namespace mmlab::model
