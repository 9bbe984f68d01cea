#pragma once
// Minimal dense-network building blocks with manual gradients: affine
// layers, ReLU, softmax cross-entropy, MSE, plain SGD.

#include <cstdint>
#include <span>
#include <vector>

#include "mmlab/matrix.hpp"
#include "mmlab/rng.hpp"

namespace mmlab::nn {

struct DenseLayer {
    Matrix w;               // out x in
    std::vector<float> b;   // out

    DenseLayer() = default;
    DenseLayer(std::int64_t in_dim, std::int64_t out_dim)
        : w(out_dim, in_dim), b(static_cast<std::size_t>(out_dim), 0.0f) {}

    std::int64_t in_dim() const { return w.cols(); }
    std::int64_t out_dim() const { return w.rows(); }

    // uniform +-sqrt(6/(fan_in+fan_out)), biases zero
    void init(Rng& rng);

    // y = x w^T + b (rows are samples)
    Matrix forward(const Matrix& x) const;

    // x is the input the forward pass saw. Returns grad wrt input
    // (empty matrix when need_grad_input is false).
    Matrix backward(const Matrix& x, const Matrix& grad_out, Matrix& grad_w,
                    std::vector<float>& grad_b, bool need_grad_input = true) const;
};

Matrix relu_forward(const Matrix& x);
// pre is the pre-activation input
Matrix relu_backward(const Matrix& pre, const Matrix& grad_out);

struct LossResult {
    double loss = 0.0;
    Matrix grad;  // d loss / d input, same shape as the input
};

// Mean cross-entropy with log-sum-exp stabilization.
// Throws if any label >= logits.cols().
LossResult softmax_xent(const Matrix& logits, std::span<const std::uint32_t> labels);

// Row-wise softmax probabilities (no loss).
Matrix softmax(const Matrix& logits);

// Mean squared error over all entries; grad = 2(pred-target)/count.
LossResult mse(const Matrix& pred, const Matrix& target);

// p <- p - lr * g
void sgd_step(std::span<float> params, std::span<const float> grads, float lr);

struct GradCheckReport {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;  // coordinates with ~zero analytic and numeric grad
};

// Central-difference check of a scalar loss against analytic gradients on
// up to max_coords sampled coordinates.
// loss_fn must re-run the full forward pass each call.
template <typename LossFn>
GradCheckReport grad_check(std::span<float*> params, std::span<const std::size_t> sizes,
                           std::span<const float*> grads, LossFn&& loss_fn, Rng& rng,
                           int max_coords = 64, double h = 1e-3) {
    GradCheckReport rep;
    std::size_t total = 0;
    for (std::size_t s : sizes) total += s;
    if (total == 0) return rep;

    for (int c = 0; c < max_coords; ++c) {
        std::size_t flat = static_cast<std::size_t>(rng.below(total));
        std::size_t pi = 0;
        while (flat >= sizes[pi]) { flat -= sizes[pi]; ++pi; }
        float* coord = params[pi] + flat;
        const float orig = *coord;

        *coord = static_cast<float>(orig + h);
        const double lp = loss_fn();
        *coord = static_cast<float>(orig - h);
        const double lm = loss_fn();
        *coord = orig;

        const double numeric = (lp - lm) / (2.0 * h);
        const double analytic = grads[pi][flat];
        const double denom = std::max(std::abs(numeric), std::abs(analytic));
        if (denom < 1e-7) {
            ++rep.skipped;  // e.g. ReLU-masked coordinate
            continue;
        }
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(numeric - analytic) / denom);
        ++rep.checked;
    }
    return rep;
}

}  // namespace mmlab::nn
