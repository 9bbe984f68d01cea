#include "mmlab/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "mmlab/kernels.hpp"

namespace mmlab::nn {

void DenseLayer::init(Rng& rng) {
    const double scale = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    for (float& v : w.storage()) v = static_cast<float>(rng.uniform(-scale, scale));
    for (float& v : b) v = 0.0f;
}

Matrix DenseLayer::forward(const Matrix& x) const {
    if (x.cols() != in_dim()) throw std::invalid_argument("DenseLayer: input dim mismatch");
    Matrix y(x.rows(), out_dim());
    kernels::matmul_nt(x.data(), w.data(), y.data(), x.rows(), in_dim(), out_dim());
    kernels::add_bias(y.data(), b.data(), y.rows(), y.cols());
    return y;
}

Matrix DenseLayer::backward(const Matrix& x, const Matrix& grad_out, Matrix& grad_w,
                            std::vector<float>& grad_b, bool need_grad_input) const {
    if (grad_out.rows() != x.rows() || grad_out.cols() != out_dim())
        throw std::invalid_argument("DenseLayer: grad shape mismatch");
    grad_w = Matrix(out_dim(), in_dim());
    // gW = gY^T X
    kernels::matmul_tn(grad_out.data(), x.data(), grad_w.data(), x.rows(), out_dim(), in_dim());
    grad_b.assign(static_cast<std::size_t>(out_dim()), 0.0f);
    kernels::colsum(grad_out.data(), grad_b.data(), grad_out.rows(), grad_out.cols());
    if (!need_grad_input) return {};
    Matrix grad_x(x.rows(), in_dim());
    // gX = gY W
    kernels::matmul_nn(grad_out.data(), w.data(), grad_x.data(), x.rows(), out_dim(), in_dim());
    return grad_x;
}

Matrix relu_forward(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    kernels::relu(x.data(), y.data(), x.size());
    return y;
}

Matrix relu_backward(const Matrix& pre, const Matrix& grad_out) {
    if (!grad_out.same_shape(pre)) throw std::invalid_argument("relu_backward: shape mismatch");
    Matrix g(grad_out.rows(), grad_out.cols());
    kernels::relu_backward(pre.data(), grad_out.data(), g.data(), g.size());
    return g;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    const std::int64_t k = logits.cols();
    for (std::int64_t i = 0; i < logits.rows(); ++i) {
        const float* row = logits.row(i);
        float* out = p.row(i);
        double mx = row[0];
        for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            const double e = std::exp(static_cast<double>(row[j]) - mx);
            out[j] = static_cast<float>(e);
            sum += e;
        }
        for (std::int64_t j = 0; j < k; ++j) out[j] = static_cast<float>(out[j] / sum);
    }
    return p;
}

LossResult softmax_xent(const Matrix& logits, std::span<const std::uint32_t> labels) {
    if (static_cast<std::int64_t>(labels.size()) != logits.rows())
        throw std::invalid_argument("softmax_xent: label count mismatch");
    const std::int64_t n = logits.rows();
    const std::int64_t k = logits.cols();
    for (std::uint32_t y : labels)
        if (y >= static_cast<std::uint32_t>(k)) throw std::invalid_argument("softmax_xent: label out of range");

    LossResult res;
    res.grad = softmax(logits);
    double loss = 0.0;
    const float inv_n = 1.0f / static_cast<float>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        float* g = res.grad.row(i);
        const std::uint32_t y = labels[static_cast<std::size_t>(i)];
        loss -= std::log(std::max(static_cast<double>(g[y]), 1e-300));
        g[y] -= 1.0f;
        for (std::int64_t j = 0; j < k; ++j) g[j] *= inv_n;
    }
    res.loss = loss / static_cast<double>(n);
    return res;
}

LossResult mse(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse: shape mismatch");
    LossResult res;
    res.grad = Matrix(pred.rows(), pred.cols());
    const std::int64_t count = pred.size();
    double loss = 0.0;
    const float scale = 2.0f / static_cast<float>(count);
    for (std::int64_t i = 0; i < count; ++i) {
        const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
        loss += d * d;
        res.grad.data()[i] = scale * static_cast<float>(d);
    }
    res.loss = loss / static_cast<double>(count);
    return res;
}

void sgd_step(std::span<float> params, std::span<const float> grads, float lr) {
    if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: size mismatch");
    kernels::axpy(-lr, grads.data(), params.data(), static_cast<std::int64_t>(params.size()));
}

}  // namespace mmlab::nn
