// Scalar reference kernels. These define the semantics; the SIMD variants
// must agree with them within the tolerances in tests/test_kernels.cpp.

#include "mmlab/kernels.hpp"

#include <vector>

namespace mmlab::kernels::detail {

namespace {

double dot_scalar(const float* a, const float* b, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

void matmul_nt_scalar(const float* a, const float* b, float* c,
                      std::int64_t n, std::int64_t k, std::int64_t m) {
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j)
            c[i * m + j] = static_cast<float>(dot_scalar(a + i * k, b + j * k, k));
}

void matmul_nn_scalar(const float* a, const float* b, float* c,
                      std::int64_t n, std::int64_t p, std::int64_t m) {
    std::vector<double> buf(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < m; ++j) buf[j] = 0.0;
        for (std::int64_t l = 0; l < p; ++l) {
            const double av = a[i * p + l];
            if (av == 0.0) continue;
            const float* brow = b + l * m;
            for (std::int64_t j = 0; j < m; ++j) buf[j] += av * static_cast<double>(brow[j]);
        }
        for (std::int64_t j = 0; j < m; ++j) c[i * m + j] = static_cast<float>(buf[j]);
    }
}

void matmul_tn_scalar(const float* a, const float* b, float* c,
                      std::int64_t n, std::int64_t m, std::int64_t k) {
    std::vector<double> buf(static_cast<std::size_t>(m * k), 0.0);
    for (std::int64_t l = 0; l < n; ++l) {
        const float* brow = b + l * k;
        for (std::int64_t i = 0; i < m; ++i) {
            const double av = a[l * m + i];
            if (av == 0.0) continue;
            double* crow = buf.data() + i * k;
            for (std::int64_t j = 0; j < k; ++j) crow[j] += av * static_cast<double>(brow[j]);
        }
    }
    for (std::int64_t i = 0; i < m * k; ++i) c[i] = static_cast<float>(buf[i]);
}

void relu_scalar(const float* x, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_scalar(const float* x, const float* g, float* out, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

void axpy_scalar(float alpha, const float* x, float* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_bias_scalar(float* y, const float* b, std::int64_t n, std::int64_t m) {
    for (std::int64_t i = 0; i < n; ++i) {
        float* row = y + i * m;
        for (std::int64_t j = 0; j < m; ++j) row[j] += b[j];
    }
}

void colsum_scalar(const float* a, float* out, std::int64_t n, std::int64_t m) {
    std::vector<double> acc(static_cast<std::size_t>(m), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) acc[j] += a[i * m + j];
    for (std::int64_t j = 0; j < m; ++j) out[j] = static_cast<float>(acc[j]);
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops{dot_scalar,  matmul_nt_scalar,   matmul_nn_scalar,
                         matmul_tn_scalar, relu_scalar,   relu_backward_scalar,
                         axpy_scalar, add_bias_scalar,    colsum_scalar};
    return ops;
}

}  // namespace mmlab::kernels::detail
