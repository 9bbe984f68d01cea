#pragma once
// Data-parallel inner loops of the NN engine.
//
// Every kernel has a scalar reference implementation and, on x86-64,
// AVX2+FMA and AVX-512 variants selected once at startup. The variants are
// equivalence-tested against each other; within one process the selected
// variant is fixed, so training stays deterministic for a given seed.
//
// Precision: the scalar backend accumulates matrix products in f64 and is
// the reference. The SIMD backends accumulate matrix products in f32 FMA
// lanes for throughput (relative error ~1e-5 at these reduction lengths;
// see the equivalence tests). dot and colsum accumulate in f64 on every
// backend. All backends use a fixed per-element reduction order, so
// repeated runs are bit-identical and independent of the thread count.

#include <cstdint>

namespace mmlab::kernels {

enum class Backend { Scalar, Avx2, Avx512 };

// Selected backend: the widest the CPU supports, overridable with
// MMLAB_KERNEL=scalar|avx2|avx512.
Backend active_backend();
const char* backend_name();
void force_backend(Backend b);  // tests only

// Thread cap from MMLAB_THREADS (default 1). Row-partitioned kernels
// write disjoint outputs, so the result is identical for any thread count.
int thread_count();

// dot product with f64 accumulation
double dot(const float* a, const float* b, std::int64_t n);

// C(n x m) = A(n x k) * B(m x k)^T      (rows of A dotted with rows of B)
void matmul_nt(const float* a, const float* b, float* c,
               std::int64_t n, std::int64_t k, std::int64_t m);

// C(n x m) = A(n x p) * B(p x m)
void matmul_nn(const float* a, const float* b, float* c,
               std::int64_t n, std::int64_t p, std::int64_t m);

// C(m x k) = A(n x m)^T * B(n x k)
void matmul_tn(const float* a, const float* b, float* c,
               std::int64_t n, std::int64_t m, std::int64_t k);

// y = max(x, 0)
void relu(const float* x, float* y, std::int64_t n);

// out = g where x > 0, else 0   (subgradient at 0 is 0)
void relu_backward(const float* x, const float* g, float* out, std::int64_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::int64_t n);

// Y(n x m) += broadcast row b(m)
void add_bias(float* y, const float* b, std::int64_t n, std::int64_t m);

// out(m) = column sums of A(n x m), f64 accumulation
void colsum(const float* a, float* out, std::int64_t n, std::int64_t m);

namespace detail {

struct Ops {
    double (*dot)(const float*, const float*, std::int64_t);
    void (*matmul_nt)(const float*, const float*, float*, std::int64_t, std::int64_t, std::int64_t);
    void (*matmul_nn)(const float*, const float*, float*, std::int64_t, std::int64_t, std::int64_t);
    void (*matmul_tn)(const float*, const float*, float*, std::int64_t, std::int64_t, std::int64_t);
    void (*relu)(const float*, float*, std::int64_t);
    void (*relu_backward)(const float*, const float*, float*, std::int64_t);
    void (*axpy)(float, const float*, float*, std::int64_t);
    void (*add_bias)(float*, const float*, std::int64_t, std::int64_t);
    void (*colsum)(const float*, float*, std::int64_t, std::int64_t);
};

const Ops& scalar_ops();
bool avx2_supported();
const Ops& avx2_ops();  // valid only if avx2_supported()
bool avx512_supported();
const Ops& avx512_ops();  // valid only if avx512_supported()

}  // namespace detail

}  // namespace mmlab::kernels
