// Backend selection and the public kernel entry points.

#include "mmlab/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

namespace mmlab::kernels {

namespace {

using detail::Ops;

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

bool cpu_has_avx512() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_backend() {
    if (const char* env = std::getenv("MMLAB_KERNEL")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::Avx2;
        if (std::strcmp(env, "avx512") == 0 && cpu_has_avx512()) return Backend::Avx512;
    }
    if (cpu_has_avx512()) return Backend::Avx512;
    return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

Backend& backend_ref() {
    static Backend b = pick_backend();
    return b;
}

const Ops& ops() {
    switch (backend_ref()) {
        case Backend::Avx512: return detail::avx512_ops();
        case Backend::Avx2: return detail::avx2_ops();
        default: return detail::scalar_ops();
    }
}

int pick_threads() {
    if (const char* env = std::getenv("MMLAB_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

// Row-partitioned parallel run; each worker writes a disjoint row range,
// so results do not depend on the thread count.
template <typename Fn>
void parallel_rows(std::int64_t n, Fn fn) {
    const int nt = std::min<std::int64_t>(thread_count(), n);
    if (nt <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(nt));
    const std::int64_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
        if (lo >= hi) break;
        workers.emplace_back([=] { fn(lo, hi); });
    }
    for (auto& w : workers) w.join();
}

}  // namespace

namespace detail {
bool avx2_supported() { return cpu_has_avx2(); }
bool avx512_supported() { return cpu_has_avx512(); }
}  // namespace detail

Backend active_backend() { return backend_ref(); }

const char* backend_name() {
    switch (backend_ref()) {
        case Backend::Avx512: return "avx512";
        case Backend::Avx2: return "avx2";
        default: return "scalar";
    }
}

void force_backend(Backend b) {
    if (b == Backend::Avx2 && !cpu_has_avx2()) return;
    if (b == Backend::Avx512 && !cpu_has_avx512()) return;
    backend_ref() = b;
}

int thread_count() {
    static int n = pick_threads();
    return n;
}

double dot(const float* a, const float* b, std::int64_t n) { return ops().dot(a, b, n); }

void matmul_nt(const float* a, const float* b, float* c,
               std::int64_t n, std::int64_t k, std::int64_t m) {
    const Ops& o = ops();
    parallel_rows(n, [&](std::int64_t lo, std::int64_t hi) {
        o.matmul_nt(a + lo * k, b, c + lo * m, hi - lo, k, m);
    });
}

void matmul_nn(const float* a, const float* b, float* c,
               std::int64_t n, std::int64_t p, std::int64_t m) {
    const Ops& o = ops();
    parallel_rows(n, [&](std::int64_t lo, std::int64_t hi) {
        o.matmul_nn(a + lo * p, b, c + lo * m, hi - lo, p, m);
    });
}

void matmul_tn(const float* a, const float* b, float* c,
               std::int64_t n, std::int64_t m, std::int64_t k) {
    ops().matmul_tn(a, b, c, n, m, k);
}

void relu(const float* x, float* y, std::int64_t n) { ops().relu(x, y, n); }

void relu_backward(const float* x, const float* g, float* out, std::int64_t n) {
    ops().relu_backward(x, g, out, n);
}

void axpy(float alpha, const float* x, float* y, std::int64_t n) { ops().axpy(alpha, x, y, n); }

void add_bias(float* y, const float* b, std::int64_t n, std::int64_t m) { ops().add_bias(y, b, n, m); }

void colsum(const float* a, float* out, std::int64_t n, std::int64_t m) { ops().colsum(a, out, n, m); }

}  // namespace mmlab::kernels
