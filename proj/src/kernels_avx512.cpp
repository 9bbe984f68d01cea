// AVX-512 kernels. Matrix products go through one k-major core: inputs are
// packed (or already laid out) so the reduction index l is the major axis,
// then a 12x32 register-tiled micro-kernel accumulates in f32 FMA lanes.
// Every output element is reduced l-sequentially in a single accumulator
// chain, so the result is identical across tile sizes, row remainders,
// column masks, and row partitioning. dot and colsum accumulate in f64.
// This translation unit is the only one compiled with -mavx512f; it must
// not be entered unless cpuid reports AVX-512F.

#include "mmlab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define MMLAB_X86 1
#else
#define MMLAB_X86 0
#endif

#if MMLAB_X86

#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace mmlab::kernels::detail {

namespace {

inline __mmask16 lane_mask(std::int64_t len) {
    return static_cast<__mmask16>((1u << len) - 1u);  // len in [1,16]
}

// C tile (MR x <=32) = sum over l of at[l,i] * bt[l,j].
//   at: k-major LHS, element (l, i) at at[l * lda + i]
//   bt: k-major RHS, element (l, j) at bt[l * ldb + j]
// FULL selects unmasked loads/stores for interior column chunks.
template <int MR, bool FULL>
void micro_kernel(const float* at, std::int64_t lda,
                  const float* bt, std::int64_t ldb,
                  float* c, std::int64_t ldc, std::int64_t k,
                  __mmask16 m0, __mmask16 m1) {
    __m512 acc0[MR], acc1[MR];
    for (int r = 0; r < MR; ++r) {
        acc0[r] = _mm512_setzero_ps();
        acc1[r] = _mm512_setzero_ps();
    }
    auto load0 = [&](const float* p) {
        return FULL ? _mm512_loadu_ps(p) : _mm512_maskz_loadu_ps(m0, p);
    };
    auto load1 = [&](const float* p) {
        return FULL ? _mm512_loadu_ps(p) : _mm512_maskz_loadu_ps(m1, p);
    };
    std::int64_t l = 0;
    for (; l + 2 <= k; l += 2) {
        const float* b0 = bt + l * ldb;
        const float* b1 = bt + (l + 1) * ldb;
        const __m512 b00 = load0(b0);
        const __m512 b01 = load1(b0 + 16);
        const __m512 b10 = load0(b1);
        const __m512 b11 = load1(b1 + 16);
        _mm_prefetch(reinterpret_cast<const char*>(bt + (l + 8) * ldb), _MM_HINT_T0);
        const float* a0 = at + l * lda;
        const float* a1 = at + (l + 1) * lda;
        for (int r = 0; r < MR; ++r) {
            // two FMAs per chain, still strictly l-ordered per accumulator
            acc0[r] = _mm512_fmadd_ps(_mm512_set1_ps(a0[r]), b00, acc0[r]);
            acc0[r] = _mm512_fmadd_ps(_mm512_set1_ps(a1[r]), b10, acc0[r]);
            acc1[r] = _mm512_fmadd_ps(_mm512_set1_ps(a0[r]), b01, acc1[r]);
            acc1[r] = _mm512_fmadd_ps(_mm512_set1_ps(a1[r]), b11, acc1[r]);
        }
    }
    if (l < k) {
        const float* b0 = bt + l * ldb;
        const __m512 b00 = load0(b0);
        const __m512 b01 = load1(b0 + 16);
        const float* a0 = at + l * lda;
        for (int r = 0; r < MR; ++r) {
            acc0[r] = _mm512_fmadd_ps(_mm512_set1_ps(a0[r]), b00, acc0[r]);
            acc1[r] = _mm512_fmadd_ps(_mm512_set1_ps(a0[r]), b01, acc1[r]);
        }
    }
    for (int r = 0; r < MR; ++r) {
        float* crow = c + r * ldc;
        if (FULL) {
            _mm512_storeu_ps(crow, acc0[r]);
            _mm512_storeu_ps(crow + 16, acc1[r]);
        } else {
            _mm512_mask_storeu_ps(crow, m0, acc0[r]);
            _mm512_mask_storeu_ps(crow + 16, m1, acc1[r]);
        }
    }
}

using MicroFn = void (*)(const float*, std::int64_t, const float*, std::int64_t,
                         float*, std::int64_t, std::int64_t, __mmask16, __mmask16);

template <bool FULL>
constexpr MicroFn micro_table[13] = {
    nullptr,
    micro_kernel<1, FULL>,  micro_kernel<2, FULL>,  micro_kernel<3, FULL>,
    micro_kernel<4, FULL>,  micro_kernel<5, FULL>,  micro_kernel<6, FULL>,
    micro_kernel<7, FULL>,  micro_kernel<8, FULL>,  micro_kernel<9, FULL>,
    micro_kernel<10, FULL>, micro_kernel<11, FULL>, micro_kernel<12, FULL>,
};

// C(n x m) = at(k x n)^T * bt(k x m), both operands k-major.
void gemm_kmajor(const float* at, std::int64_t lda,
                 const float* bt, std::int64_t ldb,
                 float* c, std::int64_t ldc,
                 std::int64_t n, std::int64_t m, std::int64_t k) {
    for (std::int64_t j = 0; j < m; j += 32) {
        const std::int64_t jr = std::min<std::int64_t>(32, m - j);
        const bool full = jr == 32;
        const __mmask16 m0 = lane_mask(std::min<std::int64_t>(jr, 16));
        const __mmask16 m1 = jr > 16 ? lane_mask(jr - 16) : static_cast<__mmask16>(0);
        for (std::int64_t i = 0; i < n; i += 12) {
            const int mr = static_cast<int>(std::min<std::int64_t>(12, n - i));
            const MicroFn fn = full ? micro_table<true>[mr] : micro_table<false>[mr];
            fn(at + i, lda, bt + j, ldb, c + i * ldc + j, ldc, k, m0, m1);
        }
    }
}

// out(cols x rows) = a(rows x cols)^T, blocked for cache friendliness
void pack_transpose(const float* a, std::int64_t rows, std::int64_t cols, float* out) {
    constexpr std::int64_t B = 48;
    for (std::int64_t r0 = 0; r0 < rows; r0 += B) {
        const std::int64_t r1 = std::min<std::int64_t>(r0 + B, rows);
        for (std::int64_t c0 = 0; c0 < cols; c0 += B) {
            const std::int64_t c1 = std::min<std::int64_t>(c0 + B, cols);
            for (std::int64_t r = r0; r < r1; ++r)
                for (std::int64_t c = c0; c < c1; ++c)
                    out[c * rows + r] = a[r * cols + c];
        }
    }
}

std::vector<float>& scratch_a() {
    thread_local std::vector<float> buf;
    return buf;
}

std::vector<float>& scratch_b() {
    thread_local std::vector<float> buf;
    return buf;
}

double dot_avx512(const float* a, const float* b, std::int64_t n) {
    __m512d acc = _mm512_setzero_pd();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m512d x = _mm512_cvtps_pd(_mm256_loadu_ps(a + i));
        const __m512d y = _mm512_cvtps_pd(_mm256_loadu_ps(b + i));
        acc = _mm512_fmadd_pd(x, y, acc);
    }
    double s = _mm512_reduce_add_pd(acc);
    for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

void matmul_nt_avx512(const float* a, const float* b, float* c,
                      std::int64_t n, std::int64_t k, std::int64_t m) {
    auto& at = scratch_a();
    auto& bt = scratch_b();
    at.resize(static_cast<std::size_t>(k * n));
    bt.resize(static_cast<std::size_t>(k * m));
    pack_transpose(a, n, k, at.data());
    pack_transpose(b, m, k, bt.data());
    gemm_kmajor(at.data(), n, bt.data(), m, c, m, n, m, k);
}

void matmul_nn_avx512(const float* a, const float* b, float* c,
                      std::int64_t n, std::int64_t p, std::int64_t m) {
    auto& at = scratch_a();
    at.resize(static_cast<std::size_t>(p * n));
    pack_transpose(a, n, p, at.data());
    gemm_kmajor(at.data(), n, b, m, c, m, n, m, p);
}

void matmul_tn_avx512(const float* a, const float* b, float* c,
                      std::int64_t n, std::int64_t m, std::int64_t k) {
    // both operands are already reduction-major (sample-major), no packing
    gemm_kmajor(a, m, b, k, c, k, m, k, n);
}

void relu_avx512(const float* x, float* y, std::int64_t n) {
    const __m512 z = _mm512_setzero_ps();
    std::int64_t i = 0;
    for (; i + 16 <= n; i += 16)
        _mm512_storeu_ps(y + i, _mm512_max_ps(_mm512_loadu_ps(x + i), z));
    if (i < n) {
        const __mmask16 m = lane_mask(n - i);
        _mm512_mask_storeu_ps(y + i, m, _mm512_max_ps(_mm512_maskz_loadu_ps(m, x + i), z));
    }
}

void relu_backward_avx512(const float* x, const float* g, float* out, std::int64_t n) {
    const __m512 z = _mm512_setzero_ps();
    std::int64_t i = 0;
    for (; i + 16 <= n; i += 16) {
        const __mmask16 pos = _mm512_cmp_ps_mask(_mm512_loadu_ps(x + i), z, _CMP_GT_OQ);
        _mm512_storeu_ps(out + i, _mm512_maskz_mov_ps(pos, _mm512_loadu_ps(g + i)));
    }
    if (i < n) {
        const __mmask16 m = lane_mask(n - i);
        const __mmask16 pos = _mm512_cmp_ps_mask(_mm512_maskz_loadu_ps(m, x + i), z, _CMP_GT_OQ);
        _mm512_mask_storeu_ps(out + i, m, _mm512_maskz_mov_ps(pos, _mm512_maskz_loadu_ps(m, g + i)));
    }
}

void axpy_avx512(float alpha, const float* x, float* y, std::int64_t n) {
    const __m512 av = _mm512_set1_ps(alpha);
    std::int64_t i = 0;
    for (; i + 16 <= n; i += 16)
        _mm512_storeu_ps(y + i, _mm512_fmadd_ps(av, _mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i)));
    if (i < n) {
        const __mmask16 m = lane_mask(n - i);
        _mm512_mask_storeu_ps(
            y + i, m,
            _mm512_fmadd_ps(av, _mm512_maskz_loadu_ps(m, x + i), _mm512_maskz_loadu_ps(m, y + i)));
    }
}

void add_bias_avx512(float* y, const float* b, std::int64_t n, std::int64_t m) {
    for (std::int64_t r = 0; r < n; ++r) {
        float* row = y + r * m;
        std::int64_t j = 0;
        for (; j + 16 <= m; j += 16)
            _mm512_storeu_ps(row + j, _mm512_add_ps(_mm512_loadu_ps(row + j), _mm512_loadu_ps(b + j)));
        if (j < m) {
            const __mmask16 mk = lane_mask(m - j);
            _mm512_mask_storeu_ps(
                row + j, mk,
                _mm512_add_ps(_mm512_maskz_loadu_ps(mk, row + j), _mm512_maskz_loadu_ps(mk, b + j)));
        }
    }
}

void colsum_avx512(const float* a, float* out, std::int64_t n, std::int64_t m) {
    // f64 accumulation: gradient bias sums run over the full batch, so keep
    // the extra headroom here even though the products above are f32
    std::int64_t j = 0;
    for (; j + 8 <= m; j += 8) {
        __m512d acc = _mm512_setzero_pd();
        for (std::int64_t i = 0; i < n; ++i)
            acc = _mm512_add_pd(acc, _mm512_cvtps_pd(_mm256_loadu_ps(a + i * m + j)));
        _mm256_storeu_ps(out + j, _mm512_cvtpd_ps(acc));
    }
    for (; j < m; ++j) {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += static_cast<double>(a[i * m + j]);
        out[j] = static_cast<float>(s);
    }
}

}  // namespace

const Ops& avx512_ops() {
    static const Ops ops = {
        dot_avx512,
        matmul_nt_avx512,
        matmul_nn_avx512,
        matmul_tn_avx512,
        relu_avx512,
        relu_backward_avx512,
        axpy_avx512,
        add_bias_avx512,
        colsum_avx512,
    };
    return ops;
}

}  // namespace mmlab::kernels::detail

#else

namespace mmlab::kernels::detail {
const Ops& avx512_ops() { return scalar_ops(); }
}  // namespace mmlab::kernels::detail

#endif
