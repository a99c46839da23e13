// Compiled with -mavx2 -mfma. Only reached through dispatch.cpp after a CPUID check.

#include "dula/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace dula::kernels {

namespace {

inline __m256i tail_mask(std::size_t rem) {
    // rem in [1, 3]: lanes < rem active.
    const __m256i idx = _mm256_set_epi64x(3, 2, 1, 0);
    return _mm256_cmpgt_epi64(_mm256_set1_epi64x(static_cast<long long>(rem)), idx);
}

// R rows x 8 columns of C, accumulating over k.
template <int R>
inline void block8(std::size_t k, const double* a, std::size_t lda, const double* b,
                   std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    __m256d c0[R], c1[R];
    for (int r = 0; r < R; ++r) {
        if (accumulate) {
            c0[r] = _mm256_loadu_pd(c + r * ldc);
            c1[r] = _mm256_loadu_pd(c + r * ldc + 4);
        } else {
            c0[r] = _mm256_setzero_pd();
            c1[r] = _mm256_setzero_pd();
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
        const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
        for (int r = 0; r < R; ++r) {
            const __m256d ar = _mm256_broadcast_sd(a + r * lda + p);
            c0[r] = _mm256_fmadd_pd(ar, b0, c0[r]);
            c1[r] = _mm256_fmadd_pd(ar, b1, c1[r]);
        }
    }
    for (int r = 0; r < R; ++r) {
        _mm256_storeu_pd(c + r * ldc, c0[r]);
        _mm256_storeu_pd(c + r * ldc + 4, c1[r]);
    }
}

// R rows x 4 columns (or fewer under `mask`).
template <int R, bool Masked>
inline void block4(std::size_t k, const double* a, std::size_t lda, const double* b,
                   std::size_t ldb, double* c, std::size_t ldc, bool accumulate, __m256i mask) {
    __m256d acc[R];
    for (int r = 0; r < R; ++r) {
        if (!accumulate) {
            acc[r] = _mm256_setzero_pd();
        } else if constexpr (Masked) {
            acc[r] = _mm256_maskload_pd(c + r * ldc, mask);
        } else {
            acc[r] = _mm256_loadu_pd(c + r * ldc);
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        __m256d bv;
        if constexpr (Masked) {
            bv = _mm256_maskload_pd(b + p * ldb, mask);
        } else {
            bv = _mm256_loadu_pd(b + p * ldb);
        }
        for (int r = 0; r < R; ++r) {
            acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), bv, acc[r]);
        }
    }
    for (int r = 0; r < R; ++r) {
        if constexpr (Masked) {
            _mm256_maskstore_pd(c + r * ldc, mask, acc[r]);
        } else {
            _mm256_storeu_pd(c + r * ldc, acc[r]);
        }
    }
}

template <int R>
void row_panel(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) block8<R>(k, a, k, b + j, n, c + j, n, accumulate);
    if (j + 4 <= n) {
        block4<R, false>(k, a, k, b + j, n, c + j, n, accumulate, __m256i{});
        j += 4;
    }
    if (j < n) block4<R, true>(k, a, k, b + j, n, c + j, n, accumulate, tail_mask(n - j));
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c, bool accumulate) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) row_panel<4>(n, k, a + i * k, b, c + i * n, accumulate);
    switch (m - i) {
        case 3:
            row_panel<3>(n, k, a + i * k, b, c + i * n, accumulate);
            break;
        case 2:
            row_panel<2>(n, k, a + i * k, b, c + i * n, accumulate);
            break;
        case 1:
            row_panel<1>(n, k, a + i * k, b, c + i * n, accumulate);
            break;
        default:
            break;
    }
}

void bias_act_avx2(std::size_t rows, std::size_t cols, const double* bias, double* x, bool relu) {
    const __m256d zero = _mm256_setzero_pd();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = x + r * cols;
        std::size_t j = 0;
        for (; j + 4 <= cols; j += 4) {
            __m256d v = _mm256_add_pd(_mm256_loadu_pd(row + j), _mm256_loadu_pd(bias + j));
            // max_pd(v, 0) returns 0 for NaN in v, matching the scalar !(v > 0) test.
            if (relu) v = _mm256_max_pd(v, zero);
            _mm256_storeu_pd(row + j, v);
        }
        for (; j < cols; ++j) {
            const double v = row[j] + bias[j];
            row[j] = (relu && !(v > 0.0)) ? 0.0 : v;
        }
    }
}

void relu_mask_avx2(std::size_t n, const double* act, double* grad) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d keep = _mm256_cmp_pd(_mm256_loadu_pd(act + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(grad + i, _mm256_and_pd(keep, _mm256_loadu_pd(grad + i)));
    }
    for (; i < n; ++i) {
        if (!(act[i] > 0.0)) grad[i] = 0.0;
    }
}

void adam_avx2(std::size_t n, double* param, const double* grad, double* m, double* v, double lr,
               double beta1, double beta2, double eps, double bias1, double bias2) {
    const __m256d b1 = _mm256_set1_pd(beta1), nb1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d b2 = _mm256_set1_pd(beta2), nb2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d c1 = _mm256_set1_pd(bias1), c2 = _mm256_set1_pd(bias2);
    const __m256d vlr = _mm256_set1_pd(lr), veps = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi =
            _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(nb1, g));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(_mm256_mul_pd(nb2, g), g));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, c1);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_div_pd(vi, c2)), veps);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    for (; i < n; ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        param[i] -= lr * (m[i] / bias1) / (__builtin_sqrt(v[i] / bias2) + eps);
    }
}

}  // namespace

const KernelTable* avx2_table_unchecked() {
    static const KernelTable table{"avx2", gemm_avx2, bias_act_avx2, relu_mask_avx2, adam_avx2};
    return &table;
}

}  // namespace dula::kernels

#else

namespace dula::kernels {
const KernelTable* avx2_table_unchecked() { return nullptr; }
}  // namespace dula::kernels

#endif
