#pragma once

#include <cstddef>
#include <string_view>

// Dense arithmetic kernels behind the surrogate network. Each kernel has a
// scalar reference and, where the CPU supports it, an AVX2+FMA variant. The
// active table is chosen once at first use; DULA_KERNELS=scalar|avx2 overrides.

namespace dula::kernels {

/// C[m x n] (+)= A[m x k] * B[k x n], all row-major and densely packed.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        const double* b, double* c, bool accumulate);

/// Row-wise: x[r, :] += bias; if relu, x = max(x, 0).
using BiasActFn = void (*)(std::size_t rows, std::size_t cols, const double* bias, double* x,
                           bool relu);

/// grad[i] *= (act[i] > 0). Rectifier subgradient at 0 is 0.
using ReluMaskFn = void (*)(std::size_t n, const double* act, double* grad);

/// One Adam step over n parameters. `bias1`/`bias2` are 1 - beta^t.
using AdamFn = void (*)(std::size_t n, double* param, const double* grad, double* m, double* v,
                        double lr, double beta1, double beta2, double eps, double bias1,
                        double bias2);

struct KernelTable {
    std::string_view name;
    GemmFn gemm;
    BiasActFn bias_act;
    ReluMaskFn relu_mask;
    AdamFn adam;
};

const KernelTable& scalar();

/// nullptr when the binary or CPU lacks AVX2/FMA.
const KernelTable* avx2();

/// The table used by the library.
const KernelTable& active();

/// Force a table by name ("scalar", "avx2"); returns false if unavailable.
bool select(std::string_view name);

}  // namespace dula::kernels
