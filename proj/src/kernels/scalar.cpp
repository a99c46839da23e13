#include "dula/kernels.hpp"

#include <cmath>
#include <cstring>

namespace dula::kernels {

namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, sizeof(double) * m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void bias_act_scalar(std::size_t rows, std::size_t cols, const double* bias, double* x,
                     bool relu) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = x + r * cols;
        for (std::size_t j = 0; j < cols; ++j) {
            const double v = row[j] + bias[j];
            row[j] = (relu && !(v > 0.0)) ? 0.0 : v;
        }
    }
}

void relu_mask_scalar(std::size_t n, const double* act, double* grad) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!(act[i] > 0.0)) grad[i] = 0.0;
    }
}

void adam_scalar(std::size_t n, double* param, const double* grad, double* m, double* v,
                 double lr, double beta1, double beta2, double eps, double bias1, double bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const KernelTable& scalar() {
    static const KernelTable table{"scalar", gemm_scalar, bias_act_scalar, relu_mask_scalar,
                                   adam_scalar};
    return table;
}

}  // namespace dula::kernels
