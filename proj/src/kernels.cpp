#include "sparsevid/kernels.hpp"

namespace sparsevid {
namespace {

double s_dot(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void s_axpy(double a, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_add(const double* a, const double* b, double* o, size_t n) {
    for (size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* o, size_t n) {
    for (size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* o, size_t n) {
    for (size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

void s_fmadd(const double* a, const double* b, double* o, size_t n) {
    for (size_t i = 0; i < n; ++i) o[i] += a[i] * b[i];
}

double s_sum(const double* a, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double s_sumsq_diff(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void s_scale(double a, double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace

const KernelOps& scalar_kernels() {
    static const KernelOps ops = {
        s_dot, s_axpy, s_add, s_sub, s_mul, s_fmadd, s_sum, s_sumsq_diff, s_scale, "scalar",
    };
    return ops;
}

const KernelOps& kernels() {
    static const KernelOps& chosen = []() -> const KernelOps& {
        if (const KernelOps* v = avx2_kernels()) return *v;
        return scalar_kernels();
    }();
    return chosen;
}

}  // namespace sparsevid
