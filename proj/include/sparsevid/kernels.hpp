#pragma once

#include <cstddef>
#include <string>

namespace sparsevid {

// Low-level array kernels behind all tensor math. Scalar reference
// implementations always exist; an AVX2+FMA variant is selected at runtime
// when the CPU supports it. Variants must agree within summation-order
// rounding (equivalence-tested in tests/test_kernels.cpp).
struct KernelOps {
    double (*dot)(const double* a, const double* b, size_t n);
    void (*axpy)(double a, const double* x, double* y, size_t n);  // y += a*x
    void (*add)(const double* a, const double* b, double* o, size_t n);
    void (*sub)(const double* a, const double* b, double* o, size_t n);
    void (*mul)(const double* a, const double* b, double* o, size_t n);
    void (*fmadd)(const double* a, const double* b, double* o, size_t n);  // o += a*b
    double (*sum)(const double* a, size_t n);
    double (*sumsq_diff)(const double* a, const double* b, size_t n);
    void (*scale)(double a, double* x, size_t n);  // x *= a
    const char* name;
};

const KernelOps& scalar_kernels();

// nullptr when the binary was built without x86 support.
const KernelOps* avx2_kernels();

// Best available variant for this machine, chosen once at startup.
const KernelOps& kernels();

}  // namespace sparsevid
