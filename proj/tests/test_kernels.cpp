#include "doctest.h"

#include <cmath>
#include <vector>

#include "sparsevid/kernels.hpp"
#include "sparsevid/rng.hpp"

using namespace sparsevid;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
    Rng rng(42);
    const size_t n = 257;  // odd length exercises SIMD tails too
    auto a = random_vec(n, rng);
    auto b = random_vec(n, rng);
    const auto& K = scalar_kernels();

    double dot = 0.0, sum = 0.0, sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        sum += a[i];
        const double d = a[i] - b[i];
        sq += d * d;
    }
    CHECK(K.dot(a.data(), b.data(), n) == doctest::Approx(dot).epsilon(1e-13));
    CHECK(K.sum(a.data(), n) == doctest::Approx(sum).epsilon(1e-13));
    CHECK(K.sumsq_diff(a.data(), b.data(), n) == doctest::Approx(sq).epsilon(1e-13));

    auto y = b;
    K.axpy(0.75, a.data(), y.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(b[i] + 0.75 * a[i]));

    std::vector<double> o(n);
    K.add(a.data(), b.data(), o.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(o[i] == a[i] + b[i]);
    K.sub(a.data(), b.data(), o.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(o[i] == a[i] - b[i]);
    K.mul(a.data(), b.data(), o.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(o[i] == a[i] * b[i]);
    K.fmadd(a.data(), b.data(), o.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(o[i] == doctest::Approx(2.0 * a[i] * b[i]));
    auto s = a;
    K.scale(-1.5, s.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(s[i] == -1.5 * a[i]);
}

TEST_CASE("avx2 kernels agree with scalar reference") {
    const KernelOps* simd = avx2_kernels();
    if (!simd) {
        MESSAGE("AVX2 not available on this machine; skipping");
        return;
    }
    const auto& ref = scalar_kernels();
    Rng rng(7);
    for (size_t n : {size_t(1), size_t(3), size_t(4), size_t(31), size_t(32), size_t(1000)}) {
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        CHECK(simd->dot(a.data(), b.data(), n) ==
              doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12));
        CHECK(simd->sum(a.data(), n) == doctest::Approx(ref.sum(a.data(), n)).epsilon(1e-12));
        CHECK(simd->sumsq_diff(a.data(), b.data(), n) ==
              doctest::Approx(ref.sumsq_diff(a.data(), b.data(), n)).epsilon(1e-12));

        auto y1 = b, y2 = b;
        ref.axpy(1.25, a.data(), y1.data(), n);
        simd->axpy(1.25, a.data(), y2.data(), n);
        for (size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));

        std::vector<double> o1(n), o2(n);
        ref.mul(a.data(), b.data(), o1.data(), n);
        simd->mul(a.data(), b.data(), o2.data(), n);
        for (size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);
        ref.fmadd(a.data(), b.data(), o1.data(), n);
        simd->fmadd(a.data(), b.data(), o2.data(), n);
        for (size_t i = 0; i < n; ++i) CHECK(o1[i] == doctest::Approx(o2[i]).epsilon(1e-14));
    }
}

TEST_CASE("dispatcher returns a usable variant") {
    const auto& K = kernels();
    double a[3] = {1.0, 2.0, 3.0};
    double b[3] = {4.0, 5.0, 6.0};
    CHECK(K.dot(a, b, 3) == doctest::Approx(32.0));
    CHECK(std::string(K.name).size() > 0);
}
