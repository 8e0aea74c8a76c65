#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "sparsevid/rng.hpp"
#include "sparsevid/tensor.hpp"

using namespace sparsevid;

namespace {

Tensor leaf(std::vector<int> shape, Rng& rng, double stddev = 0.8) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    fill_normal(t, rng, stddev);
    return t;
}

// Central finite differences against the analytic gradient for every
// element of every leaf. `fn` must rebuild the graph on each call.
void gradcheck(const std::vector<Tensor>& leaves, const std::function<Tensor()>& fn,
               double tol = 1e-6, double h = 1e-5) {
    for (auto& l : leaves) const_cast<Tensor&>(l).zero_grad();
    Tensor loss = fn();
    loss.backward();
    for (auto& l : leaves) {
        REQUIRE(l.grad().size() == l.size());
        for (size_t i = 0; i < l.size(); ++i) {
            Tensor& mut = const_cast<Tensor&>(l);
            const double keep = mut.data()[i];
            mut.data()[i] = keep + h;
            const double fp = fn().scalar();
            mut.data()[i] = keep - h;
            const double fm = fn().scalar();
            mut.data()[i] = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = l.grad()[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
            CHECK(std::abs(fd - an) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    Rng rng(1);
    Tensor a = leaf({2, 3}, rng), b = leaf({2, 3}, rng);
    gradcheck({a, b}, [&] { return sum_all(mul(add(a, b), sub(a, scale(b, 0.5)))); });
    gradcheck({a}, [&] { return sum_all(silu(a)); });
    gradcheck({a, b}, [&] { return mse(a, b); });
}

TEST_CASE("broadcast add gradients") {
    Rng rng(2);
    Tensor x = leaf({2, 3, 2, 2}, rng);
    Tensor v = leaf({3}, rng);
    gradcheck({x, v}, [&] { return sum_all(mul(add_channel_vec(x, v), x)); });

    std::vector<double> p(2 * 3);
    for (size_t i = 0; i < p.size(); ++i) p[i] = 0.1 * static_cast<double>(i);
    gradcheck({x}, [&] { return sum_all(mul(add_frame_channel_const(x, p), x)); });
}

TEST_CASE("conv3x3 gradients, both strides") {
    Rng rng(3);
    Tensor x = leaf({2, 2, 4, 4}, rng);
    Tensor w = leaf({3, 2, 3, 3}, rng, 0.4);
    Tensor b = leaf({3}, rng, 0.2);
    gradcheck({x, w, b}, [&] { return sum_all(silu(conv3x3(x, w, b, 1))); }, 2e-6);
    gradcheck({x, w, b}, [&] { return sum_all(silu(conv3x3(x, w, b, 2))); }, 2e-6);
}

TEST_CASE("conv1x1, upsample, concat gradients") {
    Rng rng(4);
    Tensor x = leaf({2, 3, 2, 2}, rng);
    Tensor w = leaf({2, 3}, rng, 0.4);
    Tensor b = leaf({2}, rng, 0.2);
    gradcheck({x, w, b}, [&] { return sum_all(silu(conv1x1(x, w, b))); });
    gradcheck({x}, [&] { return sum_all(mul(upsample2x(x), upsample2x(x))); });
    Tensor y = leaf({2, 2, 2, 2}, rng);
    gradcheck({x, y}, [&] {
        Tensor c = concat_channels(x, y);
        return sum_all(mul(c, c));
    });
}

TEST_CASE("linear and embedding gradients") {
    Rng rng(5);
    Tensor v = leaf({4}, rng);
    Tensor w = leaf({4, 3}, rng, 0.4);
    Tensor b = leaf({3}, rng, 0.2);
    gradcheck({v, w, b}, [&] { return sum_all(silu(linear_vec(v, w, b))); });

    Tensor table = leaf({5, 3}, rng);
    std::vector<int> ids = {1, 3, 1};  // repeated id exercises accumulation
    gradcheck({table}, [&] {
        Tensor e = embed_rows(table, ids);
        return sum_all(mul(e, e));
    });
}

TEST_CASE("temporal attention gradients") {
    Rng rng(6);
    Tensor x = leaf({3, 2, 2, 2}, rng, 0.5);
    Tensor wq = leaf({2, 2}, rng, 0.5), wk = leaf({2, 2}, rng, 0.5);
    Tensor wv = leaf({2, 2}, rng, 0.5), wo = leaf({2, 2}, rng, 0.5);
    gradcheck({x, wq, wk, wv, wo},
              [&] { return sum_all(mul(temporal_attention(x, wq, wk, wv, wo), x)); }, 5e-6);
}

TEST_CASE("cross attention gradients") {
    Rng rng(7);
    Tensor x = leaf({2, 2, 2, 2}, rng, 0.5);
    Tensor txt = leaf({3, 4}, rng, 0.5);
    Tensor wq = leaf({2, 3}, rng, 0.5), wk = leaf({4, 3}, rng, 0.5);
    Tensor wv = leaf({4, 3}, rng, 0.5), wo = leaf({3, 2}, rng, 0.5);
    gradcheck({x, txt, wq, wk, wv, wo},
              [&] { return sum_all(mul(cross_attention(x, txt, wq, wk, wv, wo), x)); }, 5e-6);
}

TEST_CASE("backward requires a scalar root and propagates through shared nodes") {
    Rng rng(8);
    Tensor a = leaf({2, 2}, rng);
    CHECK_THROWS_AS(a.backward(), ArgumentError);

    // d/da sum(a*a + a*a) = 4a, with `a` feeding two branches.
    Tensor loss = sum_all(add(mul(a, a), mul(a, a)));
    loss.backward();
    for (size_t i = 0; i < a.size(); ++i)
        CHECK(a.grad()[i] == doctest::Approx(4.0 * a.data()[i]).epsilon(1e-12));
}

TEST_CASE("no gradient flows into frozen tensors") {
    Rng rng(9);
    Tensor a = leaf({2, 2}, rng);
    Tensor frozen = leaf({2, 2}, rng);
    frozen.set_requires_grad(false);
    Tensor loss = sum_all(mul(a, frozen));
    loss.backward();
    CHECK(a.grad().size() == a.size());
    CHECK(frozen.grad().empty());
}

TEST_CASE("shape validation on mismatched operands") {
    Tensor a = Tensor::zeros({2, 2});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(add(a, b), ArgumentError);
    CHECK_THROWS_AS(mul(a, b), ArgumentError);
    CHECK_THROWS_AS(mse(a, b), ArgumentError);
}
