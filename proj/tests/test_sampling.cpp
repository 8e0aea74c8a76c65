#include "doctest.h"

#include <cmath>

#include "sparsevid/errors.hpp"
#include "sparsevid/sampling.hpp"
#include "sparsevid/vocab.hpp"

using namespace sparsevid;

namespace {

ArchConfig tiny_arch() {
    ArchConfig a;
    a.width0 = 4;
    a.width1 = 8;
    a.temb_dim = 8;
    a.text_dim = 4;
    return a;
}

}  // namespace

TEST_CASE("cfg_combine identities") {
    Tensor u = Tensor::from({1, 1, 1, 3}, {0.1, -0.4, 2.0});
    Tensor c = Tensor::from({1, 1, 1, 3}, {0.3, 0.6, -1.0});

    // w = 1 returns the conditional prediction exactly.
    Tensor w1 = cfg_combine(u, c, 1.0);
    CHECK(w1.values() == c.values());
    // w = 0 returns the unconditional prediction exactly.
    Tensor w0 = cfg_combine(u, c, 0.0);
    CHECK(w0.values() == u.values());
    // General w is a linear extrapolation.
    Tensor w3 = cfg_combine(u, c, 3.0);
    for (int i = 0; i < 3; ++i)
        CHECK(w3.data()[i] ==
              doctest::Approx(u.data()[i] + 3.0 * (c.data()[i] - u.data()[i])));

    Tensor bad = Tensor::zeros({1, 1, 1, 4});
    CHECK_THROWS_AS(cfg_combine(u, bad, 2.0), ArgumentError);
}

TEST_CASE("denoise_step matches a hand-computed oracle") {
    DiffusionSchedule s = make_schedule(10, "linear-vp");
    Tensor z = Tensor::from({1, 1, 1, 2}, {0.7, -0.9});
    Tensor e = Tensor::from({1, 1, 1, 2}, {0.25, -0.5});
    const int t = 6, tp = 3;
    Tensor out = denoise_step(z, e, t, tp, s, SamplerMode::kDeterministic);
    for (int i = 0; i < 2; ++i) {
        double z0 = (z.data()[i] - s.sigma[t] * e.data()[i]) / s.alpha[t];
        z0 = std::clamp(z0, -1.0, 1.0);
        CHECK(out.data()[i] == doctest::Approx(s.alpha[tp] * z0 + s.sigma[tp] * e.data()[i])
                                   .epsilon(1e-14));
    }
}

TEST_CASE("denoise_step clamps the denoised estimate to [-1, 1]") {
    DiffusionSchedule s = make_schedule(10, "linear-vp");
    // Large z with zero predicted noise => unclamped z0 = z / alpha_t >> 1.
    Tensor z = Tensor::from({1, 1, 1, 1}, {5.0});
    Tensor e = Tensor::zeros({1, 1, 1, 1});
    Tensor out = denoise_step(z, e, 8, 2, s, SamplerMode::kDeterministic);
    CHECK(out.data()[0] == doctest::Approx(s.alpha[2] * 1.0).epsilon(1e-14));
}

TEST_CASE("denoise_step recovers z0 exactly when eps is the true noise") {
    DiffusionSchedule s = make_schedule(20, "linear-vp");
    Tensor z0 = Tensor::from({1, 1, 2, 2}, {0.5, -0.25, 0.8, -0.9});
    Tensor eps = Tensor::from({1, 1, 2, 2}, {1.0, -2.0, 0.3, 0.7});
    const int t = 12;
    Tensor z_t = add_noise(z0, eps, t, s);
    // Stepping t -> 1 with the exact noise gives alpha_1*z0 + sigma_1*eps.
    Tensor out = denoise_step(z_t, eps, t, 1, s, SamplerMode::kDeterministic);
    for (int i = 0; i < 4; ++i)
        CHECK(out.data()[i] ==
              doctest::Approx(s.alpha[1] * z0.data()[i] + s.sigma[1] * eps.data()[i])
                  .epsilon(1e-10));
}

TEST_CASE("denoise_step validates the step contract") {
    DiffusionSchedule s = make_schedule(10, "linear-vp");
    Tensor z = Tensor::zeros({1, 1, 1, 1});
    CHECK_THROWS_AS(denoise_step(z, z, 3, 3, s, SamplerMode::kDeterministic), ArgumentError);
    CHECK_THROWS_AS(denoise_step(z, z, 3, 5, s, SamplerMode::kDeterministic), ArgumentError);
    CHECK_THROWS_AS(denoise_step(z, z, 10, 0, s, SamplerMode::kDeterministic), ArgumentError);
    CHECK_THROWS_AS(denoise_step(z, z, 5, 1, s, SamplerMode::kStochastic, nullptr),
                    ArgumentError);
}

TEST_CASE("stochastic split preserves the marginal noise level") {
    DiffusionSchedule s = make_schedule(100, "linear-vp");
    // For every (t, t_prev): sigma_eta^2 + eps_coef^2 = sigma_prev^2 by
    // construction; verify via the variance of repeated stochastic steps.
    const int t = 60, tp = 30;
    Tensor z = Tensor::zeros({1, 1, 1, 1});
    Tensor e = Tensor::zeros({1, 1, 1, 1});
    Rng rng(9);
    double m2 = 0.0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
        Tensor out = denoise_step(z, e, t, tp, s, SamplerMode::kStochastic, &rng);
        m2 += out.data()[0] * out.data()[0];
    }
    const double expected_var =
        (s.sigma[tp] / s.sigma[t]) * (s.sigma[tp] / s.sigma[t]) *
        (1.0 - (s.alpha[t] * s.alpha[t]) / (s.alpha[tp] * s.alpha[tp]));
    CHECK(m2 / trials == doctest::Approx(expected_var).epsilon(0.05));
}

TEST_CASE("sample_video determinism and output range") {
    Backbone net(tiny_arch(), 21);
    SampleOptions opt;
    opt.frames = 3;
    opt.height = 8;
    opt.width = 8;
    opt.steps = 5;
    opt.T = 50;
    opt.seed = 123;
    auto tokens = tokenize("green square moves up");
    Tensor v1 = sample_video(net, nullptr, nullptr, tokens, opt);
    Tensor v2 = sample_video(net, nullptr, nullptr, tokens, opt);
    CHECK(v1.values() == v2.values());
    CHECK(v1.shape() == std::vector<int>{3, 3, 8, 8});
    for (double x : v1.values()) {
        CHECK(x >= -1.0);
        CHECK(x <= 1.0);
        CHECK(std::isfinite(x));
    }
    opt.seed = 124;
    Tensor v3 = sample_video(net, nullptr, nullptr, tokens, opt);
    CHECK(v1.values() != v3.values());
}

TEST_CASE("encoder and bundle must be given together; geometry follows the bundle") {
    Backbone net(tiny_arch(), 22);
    SparseEncoder enc(tiny_arch(), EncoderVariant::kFull, Modality::kDepth, 23);
    SampleOptions opt;
    opt.frames = 3;
    opt.height = 8;
    opt.width = 8;
    opt.steps = 3;
    opt.T = 20;
    CHECK_THROWS_AS(sample_video(net, &enc, nullptr, {}, opt), ArgumentError);

    ConditionBundle b = ConditionBundle::empty(4, 3, 8, 8, Modality::kDepth);
    Tensor v = sample_video(net, &enc, &b, {}, opt);
    CHECK(v.shape() == std::vector<int>{4, 3, 8, 8});  // bundle wins over opt.frames

    ConditionBundle wrong = ConditionBundle::empty(4, 3, 8, 8, Modality::kSketch);
    CHECK_THROWS_AS(sample_video(net, &enc, &wrong, {}, opt), ArgumentError);
}

TEST_CASE("guidance weight 1 equals a single conditional pass") {
    Backbone net(tiny_arch(), 24);
    // Give the output layer weight so guidance arithmetic is visible.
    for (auto& [name, t] : net.params().all())
        if (name == "conv_out.w") {
            Rng rng(31);
            fill_normal(t, rng, 0.2);
        }
    SampleOptions a;
    a.frames = 2;
    a.height = 8;
    a.width = 8;
    a.steps = 4;
    a.T = 20;
    a.guidance = 1.0;
    auto tokens = tokenize("red circle still");
    Tensor v1 = sample_video(net, nullptr, nullptr, tokens, a);

    // Manual two-pass CFG with w = 1 collapses to the conditional branch, so
    // the w=1 fast path must agree with explicit cfg_combine at every step.
    DiffusionSchedule s = make_schedule(a.T, a.schedule_kind);
    Rng rng(a.seed);
    Tensor z = Tensor::zeros({2, 3, 8, 8});
    for (double& v : z.values()) v = rng.normal();
    std::vector<int> grid(a.steps + 1);
    for (int j = 0; j <= a.steps; ++j)
        grid[j] = static_cast<int>(std::lround(static_cast<double>(j) * (s.T - 1) / a.steps));
    Tensor text_c = net.embed_text(tokens);
    Tensor text_u = net.embed_text({});
    for (size_t j = grid.size() - 1; j > 0; --j) {
        Tensor ec = net.forward(z, grid[j], text_c);
        Tensor eu = net.forward(z, grid[j], text_u);
        Tensor eps = cfg_combine(eu, ec, 1.0);
        z = denoise_step(z, eps, grid[j], grid[j - 1], s, SamplerMode::kDeterministic);
    }
    for (size_t i = 0; i < z.size(); ++i)
        CHECK(v1.data()[i] == doctest::Approx(z.data()[i]).epsilon(1e-12));
}
