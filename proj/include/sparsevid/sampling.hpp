#pragma once

#include <cstdint>
#include <vector>

#include "sparsevid/backbone.hpp"
#include "sparsevid/schedule.hpp"
#include "sparsevid/sparse_encoder.hpp"

namespace sparsevid {

// eps_uncond + w * (eps_cond - eps_uncond). Value-level, no autograd.
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w);

enum class SamplerMode { kDeterministic, kStochastic };

// One reverse step t -> t_prev. Deterministic: z0_hat = (z_t - sigma_t*eps)/alpha_t
// clamped to [-1,1], then alpha_prev*z0_hat + sigma_prev*eps. Stochastic adds
// schedule-consistent fresh noise (eta = 1 split of sigma_prev).
Tensor denoise_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                    const DiffusionSchedule& sched, SamplerMode mode, Rng* rng = nullptr);

struct SampleOptions {
    int frames = 8;
    int height = 32;
    int width = 32;
    int steps = 50;
    double guidance = 3.0;
    SamplerMode mode = SamplerMode::kDeterministic;
    uint64_t seed = 0;
    int T = 1000;
    std::string schedule_kind = "linear-vp";
    // When true, encoder residuals are injected into the unconditional
    // guidance branch as well (default mirrors ControlNet practice: no).
    bool residuals_on_uncond = false;
};

// Full iterative denoising. encoder and bundle must be given together;
// bundle geometry overrides frames/height/width.
Tensor sample_video(const Backbone& backbone, const SparseEncoder* encoder,
                    const ConditionBundle* bundle, const std::vector<int>& prompt_tokens,
                    const SampleOptions& opt);

}  // namespace sparsevid
