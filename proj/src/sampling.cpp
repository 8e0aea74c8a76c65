#include "sparsevid/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "sparsevid/errors.hpp"

namespace sparsevid {

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w) {
    if (eps_uncond.shape() != eps_cond.shape())
        throw ArgumentError("cfg_combine: shape mismatch");
    Tensor out = Tensor::zeros(eps_uncond.shape());
    const double* u = eps_uncond.data();
    const double* c = eps_cond.data();
    double* o = out.data();
    for (size_t i = 0; i < out.size(); ++i) o[i] = u[i] + w * (c[i] - u[i]);
    return out;
}

Tensor denoise_step(const Tensor& z_t, const Tensor& eps_pred, int t, int t_prev,
                    const DiffusionSchedule& sched, SamplerMode mode, Rng* rng) {
    if (z_t.shape() != eps_pred.shape()) throw ArgumentError("denoise_step: shape mismatch");
    if (t_prev < 0 || t >= sched.T || t <= t_prev)
        throw ArgumentError("denoise_step: need T > t > t_prev >= 0");
    const double a_t = sched.alpha[t], s_t = sched.sigma[t];
    const double a_p = sched.alpha[t_prev], s_p = sched.sigma[t_prev];

    double noise_std = 0.0;
    double eps_coef = s_p;
    if (mode == SamplerMode::kStochastic) {
        if (!rng) throw ArgumentError("denoise_step: stochastic mode needs an rng");
        // eta = 1 noise split (DDPM-like) consistent with the schedule:
        // sigma_eta = (s_p/s_t) * sqrt(1 - a_t^2/a_p^2), remainder on eps_pred.
        const double ratio = (s_t > 0.0) ? (s_p / s_t) : 0.0;
        noise_std = ratio * std::sqrt(std::max(0.0, 1.0 - (a_t * a_t) / (a_p * a_p)));
        eps_coef = std::sqrt(std::max(0.0, s_p * s_p - noise_std * noise_std));
    }

    Tensor out = Tensor::zeros(z_t.shape());
    const double* z = z_t.data();
    const double* e = eps_pred.data();
    double* o = out.data();
    const double inv_a = 1.0 / a_t;
    for (size_t i = 0; i < out.size(); ++i) {
        double z0 = (z[i] - s_t * e[i]) * inv_a;
        z0 = std::clamp(z0, -1.0, 1.0);
        o[i] = a_p * z0 + eps_coef * e[i];
        if (noise_std > 0.0) o[i] += noise_std * rng->normal();
    }
    return out;
}

Tensor sample_video(const Backbone& backbone, const SparseEncoder* encoder,
                    const ConditionBundle* bundle, const std::vector<int>& prompt_tokens,
                    const SampleOptions& opt) {
    if (opt.steps < 1) throw ArgumentError("sample_video: steps must be >= 1");
    if ((encoder != nullptr) != (bundle != nullptr))
        throw ArgumentError("sample_video: encoder and bundle must be given together");
    int N = opt.frames, H = opt.height, W = opt.width;
    if (bundle) {
        bundle->validate();
        if (encoder->modality() != bundle->modality)
            throw ArgumentError("sample_video: encoder/bundle modality mismatch");
        N = bundle->frames();
        H = bundle->conditions.shape()[2];
        W = bundle->conditions.shape()[3];
    }
    const DiffusionSchedule sched = make_schedule(opt.T, opt.schedule_kind);
    Rng rng(opt.seed);

    Tensor z = Tensor::zeros({N, backbone.config().channels, H, W});
    for (double& v : z.values()) v = rng.normal();

    // Timestep grid: steps+1 indices from T-1 down to 0.
    std::vector<int> grid(opt.steps + 1);
    for (int j = 0; j <= opt.steps; ++j)
        grid[j] = static_cast<int>(std::lround(static_cast<double>(j) * (sched.T - 1) / opt.steps));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    Tensor text_cond = backbone.embed_text(prompt_tokens);
    Tensor text_null = backbone.embed_text({});
    Tensor enc_input;
    Tensor enc_text;
    if (encoder) {
        enc_input = build_encoder_input(*bundle);
        enc_text = encoder->embed_text(prompt_tokens);
    }

    for (size_t j = grid.size() - 1; j > 0; --j) {
        const int t = grid[j];
        const int t_prev = grid[j - 1];

        ResidualStack residuals;
        const ResidualStack* res_ptr = nullptr;
        if (encoder) {
            const Tensor* zp = encoder->consumes_noised_sample() ? &z : nullptr;
            residuals = encoder->forward(enc_input, zp, t, enc_text);
            res_ptr = &residuals;
        }

        Tensor eps;
        if (opt.guidance == 1.0) {
            eps = backbone.forward(z, t, text_cond, res_ptr);
        } else {
            Tensor eps_cond = backbone.forward(z, t, text_cond, res_ptr);
            Tensor eps_uncond =
                backbone.forward(z, t, text_null, opt.residuals_on_uncond ? res_ptr : nullptr);
            eps = cfg_combine(eps_uncond, eps_cond, opt.guidance);
        }
        z = denoise_step(z, eps, t, t_prev, sched, opt.mode,
                         opt.mode == SamplerMode::kStochastic ? &rng : nullptr);
    }
    return z;
}

}  // namespace sparsevid
