#include "sparsevid/schedule.hpp"

#include <cmath>

#include "sparsevid/errors.hpp"

namespace sparsevid {
namespace {

// Integrated log-retention curve of a linear-beta VP schedule (DDPM-style
// beta in [1e-4, 0.02] over 1000 steps), parameterized on u in [0,1] so the
// endpoints do not move with T.
double neg_log_alpha_bar(double u) { return 0.1 * u + 9.95 * u * u; }

}  // namespace

DiffusionSchedule make_schedule(int T, const std::string& kind) {
    if (T < 2) throw ArgumentError("make_schedule: T must be >= 2");
    if (kind != "linear-vp")
        throw ConfigError("make_schedule: unsupported schedule kind '" + kind + "'");
    DiffusionSchedule s;
    s.T = T;
    s.alpha.resize(T);
    s.sigma.resize(T);
    s.retention.resize(T);
    double log_abar = 0.0;
    double prev_f = 0.0;
    for (int t = 0; t < T; ++t) {
        const double u = static_cast<double>(t) / (T - 1);
        const double f = neg_log_alpha_bar(u);
        s.retention[t] = std::exp(prev_f - f);
        prev_f = f;
        log_abar += std::log(s.retention[t]);
        const double abar = std::exp(log_abar);
        s.alpha[t] = std::sqrt(abar);
        s.sigma[t] = std::sqrt(1.0 - abar);
    }
    return s;
}

Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const DiffusionSchedule& sched) {
    if (z0.shape() != eps.shape()) throw ArgumentError("add_noise: shape mismatch");
    if (t < 0 || t >= sched.T) throw ArgumentError("add_noise: step index out of range");
    return add(scale(z0, sched.alpha[t]), scale(eps, sched.sigma[t]));
}

Tensor diffusion_loss(const Tensor& eps_pred, const Tensor& eps) {
    if (eps_pred.shape() != eps.shape()) throw ArgumentError("diffusion_loss: shape mismatch");
    return mse(eps_pred, eps);
}

}  // namespace sparsevid
