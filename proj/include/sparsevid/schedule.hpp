#pragma once

#include <string>
#include <vector>

#include "sparsevid/tensor.hpp"

namespace sparsevid {

// Variance-preserving noise schedule: alpha[t]^2 + sigma[t]^2 = 1 for all t.
struct DiffusionSchedule {
    int T = 0;
    std::vector<double> alpha;
    std::vector<double> sigma;
    // Per-step signal retention factors r_t with alpha[t]^2 = prod_{s<=t} r_s.
    std::vector<double> retention;
};

// kind: "linear-vp" (linear-beta style retention anchored so that
// alpha[0] = 1 and alpha[T-1] ~ 0.0066 for every T >= 2).
DiffusionSchedule make_schedule(int T, const std::string& kind);

// alpha[t]*z0 + sigma[t]*eps, elementwise. Participates in autograd.
Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const DiffusionSchedule& sched);

// Mean squared error of the noise prediction (Eq.-style training objective).
Tensor diffusion_loss(const Tensor& eps_pred, const Tensor& eps);

}  // namespace sparsevid
