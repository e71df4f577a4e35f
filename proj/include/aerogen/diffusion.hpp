#pragma once

#include <functional>
#include <optional>

#include "aerogen/nn/rng.hpp"
#include "aerogen/nn/tensor.hpp"

namespace aerogen {

struct BadParameter : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonFiniteState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ScheduleKind { Linear, Cosine };

struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // (0,1)
    std::vector<double> alphas;      // 1 - beta
    std::vector<double> alphas_bar;  // cumulative products, strictly decreasing
};

// Linear schedule uses the DDPM 1e-4..0.02 range rescaled by 1000/T; cosine is
// the squared-cosine alpha-bar schedule. Throws BadParameter for T < 2.
NoiseSchedule make_schedule(int T, ScheduleKind kind);

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps. Noise is caller-supplied so
// closed-form tests can be exact.
nn::Tensor q_sample(const nn::Tensor& x0, int t, const nn::Tensor& eps,
                    const NoiseSchedule& sched);

// Noise predictor with conditioning already bound (the denoiser produces these
// closures; cond = None is just a closure that ignores conditioning).
using ModelFn = std::function<nn::Tensor(const nn::Tensor& x_t, int t)>;

// Draws t uniform and eps normal, returns mean((eps - model(q_sample))^2).
double training_loss(const ModelFn& model, const nn::Tensor& x0, const NoiseSchedule& sched,
                     nn::Rng& rng);

// Ancestral DDPM sampling from t=T-1 down to 0 (posterior mean + beta-tilde
// noise). Deterministic per seed. Throws NonFiniteState if a step diverges.
nn::Tensor ddpm_sample(const ModelFn& model, const std::vector<int64_t>& shape,
                       const NoiseSchedule& sched, uint64_t seed);

// Deterministic (eta = 0) DDIM over an evenly strided timestep subsequence.
// When x_init is given the seed is unused.
nn::Tensor ddim_sample(const ModelFn& model, const std::vector<int64_t>& shape,
                       const NoiseSchedule& sched, int n_steps, uint64_t seed,
                       const nn::Tensor* x_init = nullptr);

// The strided subsequence used by ddim_sample (descending, ends at 0).
std::vector<int> ddim_timesteps(int T, int n_steps);

}  // namespace aerogen
