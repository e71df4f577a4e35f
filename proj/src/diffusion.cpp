#include "aerogen/diffusion.hpp"

#include <cmath>

namespace aerogen {

NoiseSchedule make_schedule(int T, ScheduleKind kind) {
    if (T < 2) throw BadParameter("make_schedule: T must be >= 2");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    if (kind == ScheduleKind::Linear) {
        const double rescale = 1000.0 / T;
        const double b0 = 1e-4 * rescale;
        const double b1 = 0.02 * rescale;
        for (int t = 0; t < T; ++t) {
            const double f = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
            s.betas[static_cast<size_t>(t)] = std::min(b0 + f * (b1 - b0), 0.999);
        }
    } else {
        const double eps = 0.008;
        auto f = [&](double t) {
            const double v = std::cos((t / T + eps) / (1.0 + eps) * M_PI / 2.0);
            return v * v;
        };
        double prev = 1.0;
        for (int t = 0; t < T; ++t) {
            const double ab = f(t + 1.0) / f(0.0);
            double beta = 1.0 - ab / prev;
            beta = std::min(std::max(beta, 1e-8), 0.999);
            s.betas[static_cast<size_t>(t)] = beta;
            prev *= 1.0 - beta;
        }
    }
    s.alphas.resize(static_cast<size_t>(T));
    s.alphas_bar.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.alphas[static_cast<size_t>(t)] = 1.0 - s.betas[static_cast<size_t>(t)];
        prod *= s.alphas[static_cast<size_t>(t)];
        s.alphas_bar[static_cast<size_t>(t)] = prod;
    }
    for (int t = 1; t < T; ++t) {
        if (!(s.alphas_bar[static_cast<size_t>(t)] < s.alphas_bar[static_cast<size_t>(t - 1)])) {
            throw BadParameter("make_schedule: alphas_bar not strictly decreasing");
        }
    }
    return s;
}

nn::Tensor q_sample(const nn::Tensor& x0, int t, const nn::Tensor& eps,
                    const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) throw ShapeMismatch("q_sample: x0/eps shape mismatch");
    if (t < 0 || t >= sched.T) throw BadParameter("q_sample: t out of range");
    const double ab = sched.alphas_bar[static_cast<size_t>(t)];
    const double c0 = std::sqrt(ab);
    const double c1 = std::sqrt(1.0 - ab);
    nn::Tensor out(x0.shape);
    const int64_t n = x0.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = c0 * x0[i] + c1 * eps[i];
    return out;
}

double training_loss(const ModelFn& model, const nn::Tensor& x0, const NoiseSchedule& sched,
                     nn::Rng& rng) {
    const int t = static_cast<int>(rng.randint(0, sched.T - 1));
    nn::Tensor eps(x0.shape);
    for (auto& v : eps.data) v = rng.normal();
    const nn::Tensor x_t = q_sample(x0, t, eps, sched);
    const nn::Tensor pred = model(x_t, t);
    if (!pred.same_shape(x0)) throw ShapeMismatch("training_loss: model output shape mismatch");
    double acc = 0.0;
    const int64_t n = x0.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double d = eps[i] - pred[i];
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

nn::Tensor ddpm_sample(const ModelFn& model, const std::vector<int64_t>& shape,
                       const NoiseSchedule& sched, uint64_t seed) {
    nn::Rng rng(seed);
    nn::Tensor x(shape);
    for (auto& v : x.data) v = rng.normal();
    for (int t = sched.T - 1; t >= 0; --t) {
        const double beta = sched.betas[static_cast<size_t>(t)];
        const double alpha = sched.alphas[static_cast<size_t>(t)];
        const double ab = sched.alphas_bar[static_cast<size_t>(t)];
        const nn::Tensor eps_hat = model(x, t);
        if (!eps_hat.same_shape(x)) throw ShapeMismatch("ddpm_sample: model output shape");
        const double c_eps = beta / std::sqrt(1.0 - ab);
        const double c_x = 1.0 / std::sqrt(alpha);
        double sigma = 0.0;
        if (t > 0) {
            const double ab_prev = sched.alphas_bar[static_cast<size_t>(t - 1)];
            sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
        }
        const int64_t n = x.numel();
        for (int64_t i = 0; i < n; ++i) {
            double v = c_x * (x[i] - c_eps * eps_hat[i]);
            if (t > 0) v += sigma * rng.normal();
            x[i] = v;
        }
        if (!x.all_finite()) {
            throw NonFiniteState("ddpm_sample: non-finite state at t=" + std::to_string(t));
        }
    }
    return x;
}

std::vector<int> ddim_timesteps(int T, int n_steps) {
    if (n_steps < 1) throw BadParameter("ddim: n_steps must be >= 1");
    if (n_steps > T) throw BadParameter("ddim: n_steps must be <= T");
    std::vector<int> ts;
    if (n_steps == 1) {
        ts.push_back(T - 1);
        return ts;
    }
    // evenly strided, descending from T-1 to 0 inclusive
    for (int i = 0; i < n_steps; ++i) {
        const double f = static_cast<double>(i) / (n_steps - 1);
        const int t = static_cast<int>(std::llround((1.0 - f) * (T - 1)));
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    return ts;
}

nn::Tensor ddim_sample(const ModelFn& model, const std::vector<int64_t>& shape,
                       const NoiseSchedule& sched, int n_steps, uint64_t seed,
                       const nn::Tensor* x_init) {
    const auto ts = ddim_timesteps(sched.T, n_steps);
    nn::Tensor x;
    if (x_init) {
        if (x_init->shape != shape) throw ShapeMismatch("ddim_sample: x_init shape mismatch");
        x = *x_init;
    } else {
        nn::Rng rng(seed);
        x = nn::Tensor(shape);
        for (auto& v : x.data) v = rng.normal();
    }
    for (size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const double ab = sched.alphas_bar[static_cast<size_t>(t)];
        const double ab_prev = (i + 1 < ts.size())
                                   ? sched.alphas_bar[static_cast<size_t>(ts[i + 1])]
                                   : 1.0;
        const nn::Tensor eps_hat = model(x, t);
        if (!eps_hat.same_shape(x)) throw ShapeMismatch("ddim_sample: model output shape");
        const double sq_ab = std::sqrt(ab);
        const double sq_1mab = std::sqrt(1.0 - ab);
        const double sq_abp = std::sqrt(ab_prev);
        const double sq_1mabp = std::sqrt(1.0 - ab_prev);
        const int64_t n = x.numel();
        for (int64_t j = 0; j < n; ++j) {
            const double x0_hat = (x[j] - sq_1mab * eps_hat[j]) / sq_ab;
            x[j] = sq_abp * x0_hat + sq_1mabp * eps_hat[j];
        }
        if (!x.all_finite()) {
            throw NonFiniteState("ddim_sample: non-finite state at t=" + std::to_string(t));
        }
    }
    return x;
}

}  // namespace aerogen
