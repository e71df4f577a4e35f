#include "aerogen/nn/optim.hpp"

#include <cmath>

namespace aerogen::nn {

void Adam::step(const std::vector<Var>& params) {
    ++t_;
    double clip_scale = 1.0;
    if (grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& p : params) {
            if (p->grad.numel() == 0) continue;
            for (double g : p->grad.data) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > grad_clip) clip_scale = grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (const auto& p : params) {
        if (p->grad.numel() == 0) continue;
        auto& st = state_[p.get()];
        if (st.m.numel() == 0) {
            st.m = Tensor::zeros(p->value.shape);
            st.v = Tensor::zeros(p->value.shape);
        }
        const int64_t n = p->value.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double g = p->grad[i] * clip_scale;
            st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
            st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            double upd = mhat / (std::sqrt(vhat) + eps);
            if (weight_decay > 0.0) upd += weight_decay * p->value[i];
            p->value[i] -= lr * upd;
        }
    }
}

void Adam::zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) {
        if (p->grad.numel() == 0) continue;
        for (auto& g : p->grad.data) g = 0.0;
    }
}

}  // namespace aerogen::nn
