#include "aerogen/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace aerogen::nn {

Var ParamSet::param(const std::string& name, Tensor init) {
    for (const auto& [n, v] : named_) {
        if (n == name) throw std::invalid_argument("ParamSet: duplicate param " + name);
    }
    Var v = leaf(std::move(init), true);
    named_.emplace_back(name, v);
    return v;
}

Var ParamSet::param_he(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                       double gain) {
    const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
    return param(name, Tensor::randn(std::move(shape), rng_, stddev));
}

Var ParamSet::param_zeros(const std::string& name, std::vector<int64_t> shape) {
    return param(name, Tensor::zeros(std::move(shape)));
}

std::vector<Var> ParamSet::vars() const {
    std::vector<Var> out;
    out.reserve(named_.size());
    for (const auto& [n, v] : named_) out.push_back(v);
    return out;
}

int64_t ParamSet::count() const {
    int64_t n = 0;
    for (const auto& [name, v] : named_) n += v->value.numel();
    return n;
}

std::map<std::string, Tensor> ParamSet::state_dict() const {
    std::map<std::string, Tensor> sd;
    for (const auto& [n, v] : named_) sd.emplace(n, v->value);
    return sd;
}

void ParamSet::load_state_dict(const std::map<std::string, Tensor>& sd) {
    for (auto& [n, v] : named_) {
        auto it = sd.find(n);
        if (it == sd.end()) throw std::runtime_error("load_state_dict: missing param " + n);
        if (!it->second.same_shape(v->value)) {
            throw std::runtime_error("load_state_dict: shape mismatch for " + n);
        }
        v->value = it->second;
    }
}

Conv2d::Conv2d(ParamSet& ps, const std::string& name, int64_t c_in, int64_t c_out, int k,
               int stride_, int pad_, bool zero_init, bool bias)
    : stride(stride_), pad(pad_) {
    const int64_t fan_in = c_in * k * k;
    w = zero_init ? ps.param_zeros(name + ".w", {c_out, c_in, k, k})
                  : ps.param_he(name + ".w", {c_out, c_in, k, k}, fan_in);
    b = bias ? ps.param_zeros(name + ".b", {c_out}) : nullptr;
}

Linear::Linear(ParamSet& ps, const std::string& name, int64_t in, int64_t out, bool zero_init,
               bool bias) {
    w = zero_init ? ps.param_zeros(name + ".w", {out, in})
                  : ps.param_he(name + ".w", {out, in}, in);
    b = bias ? ps.param_zeros(name + ".b", {out}) : nullptr;
}

GroupNorm::GroupNorm(ParamSet& ps, const std::string& name, int64_t channels, int groups_)
    : groups(groups_) {
    gamma = ps.param(name + ".gamma", Tensor::full({channels}, 1.0));
    beta = ps.param_zeros(name + ".beta", {channels});
}

Ema::Ema(const ParamSet& ps, double decay) : decay_(decay) {
    for (const auto& [n, v] : ps.named()) shadow_.emplace(n, v->value);
}

void Ema::update(const ParamSet& ps) {
    for (const auto& [n, v] : ps.named()) {
        Tensor& s = shadow_.at(n);
        const int64_t count = s.numel();
        for (int64_t i = 0; i < count; ++i) {
            s[i] = decay_ * s[i] + (1.0 - decay_) * v->value[i];
        }
    }
}

void Ema::swap(ParamSet& ps) {
    for (const auto& [n, v] : ps.named()) std::swap(shadow_.at(n).data, v->value.data);
}

}  // namespace aerogen::nn
