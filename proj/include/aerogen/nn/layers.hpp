#pragma once

#include <map>
#include <string>
#include <vector>

#include "aerogen/nn/ops.hpp"
#include "aerogen/nn/rng.hpp"

namespace aerogen::nn {

// Named trainable parameters for one model. Registration order is the
// initialization draw order, so a fixed seed reproduces identical weights.
class ParamSet {
public:
    explicit ParamSet(uint64_t seed) : rng_(seed) {}

    Var param(const std::string& name, Tensor init);
    // Kaiming-style normal init, std = gain / sqrt(fan_in)
    Var param_he(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                 double gain = 1.0);
    Var param_zeros(const std::string& name, std::vector<int64_t> shape);

    const std::vector<std::pair<std::string, Var>>& named() const { return named_; }
    std::vector<Var> vars() const;
    int64_t count() const;

    std::map<std::string, Tensor> state_dict() const;
    void load_state_dict(const std::map<std::string, Tensor>& sd);

    Rng& rng() { return rng_; }

private:
    Rng rng_;
    std::vector<std::pair<std::string, Var>> named_;
};

// ---- layer building blocks ---------------------------------------------------

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamSet& ps, const std::string& name, int64_t c_in, int64_t c_out, int k, int stride,
           int pad, bool zero_init = false, bool bias = true);
    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(ParamSet& ps, const std::string& name, int64_t in, int64_t out, bool zero_init = false,
           bool bias = true);
    Var operator()(const Var& x) const { return linear(x, w, b); }
};

struct GroupNorm {
    Var gamma, beta;
    int groups = 8;

    GroupNorm() = default;
    GroupNorm(ParamSet& ps, const std::string& name, int64_t channels, int groups);
    Var operator()(const Var& x) const { return group_norm(x, gamma, beta, groups); }
};

// Exponential moving average of a parameter set; sampling uses the shadow
// weights for stability on short training runs.
class Ema {
public:
    Ema() = default;
    Ema(const ParamSet& ps, double decay);
    void update(const ParamSet& ps);
    // swaps shadow <-> live values; call again to restore
    void swap(ParamSet& ps);
    const std::map<std::string, Tensor>& shadow() const { return shadow_; }
    void load(std::map<std::string, Tensor> shadow) { shadow_ = std::move(shadow); }
    double decay() const { return decay_; }

private:
    double decay_ = 0.999;
    std::map<std::string, Tensor> shadow_;
};

}  // namespace aerogen::nn
