#pragma once

#include <unordered_map>

#include "aerogen/nn/autograd.hpp"

namespace aerogen::nn {

// Adam with optional decoupled weight decay.
class Adam {
public:
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // global L2 clip; 0 disables

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

    void step(const std::vector<Var>& params);
    static void zero_grad(const std::vector<Var>& params);

private:
    struct State {
        Tensor m, v;
    };
    int64_t t_ = 0;
    std::unordered_map<Node*, State> state_;
};

}  // namespace aerogen::nn
