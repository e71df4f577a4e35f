#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "aerogen/nn/tensor.hpp"

namespace aerogen::nn {

// Define-by-run reverse-mode autodiff. Each op builds a Node whose backward
// closure accumulates into the parents' grads; backward() walks the tape in
// reverse topological order. Children hold shared ownership of parents, never
// the other way around, so graphs free themselves when the root goes away.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.numel() == 0) grad = Tensor::zeros(value.shape);
        return grad;
    }
};

using Var = std::shared_ptr<Node>;

// Gradient recording is on by default; sampling/inference wraps itself in a
// NoGradGuard so long loops do not retain graphs.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

Var leaf(Tensor value, bool requires_grad);
Var constant(Tensor value);

// Builds an op node; drops parents and closure when recording is off or no
// parent needs gradients.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Seeds root->grad with ones (any shape) and back-propagates through the tape.
void backward(const Var& root);

}  // namespace aerogen::nn
