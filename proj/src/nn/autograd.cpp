#include "aerogen/nn/autograd.hpp"

#include <unordered_set>

namespace aerogen::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                any = true;
                break;
            }
        }
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward_fn);
        }
    }
    return n;
}

void backward(const Var& root) {
    if (!root->requires_grad) return;
    // iterative post-order to get reverse-topological visitation
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    auto& g = root->ensure_grad();
    for (auto& v : g.data) v = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

}  // namespace aerogen::nn
