#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fgvi/core/tensor.hpp"

namespace fgvi::ad {

using core::Dim;
using core::Shape;
using core::Tensor;

struct Node;
using Var = std::shared_ptr<Node>;

// One value in the reverse-mode tape. Ops allocate a Node per result and
// register a closure that routes the output gradient to the parents.
struct Node {
    Tensor val;
    Tensor grad;  // allocated on demand, same shape as val
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;  // reads this->grad

    Tensor& ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros(val.shape());
        return grad;
    }
};

// Leaf without gradient tracking (inputs, targets, masks).
Var constant(Tensor v);
// Leaf with gradient tracking (trainable parameter).
Var param(Tensor v);

inline Var make_node(Tensor v, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bw);
    }
    return n;
}

// Accumulate gradients of everything `root` depends on. `root` must hold a
// single element; its seed gradient is 1.
void backward(const Var& root);

// Releases a graph iteratively; avoids deep recursive shared_ptr destruction
// on long op chains. Called automatically by backward(); exposed for
// forward-only evaluations of big graphs.
void release_graph(const Var& root);

}  // namespace fgvi::ad
