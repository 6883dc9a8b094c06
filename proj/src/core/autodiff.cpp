#include "fgvi/core/autodiff.hpp"

#include <unordered_set>

namespace fgvi::ad {

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = false;
    return n;
}

Var param(Tensor v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = true;
    return n;
}

void backward(const Var& root) {
    if (root->val.numel() != 1) throw ShapeError("backward(): root must be scalar");
    if (!root->requires_grad) return;

    // iterative post-order topological sort
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
    }
    release_graph(root);
}

void release_graph(const Var& root) {
    // Detach edges iteratively so shared_ptr teardown never recurses deeply.
    std::vector<Var> pending;
    pending.reserve(64);
    pending.push_back(root);
    while (!pending.empty()) {
        Var n = pending.back();
        pending.pop_back();
        for (auto& p : n->parents)
            if (!p->parents.empty()) pending.push_back(p);
        n->parents.clear();
        n->backward_fn = nullptr;
    }
}

}  // namespace fgvi::ad
