#pragma once

// Central finite-difference gradient checking for test use. Independent of
// the reverse-mode path it verifies: it only calls the forward evaluation.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fgvi/core/autodiff.hpp"
#include "fgvi/core/rng.hpp"

namespace fgvi::test {

using ad::Var;
using core::Dim;
using core::Tensor;

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "leaf k, flat index i"
};

// `make_loss` must rebuild the scalar loss graph from the leaves' current
// values on every call (leaves are shared; only their .val is mutated).
// Checks every coordinate when `probe_stride` is 1, otherwise every k-th.
inline GradCheckResult grad_check(const std::vector<Var>& leaves,
                                  const std::function<Var()>& make_loss,
                                  double h = 1e-6, int probe_stride = 1) {
    // analytic gradients
    for (const auto& l : leaves) {
        if (l->grad.defined()) l->grad.fill(0.0);
    }
    Var loss = make_loss();
    ad::backward(loss);
    std::vector<Tensor> analytic;
    for (const auto& l : leaves)
        analytic.push_back(l->grad.defined() ? l->grad.clone()
                                             : Tensor::zeros(l->val.shape()));

    GradCheckResult res;
    for (size_t k = 0; k < leaves.size(); ++k) {
        Tensor& x = leaves[k]->val;
        for (Dim i = 0; i < x.numel(); i += probe_stride) {
            const double orig = x[i];
            const double step = h * std::max(1.0, std::abs(orig));
            x[i] = orig + step;
            Var lp = make_loss();
            double fp = lp->val[0];
            ad::release_graph(lp);
            x[i] = orig - step;
            Var lm = make_loss();
            double fm = lm->val[0];
            ad::release_graph(lm);
            x[i] = orig;
            const double num = (fp - fm) / (2.0 * step);
            const double ana = analytic[k][i];
            const double rel = std::abs(num - ana) / std::max({1.0, std::abs(num), std::abs(ana)});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "leaf " + std::to_string(k) + ", index " + std::to_string(i);
            }
        }
    }
    return res;
}

inline Tensor random_tensor(core::Shape shape, core::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (Dim i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace fgvi::test
