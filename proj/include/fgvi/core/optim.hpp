#pragma once

#include <cmath>
#include <vector>

#include "fgvi/core/autodiff.hpp"

namespace fgvi::nn {

// Adam with bias correction. step() consumes the gradients accumulated in
// the parameter nodes and zeroes them afterwards.
class Adam {
public:
    explicit Adam(std::vector<ad::Var> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.push_back(core::Tensor::zeros(p->val.shape()));
            v_.push_back(core::Tensor::zeros(p->val.shape()));
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (!p->grad.defined()) continue;
            double* w = p->val.data();
            double* g = p->grad.data();
            double* m = m_[i].data();
            double* v = v_[i].data();
            const core::Dim n = p->val.numel();
            for (core::Dim j = 0; j < n; ++j) {
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
                g[j] = 0.0;
            }
        }
    }

private:
    std::vector<ad::Var> params_;
    std::vector<core::Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace fgvi::nn
