#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fgvi/core/ops.hpp"
#include "fgvi/core/rng.hpp"

namespace fgvi::nn {

using ad::Var;
using core::Dim;
using core::Rng;
using core::Shape;
using core::Tensor;

// Base for anything with trainable parameters. Parameters are registered
// with stable names so checkpoints can be saved/restored field by field.
class Module {
public:
    virtual ~Module() = default;
    Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;

    const std::vector<std::pair<std::string, Var>>& named_params() const { return params_; }

    std::vector<Var> param_vars() const {
        std::vector<Var> out;
        out.reserve(params_.size());
        for (const auto& [n, v] : params_) out.push_back(v);
        return out;
    }

    void zero_grad() {
        for (auto& [n, v] : params_)
            if (v->grad.defined()) v->grad.fill(0.0);
    }

    std::map<std::string, Tensor> state_dict() const {
        std::map<std::string, Tensor> out;
        for (const auto& [n, v] : params_) out[n] = v->val;
        return out;
    }

    void load_state_dict(const std::map<std::string, Tensor>& state);

protected:
    Var reg(const std::string& name, Tensor t) {
        Var v = ad::param(std::move(t));
        params_.emplace_back(name, v);
        return v;
    }

    void adopt(const std::string& prefix, const Module& child) {
        for (const auto& [n, v] : child.named_params()) params_.emplace_back(prefix + "." + n, v);
    }

private:
    std::vector<std::pair<std::string, Var>> params_;
};

// U(-b, b) with b = sqrt(1/fan_in), the usual conv/linear default.
Tensor init_uniform(Shape shape, Dim fan_in, Rng& rng);

struct Conv2d : Module {
    Conv2d(Dim in_c, Dim out_c, Dim k, Dim stride, Dim pad, Rng& rng, bool bias = true);
    Var operator()(const Var& x) const { return ad::conv2d(x, w, b, stride, pad); }
    Var w, b;
    Dim stride, pad;
};

struct ConvTranspose2d : Module {
    ConvTranspose2d(Dim in_c, Dim out_c, Dim k, Dim stride, Dim pad, Rng& rng, bool bias = true);
    Var operator()(const Var& x) const { return ad::conv_transpose2d(x, w, b, stride, pad); }
    Var w, b;
    Dim stride, pad;
};

struct TemporalConv : Module {
    // same_pad keeps T (odd k); otherwise valid convolution shrinks T by k-1
    TemporalConv(Dim in_c, Dim out_c, Dim k, bool same_pad, Rng& rng, bool bias = true);
    Var operator()(const Var& x) const { return ad::temporal_conv(x, w, b, same_pad); }
    Var w, b;
    bool same_pad;
};

struct DepthwiseConv2d : Module {
    DepthwiseConv2d(Dim channels, Dim k, Dim stride, Rng& rng, bool bias = true);
    // "same-ceil" padding: output is ceil(H/stride) x ceil(W/stride)
    Var operator()(const Var& x) const;
    Var w, b;
    Dim k, stride;
};

struct Linear : Module {
    Linear(Dim in_f, Dim out_f, Rng& rng, bool bias = true);
    Var operator()(const Var& x) const { return ad::linear(x, w, b); }
    Var w, b;
};

struct LayerNorm : Module {
    explicit LayerNorm(Dim dim);
    Var operator()(const Var& x) const { return ad::layer_norm(x, gamma, beta); }
    Var gamma, beta;
};

// two-layer token MLP with GELU, pre-norm style users add LN outside
struct Mlp : Module {
    Mlp(Dim in_f, Dim hidden, Dim out_f, Rng& rng);
    Var operator()(const Var& x) const { return fc2(ad::gelu(fc1(x))); }
    Linear fc1, fc2;
};

}  // namespace fgvi::nn
