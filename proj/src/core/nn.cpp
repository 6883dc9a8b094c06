#include "fgvi/core/nn.hpp"

#include <cmath>

namespace fgvi::nn {

void Module::load_state_dict(const std::map<std::string, Tensor>& state) {
    for (auto& [name, v] : params_) {
        auto it = state.find(name);
        if (it == state.end()) throw ConfigError("missing parameter in checkpoint: " + name);
        if (!it->second.same_shape(v->val))
            throw ConfigError("parameter shape mismatch for " + name + ": checkpoint " +
                              Tensor::shape_str(it->second.shape()) + " vs model " +
                              Tensor::shape_str(v->val.shape()));
        std::copy(it->second.data(), it->second.data() + it->second.numel(), v->val.data());
    }
}

Tensor init_uniform(Shape shape, Dim fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(1.0 / static_cast<double>(std::max<Dim>(fan_in, 1)));
    for (Dim i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

Conv2d::Conv2d(Dim in_c, Dim out_c, Dim k, Dim stride_, Dim pad_, Rng& rng, bool bias)
    : stride(stride_), pad(pad_) {
    w = reg("w", init_uniform({out_c, in_c, k, k}, in_c * k * k, rng));
    if (bias) b = reg("b", init_uniform({out_c}, in_c * k * k, rng));
}

ConvTranspose2d::ConvTranspose2d(Dim in_c, Dim out_c, Dim k, Dim stride_, Dim pad_, Rng& rng,
                                 bool bias)
    : stride(stride_), pad(pad_) {
    w = reg("w", init_uniform({in_c, out_c, k, k}, in_c * k * k, rng));
    if (bias) b = reg("b", init_uniform({out_c}, in_c * k * k, rng));
}

TemporalConv::TemporalConv(Dim in_c, Dim out_c, Dim k, bool same_pad_, Rng& rng, bool bias)
    : same_pad(same_pad_) {
    w = reg("w", init_uniform({out_c, in_c, k}, in_c * k, rng));
    if (bias) b = reg("b", init_uniform({out_c}, in_c * k, rng));
}

DepthwiseConv2d::DepthwiseConv2d(Dim channels, Dim k_, Dim stride_, Rng& rng, bool bias)
    : k(k_), stride(stride_) {
    w = reg("w", init_uniform({channels, k, k}, k * k, rng));
    if (bias) b = reg("b", init_uniform({channels}, k * k, rng));
}

Var DepthwiseConv2d::operator()(const Var& x) const {
    const Dim H = x->val.shape()[2], W = x->val.shape()[3];
    const Dim Ho = (H + stride - 1) / stride, Wo = (W + stride - 1) / stride;
    const Dim pad_h = std::max<Dim>(0, (Ho - 1) * stride + k - H);
    const Dim pad_w = std::max<Dim>(0, (Wo - 1) * stride + k - W);
    return ad::depthwise_conv2d(x, w, b, stride, pad_h / 2, pad_h - pad_h / 2, pad_w / 2,
                                pad_w - pad_w / 2);
}

Linear::Linear(Dim in_f, Dim out_f, Rng& rng, bool bias) {
    w = reg("w", init_uniform({out_f, in_f}, in_f, rng));
    if (bias) b = reg("b", init_uniform({out_f}, in_f, rng));
}

LayerNorm::LayerNorm(Dim dim) {
    gamma = reg("gamma", Tensor::full({dim}, 1.0));
    beta = reg("beta", Tensor::zeros({dim}));
}

Mlp::Mlp(Dim in_f, Dim hidden, Dim out_f, Rng& rng)
    : fc1(in_f, hidden, rng), fc2(hidden, out_f, rng) {
    adopt("fc1", fc1);
    adopt("fc2", fc2);
}

}  // namespace fgvi::nn
