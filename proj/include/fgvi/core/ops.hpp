#pragma once

#include <vector>

#include "fgvi/core/autodiff.hpp"

// Differentiable tensor ops. Forward evaluates eagerly; each op registers
// the matching reverse-mode closure. Shapes are validated up front and all
// mismatches throw ShapeError.
namespace fgvi::ad {

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var abs(const Var& a);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var relu(const Var& a);
Var gelu(const Var& a);

// ---- reductions ----
Var sum_all(const Var& a);   // -> shape {1}
Var mean_all(const Var& a);  // -> shape {1}

// ---- structure ----
Var reshape(const Var& a, Shape shape);
// out.flat[i] = idx[i] >= 0 ? a.flat[idx[i]] : 0. Backward scatter-adds.
// Every non-negative index must be used at most once OR the caller accepts
// summed gradients (that is exactly scatter-add semantics).
Var take(const Var& a, std::shared_ptr<const std::vector<Dim>> idx, Shape out_shape);
Var concat(const std::vector<Var>& xs, Dim axis);
Var slice(const Var& a, Dim axis, Dim start, Dim len);
// swap the last two dims of a 2-d or 3-d tensor
Var transpose_last2(const Var& a);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);                 // (M,K)x(K,N)
Var bmm(const Var& a, const Var& b);                    // (B,M,K)x(B,K,N)
Var linear(const Var& x, const Var& w, const Var& b);   // x(N,K), w(F,K), b(F) or null

// ---- normalization / attention ----
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// softmax over the last dim; `mask_addend` (may be undefined Tensor) is added
// to the logits first (0 = keep, large negative = drop).
Var softmax_lastdim(const Var& x, const Tensor& mask_addend = Tensor());

// ---- convolutions ----
// x (N,C,H,W), w (F,C,kh,kw), b (F) or null
Var conv2d(const Var& x, const Var& w, const Var& b, Dim stride, Dim pad);
// x (N,C,H,W), w (C,F,kh,kw), b (F) or null; output (N,F,(H-1)s+kh-2p,...)
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, Dim stride, Dim pad);
// x (T,C,H,W), w (F,C,kt), b (F) or null; same_pad: zero-pad to keep T,
// otherwise valid convolution shrinking T to T-kt+1
Var temporal_conv(const Var& x, const Var& w, const Var& b, bool same_pad);
// x (N,C,H,W), w (C,kh,kw), b (C) or null, explicit asymmetric padding
Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, Dim stride,
                     Dim pad_t, Dim pad_b, Dim pad_l, Dim pad_r);

// ---- task-specific ----
// mean of softplus-stable binary cross entropy between sigmoid(logits) and
// targets in [0,1]; targets are not differentiated.
Var bce_with_logits(const Var& logits, const Tensor& targets);
// img (C,H,W), flow (2,H,W): out(x) = bilinear img at (x + flow(x)),
// edge-clamped. If `validity` is non-null it receives 1 where the sample
// stayed inside the image rectangle. Differentiable in img and flow.
Var warp_bilinear(const Var& img, const Var& flow, Tensor* validity = nullptr);

// sum(|a-b| * m) / sum(m); m must match a's shape exactly (use tile_channels
// to expand per-pixel masks). Contributes 0 when the region is empty.
Var masked_l1_mean(const Var& a, const Var& b, const Tensor& m);

// Replicate a (H,W) mask to (C,H,W) or a (T,H,W) mask to (T,C,H,W).
Tensor tile_channels(const Tensor& m, Dim C);

// forward difference along spatial axis of x (C,H,W) or (H,W): axis 0 = x
// (width direction), 1 = y. Zero at the trailing border.
Var forward_diff(const Var& x, int axis);

}  // namespace fgvi::ad
