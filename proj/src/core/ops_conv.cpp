#include <Eigen/Dense>

#include "fgvi/core/ops.hpp"

namespace fgvi::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

namespace {

// im2col for one image (C,H,W) -> (C*kh*kw, Ho*Wo)
void im2col(const double* x, Dim C, Dim H, Dim W, Dim kh, Dim kw, Dim stride, Dim pad,
            Dim Ho, Dim Wo, double* col) {
    for (Dim c = 0; c < C; ++c)
        for (Dim ky = 0; ky < kh; ++ky)
            for (Dim kx = 0; kx < kw; ++kx) {
                double* row = col + ((c * kh + ky) * kw + kx) * Ho * Wo;
                for (Dim oy = 0; oy < Ho; ++oy) {
                    Dim iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) {
                        std::fill(row + oy * Wo, row + (oy + 1) * Wo, 0.0);
                        continue;
                    }
                    const double* src = x + (c * H + iy) * W;
                    for (Dim ox = 0; ox < Wo; ++ox) {
                        Dim ix = ox * stride + kx - pad;
                        row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
                    }
                }
            }
}

// adjoint of im2col: scatter-add (C*kh*kw, Ho*Wo) back into (C,H,W)
void col2im_add(const double* col, Dim C, Dim H, Dim W, Dim kh, Dim kw, Dim stride, Dim pad,
                Dim Ho, Dim Wo, double* x) {
    for (Dim c = 0; c < C; ++c)
        for (Dim ky = 0; ky < kh; ++ky)
            for (Dim kx = 0; kx < kw; ++kx) {
                const double* row = col + ((c * kh + ky) * kw + kx) * Ho * Wo;
                for (Dim oy = 0; oy < Ho; ++oy) {
                    Dim iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = x + (c * H + iy) * W;
                    for (Dim ox = 0; ox < Wo; ++ox) {
                        Dim ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, Dim stride, Dim pad) {
    const Shape& sx = x->val.shape();
    const Shape& sw = w->val.shape();
    if (sx.size() != 4 || sw.size() != 4) throw ShapeError("conv2d(): need x(N,C,H,W), w(F,C,kh,kw)");
    if (sx[1] != sw[1]) throw ShapeError("conv2d(): channel mismatch");
    const Dim N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const Dim F = sw[0], kh = sw[2], kw = sw[3];
    const Dim Ho = (H + 2 * pad - kh) / stride + 1;
    const Dim Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho < 1 || Wo < 1) throw ShapeError("conv2d(): kernel larger than padded input");
    if (b && b->val.numel() != F) throw ShapeError("conv2d(): bias size");

    Tensor out({N, F, Ho, Wo});
    const Dim ck = C * kh * kw;
    Tensor col({ck, Ho * Wo});
    for (Dim n = 0; n < N; ++n) {
        im2col(x->val.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
        Map o(out.data() + n * F * Ho * Wo, F, Ho * Wo);
        o.noalias() = CMap(w->val.data(), F, ck) * CMap(col.data(), ck, Ho * Wo);
        if (b)
            o.colwise() += Eigen::Map<const Eigen::VectorXd>(b->val.data(), F);
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), parents,
                     [x, w, b, N, C, H, W, F, kh, kw, stride, pad, Ho, Wo, ck](Node& n2) {
                         Tensor col({ck, Ho * Wo});
                         Tensor dcol({ck, Ho * Wo});
                         for (Dim n = 0; n < N; ++n) {
                             CMap g(n2.grad.data() + n * F * Ho * Wo, F, Ho * Wo);
                             if (w->requires_grad || x->requires_grad)
                                 im2col(x->val.data() + n * C * H * W, C, H, W, kh, kw, stride,
                                        pad, Ho, Wo, col.data());
                             if (w->requires_grad)
                                 Map(w->ensure_grad().data(), F, ck).noalias() +=
                                     g * CMap(col.data(), ck, Ho * Wo).transpose();
                             if (x->requires_grad) {
                                 Map(dcol.data(), ck, Ho * Wo).noalias() =
                                     CMap(w->val.data(), F, ck).transpose() * g;
                                 col2im_add(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                            x->ensure_grad().data() + n * C * H * W);
                             }
                             if (b && b->requires_grad)
                                 Eigen::Map<Eigen::VectorXd>(b->ensure_grad().data(), F) +=
                                     g.rowwise().sum();
                         }
                     });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, Dim stride, Dim pad) {
    const Shape& sx = x->val.shape();
    const Shape& sw = w->val.shape();
    if (sx.size() != 4 || sw.size() != 4)
        throw ShapeError("conv_transpose2d(): need x(N,C,H,W), w(C,F,kh,kw)");
    if (sx[1] != sw[0]) throw ShapeError("conv_transpose2d(): channel mismatch");
    const Dim N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const Dim F = sw[1], kh = sw[2], kw = sw[3];
    const Dim Ho = (H - 1) * stride + kh - 2 * pad;
    const Dim Wo = (W - 1) * stride + kw - 2 * pad;
    if (Ho < 1 || Wo < 1) throw ShapeError("conv_transpose2d(): empty output");
    if (b && b->val.numel() != F) throw ShapeError("conv_transpose2d(): bias size");

    const Dim fk = F * kh * kw;
    Tensor out({N, F, Ho, Wo});
    Tensor cols({fk, H * W});
    for (Dim n = 0; n < N; ++n) {
        // cols = W^T x, then scatter into the (larger) output plane
        Map(cols.data(), fk, H * W).noalias() =
            CMap(w->val.data(), C, fk).transpose() * CMap(x->val.data() + n * C * H * W, C, H * W);
        double* o = out.data() + n * F * Ho * Wo;
        col2im_add(cols.data(), F, Ho, Wo, kh, kw, stride, pad, H, W, o);
        if (b) {
            for (Dim f = 0; f < F; ++f) {
                double bv = b->val[f];
                double* dst = o + f * Ho * Wo;
                for (Dim i = 0; i < Ho * Wo; ++i) dst[i] += bv;
            }
        }
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), parents,
                     [x, w, b, N, C, H, W, F, kh, kw, stride, pad, Ho, Wo, fk](Node& n2) {
                         Tensor gcol({fk, H * W});
                         for (Dim n = 0; n < N; ++n) {
                             const double* g = n2.grad.data() + n * F * Ho * Wo;
                             // dcols = im2col(g); dX = W dcols; dW += X dcols^T
                             im2col(g, F, Ho, Wo, kh, kw, stride, pad, H, W, gcol.data());
                             if (x->requires_grad)
                                 Map(x->ensure_grad().data() + n * C * H * W, C, H * W)
                                     .noalias() +=
                                     CMap(w->val.data(), C, fk) * CMap(gcol.data(), fk, H * W);
                             if (w->requires_grad)
                                 Map(w->ensure_grad().data(), C, fk).noalias() +=
                                     CMap(x->val.data() + n * C * H * W, C, H * W) *
                                     CMap(gcol.data(), fk, H * W).transpose();
                             if (b && b->requires_grad) {
                                 Tensor& gb = b->ensure_grad();
                                 for (Dim f = 0; f < F; ++f) {
                                     double s = 0;
                                     const double* src = g + f * Ho * Wo;
                                     for (Dim i = 0; i < Ho * Wo; ++i) s += src[i];
                                     gb[f] += s;
                                 }
                             }
                         }
                     });
}

Var temporal_conv(const Var& x, const Var& w, const Var& b, bool same_pad) {
    const Shape& sx = x->val.shape();
    const Shape& sw = w->val.shape();
    if (sx.size() != 4 || sw.size() != 3) throw ShapeError("temporal_conv(): need x(T,C,H,W), w(F,C,kt)");
    if (sx[1] != sw[1]) throw ShapeError("temporal_conv(): channel mismatch");
    const Dim T = sx[0], C = sx[1], HW = sx[2] * sx[3];
    const Dim F = sw[0], kt = sw[2];
    const Dim pad = same_pad ? (kt - 1) / 2 : 0;
    const Dim To = same_pad ? T : T - kt + 1;
    if (same_pad && kt % 2 == 0) throw ShapeError("temporal_conv(): same padding needs odd kt");
    if (To < 1) throw ShapeError("temporal_conv(): sequence shorter than kernel");
    if (b && b->val.numel() != F) throw ShapeError("temporal_conv(): bias size");

    Tensor out({To, F, sx[2], sx[3]});
    out.fill(0.0);
    for (Dim to = 0; to < To; ++to) {
        Map o(out.data() + to * F * HW, F, HW);
        for (Dim k = 0; k < kt; ++k) {
            Dim ti = to + k - pad;
            if (ti < 0 || ti >= T) continue;
            // w[:,:,k] is strided (stride kt) in memory; use a strided map
            Eigen::Map<const EMat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>> wk(
                w->val.data() + k, F, C,
                Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(C * kt, kt));
            o.noalias() += wk * CMap(x->val.data() + ti * C * HW, C, HW);
        }
        if (b) o.colwise() += Eigen::Map<const Eigen::VectorXd>(b->val.data(), F);
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(
        std::move(out), parents, [x, w, b, T, C, HW, F, kt, pad, To](Node& n2) {
            for (Dim to = 0; to < To; ++to) {
                CMap g(n2.grad.data() + to * F * HW, F, HW);
                for (Dim k = 0; k < kt; ++k) {
                    Dim ti = to + k - pad;
                    if (ti < 0 || ti >= T) continue;
                    if (x->requires_grad) {
                        Eigen::Map<const EMat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>
                            wk(w->val.data() + k, F, C,
                               Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(C * kt, kt));
                        Map(x->ensure_grad().data() + ti * C * HW, C, HW).noalias() +=
                            wk.transpose() * g;
                    }
                    if (w->requires_grad) {
                        Eigen::Map<EMat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>> gwk(
                            w->ensure_grad().data() + k, F, C,
                            Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(C * kt, kt));
                        gwk.noalias() += g * CMap(x->val.data() + ti * C * HW, C, HW).transpose();
                    }
                }
                if (b && b->requires_grad)
                    Eigen::Map<Eigen::VectorXd>(b->ensure_grad().data(), F) += g.rowwise().sum();
            }
        });
}

Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, Dim stride, Dim pad_t, Dim pad_b,
                     Dim pad_l, Dim pad_r) {
    const Shape& sx = x->val.shape();
    const Shape& sw = w->val.shape();
    if (sx.size() != 4 || sw.size() != 3)
        throw ShapeError("depthwise_conv2d(): need x(N,C,H,W), w(C,kh,kw)");
    if (sx[1] != sw[0]) throw ShapeError("depthwise_conv2d(): channel mismatch");
    const Dim N = sx[0], C = sx[1], H = sx[2], W = sx[3];
    const Dim kh = sw[1], kw = sw[2];
    const Dim Ho = (H + pad_t + pad_b - kh) / stride + 1;
    const Dim Wo = (W + pad_l + pad_r - kw) / stride + 1;
    if (Ho < 1 || Wo < 1) throw ShapeError("depthwise_conv2d(): kernel larger than padded input");
    if (b && b->val.numel() != C) throw ShapeError("depthwise_conv2d(): bias size");

    Tensor out({N, C, Ho, Wo});
    for (Dim n = 0; n < N; ++n)
        for (Dim c = 0; c < C; ++c) {
            const double* xp = x->val.data() + (n * C + c) * H * W;
            const double* wp = w->val.data() + c * kh * kw;
            double* op = out.data() + (n * C + c) * Ho * Wo;
            const double bv = b ? b->val[c] : 0.0;
            for (Dim oy = 0; oy < Ho; ++oy)
                for (Dim ox = 0; ox < Wo; ++ox) {
                    double s = bv;
                    for (Dim ky = 0; ky < kh; ++ky) {
                        Dim iy = oy * stride + ky - pad_t;
                        if (iy < 0 || iy >= H) continue;
                        for (Dim kx = 0; kx < kw; ++kx) {
                            Dim ix = ox * stride + kx - pad_l;
                            if (ix < 0 || ix >= W) continue;
                            s += wp[ky * kw + kx] * xp[iy * W + ix];
                        }
                    }
                    op[oy * Wo + ox] = s;
                }
        }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(
        std::move(out), parents,
        [x, w, b, N, C, H, W, kh, kw, stride, pad_t, pad_l, Ho, Wo](Node& n2) {
            for (Dim n = 0; n < N; ++n)
                for (Dim c = 0; c < C; ++c) {
                    const double* g = n2.grad.data() + (n * C + c) * Ho * Wo;
                    const double* xp = x->val.data() + (n * C + c) * H * W;
                    const double* wp = w->val.data() + c * kh * kw;
                    double* gx =
                        x->requires_grad ? x->ensure_grad().data() + (n * C + c) * H * W : nullptr;
                    double* gw = w->requires_grad ? w->ensure_grad().data() + c * kh * kw : nullptr;
                    double gb_acc = 0;
                    for (Dim oy = 0; oy < Ho; ++oy)
                        for (Dim ox = 0; ox < Wo; ++ox) {
                            double gv = g[oy * Wo + ox];
                            if (gv == 0.0) continue;
                            gb_acc += gv;
                            for (Dim ky = 0; ky < kh; ++ky) {
                                Dim iy = oy * stride + ky - pad_t;
                                if (iy < 0 || iy >= H) continue;
                                for (Dim kx = 0; kx < kw; ++kx) {
                                    Dim ix = ox * stride + kx - pad_l;
                                    if (ix < 0 || ix >= W) continue;
                                    if (gx) gx[iy * W + ix] += gv * wp[ky * kw + kx];
                                    if (gw) gw[ky * kw + kx] += gv * xp[iy * W + ix];
                                }
                            }
                        }
                    if (b && b->requires_grad) b->ensure_grad()[c] += gb_acc;
                }
        });
}

Var warp_bilinear(const Var& img, const Var& flow, Tensor* validity) {
    const Shape& si = img->val.shape();
    const Shape& sf = flow->val.shape();
    if (si.size() != 3 || sf.size() != 3 || sf[0] != 2)
        throw ShapeError("warp_bilinear(): need img(C,H,W), flow(2,H,W)");
    if (si[1] != sf[1] || si[2] != sf[2])
        throw ShapeError("warp_bilinear(): size mismatch " + Tensor::shape_str(si) + " vs " +
                         Tensor::shape_str(sf));
    const Dim C = si[0], H = si[1], W = si[2];
    Tensor out({C, H, W});
    if (validity) *validity = Tensor({H, W});

    // cache sample geometry for the backward pass
    auto geom = std::make_shared<std::vector<double>>(static_cast<size_t>(H * W * 2));
    for (Dim y = 0; y < H; ++y)
        for (Dim x = 0; x < W; ++x) {
            const Dim p = y * W + x;
            double sxp = static_cast<double>(x) + flow->val[0 * H * W + p];
            double syp = static_cast<double>(y) + flow->val[1 * H * W + p];
            bool inside = sxp >= 0.0 && sxp <= static_cast<double>(W - 1) && syp >= 0.0 &&
                          syp <= static_cast<double>(H - 1);
            if (validity) (*validity)[p] = inside ? 1.0 : 0.0;
            double cx = std::min(std::max(sxp, 0.0), static_cast<double>(W - 1));
            double cy = std::min(std::max(syp, 0.0), static_cast<double>(H - 1));
            (*geom)[static_cast<size_t>(p * 2)] = cx;
            (*geom)[static_cast<size_t>(p * 2 + 1)] = cy;
            Dim x0 = static_cast<Dim>(std::floor(cx)), y0 = static_cast<Dim>(std::floor(cy));
            Dim x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
            double fx = cx - static_cast<double>(x0), fy = cy - static_cast<double>(y0);
            for (Dim c = 0; c < C; ++c) {
                const double* ip = img->val.data() + c * H * W;
                double v00 = ip[y0 * W + x0], v01 = ip[y0 * W + x1];
                double v10 = ip[y1 * W + x0], v11 = ip[y1 * W + x1];
                out[c * H * W + p] = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                     fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    return make_node(std::move(out), {img, flow}, [img, flow, geom, C, H, W](Node& n2) {
        double* gi = img->requires_grad ? img->ensure_grad().data() : nullptr;
        double* gf = flow->requires_grad ? flow->ensure_grad().data() : nullptr;
        for (Dim y = 0; y < H; ++y)
            for (Dim x = 0; x < W; ++x) {
                const Dim p = y * W + x;
                double cx = (*geom)[static_cast<size_t>(p * 2)];
                double cy = (*geom)[static_cast<size_t>(p * 2 + 1)];
                Dim x0 = static_cast<Dim>(std::floor(cx)), y0 = static_cast<Dim>(std::floor(cy));
                Dim x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
                double fx = cx - static_cast<double>(x0), fy = cy - static_cast<double>(y0);
                // clamp kills the derivative in the clamped direction
                double sxp = static_cast<double>(x) + flow->val[0 * H * W + p];
                double syp = static_cast<double>(y) + flow->val[1 * H * W + p];
                bool live_x = sxp > 0.0 && sxp < static_cast<double>(W - 1);
                bool live_y = syp > 0.0 && syp < static_cast<double>(H - 1);
                double du = 0, dv = 0;
                for (Dim c = 0; c < C; ++c) {
                    double gv = n2.grad[c * H * W + p];
                    if (gv == 0.0) continue;
                    const double* ip = img->val.data() + c * H * W;
                    double v00 = ip[y0 * W + x0], v01 = ip[y0 * W + x1];
                    double v10 = ip[y1 * W + x0], v11 = ip[y1 * W + x1];
                    if (gi) {
                        gi[c * H * W + y0 * W + x0] += gv * (1 - fy) * (1 - fx);
                        gi[c * H * W + y0 * W + x1] += gv * (1 - fy) * fx;
                        gi[c * H * W + y1 * W + x0] += gv * fy * (1 - fx);
                        gi[c * H * W + y1 * W + x1] += gv * fy * fx;
                    }
                    if (gf) {
                        du += gv * ((1 - fy) * (v01 - v00) + fy * (v11 - v10));
                        dv += gv * ((1 - fx) * (v10 - v00) + fx * (v11 - v01));
                    }
                }
                if (gf) {
                    if (live_x) gf[0 * H * W + p] += du;
                    if (live_y) gf[1 * H * W + p] += dv;
                }
            }
    });
}

}  // namespace fgvi::ad
