#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fgvi/core/ops.hpp"

namespace fgvi::ad {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

namespace {

void acc(Tensor& dst, const double* src) {
    double* d = dst.data();
    const Dim n = dst.numel();
    for (Dim i = 0; i < n; ++i) d[i] += src[i];
}

}  // namespace

Var add(const Var& a, const Var& b) {
    core::check_same_shape(a->val, b->val, "add");
    Tensor out = a->val.clone();
    acc(out, b->val.data());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) acc(a->ensure_grad(), n.grad.data());
        if (b->requires_grad) acc(b->ensure_grad(), n.grad.data());
    });
}

Var sub(const Var& a, const Var& b) {
    core::check_same_shape(a->val, b->val, "sub");
    Tensor out(a->val.shape());
    const Dim n = out.numel();
    for (Dim i = 0; i < n; ++i) out[i] = a->val[i] - b->val[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) acc(a->ensure_grad(), n.grad.data());
        if (b->requires_grad) {
            Tensor& g = b->ensure_grad();
            for (Dim i = 0; i < n.grad.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    core::check_same_shape(a->val, b->val, "mul");
    Tensor out(a->val.shape());
    const Dim n = out.numel();
    for (Dim i = 0; i < n; ++i) out[i] = a->val[i] * b->val[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        const Dim m = n.grad.numel();
        if (a->requires_grad) {
            Tensor& g = a->ensure_grad();
            for (Dim i = 0; i < m; ++i) g[i] += n.grad[i] * b->val[i];
        }
        if (b->requires_grad) {
            Tensor& g = b->ensure_grad();
            for (Dim i = 0; i < m; ++i) g[i] += n.grad[i] * a->val[i];
        }
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
    Tensor out(a->val.shape());
    for (Dim i = 0; i < out.numel(); ++i) out[i] = a->val[i] * s;
    return make_node(std::move(out), {a}, [a, s](Node& n) {
        Tensor& g = a->ensure_grad();
        for (Dim i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i] * s;
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out(a->val.shape());
    for (Dim i = 0; i < out.numel(); ++i) out[i] = a->val[i] + s;
    return make_node(std::move(out), {a},
                     [a](Node& n) { acc(a->ensure_grad(), n.grad.data()); });
}

Var abs(const Var& a) {
    Tensor out(a->val.shape());
    for (Dim i = 0; i < out.numel(); ++i) out[i] = std::abs(a->val[i]);
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor& g = a->ensure_grad();
        for (Dim i = 0; i < n.grad.numel(); ++i) {
            double x = a->val[i];
            g[i] += n.grad[i] * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
        }
    });
}

Var sigmoid(const Var& a) {
    Tensor out(a->val.shape());
    for (Dim i = 0; i < out.numel(); ++i) {
        double x = a->val[i];
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
    }
    Tensor saved = out;
    return make_node(std::move(out), {a}, [a, saved](Node& n) {
        Tensor& g = a->ensure_grad();
        for (Dim i = 0; i < n.grad.numel(); ++i) {
            double y = saved[i];
            g[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out(a->val.shape());
    for (Dim i = 0; i < out.numel(); ++i) {
        double x = a->val[i];
        out[i] = x > 0 ? x : slope * x;
    }
    return make_node(std::move(out), {a}, [a, slope](Node& n) {
        Tensor& g = a->ensure_grad();
        for (Dim i = 0; i < n.grad.numel(); ++i)
            g[i] += n.grad[i] * (a->val[i] > 0 ? 1.0 : slope);
    });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var gelu(const Var& a) {
    constexpr double inv_sqrt2 = 0.7071067811865476;
    constexpr double inv_sqrt2pi = 0.3989422804014327;
    Tensor out(a->val.shape());
    for (Dim i = 0; i < out.numel(); ++i) {
        double x = a->val[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return make_node(std::move(out), {a}, [a](Node& n) {
        Tensor& g = a->ensure_grad();
        for (Dim i = 0; i < n.grad.numel(); ++i) {
            double x = a->val[i];
            double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            g[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

Var sum_all(const Var& a) {
    double s = 0;
    for (Dim i = 0; i < a->val.numel(); ++i) s += a->val[i];
    return make_node(Tensor::scalar(s), {a}, [a](Node& n) {
        Tensor& g = a->ensure_grad();
        double gv = n.grad[0];
        for (Dim i = 0; i < g.numel(); ++i) g[i] += gv;
    });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a->val.numel())); }

Var reshape(const Var& a, Shape shape) {
    Tensor out = a->val.reshaped(std::move(shape));
    return make_node(std::move(out), {a}, [a](Node& n) {
        acc(a->ensure_grad(), n.grad.data());
    });
}

Var take(const Var& a, std::shared_ptr<const std::vector<Dim>> idx, Shape out_shape) {
    if (static_cast<Dim>(idx->size()) != Tensor::count(out_shape))
        throw ShapeError("take(): index count does not match output shape");
    Tensor out(std::move(out_shape));
    const Dim n = out.numel();
    const Dim src_n = a->val.numel();
    const auto& ix = *idx;
    for (Dim i = 0; i < n; ++i) {
        Dim j = ix[static_cast<size_t>(i)];
        if (j >= src_n) throw ShapeError("take(): index out of range");
        out[i] = j >= 0 ? a->val[j] : 0.0;
    }
    return make_node(std::move(out), {a}, [a, idx](Node& n2) {
        Tensor& g = a->ensure_grad();
        const auto& ix2 = *idx;
        for (Dim i = 0; i < n2.grad.numel(); ++i) {
            Dim j = ix2[static_cast<size_t>(i)];
            if (j >= 0) g[j] += n2.grad[i];
        }
    });
}

Var concat(const std::vector<Var>& xs, Dim axis) {
    if (xs.empty()) throw ShapeError("concat(): no inputs");
    const Shape& s0 = xs[0]->val.shape();
    const Dim nd = static_cast<Dim>(s0.size());
    if (axis < 0 || axis >= nd) throw ShapeError("concat(): bad axis");
    Shape out_shape = s0;
    Dim total_axis = 0;
    for (const auto& x : xs) {
        const Shape& s = x->val.shape();
        if (static_cast<Dim>(s.size()) != nd) throw ShapeError("concat(): rank mismatch");
        for (Dim d = 0; d < nd; ++d)
            if (d != axis && s[d] != s0[d]) throw ShapeError("concat(): dim mismatch");
        total_axis += s[axis];
    }
    out_shape[axis] = total_axis;

    // outer = product of dims before axis, inner = product after
    Dim outer = 1, inner = 1;
    for (Dim d = 0; d < axis; ++d) outer *= s0[d];
    for (Dim d = axis + 1; d < nd; ++d) inner *= s0[d];

    Tensor out(out_shape);
    std::vector<Dim> offsets(xs.size());
    Dim off = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        offsets[k] = off;
        const Tensor& v = xs[k]->val;
        const Dim ax = v.shape()[axis];
        for (Dim o = 0; o < outer; ++o) {
            const double* src = v.data() + o * ax * inner;
            double* dst = out.data() + (o * total_axis + off) * inner;
            std::copy(src, src + ax * inner, dst);
        }
        off += ax;
    }
    std::vector<Var> parents = xs;
    return make_node(std::move(out), parents,
                     [xs, offsets, outer, inner, total_axis, axis](Node& n) {
                         for (size_t k = 0; k < xs.size(); ++k) {
                             if (!xs[k]->requires_grad) continue;
                             Tensor& g = xs[k]->ensure_grad();
                             const Dim ax = xs[k]->val.shape()[axis];
                             for (Dim o = 0; o < outer; ++o) {
                                 const double* src =
                                     n.grad.data() + (o * total_axis + offsets[k]) * inner;
                                 double* dst = g.data() + o * ax * inner;
                                 for (Dim i = 0; i < ax * inner; ++i) dst[i] += src[i];
                             }
                         }
                     });
}

Var slice(const Var& a, Dim axis, Dim start, Dim len) {
    const Shape& s = a->val.shape();
    const Dim nd = static_cast<Dim>(s.size());
    if (axis < 0 || axis >= nd) throw ShapeError("slice(): bad axis");
    if (start < 0 || len < 0 || start + len > s[axis]) throw ShapeError("slice(): out of range");
    Shape out_shape = s;
    out_shape[axis] = len;
    Dim outer = 1, inner = 1;
    for (Dim d = 0; d < axis; ++d) outer *= s[d];
    for (Dim d = axis + 1; d < nd; ++d) inner *= s[d];
    Tensor out(out_shape);
    const Dim ax = s[axis];
    for (Dim o = 0; o < outer; ++o) {
        const double* src = a->val.data() + (o * ax + start) * inner;
        std::copy(src, src + len * inner, out.data() + o * len * inner);
    }
    return make_node(std::move(out), {a}, [a, axis, start, len, outer, inner](Node& n) {
        Tensor& g = a->ensure_grad();
        const Dim ax = a->val.shape()[axis];
        for (Dim o = 0; o < outer; ++o) {
            const double* src = n.grad.data() + o * len * inner;
            double* dst = g.data() + (o * ax + start) * inner;
            for (Dim i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

Var transpose_last2(const Var& a) {
    const Shape& s = a->val.shape();
    const Dim nd = static_cast<Dim>(s.size());
    if (nd < 2) throw ShapeError("transpose_last2(): rank < 2");
    Dim batch = 1;
    for (Dim d = 0; d < nd - 2; ++d) batch *= s[d];
    const Dim r = s[nd - 2], c = s[nd - 1];
    Shape out_shape = s;
    std::swap(out_shape[nd - 2], out_shape[nd - 1]);
    Tensor out(out_shape);
    for (Dim bi = 0; bi < batch; ++bi) {
        CMap src(a->val.data() + bi * r * c, r, c);
        Map dst(out.data() + bi * r * c, c, r);
        dst = src.transpose();
    }
    return make_node(std::move(out), {a}, [a, batch, r, c](Node& n) {
        Tensor& g = a->ensure_grad();
        for (Dim bi = 0; bi < batch; ++bi) {
            CMap src(n.grad.data() + bi * r * c, c, r);
            Map dst(g.data() + bi * r * c, r, c);
            dst += src.transpose();
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    const Shape& sa = a->val.shape();
    const Shape& sb = b->val.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError("matmul(): need (M,K)x(K,N), got " + Tensor::shape_str(sa) + " x " +
                         Tensor::shape_str(sb));
    const Dim M = sa[0], K = sa[1], N = sb[1];
    Tensor out({M, N});
    Map(out.data(), M, N).noalias() =
        CMap(a->val.data(), M, K) * CMap(b->val.data(), K, N);
    return make_node(std::move(out), {a, b}, [a, b, M, K, N](Node& n) {
        CMap g(n.grad.data(), M, N);
        if (a->requires_grad)
            Map(a->ensure_grad().data(), M, K).noalias() +=
                g * CMap(b->val.data(), K, N).transpose();
        if (b->requires_grad)
            Map(b->ensure_grad().data(), K, N).noalias() +=
                CMap(a->val.data(), M, K).transpose() * g;
    });
}

Var bmm(const Var& a, const Var& b) {
    const Shape& sa = a->val.shape();
    const Shape& sb = b->val.shape();
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
        throw ShapeError("bmm(): need (B,M,K)x(B,K,N), got " + Tensor::shape_str(sa) + " x " +
                         Tensor::shape_str(sb));
    const Dim B = sa[0], M = sa[1], K = sa[2], N = sb[2];
    Tensor out({B, M, N});
    for (Dim bi = 0; bi < B; ++bi)
        Map(out.data() + bi * M * N, M, N).noalias() =
            CMap(a->val.data() + bi * M * K, M, K) * CMap(b->val.data() + bi * K * N, K, N);
    return make_node(std::move(out), {a, b}, [a, b, B, M, K, N](Node& n) {
        for (Dim bi = 0; bi < B; ++bi) {
            CMap g(n.grad.data() + bi * M * N, M, N);
            if (a->requires_grad)
                Map(a->ensure_grad().data() + bi * M * K, M, K).noalias() +=
                    g * CMap(b->val.data() + bi * K * N, K, N).transpose();
            if (b->requires_grad)
                Map(b->ensure_grad().data() + bi * K * N, K, N).noalias() +=
                    CMap(a->val.data() + bi * M * K, M, K).transpose() * g;
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const Shape& sx = x->val.shape();
    const Shape& sw = w->val.shape();
    if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1])
        throw ShapeError("linear(): need x(N,K), w(F,K)");
    const Dim N = sx[0], K = sx[1], F = sw[0];
    Tensor out({N, F});
    Map o(out.data(), N, F);
    o.noalias() = CMap(x->val.data(), N, K) * CMap(w->val.data(), F, K).transpose();
    if (b) {
        if (b->val.numel() != F) throw ShapeError("linear(): bias size");
        o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->val.data(), F);
    }
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    return make_node(std::move(out), parents, [x, w, b, N, K, F](Node& n) {
        CMap g(n.grad.data(), N, F);
        if (x->requires_grad)
            Map(x->ensure_grad().data(), N, K).noalias() += g * CMap(w->val.data(), F, K);
        if (w->requires_grad)
            Map(w->ensure_grad().data(), F, K).noalias() +=
                g.transpose() * CMap(x->val.data(), N, K);
        if (b && b->requires_grad)
            Eigen::Map<Eigen::RowVectorXd>(b->ensure_grad().data(), F) += g.colwise().sum();
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Shape& s = x->val.shape();
    if (s.size() < 2) throw ShapeError("layer_norm(): rank < 2");
    const Dim C = s.back();
    Dim N = x->val.numel() / C;
    if (gamma->val.numel() != C || beta->val.numel() != C)
        throw ShapeError("layer_norm(): gamma/beta size");

    Tensor out(s);
    Tensor xhat({N, C});
    Tensor inv_std({N});
    for (Dim r = 0; r < N; ++r) {
        const double* xr = x->val.data() + r * C;
        double mean = 0;
        for (Dim c = 0; c < C; ++c) mean += xr[c];
        mean /= static_cast<double>(C);
        double var = 0;
        for (Dim c = 0; c < C; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<double>(C);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        double* xh = xhat.data() + r * C;
        double* o = out.data() + r * C;
        for (Dim c = 0; c < C; ++c) {
            xh[c] = (xr[c] - mean) * is;
            o[c] = gamma->val[c] * xh[c] + beta->val[c];
        }
    }
    return make_node(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, N,
                                                        C](Node& n) {
        Tensor* gx = x->requires_grad ? &x->ensure_grad() : nullptr;
        Tensor* gg = gamma->requires_grad ? &gamma->ensure_grad() : nullptr;
        Tensor* gb = beta->requires_grad ? &beta->ensure_grad() : nullptr;
        for (Dim r = 0; r < N; ++r) {
            const double* g = n.grad.data() + r * C;
            const double* xh = xhat.data() + r * C;
            double sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (Dim c = 0; c < C; ++c) {
                double dxh = g[c] * gamma->val[c];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh[c];
                if (gg) (*gg)[c] += g[c] * xh[c];
                if (gb) (*gb)[c] += g[c];
            }
            if (gx) {
                double* gxr = gx->data() + r * C;
                const double is = inv_std[r];
                const double invC = 1.0 / static_cast<double>(C);
                for (Dim c = 0; c < C; ++c) {
                    double dxh = g[c] * gamma->val[c];
                    gxr[c] += is * (dxh - invC * sum_dxhat - xh[c] * invC * sum_dxhat_xhat);
                }
            }
        }
    });
}

Var softmax_lastdim(const Var& x, const Tensor& mask_addend) {
    const Shape& s = x->val.shape();
    const Dim K = s.back();
    const Dim N = x->val.numel() / K;
    if (mask_addend.defined() && mask_addend.numel() != x->val.numel())
        throw ShapeError("softmax_lastdim(): mask shape");
    Tensor out(s);
    const double* m = mask_addend.defined() ? mask_addend.data() : nullptr;
    for (Dim r = 0; r < N; ++r) {
        const double* xr = x->val.data() + r * K;
        double* o = out.data() + r * K;
        double mx = -1e300;
        for (Dim k = 0; k < K; ++k) {
            double v = xr[k] + (m ? m[r * K + k] : 0.0);
            mx = std::max(mx, v);
        }
        double sum = 0;
        for (Dim k = 0; k < K; ++k) {
            double v = std::exp(xr[k] + (m ? m[r * K + k] : 0.0) - mx);
            o[k] = v;
            sum += v;
        }
        double inv = 1.0 / sum;
        for (Dim k = 0; k < K; ++k) o[k] *= inv;
    }
    Tensor saved = out;
    return make_node(std::move(out), {x}, [x, saved, N, K](Node& n) {
        Tensor& g = x->ensure_grad();
        for (Dim r = 0; r < N; ++r) {
            const double* y = saved.data() + r * K;
            const double* go = n.grad.data() + r * K;
            double dot = 0;
            for (Dim k = 0; k < K; ++k) dot += go[k] * y[k];
            double* gx = g.data() + r * K;
            for (Dim k = 0; k < K; ++k) gx[k] += y[k] * (go[k] - dot);
        }
    });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
    core::check_same_shape(logits->val, targets, "bce_with_logits");
    const Dim n = logits->val.numel();
    double loss = 0;
    for (Dim i = 0; i < n; ++i) {
        double xv = logits->val[i], y = targets[i];
        // softplus(-x) + (1-y)*x, computed stably for both signs of x
        double sp = xv > 0 ? std::log1p(std::exp(-xv)) : -xv + std::log1p(std::exp(xv));
        loss += sp + (1.0 - y) * xv;
    }
    loss /= static_cast<double>(n);
    return make_node(Tensor::scalar(loss), {logits}, [logits, targets, n](Node& nn) {
        Tensor& g = logits->ensure_grad();
        const double gv = nn.grad[0] / static_cast<double>(n);
        for (Dim i = 0; i < n; ++i) {
            double xv = logits->val[i];
            double sig = xv >= 0 ? 1.0 / (1.0 + std::exp(-xv)) : std::exp(xv) / (1.0 + std::exp(xv));
            g[i] += gv * (sig - targets[i]);
        }
    });
}

Var masked_l1_mean(const Var& a, const Var& b, const Tensor& m) {
    core::check_same_shape(a->val, b->val, "masked_l1_mean");
    core::check_same_shape(a->val, m, "masked_l1_mean mask");
    double denom = 0;
    for (Dim i = 0; i < m.numel(); ++i) denom += m[i];
    Var masked = mul(abs(sub(a, b)), constant(m));
    return scale(sum_all(masked), denom > 0 ? 1.0 / denom : 0.0);
}

Tensor tile_channels(const Tensor& m, Dim C) {
    const Shape& s = m.shape();
    if (s.size() == 2) {
        const Dim HW = m.numel();
        Tensor out({C, s[0], s[1]});
        for (Dim c = 0; c < C; ++c) std::copy(m.data(), m.data() + HW, out.data() + c * HW);
        return out;
    }
    if (s.size() == 3) {
        const Dim T = s[0], HW = s[1] * s[2];
        Tensor out({T, C, s[1], s[2]});
        for (Dim t = 0; t < T; ++t)
            for (Dim c = 0; c < C; ++c)
                std::copy(m.data() + t * HW, m.data() + (t + 1) * HW,
                          out.data() + (t * C + c) * HW);
        return out;
    }
    throw ShapeError("tile_channels(): mask must be (H,W) or (T,H,W)");
}

Var forward_diff(const Var& x, int axis) {
    const Shape& s = x->val.shape();
    if (s.size() < 2) throw ShapeError("forward_diff(): rank < 2");
    const Dim W = s.back();
    const Dim H = s[s.size() - 2];
    const Dim C = x->val.numel() / (H * W);
    auto idx = std::make_shared<std::vector<Dim>>(static_cast<size_t>(x->val.numel()));
    for (Dim c = 0; c < C; ++c)
        for (Dim yy = 0; yy < H; ++yy)
            for (Dim xx = 0; xx < W; ++xx) {
                Dim i = (c * H + yy) * W + xx;
                Dim j;
                if (axis == 0)
                    j = xx + 1 < W ? i + 1 : -1;
                else
                    j = yy + 1 < H ? i + W : -1;
                (*idx)[static_cast<size_t>(i)] = j;
            }
    Var shifted = take(x, idx, s);
    // where the shift fell off the border, the output must be 0, not -x
    Tensor border(s);
    border.fill(1.0);
    for (Dim c = 0; c < C; ++c)
        for (Dim yy = 0; yy < H; ++yy)
            for (Dim xx = 0; xx < W; ++xx)
                if ((axis == 0 && xx + 1 >= W) || (axis != 0 && yy + 1 >= H))
                    border[(c * H + yy) * W + xx] = 0.0;
    return mul(sub(shifted, x), constant(std::move(border)));
}

}  // namespace fgvi::ad
