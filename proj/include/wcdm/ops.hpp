#pragma once

#include "wcdm/core.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace wcdm::ops {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowMap = Eigen::Map<RowMat<S>>;
template <class S>
using ConstRowMap = Eigen::Map<const RowMat<S>>;

// ---------------------------------------------------------------------------
// elementwise

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "add");
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data + b.data;
    return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "sub");
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data - b.data;
    return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "mul");
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data * b.data;
    return out;
}

template <class S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "div");
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data / b.data;
    return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S k) {
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data * k;
    return out;
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, S k) {
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data + k;
    return out;
}

template <class S>
TensorT<S> abs(const TensorT<S>& a) {
    TensorT<S> out;
    out.shape = a.shape;
    out.data = a.data.abs();
    return out;
}

/// Per-batch-element scale: out[b] = k[b] * x[b].
template <class S>
TensorT<S> scale_per_sample(const TensorT<S>& x, const std::vector<S>& k) {
    require(int(k.size()) == x.shape.b, "scale_per_sample: coefficient count != batch");
    TensorT<S> out(x.shape);
    const std::int64_t per = std::int64_t(x.shape.c) * x.shape.h * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b)
        out.data.segment(b * per, per) = x.data.segment(b * per, per) * k[std::size_t(b)];
    return out;
}

enum class Act { Silu, Relu, Sigmoid };

template <class S>
TensorT<S> activation(const TensorT<S>& x, Act kind) {
    TensorT<S> out;
    out.shape = x.shape;
    switch (kind) {
        case Act::Silu:
            out.data = x.data / (S(1) + (-x.data).exp());
            break;
        case Act::Relu:
            out.data = x.data.max(S(0));
            break;
        case Act::Sigmoid:
            out.data = S(1) / (S(1) + (-x.data).exp());
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// structure

template <class S>
TensorT<S> concat_channels(const std::vector<TensorT<S>>& parts) {
    require(!parts.empty(), "concat_channels: no inputs");
    int ctotal = 0;
    for (const auto& p : parts) {
        require(p.shape.b == parts[0].shape.b && p.shape.h == parts[0].shape.h && p.shape.w == parts[0].shape.w,
                "concat_channels: batch/spatial mismatch");
        ctotal += p.shape.c;
    }
    Shape os{parts[0].shape.b, ctotal, parts[0].shape.h, parts[0].shape.w};
    TensorT<S> out(os);
    const std::int64_t hw = std::int64_t(os.h) * os.w;
    for (int b = 0; b < os.b; ++b) {
        std::int64_t coff = 0;
        for (const auto& p : parts) {
            const std::int64_t n = std::int64_t(p.shape.c) * hw;
            out.data.segment((std::int64_t(b) * ctotal + coff) * hw, n) =
                p.data.segment(std::int64_t(b) * p.shape.c * hw, n);
            coff += p.shape.c;
        }
    }
    return out;
}

/// Broadcast add: bias is (1,C,1,1) or (B,C,1,1).
template <class S>
TensorT<S> add_broadcast(const TensorT<S>& x, const TensorT<S>& bias) {
    require(bias.shape.c == x.shape.c && bias.shape.h == 1 && bias.shape.w == 1 &&
                (bias.shape.b == 1 || bias.shape.b == x.shape.b),
            "add_broadcast: bias shape " + bias.shape.str() + " vs input " + x.shape.str());
    TensorT<S> out(x.shape);
    const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c) {
            const S bv = bias.data[(bias.shape.b == 1 ? 0 : b) * bias.shape.c + c];
            const std::int64_t off = (std::int64_t(b) * x.shape.c + c) * hw;
            out.data.segment(off, hw) = x.data.segment(off, hw) + bv;
        }
    return out;
}

/// Broadcast multiply: scale is (1,C,1,1) or (B,C,1,1).
template <class S>
TensorT<S> mul_broadcast(const TensorT<S>& x, const TensorT<S>& scale) {
    require(scale.shape.c == x.shape.c && scale.shape.h == 1 && scale.shape.w == 1 &&
                (scale.shape.b == 1 || scale.shape.b == x.shape.b),
            "mul_broadcast: scale shape " + scale.shape.str() + " vs input " + x.shape.str());
    TensorT<S> out(x.shape);
    const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c) {
            const S sv = scale.data[(scale.shape.b == 1 ? 0 : b) * scale.shape.c + c];
            const std::int64_t off = (std::int64_t(b) * x.shape.c + c) * hw;
            out.data.segment(off, hw) = x.data.segment(off, hw) * sv;
        }
    return out;
}

template <class S>
TensorT<S> upsample_nearest2x(const TensorT<S>& x) {
    Shape os{x.shape.b, x.shape.c, x.shape.h * 2, x.shape.w * 2};
    TensorT<S> out(os);
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c)
            for (int h = 0; h < x.shape.h; ++h)
                for (int w = 0; w < x.shape.w; ++w) {
                    const S v = x.at(b, c, h, w);
                    out.at(b, c, 2 * h, 2 * w) = v;
                    out.at(b, c, 2 * h, 2 * w + 1) = v;
                    out.at(b, c, 2 * h + 1, 2 * w) = v;
                    out.at(b, c, 2 * h + 1, 2 * w + 1) = v;
                }
    return out;
}

/// Horizontal neighbor differences, out width W-1.
template <class S>
TensorT<S> diff_h(const TensorT<S>& x) {
    require(x.shape.w >= 2, "diff_h: width < 2");
    TensorT<S> out({x.shape.b, x.shape.c, x.shape.h, x.shape.w - 1});
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c)
            for (int h = 0; h < x.shape.h; ++h)
                for (int w = 0; w + 1 < x.shape.w; ++w)
                    out.at(b, c, h, w) = x.at(b, c, h, w + 1) - x.at(b, c, h, w);
    return out;
}

/// Vertical neighbor differences, out height H-1.
template <class S>
TensorT<S> diff_v(const TensorT<S>& x) {
    require(x.shape.h >= 2, "diff_v: height < 2");
    TensorT<S> out({x.shape.b, x.shape.c, x.shape.h - 1, x.shape.w});
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c)
            for (int h = 0; h + 1 < x.shape.h; ++h)
                for (int w = 0; w < x.shape.w; ++w)
                    out.at(b, c, h, w) = x.at(b, c, h + 1, w) - x.at(b, c, h, w);
    return out;
}

// ---------------------------------------------------------------------------
// reductions (double accumulation)

template <class S>
double sum_all_d(const TensorT<S>& x) {
    return x.data.template cast<double>().sum();
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& x) {
    return TensorT<S>::scalar(S(sum_all_d(x)));
}

template <class S>
TensorT<S> mean_all(const TensorT<S>& x) {
    require(x.numel() > 0, "mean_all: empty tensor");
    return TensorT<S>::scalar(S(sum_all_d(x) / double(x.numel())));
}

// ---------------------------------------------------------------------------
// convolution

struct ConvGeom {
    int stride = 1, dilation = 1, padding = 0;
    int cin = 0, cout = 0, kh = 0, kw = 0;
    int hout = 0, wout = 0;

    static ConvGeom make(Shape x, Shape w, int stride, int dilation, int padding) {
        require(stride >= 1, "conv2d: stride must be positive");
        require(dilation >= 1, "conv2d: dilation must be positive");
        require(padding >= 0, "conv2d: padding must be non-negative");
        require(w.c == x.c, "conv2d: kernel channels " + std::to_string(w.c) + " != input channels " +
                                std::to_string(x.c));
        ConvGeom g;
        g.stride = stride;
        g.dilation = dilation;
        g.padding = padding;
        g.cin = x.c;
        g.cout = w.b;
        g.kh = w.h;
        g.kw = w.w;
        g.hout = (x.h + 2 * padding - dilation * (w.h - 1) - 1) / stride + 1;
        g.wout = (x.w + 2 * padding - dilation * (w.w - 1) - 1) / stride + 1;
        require(x.h + 2 * padding - dilation * (w.h - 1) - 1 >= 0 &&
                    x.w + 2 * padding - dilation * (w.w - 1) - 1 >= 0 && g.hout > 0 && g.wout > 0,
                "conv2d: non-positive output extent");
        return g;
    }
};

/// Unrolled patches, (cin*kh*kw) x (B*hout*wout), batch blocks along columns.
template <class S>
MatX<S> im2col(const TensorT<S>& x, const ConvGeom& g) {
    const int rows = g.cin * g.kh * g.kw;
    const std::int64_t n = std::int64_t(g.hout) * g.wout;
    MatX<S> col = MatX<S>::Zero(rows, std::int64_t(x.shape.b) * n);
    for (int b = 0; b < x.shape.b; ++b) {
        for (int c = 0; c < g.cin; ++c)
            for (int ky = 0; ky < g.kh; ++ky)
                for (int kx = 0; kx < g.kw; ++kx) {
                    const int r = (c * g.kh + ky) * g.kw + kx;
                    for (int oy = 0; oy < g.hout; ++oy) {
                        const int iy = oy * g.stride - g.padding + ky * g.dilation;
                        if (iy < 0 || iy >= x.shape.h) continue;
                        for (int ox = 0; ox < g.wout; ++ox) {
                            const int ix = ox * g.stride - g.padding + kx * g.dilation;
                            if (ix < 0 || ix >= x.shape.w) continue;
                            col(r, std::int64_t(b) * n + oy * g.wout + ox) = x.at(b, c, iy, ix);
                        }
                    }
                }
    }
    return col;
}

/// Scatter-add transpose of im2col.
template <class S>
void col2im_add(const MatX<S>& col, const ConvGeom& g, TensorT<S>& gx) {
    const std::int64_t n = std::int64_t(g.hout) * g.wout;
    for (int b = 0; b < gx.shape.b; ++b) {
        for (int c = 0; c < g.cin; ++c)
            for (int ky = 0; ky < g.kh; ++ky)
                for (int kx = 0; kx < g.kw; ++kx) {
                    const int r = (c * g.kh + ky) * g.kw + kx;
                    for (int oy = 0; oy < g.hout; ++oy) {
                        const int iy = oy * g.stride - g.padding + ky * g.dilation;
                        if (iy < 0 || iy >= gx.shape.h) continue;
                        for (int ox = 0; ox < g.wout; ++ox) {
                            const int ix = ox * g.stride - g.padding + kx * g.dilation;
                            if (ix < 0 || ix >= gx.shape.w) continue;
                            gx.at(b, c, iy, ix) += col(r, std::int64_t(b) * n + oy * g.wout + ox);
                        }
                    }
                }
    }
}

template <class S>
TensorT<S> conv2d_from_col(const MatX<S>& col, const TensorT<S>& w, const ConvGeom& g, int batch) {
    TensorT<S> out({batch, g.cout, g.hout, g.wout});
    const std::int64_t n = std::int64_t(g.hout) * g.wout;
    ConstRowMap<S> wmat(w.data.data(), g.cout, std::int64_t(g.cin) * g.kh * g.kw);
    for (int b = 0; b < batch; ++b) {
        RowMap<S> ob(out.data.data() + std::int64_t(b) * g.cout * n, g.cout, n);
        ob.noalias() = wmat * col.middleCols(std::int64_t(b) * n, n);
    }
    return out;
}

/// Cross-correlation with zero padding; kernel (cout, cin, kh, kw).
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, int stride = 1, int dilation = 1, int padding = 0) {
    const ConvGeom g = ConvGeom::make(x.shape, w.shape, stride, dilation, padding);
    return conv2d_from_col(im2col(x, g), w, g, x.shape.b);
}

/// Per-channel spatial convolution; kernel (C, 1, kh, kw).
template <class S>
TensorT<S> depthwise_conv2d(const TensorT<S>& x, const TensorT<S>& w, int stride = 1, int dilation = 1,
                            int padding = 0) {
    require(w.shape.b == x.shape.c && w.shape.c == 1,
            "depthwise_conv2d: kernel must have one filter per input channel");
    Shape unit{1, 1, w.shape.h, w.shape.w};
    const ConvGeom g = ConvGeom::make({x.shape.b, 1, x.shape.h, x.shape.w}, unit, stride, dilation, padding);
    TensorT<S> out({x.shape.b, x.shape.c, g.hout, g.wout});
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c)
            for (int oy = 0; oy < g.hout; ++oy)
                for (int ox = 0; ox < g.wout; ++ox) {
                    double acc = 0;
                    for (int ky = 0; ky < w.shape.h; ++ky) {
                        const int iy = oy * stride - padding + ky * dilation;
                        if (iy < 0 || iy >= x.shape.h) continue;
                        for (int kx = 0; kx < w.shape.w; ++kx) {
                            const int ix = ox * stride - padding + kx * dilation;
                            if (ix < 0 || ix >= x.shape.w) continue;
                            acc += double(w.at(c, 0, ky, kx)) * double(x.at(b, c, iy, ix));
                        }
                    }
                    out.at(b, c, oy, ox) = S(acc);
                }
    return out;
}

/// Per-channel spatial stage followed by a 1x1 channel mix. padding < 0
/// selects "same" padding dilation*(k-1)/2 for odd kernels.
template <class S>
TensorT<S> depthwise_separable_conv(const TensorT<S>& x, const TensorT<S>& dw, const TensorT<S>& pw,
                                    int stride = 1, int dilation = 1, int padding = -1) {
    require(pw.shape.h == 1 && pw.shape.w == 1, "depthwise_separable_conv: pointwise kernel must be 1x1");
    require(pw.shape.c == x.shape.c, "depthwise_separable_conv: channel mismatch between stages");
    const int pad = padding >= 0 ? padding : dilation * (dw.shape.h - 1) / 2;
    return conv2d(depthwise_conv2d(x, dw, stride, dilation, pad), pw);
}

// ---------------------------------------------------------------------------
// normalization / attention pieces

template <class S>
struct GroupNormCache {
    TensorT<S> xhat;
    std::vector<S> inv_std;  // per (b, group)
};

template <class S>
TensorT<S> group_norm_forward(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta, int groups,
                              S eps, GroupNormCache<S>* cache) {
    require(groups >= 1 && x.shape.c % groups == 0, "group_norm: channels not divisible by groups");
    require(gamma.shape == Shape{1, x.shape.c, 1, 1} && beta.shape == Shape{1, x.shape.c, 1, 1},
            "group_norm: affine parameter shape mismatch");
    const std::int64_t gsz = std::int64_t(x.shape.c / groups) * x.shape.h * x.shape.w;
    require(gsz > 0, "group_norm: empty group");
    TensorT<S> out(x.shape);
    TensorT<S> xhat(x.shape);
    std::vector<S> inv_std(std::size_t(x.shape.b) * groups);
    for (int b = 0; b < x.shape.b; ++b)
        for (int g = 0; g < groups; ++g) {
            const std::int64_t off = (std::int64_t(b) * x.shape.c + std::int64_t(g) * (x.shape.c / groups)) *
                                     x.shape.h * x.shape.w;
            auto seg = x.data.segment(off, gsz);
            const double mean = seg.template cast<double>().mean();
            const double var = (seg.template cast<double>() - mean).square().mean();
            const S is = S(1.0 / std::sqrt(var + double(eps)));
            inv_std[std::size_t(b) * groups + g] = is;
            xhat.data.segment(off, gsz) = (seg - S(mean)) * is;
        }
    const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c) {
            const std::int64_t off = (std::int64_t(b) * x.shape.c + c) * hw;
            out.data.segment(off, hw) = xhat.data.segment(off, hw) * gamma.data[c] + beta.data[c];
        }
    if (cache) {
        cache->xhat = xhat;
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

template <class S>
TensorT<S> group_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta, int groups,
                      S eps = S(1e-5)) {
    return group_norm_forward<S>(x, gamma, beta, groups, eps, nullptr);
}

/// Max-subtracted softmax over the last (width) axis.
template <class S>
TensorT<S> softmax_lastdim(const TensorT<S>& x) {
    require(x.shape.w > 0, "softmax_lastdim: softmax over empty axis");
    TensorT<S> out(x.shape);
    const std::int64_t rows = x.numel() / x.shape.w;
    for (std::int64_t r = 0; r < rows; ++r) {
        auto seg = x.data.segment(r * x.shape.w, x.shape.w);
        auto oseg = out.data.segment(r * x.shape.w, x.shape.w);
        const S mx = seg.maxCoeff();
        oseg = (seg - mx).exp();
        oseg /= oseg.sum();
    }
    return out;
}

/// Pairwise channel inner products of flattened spatial positions:
/// out(b,0,i,j) = sum_c q(b,c,i) * k(b,c,j), i over q positions, j over k positions.
template <class S>
TensorT<S> spatial_gram(const TensorT<S>& q, const TensorT<S>& k) {
    require(q.shape.b == k.shape.b && q.shape.c == k.shape.c, "spatial_gram: batch/channel mismatch");
    const std::int64_t nq = std::int64_t(q.shape.h) * q.shape.w;
    const std::int64_t nk = std::int64_t(k.shape.h) * k.shape.w;
    require(nq > 0 && nk > 0, "spatial_gram: empty spatial axis");
    TensorT<S> out({q.shape.b, 1, int(nq), int(nk)});
    for (int b = 0; b < q.shape.b; ++b) {
        ConstRowMap<S> qb(q.data.data() + std::int64_t(b) * q.shape.c * nq, q.shape.c, nq);
        ConstRowMap<S> kb(k.data.data() + std::int64_t(b) * k.shape.c * nk, k.shape.c, nk);
        RowMap<S> ob(out.data.data() + std::int64_t(b) * nq * nk, nq, nk);
        ob.noalias() = qb.transpose() * kb;
    }
    return out;
}

/// Weighted sum of value positions: out(b,c,i) = sum_j v(b,c,j) * w(b,0,i,j),
/// reshaped to (out_h, out_w) with out_h*out_w == number of query positions.
template <class S>
TensorT<S> attend(const TensorT<S>& v, const TensorT<S>& wts, int out_h, int out_w) {
    const std::int64_t nk = std::int64_t(v.shape.h) * v.shape.w;
    const std::int64_t nq = std::int64_t(out_h) * out_w;
    require(wts.shape.b == v.shape.b && wts.shape.c == 1 && wts.shape.h == nq && wts.shape.w == nk,
            "attend: weight shape mismatch");
    TensorT<S> out({v.shape.b, v.shape.c, out_h, out_w});
    for (int b = 0; b < v.shape.b; ++b) {
        ConstRowMap<S> vb(v.data.data() + std::int64_t(b) * v.shape.c * nk, v.shape.c, nk);
        ConstRowMap<S> wb(wts.data.data() + std::int64_t(b) * nq * nk, nq, nk);
        RowMap<S> ob(out.data.data() + std::int64_t(b) * v.shape.c * nq, v.shape.c, nq);
        ob.noalias() = vb * wb.transpose();
    }
    return out;
}

template <class S>
TensorT<S> clamp(const TensorT<S>& x, S lo, S hi) {
    TensorT<S> out;
    out.shape = x.shape;
    out.data = x.data.min(hi).max(lo);
    return out;
}

}  // namespace wcdm::ops
