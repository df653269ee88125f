#pragma once

#include "wcdm/ops.hpp"

#include <functional>
#include <initializer_list>
#include <memory>
#include <utility>

namespace wcdm {

template <class S>
class TapeT;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
template <class S>
struct VarT {
    TapeT<S>* tape = nullptr;
    int id = -1;
};

using Var = VarT<float>;
using Vard = VarT<double>;

/// Append-only record of operations in execution order; replaying it backward
/// visits them in exact reverse order. Parents always precede children, so the
/// graph is acyclic by construction.
template <class S>
class TapeT {
public:
    using BackFn = std::function<void(TapeT&, int)>;

    VarT<S> leaf(TensorT<S> value, bool requires_grad = false) {
        ensure_finite(value, "leaf");
        nodes_.push_back(Node{std::move(value), {}, requires_grad, nullptr});
        return {this, int(nodes_.size()) - 1};
    }

    VarT<S> make(TensorT<S> value, const std::vector<VarT<S>>& parents, BackFn back, const char* op) {
        ensure_finite(value, op);
        bool rg = false;
        for (const VarT<S>& p : parents) {
            require(p.tape == this && p.id >= 0 && p.id < int(nodes_.size()), std::string(op) + ": foreign parent");
            rg = rg || nodes_[std::size_t(p.id)].requires_grad;
        }
        nodes_.push_back(Node{std::move(value), {}, rg, rg ? std::move(back) : nullptr});
        return {this, int(nodes_.size()) - 1};
    }

    const TensorT<S>& value(VarT<S> v) const { return node(v).value; }
    const TensorT<S>& value_at(int id) const { return nodes_[std::size_t(id)].value; }
    bool requires_grad(VarT<S> v) const { return node(v).requires_grad; }
    bool requires_grad_at(int id) const { return nodes_[std::size_t(id)].requires_grad; }

    /// Accumulated gradient; exactly zero for nodes the loss never reached.
    TensorT<S> grad(VarT<S> v) const {
        const Node& n = node(v);
        if (n.grad.numel() == 0) return TensorT<S>(n.value.shape);
        return n.grad;
    }

    /// Lazily allocated gradient accumulator for backward functions.
    TensorT<S>& accum(int id) {
        Node& n = nodes_[std::size_t(id)];
        if (n.grad.numel() == 0 && n.value.numel() > 0) n.grad = TensorT<S>(n.value.shape);
        return n.grad;
    }

    bool has_grad(int id) const { return nodes_[std::size_t(id)].grad.numel() > 0; }

    void backward(VarT<S> loss) {
        require(loss.tape == this && loss.id >= 0 && loss.id < int(nodes_.size()), "backward: loss not on this tape");
        require(!ran_backward_, "backward: tape already replayed");
        ran_backward_ = true;
        const Node& ln = nodes_[std::size_t(loss.id)];
        require(ln.value.is_scalar(), "backward: loss must be scalar, got " + ln.value.shape.str());
        if (!ln.requires_grad) return;
        accum(loss.id).data.setConstant(S(1));
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[std::size_t(id)];
            if (n.back && n.grad.numel() > 0) n.back(*this, id);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        TensorT<S> value;
        TensorT<S> grad;  // empty until touched by backward
        bool requires_grad = false;
        BackFn back;
    };

    const Node& node(VarT<S> v) const {
        require(v.tape == this && v.id >= 0 && v.id < int(nodes_.size()), "invalid var");
        return nodes_[std::size_t(v.id)];
    }

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

using Tape = TapeT<float>;
using Taped = TapeT<double>;

// ---------------------------------------------------------------------------
// taped elementwise ops

template <class S>
VarT<S> add(VarT<S> a, VarT<S> b) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id, ib = b.id;
    return t.make(ops::add(t.value(a), t.value(b)), {a, b},
                  [ia, ib](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      t.accum(ia).data += g;
                      t.accum(ib).data += g;
                  },
                  "add");
}

template <class S>
VarT<S> sub(VarT<S> a, VarT<S> b) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id, ib = b.id;
    return t.make(ops::sub(t.value(a), t.value(b)), {a, b},
                  [ia, ib](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      t.accum(ia).data += g;
                      t.accum(ib).data -= g;
                  },
                  "sub");
}

template <class S>
VarT<S> mul(VarT<S> a, VarT<S> b) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id, ib = b.id;
    return t.make(ops::mul(t.value(a), t.value(b)), {a, b},
                  [ia, ib](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      t.accum(ia).data += g * t.value_at(ib).data;
                      t.accum(ib).data += g * t.value_at(ia).data;
                  },
                  "mul");
}

template <class S>
VarT<S> div(VarT<S> a, VarT<S> b) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id, ib = b.id;
    return t.make(ops::div(t.value(a), t.value(b)), {a, b},
                  [ia, ib](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      const auto& bv = t.value_at(ib).data;
                      t.accum(ia).data += g / bv;
                      t.accum(ib).data -= g * t.value_at(ia).data / (bv * bv);
                  },
                  "div");
}

template <class S>
VarT<S> scale(VarT<S> a, S k) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id;
    return t.make(ops::scale(t.value(a), k), {a},
                  [ia, k](TapeT<S>& t, int self) { t.accum(ia).data += t.accum(self).data * k; }, "scale");
}

template <class S>
VarT<S> add_scalar(VarT<S> a, S k) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id;
    return t.make(ops::add_scalar(t.value(a), k), {a},
                  [ia](TapeT<S>& t, int self) { t.accum(ia).data += t.accum(self).data; }, "add_scalar");
}

template <class S>
VarT<S> abs(VarT<S> a) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id;
    return t.make(ops::abs(t.value(a)), {a},
                  [ia](TapeT<S>& t, int self) {
                      const auto& x = t.value_at(ia).data;
                      t.accum(ia).data += t.accum(self).data * x.sign();
                  },
                  "abs");
}

template <class S>
VarT<S> scale_per_sample(VarT<S> a, std::vector<S> k) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id;
    return t.make(ops::scale_per_sample(t.value(a), k), {a},
                  [ia, k](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      auto& ga = t.accum(ia).data;
                      const Shape s = t.value_at(ia).shape;
                      const std::int64_t per = std::int64_t(s.c) * s.h * s.w;
                      for (int b = 0; b < s.b; ++b)
                          ga.segment(b * per, per) += g.segment(b * per, per) * k[std::size_t(b)];
                  },
                  "scale_per_sample");
}

template <class S>
VarT<S> activation(VarT<S> a, ops::Act kind) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id;
    return t.make(ops::activation(t.value(a), kind), {a},
                  [ia, kind](TapeT<S>& t, int self) {
                      const auto& x = t.value_at(ia).data;
                      const auto& g = t.accum(self).data;
                      auto& ga = t.accum(ia).data;
                      switch (kind) {
                          case ops::Act::Silu: {
                              auto sig = (S(1) / (S(1) + (-x).exp())).eval();
                              ga += g * sig * (S(1) + x * (S(1) - sig));
                              break;
                          }
                          case ops::Act::Relu:
                              ga += g * (x > S(0)).template cast<S>();
                              break;
                          case ops::Act::Sigmoid: {
                              const auto& y = t.value_at(self).data;
                              ga += g * y * (S(1) - y);
                              break;
                          }
                      }
                  },
                  "activation");
}

template <class S>
VarT<S> silu(VarT<S> a) {
    return activation(a, ops::Act::Silu);
}

// ---------------------------------------------------------------------------
// taped structural ops

template <class S>
VarT<S> concat_channels(const std::vector<VarT<S>>& parts) {
    require(!parts.empty(), "concat_channels: no inputs");
    TapeT<S>& t = *parts[0].tape;
    std::vector<TensorT<S>> vals;
    std::vector<int> ids;
    std::vector<int> cs;
    for (const auto& p : parts) {
        vals.push_back(t.value(p));
        ids.push_back(p.id);
        cs.push_back(t.value(p).shape.c);
    }
    return t.make(ops::concat_channels(vals), parts,
                  [ids, cs](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      const Shape os = t.value_at(self).shape;
                      const std::int64_t hw = std::int64_t(os.h) * os.w;
                      for (int b = 0; b < os.b; ++b) {
                          std::int64_t coff = 0;
                          for (std::size_t i = 0; i < ids.size(); ++i) {
                              if (t.requires_grad_at(ids[i])) {
                                  auto& gp = t.accum(ids[i]).data;
                                  gp.segment(std::int64_t(b) * cs[i] * hw, std::int64_t(cs[i]) * hw) +=
                                      g.segment((std::int64_t(b) * os.c + coff) * hw, std::int64_t(cs[i]) * hw);
                              }
                              coff += cs[i];
                          }
                      }
                  },
                  "concat_channels");
}

template <class S>
VarT<S> add_broadcast(VarT<S> x, VarT<S> bias) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id, ib = bias.id;
    return t.make(ops::add_broadcast(t.value(x), t.value(bias)), {x, bias},
                  [ix, ib](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      t.accum(ix).data += g;
                      auto& gb = t.accum(ib).data;
                      const Shape xs = t.value_at(ix).shape;
                      const Shape bs = t.value_at(ib).shape;
                      const std::int64_t hw = std::int64_t(xs.h) * xs.w;
                      for (int b = 0; b < xs.b; ++b)
                          for (int c = 0; c < xs.c; ++c)
                              gb[(bs.b == 1 ? 0 : b) * bs.c + c] +=
                                  g.segment((std::int64_t(b) * xs.c + c) * hw, hw).sum();
                  },
                  "add_broadcast");
}

template <class S>
VarT<S> mul_broadcast(VarT<S> x, VarT<S> scale) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id, is = scale.id;
    return t.make(ops::mul_broadcast(t.value(x), t.value(scale)), {x, scale},
                  [ix, is](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self).data;
                      const Shape xs = t.value_at(ix).shape;
                      const Shape ss = t.value_at(is).shape;
                      const auto& xv = t.value_at(ix).data;
                      const auto& sv = t.value_at(is).data;
                      const std::int64_t hw = std::int64_t(xs.h) * xs.w;
                      auto& gx = t.accum(ix).data;
                      auto& gs = t.accum(is).data;
                      for (int b = 0; b < xs.b; ++b)
                          for (int c = 0; c < xs.c; ++c) {
                              const std::int64_t off = (std::int64_t(b) * xs.c + c) * hw;
                              const std::int64_t si = (ss.b == 1 ? 0 : b) * ss.c + c;
                              gx.segment(off, hw) += g.segment(off, hw) * sv[si];
                              gs[si] += (g.segment(off, hw) * xv.segment(off, hw)).sum();
                          }
                  },
                  "mul_broadcast");
}

template <class S>
VarT<S> upsample_nearest2x(VarT<S> x) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id;
    return t.make(ops::upsample_nearest2x(t.value(x)), {x},
                  [ix](TapeT<S>& t, int self) {
                      const auto& gt = t.accum(self);
                      auto& gx = t.accum(ix);
                      const Shape s = t.value_at(ix).shape;
                      for (int b = 0; b < s.b; ++b)
                          for (int c = 0; c < s.c; ++c)
                              for (int h = 0; h < s.h; ++h)
                                  for (int w = 0; w < s.w; ++w)
                                      gx.at(b, c, h, w) += gt.at(b, c, 2 * h, 2 * w) + gt.at(b, c, 2 * h, 2 * w + 1) +
                                                           gt.at(b, c, 2 * h + 1, 2 * w) +
                                                           gt.at(b, c, 2 * h + 1, 2 * w + 1);
                  },
                  "upsample_nearest2x");
}

template <class S>
VarT<S> diff_h(VarT<S> x) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id;
    return t.make(ops::diff_h(t.value(x)), {x},
                  [ix](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self);
                      auto& gx = t.accum(ix);
                      const Shape s = t.value_at(ix).shape;
                      for (int b = 0; b < s.b; ++b)
                          for (int c = 0; c < s.c; ++c)
                              for (int h = 0; h < s.h; ++h)
                                  for (int w = 0; w + 1 < s.w; ++w) {
                                      const S gv = g.at(b, c, h, w);
                                      gx.at(b, c, h, w + 1) += gv;
                                      gx.at(b, c, h, w) -= gv;
                                  }
                  },
                  "diff_h");
}

template <class S>
VarT<S> diff_v(VarT<S> x) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id;
    return t.make(ops::diff_v(t.value(x)), {x},
                  [ix](TapeT<S>& t, int self) {
                      const auto& g = t.accum(self);
                      auto& gx = t.accum(ix);
                      const Shape s = t.value_at(ix).shape;
                      for (int b = 0; b < s.b; ++b)
                          for (int c = 0; c < s.c; ++c)
                              for (int h = 0; h + 1 < s.h; ++h)
                                  for (int w = 0; w < s.w; ++w) {
                                      const S gv = g.at(b, c, h, w);
                                      gx.at(b, c, h + 1, w) += gv;
                                      gx.at(b, c, h, w) -= gv;
                                  }
                  },
                  "diff_v");
}

// ---------------------------------------------------------------------------
// taped reductions

template <class S>
VarT<S> sum_all(VarT<S> x) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id;
    return t.make(ops::sum_all(t.value(x)), {x},
                  [ix](TapeT<S>& t, int self) { t.accum(ix).data += t.accum(self).data[0]; }, "sum_all");
}

template <class S>
VarT<S> mean_all(VarT<S> x) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id;
    const S inv = S(1.0 / double(t.value(x).numel()));
    return t.make(ops::mean_all(t.value(x)), {x},
                  [ix, inv](TapeT<S>& t, int self) { t.accum(ix).data += t.accum(self).data[0] * inv; },
                  "mean_all");
}

template <class S>
VarT<S> mse(VarT<S> a, VarT<S> b) {
    VarT<S> d = sub(a, b);
    return mean_all(mul(d, d));
}

template <class S>
VarT<S> mae(VarT<S> a, VarT<S> b) {
    return mean_all(abs(sub(a, b)));
}

// ---------------------------------------------------------------------------
// taped convolution / normalization / attention

template <class S>
VarT<S> conv2d(VarT<S> x, VarT<S> w, int stride = 1, int dilation = 1, int padding = 0) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id, iw = w.id;
    const ops::ConvGeom g = ops::ConvGeom::make(t.value(x).shape, t.value(w).shape, stride, dilation, padding);
    auto col = std::make_shared<ops::MatX<S>>(ops::im2col(t.value(x), g));
    TensorT<S> out = ops::conv2d_from_col(*col, t.value(w), g, t.value(x).shape.b);
    return t.make(std::move(out), {x, w},
                  [ix, iw, g, col](TapeT<S>& t, int self) {
                      const TensorT<S>& gy = t.accum(self);
                      const std::int64_t n = std::int64_t(g.hout) * g.wout;
                      const std::int64_t r = std::int64_t(g.cin) * g.kh * g.kw;
                      const int batch = t.value_at(ix).shape.b;
                      if (t.requires_grad_at(iw)) {
                          auto& gw = t.accum(iw);
                          ops::RowMap<S> gwm(gw.data.data(), g.cout, r);
                          for (int b = 0; b < batch; ++b) {
                              ops::ConstRowMap<S> gyb(gy.data.data() + std::int64_t(b) * g.cout * n, g.cout, n);
                              gwm.noalias() += gyb * col->middleCols(std::int64_t(b) * n, n).transpose();
                          }
                      }
                      if (t.requires_grad_at(ix)) {
                          const TensorT<S>& wv = t.value_at(iw);
                          ops::ConstRowMap<S> wm(wv.data.data(), g.cout, r);
                          ops::MatX<S> gcol(r, std::int64_t(batch) * n);
                          for (int b = 0; b < batch; ++b) {
                              ops::ConstRowMap<S> gyb(gy.data.data() + std::int64_t(b) * g.cout * n, g.cout, n);
                              gcol.middleCols(std::int64_t(b) * n, n).noalias() = wm.transpose() * gyb;
                          }
                          ops::col2im_add(gcol, g, t.accum(ix));
                      }
                  },
                  "conv2d");
}

template <class S>
VarT<S> depthwise_conv2d(VarT<S> x, VarT<S> w, int stride = 1, int dilation = 1, int padding = 0) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id, iw = w.id;
    TensorT<S> out = ops::depthwise_conv2d(t.value(x), t.value(w), stride, dilation, padding);
    return t.make(std::move(out), {x, w},
                  [ix, iw, stride, dilation, padding](TapeT<S>& t, int self) {
                      const TensorT<S>& gy = t.accum(self);
                      const TensorT<S>& xv = t.value_at(ix);
                      const TensorT<S>& wv = t.value_at(iw);
                      const bool need_x = t.requires_grad_at(ix);
                      const bool need_w = t.requires_grad_at(iw);
                      auto& gx = t.accum(ix);
                      auto& gw = t.accum(iw);
                      for (int b = 0; b < xv.shape.b; ++b)
                          for (int c = 0; c < xv.shape.c; ++c)
                              for (int oy = 0; oy < gy.shape.h; ++oy)
                                  for (int ox = 0; ox < gy.shape.w; ++ox) {
                                      const S gv = gy.at(b, c, oy, ox);
                                      if (gv == S(0)) continue;
                                      for (int ky = 0; ky < wv.shape.h; ++ky) {
                                          const int iy = oy * stride - padding + ky * dilation;
                                          if (iy < 0 || iy >= xv.shape.h) continue;
                                          for (int kx = 0; kx < wv.shape.w; ++kx) {
                                              const int ixx = ox * stride - padding + kx * dilation;
                                              if (ixx < 0 || ixx >= xv.shape.w) continue;
                                              if (need_x) gx.at(b, c, iy, ixx) += gv * wv.at(c, 0, ky, kx);
                                              if (need_w) gw.at(c, 0, ky, kx) += gv * xv.at(b, c, iy, ixx);
                                          }
                                      }
                                  }
                  },
                  "depthwise_conv2d");
}

template <class S>
VarT<S> depthwise_separable_conv(VarT<S> x, VarT<S> dw, VarT<S> pw, int stride = 1, int dilation = 1,
                                 int padding = -1) {
    TapeT<S>& t = *x.tape;
    const Shape pws = t.value(pw).shape;
    require(pws.h == 1 && pws.w == 1, "depthwise_separable_conv: pointwise kernel must be 1x1");
    require(pws.c == t.value(x).shape.c, "depthwise_separable_conv: channel mismatch between stages");
    const int pad = padding >= 0 ? padding : dilation * (t.value(dw).shape.h - 1) / 2;
    return conv2d(depthwise_conv2d(x, dw, stride, dilation, pad), pw);
}

template <class S>
VarT<S> group_norm(VarT<S> x, VarT<S> gamma, VarT<S> beta, int groups, S eps = S(1e-5)) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id, ig = gamma.id, ib = beta.id;
    auto cache = std::make_shared<ops::GroupNormCache<S>>();
    TensorT<S> out = ops::group_norm_forward(t.value(x), t.value(gamma), t.value(beta), groups, eps, cache.get());
    return t.make(std::move(out), {x, gamma, beta},
                  [ix, ig, ib, groups, cache](TapeT<S>& t, int self) {
                      const TensorT<S>& gy = t.accum(self);
                      const Shape s = t.value_at(ix).shape;
                      const TensorT<S>& gammav = t.value_at(ig);
                      const std::int64_t hw = std::int64_t(s.h) * s.w;
                      const int cpg = s.c / groups;
                      const std::int64_t gsz = std::int64_t(cpg) * hw;
                      if (t.requires_grad_at(ig) || t.requires_grad_at(ib)) {
                          auto& ggamma = t.accum(ig).data;
                          auto& gbeta = t.accum(ib).data;
                          for (int b = 0; b < s.b; ++b)
                              for (int c = 0; c < s.c; ++c) {
                                  const std::int64_t off = (std::int64_t(b) * s.c + c) * hw;
                                  ggamma[c] += (gy.data.segment(off, hw) * cache->xhat.data.segment(off, hw)).sum();
                                  gbeta[c] += gy.data.segment(off, hw).sum();
                              }
                      }
                      if (t.requires_grad_at(ix)) {
                          auto& gx = t.accum(ix).data;
                          Eigen::Array<S, Eigen::Dynamic, 1> u(gsz);
                          for (int b = 0; b < s.b; ++b)
                              for (int g = 0; g < groups; ++g) {
                                  const std::int64_t off = (std::int64_t(b) * s.c + std::int64_t(g) * cpg) * hw;
                                  for (int cc = 0; cc < cpg; ++cc)
                                      u.segment(cc * hw, hw) =
                                          gy.data.segment(off + cc * hw, hw) * gammav.data[g * cpg + cc];
                                  const auto xh = cache->xhat.data.segment(off, gsz);
                                  const S mu = u.mean();
                                  const S mxu = (u * xh).mean();
                                  const S is = cache->inv_std[std::size_t(b) * groups + g];
                                  gx.segment(off, gsz) += is * (u - mu - xh * mxu);
                              }
                      }
                  },
                  "group_norm");
}

template <class S>
VarT<S> softmax_lastdim(VarT<S> x) {
    TapeT<S>& t = *x.tape;
    const int ix = x.id;
    return t.make(ops::softmax_lastdim(t.value(x)), {x},
                  [ix](TapeT<S>& t, int self) {
                      const auto& y = t.value_at(self);
                      const auto& gy = t.accum(self);
                      auto& gx = t.accum(ix);
                      const int w = y.shape.w;
                      const std::int64_t rows = y.numel() / w;
                      for (std::int64_t r = 0; r < rows; ++r) {
                          const auto ys = y.data.segment(r * w, w);
                          const auto gs = gy.data.segment(r * w, w);
                          const S dot = (ys * gs).sum();
                          gx.data.segment(r * w, w) += ys * (gs - dot);
                      }
                  },
                  "softmax_lastdim");
}

template <class S>
VarT<S> spatial_gram(VarT<S> q, VarT<S> k) {
    TapeT<S>& t = *q.tape;
    const int iq = q.id, ik = k.id;
    return t.make(ops::spatial_gram(t.value(q), t.value(k)), {q, k},
                  [iq, ik](TapeT<S>& t, int self) {
                      const TensorT<S>& g = t.accum(self);
                      const Shape qs = t.value_at(iq).shape;
                      const Shape ks = t.value_at(ik).shape;
                      const std::int64_t nq = std::int64_t(qs.h) * qs.w;
                      const std::int64_t nk = std::int64_t(ks.h) * ks.w;
                      for (int b = 0; b < qs.b; ++b) {
                          ops::ConstRowMap<S> gb(g.data.data() + std::int64_t(b) * nq * nk, nq, nk);
                          ops::ConstRowMap<S> qb(t.value_at(iq).data.data() + std::int64_t(b) * qs.c * nq, qs.c, nq);
                          ops::ConstRowMap<S> kb(t.value_at(ik).data.data() + std::int64_t(b) * ks.c * nk, ks.c, nk);
                          if (t.requires_grad_at(iq)) {
                              ops::RowMap<S> gq(t.accum(iq).data.data() + std::int64_t(b) * qs.c * nq, qs.c, nq);
                              gq.noalias() += kb * gb.transpose();
                          }
                          if (t.requires_grad_at(ik)) {
                              ops::RowMap<S> gk(t.accum(ik).data.data() + std::int64_t(b) * ks.c * nk, ks.c, nk);
                              gk.noalias() += qb * gb;
                          }
                      }
                  },
                  "spatial_gram");
}

template <class S>
VarT<S> attend(VarT<S> v, VarT<S> wts, int out_h, int out_w) {
    TapeT<S>& t = *v.tape;
    const int iv = v.id, iw = wts.id;
    return t.make(ops::attend(t.value(v), t.value(wts), out_h, out_w), {v, wts},
                  [iv, iw](TapeT<S>& t, int self) {
                      const TensorT<S>& g = t.accum(self);
                      const Shape vs = t.value_at(iv).shape;
                      const Shape os = t.value_at(self).shape;
                      const std::int64_t nk = std::int64_t(vs.h) * vs.w;
                      const std::int64_t nq = std::int64_t(os.h) * os.w;
                      for (int b = 0; b < vs.b; ++b) {
                          ops::ConstRowMap<S> gb(g.data.data() + std::int64_t(b) * vs.c * nq, vs.c, nq);
                          ops::ConstRowMap<S> wb(t.value_at(iw).data.data() + std::int64_t(b) * nq * nk, nq, nk);
                          ops::ConstRowMap<S> vb(t.value_at(iv).data.data() + std::int64_t(b) * vs.c * nk, vs.c, nk);
                          if (t.requires_grad_at(iv)) {
                              ops::RowMap<S> gv(t.accum(iv).data.data() + std::int64_t(b) * vs.c * nk, vs.c, nk);
                              gv.noalias() += gb * wb;
                          }
                          if (t.requires_grad_at(iw)) {
                              ops::RowMap<S> gw(t.accum(iw).data.data() + std::int64_t(b) * nq * nk, nq, nk);
                              gw.noalias() += gb.transpose() * vb;
                          }
                      }
                  },
                  "attend");
}

/// Single-head cross attention over flattened spatial positions. Projections
/// are 1x1 convolutions; output shape equals the query source shape.
template <class S>
struct CrossAttnVars {
    VarT<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class S>
VarT<S> cross_attention(VarT<S> query_src, VarT<S> keyvalue_src, const CrossAttnVars<S>& p) {
    TapeT<S>& t = *query_src.tape;
    const Shape qs = t.value(query_src).shape;
    require(qs.b == t.value(keyvalue_src).shape.b, "cross_attention: batch mismatch");
    VarT<S> q = add_broadcast(conv2d(query_src, p.wq), p.bq);
    VarT<S> k = add_broadcast(conv2d(keyvalue_src, p.wk), p.bk);
    VarT<S> v = add_broadcast(conv2d(keyvalue_src, p.wv), p.bv);
    const int d = t.value(q).shape.c;
    VarT<S> logits = scale(spatial_gram(q, k), S(1.0 / std::sqrt(double(d))));
    VarT<S> attn = softmax_lastdim(logits);
    VarT<S> ctx = attend(v, attn, qs.h, qs.w);
    return add_broadcast(conv2d(ctx, p.wo), p.bo);
}

}  // namespace wcdm
