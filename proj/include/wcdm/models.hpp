#pragma once

#include "wcdm/diffusion.hpp"
#include "wcdm/wavelet.hpp"

#include <unordered_map>

namespace wcdm::models {

// ---------------------------------------------------------------------------
// parameter binding
//
// Models store plain tensors and enumerate them with visit_params in a fixed
// order. bind() copies them onto a tape as leaves; the forward graph fetches
// them by name. The same enumeration drives checkpoints and the optimizer.

template <class S>
struct Bound {
    TapeT<S>* tape = nullptr;
    std::vector<std::pair<std::string, TensorT<S>*>> order;
    std::vector<VarT<S>> var_order;
    std::unordered_map<std::string, VarT<S>> vars;

    VarT<S> at(const std::string& name) const {
        auto it = vars.find(name);
        require(it != vars.end(), "unbound parameter: " + name);
        return it->second;
    }
};

template <class S, class Model>
Bound<S> bind(TapeT<S>& tape, Model& model, bool trainable) {
    Bound<S> b;
    b.tape = &tape;
    model.visit_params("", [&](const std::string& name, TensorT<S>& t) {
        VarT<S> v = tape.leaf(t, trainable);
        b.order.emplace_back(name, &t);
        b.var_order.push_back(v);
        b.vars.emplace(name, v);
    });
    return b;
}

template <class Model>
std::int64_t param_count(const Model& model) {
    std::int64_t n = 0;
    const_cast<Model&>(model).visit_params("", [&](const std::string&, auto& t) { n += t.numel(); });
    return n;
}

// ---------------------------------------------------------------------------
// building blocks

template <class S>
struct ConvP {
    TensorT<S> w, b;

    static ConvP init(int cin, int cout, int k, std::uint64_t seed, double gain = 1.0) {
        ConvP p;
        const double stddev = gain * std::sqrt(2.0 / (double(cin) * k * k));
        p.w = normal_tensor<S>({cout, cin, k, k}, seed, stddev);
        p.b = TensorT<S>({1, cout, 1, 1});
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".w", w);
        f(prefix + ".b", b);
    }
};

template <class S>
VarT<S> apply_conv(const Bound<S>& bd, const std::string& prefix, VarT<S> x, int stride = 1, int dilation = 1,
                   int padding = 0) {
    return add_broadcast(conv2d(x, bd.at(prefix + ".w"), stride, dilation, padding), bd.at(prefix + ".b"));
}

template <class S>
struct GroupNormP {
    TensorT<S> gamma, beta;
    int groups = 1;

    static GroupNormP init(int channels, int max_groups = 8) {
        GroupNormP p;
        p.gamma = TensorT<S>::full({1, channels, 1, 1}, S(1));
        p.beta = TensorT<S>({1, channels, 1, 1});
        p.groups = max_groups;
        while (channels % p.groups != 0) --p.groups;
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".gamma", gamma);
        f(prefix + ".beta", beta);
    }
};

template <class S>
VarT<S> apply_gn(const Bound<S>& bd, const GroupNormP<S>& p, const std::string& prefix, VarT<S> x) {
    return group_norm(x, bd.at(prefix + ".gamma"), bd.at(prefix + ".beta"), p.groups);
}

/// Depthwise 3x3 followed by a pointwise 1x1 with bias.
template <class S>
struct DsStackP {
    TensorT<S> dw;
    ConvP<S> pw;

    static DsStackP init(int cin, int cout, std::uint64_t seed, double gain = 1.0) {
        DsStackP p;
        p.dw = normal_tensor<S>({cin, 1, 3, 3}, seed, std::sqrt(2.0 / 9.0));
        p.pw = ConvP<S>::init(cin, cout, 1, seed + 1, gain);
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".dw", dw);
        pw.visit(prefix + ".pw", f);
    }
};

template <class S>
VarT<S> apply_ds(const Bound<S>& bd, const std::string& prefix, VarT<S> x) {
    VarT<S> h = depthwise_conv2d(x, bd.at(prefix + ".dw"), 1, 1, 1);
    return add_broadcast(conv2d(h, bd.at(prefix + ".pw.w")), bd.at(prefix + ".pw.b"));
}

template <class S>
struct CrossAttnP {
    ConvP<S> q, k, v, o;

    static CrossAttnP init(int channels, std::uint64_t seed) {
        CrossAttnP p;
        p.q = ConvP<S>::init(channels, channels, 1, seed);
        p.k = ConvP<S>::init(channels, channels, 1, seed + 1);
        p.v = ConvP<S>::init(channels, channels, 1, seed + 2);
        p.o = ConvP<S>::init(channels, channels, 1, seed + 3, 0.5);
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        q.visit(prefix + ".q", f);
        k.visit(prefix + ".k", f);
        v.visit(prefix + ".v", f);
        o.visit(prefix + ".o", f);
    }
};

template <class S>
VarT<S> apply_attn(const Bound<S>& bd, const std::string& prefix, VarT<S> query_src, VarT<S> kv_src) {
    CrossAttnVars<S> vars{bd.at(prefix + ".q.w"), bd.at(prefix + ".q.b"), bd.at(prefix + ".k.w"),
                          bd.at(prefix + ".k.b"), bd.at(prefix + ".v.w"), bd.at(prefix + ".v.b"),
                          bd.at(prefix + ".o.w"), bd.at(prefix + ".o.b")};
    return cross_attention(query_src, kv_src, vars);
}

// ---------------------------------------------------------------------------
// conditional noise estimator (small U-Net)

struct UnetConfig {
    int x_channels = 3;
    int cond_channels = 3;
    int base_width = 16;
    int depth = 2;  // encoder stages, each halves the spatial extent
    int temb_dim = 32;

    int width(int stage) const { return base_width << stage; }
};

template <class S>
struct ResBlockP {
    GroupNormP<S> gn1, gn2;
    ConvP<S> conv1, conv2;
    ConvP<S> temb_shift, temb_scale;  // adaptive group norm: gn2(h)*(1+scale) + shift
    ConvP<S> skip;
    bool has_skip = false;

    static ResBlockP init(int cin, int cout, int temb_dim, std::uint64_t seed) {
        ResBlockP p;
        p.gn1 = GroupNormP<S>::init(cin);
        p.conv1 = ConvP<S>::init(cin, cout, 3, seed);
        p.temb_shift = ConvP<S>::init(temb_dim, cout, 1, seed + 1);
        p.temb_scale = ConvP<S>::init(temb_dim, cout, 1, seed + 4, 0.0);  // starts as identity gain
        p.gn2 = GroupNormP<S>::init(cout);
        p.conv2 = ConvP<S>::init(cout, cout, 3, seed + 2, 0.2);
        p.has_skip = cin != cout;
        if (p.has_skip) p.skip = ConvP<S>::init(cin, cout, 1, seed + 3);
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        gn1.visit(prefix + ".gn1", f);
        conv1.visit(prefix + ".conv1", f);
        temb_shift.visit(prefix + ".temb_shift", f);
        temb_scale.visit(prefix + ".temb_scale", f);
        gn2.visit(prefix + ".gn2", f);
        conv2.visit(prefix + ".conv2", f);
        if (has_skip) skip.visit(prefix + ".skip", f);
    }
};

template <class S>
VarT<S> apply_res(const Bound<S>& bd, const ResBlockP<S>& p, const std::string& prefix, VarT<S> x, VarT<S> temb) {
    VarT<S> h = apply_conv(bd, prefix + ".conv1", silu(apply_gn(bd, p.gn1, prefix + ".gn1", x)), 1, 1, 1);
    VarT<S> gain = add_scalar(apply_conv(bd, prefix + ".temb_scale", temb), S(1));
    VarT<S> shift = apply_conv(bd, prefix + ".temb_shift", temb);
    h = add_broadcast(mul_broadcast(apply_gn(bd, p.gn2, prefix + ".gn2", h), gain), shift);
    h = apply_conv(bd, prefix + ".conv2", silu(h), 1, 1, 1);
    VarT<S> s = p.has_skip ? apply_conv(bd, prefix + ".skip", x) : x;
    return add(h, s);
}

/// Sinusoidal embedding of integer timesteps, (B, dim, 1, 1).
template <class S>
TensorT<S> time_embedding(const std::vector<int>& ts, int dim) {
    require(dim >= 2 && dim % 2 == 0, "time_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    TensorT<S> e({int(ts.size()), dim, 1, 1});
    for (std::size_t b = 0; b < ts.size(); ++b)
        for (int i = 0; i < half; ++i) {
            const double freq = half == 1 ? 1.0 : std::exp(-std::log(10000.0) * double(i) / double(half - 1));
            e.data[std::int64_t(b) * dim + i] = S(std::sin(double(ts[b]) * freq));
            e.data[std::int64_t(b) * dim + half + i] = S(std::cos(double(ts[b]) * freq));
        }
    return e;
}

template <class S>
struct NoiseEstimatorT {
    UnetConfig cfg;
    ConvP<S> stem;
    ConvP<S> temb1, temb2;
    std::vector<ResBlockP<S>> enc;
    std::vector<ConvP<S>> down;
    ResBlockP<S> mid;
    std::vector<ConvP<S>> up;
    std::vector<ResBlockP<S>> dec;
    GroupNormP<S> out_gn;
    ConvP<S> head;

    // Output parameterization. The public contract is always the predicted
    // noise; with use_x0_form the network output g is read as a clean-signal
    // estimate and converted, eps = (x_t - sqrt(abar_t) * g) / sqrt(1-abar_t).
    // That conversion needs the variance schedule, copied in at setup.
    bool use_x0_form = false;
    std::vector<double> abar;  // abar[t], t = 0..T; empty in plain mode

    void set_x0_form(const diffusion::NoiseSchedule& sched) {
        use_x0_form = true;
        abar.resize(std::size_t(sched.steps()) + 1);
        for (int t = 0; t <= sched.steps(); ++t) abar[std::size_t(t)] = sched.abar(t);
    }

    template <class F>
    void visit_params(const std::string& prefix, F&& f) {
        stem.visit(prefix + "stem", f);
        temb1.visit(prefix + "temb1", f);
        temb2.visit(prefix + "temb2", f);
        for (std::size_t i = 0; i < enc.size(); ++i) {
            enc[i].visit(prefix + "enc" + std::to_string(i), f);
            down[i].visit(prefix + "down" + std::to_string(i), f);
        }
        mid.visit(prefix + "mid", f);
        for (std::size_t i = 0; i < dec.size(); ++i) {
            up[i].visit(prefix + "up" + std::to_string(i), f);
            dec[i].visit(prefix + "dec" + std::to_string(i), f);
        }
        out_gn.visit(prefix + "out_gn", f);
        head.visit(prefix + "head", f);
    }

    /// Builds the forward graph; conditioning via channel concatenation.
    VarT<S> forward(const Bound<S>& bd, VarT<S> x_t, VarT<S> cond, const std::vector<int>& ts) const {
        TapeT<S>& tape = *bd.tape;
        const Shape xs = tape.value(x_t).shape;
        const Shape cs = tape.value(cond).shape;
        require(xs.h == cs.h && xs.w == cs.w && xs.b == cs.b,
                "estimate_noise: x_t and condition must share batch and spatial extents");
        require(xs.c == cfg.x_channels && cs.c == cfg.cond_channels, "estimate_noise: channel mismatch");
        require(int(ts.size()) == xs.b, "estimate_noise: one t per batch element");
        require(xs.h % (1 << cfg.depth) == 0 && xs.w % (1 << cfg.depth) == 0,
                "estimate_noise: spatial extents must be divisible by 2^depth");
        for (int t : ts) {
            require(t >= 1, "estimate_noise: t must be >= 1");
            require(!use_x0_form || t < int(abar.size()), "estimate_noise: t out of schedule range");
        }

        VarT<S> temb = tape.leaf(time_embedding<S>(ts, cfg.temb_dim));
        temb = apply_conv(bd, "temb2", silu(apply_conv(bd, "temb1", temb)));

        VarT<S> h = apply_conv(bd, "stem", concat_channels<S>({x_t, cond}), 1, 1, 1);
        std::vector<VarT<S>> skips;
        for (std::size_t i = 0; i < enc.size(); ++i) {
            h = apply_res(bd, enc[i], "enc" + std::to_string(i), h, temb);
            skips.push_back(h);
            h = silu(apply_conv(bd, "down" + std::to_string(i), h, 2, 1, 1));
        }
        h = apply_res(bd, mid, "mid", h, temb);
        for (int i = int(dec.size()) - 1; i >= 0; --i) {
            h = silu(apply_conv(bd, "up" + std::to_string(i), upsample_nearest2x(h), 1, 1, 1));
            h = apply_res(bd, dec[std::size_t(i)], "dec" + std::to_string(i),
                          concat_channels<S>({h, skips[std::size_t(i)]}), temb);
        }
        VarT<S> g = apply_conv(bd, "head", silu(apply_gn(bd, out_gn, "out_gn", h)), 1, 1, 1);
        if (!use_x0_form) return g;
        std::vector<S> ca(ts.size()), inv_ce(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) {
            const double ab = abar[std::size_t(ts[i])];
            ca[i] = S(std::sqrt(ab));
            inv_ce[i] = S(1.0 / std::sqrt(1.0 - ab));
        }
        return scale_per_sample(sub(x_t, scale_per_sample(g, ca)), inv_ce);
    }
};

template <class S>
NoiseEstimatorT<S> make_noise_estimator(const UnetConfig& cfg, std::uint64_t seed) {
    require(cfg.base_width >= 1 && cfg.depth >= 1, "make_noise_estimator: bad config");
    NoiseEstimatorT<S> m;
    m.cfg = cfg;
    auto sd = [&](const char* label, int i = 0) { return derive_seed(seed, label, std::uint64_t(i)); };
    m.stem = ConvP<S>::init(cfg.x_channels + cfg.cond_channels, cfg.width(0), 3, sd("stem"));
    m.temb1 = ConvP<S>::init(cfg.temb_dim, cfg.temb_dim, 1, sd("temb1"));
    m.temb2 = ConvP<S>::init(cfg.temb_dim, cfg.temb_dim, 1, sd("temb2"));
    for (int i = 0; i < cfg.depth; ++i) {
        m.enc.push_back(ResBlockP<S>::init(cfg.width(i), cfg.width(i), cfg.temb_dim, sd("enc", i)));
        m.down.push_back(ConvP<S>::init(cfg.width(i), cfg.width(i + 1), 3, sd("down", i)));
    }
    m.mid = ResBlockP<S>::init(cfg.width(cfg.depth), cfg.width(cfg.depth), cfg.temb_dim, sd("mid"));
    for (int i = 0; i < cfg.depth; ++i) {
        m.up.push_back(ConvP<S>::init(cfg.width(i + 1), cfg.width(i), 3, sd("up", i)));
        m.dec.push_back(ResBlockP<S>::init(2 * cfg.width(i), cfg.width(i), cfg.temb_dim, sd("dec", i)));
    }
    m.out_gn = GroupNormP<S>::init(cfg.width(0));
    m.head = ConvP<S>::init(cfg.width(0), cfg.x_channels, 3, sd("head"), 0.2);
    return m;
}

using NoiseEstimator = NoiseEstimatorT<float>;

/// One-off eager evaluation (fresh tape, no gradients).
template <class S>
TensorT<S> estimate_noise(const NoiseEstimatorT<S>& model, const TensorT<S>& x_t, const TensorT<S>& cond, int t) {
    TapeT<S> tape;
    Bound<S> bd = bind(tape, const_cast<NoiseEstimatorT<S>&>(model), false);
    VarT<S> out = model.forward(bd, tape.leaf(x_t), tape.leaf(cond), std::vector<int>(std::size_t(x_t.shape.b), t));
    return tape.value(out);
}

// ---------------------------------------------------------------------------
// high-frequency restoration module

enum class HfrmVariant { v1_default, v2_no_attention, v3_reversed };

inline HfrmVariant parse_hfrm_variant(const std::string& kind) {
    if (kind == "v1_default" || kind == "v1") return HfrmVariant::v1_default;
    if (kind == "v2_no_attention" || kind == "v2") return HfrmVariant::v2_no_attention;
    if (kind == "v3_reversed" || kind == "v3") return HfrmVariant::v3_reversed;
    throw std::invalid_argument("unknown HFRM variant: " + kind);
}

inline const char* hfrm_variant_name(HfrmVariant v) {
    switch (v) {
        case HfrmVariant::v1_default: return "v1_default";
        case HfrmVariant::v2_no_attention: return "v2_no_attention";
        case HfrmVariant::v3_reversed: return "v3_reversed";
    }
    return "?";
}

struct HfrmConfig {
    int channels = 3;
    int width = 16;
    HfrmVariant variant = HfrmVariant::v1_default;

    /// Hidden width of the v2 conv replacement, chosen so its parameter count
    /// matches one cross-attention block: 2*F*h + h + F ~ 4*F*F + 4*F.
    int v2_hidden() const {
        const double f = width;
        return int(std::lround((4 * f * f + 3 * f) / (2 * f + 1)));
    }
};

/// v2 stand-in for a cross-attention block: two 1x1 convolutions.
template <class S>
struct ConvPairP {
    ConvP<S> a, b;

    static ConvPairP init(int channels, int hidden, std::uint64_t seed) {
        ConvPairP p;
        p.a = ConvP<S>::init(channels, hidden, 1, seed);
        p.b = ConvP<S>::init(hidden, channels, 1, seed + 1, 0.5);
        return p;
    }

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        a.visit(prefix + ".a", f);
        b.visit(prefix + ".b", f);
    }
};

template <class S>
struct HfrmT {
    HfrmConfig cfg;
    DsStackP<S> in_v, in_h, in_d;
    CrossAttnP<S> attn1, attn2;   // v1 / v3
    ConvPairP<S> rep1, rep2;      // v2
    std::array<ConvP<S>, 5> res;  // progressive dilation 1,2,4,2,1
    DsStackP<S> out_v, out_h, out_d;

    static constexpr int dilations[5] = {1, 2, 4, 2, 1};

    template <class F>
    void visit_params(const std::string& prefix, F&& f) {
        in_v.visit(prefix + "in_v", f);
        in_h.visit(prefix + "in_h", f);
        in_d.visit(prefix + "in_d", f);
        if (cfg.variant == HfrmVariant::v2_no_attention) {
            rep1.visit(prefix + "rep1", f);
            rep2.visit(prefix + "rep2", f);
        } else {
            attn1.visit(prefix + "attn1", f);
            attn2.visit(prefix + "attn2", f);
        }
        for (int i = 0; i < 5; ++i) res[std::size_t(i)].visit(prefix + "res" + std::to_string(i), f);
        out_v.visit(prefix + "out_v", f);
        out_h.visit(prefix + "out_h", f);
        out_d.visit(prefix + "out_d", f);
    }

    std::array<VarT<S>, 3> forward(const Bound<S>& bd, VarT<S> V, VarT<S> H, VarT<S> D) const {
        TapeT<S>& tape = *bd.tape;
        require(tape.value(V).shape == tape.value(H).shape && tape.value(V).shape == tape.value(D).shape,
                "hfrm_forward: band shape mismatch");
        require(tape.value(V).shape.c == cfg.channels, "hfrm_forward: channel mismatch");

        VarT<S> fv = silu(apply_ds(bd, "in_v", V));
        VarT<S> fh = silu(apply_ds(bd, "in_h", H));
        VarT<S> fd = silu(apply_ds(bd, "in_d", D));

        switch (cfg.variant) {
            case HfrmVariant::v1_default:
                fd = add(fd, apply_attn(bd, "attn1", fd, fv));
                fd = add(fd, apply_attn(bd, "attn2", fd, fh));
                break;
            case HfrmVariant::v2_no_attention:
                fd = add(fd, apply_conv(bd, "rep1.b", silu(apply_conv(bd, "rep1.a", fd))));
                fd = add(fd, apply_conv(bd, "rep2.b", silu(apply_conv(bd, "rep2.a", fd))));
                break;
            case HfrmVariant::v3_reversed:
                fv = add(fv, apply_attn(bd, "attn1", fv, fd));
                fh = add(fh, apply_attn(bd, "attn2", fh, fd));
                break;
        }

        // progressive dilation residual block on the diagonal path
        VarT<S> r = fd;
        for (int i = 0; i < 5; ++i) {
            const int d = dilations[i];
            r = apply_conv(bd, "res" + std::to_string(i), r, 1, d, d);
            if (i < 4) r = silu(r);
        }
        fd = add(fd, r);

        return {add(V, apply_ds(bd, "out_v", fv)), add(H, apply_ds(bd, "out_h", fh)),
                add(D, apply_ds(bd, "out_d", fd))};
    }
};

template <class S>
HfrmT<S> make_hfrm(const HfrmConfig& cfg, std::uint64_t seed) {
    require(cfg.channels >= 1 && cfg.width >= 1, "make_hfrm: bad config");
    HfrmT<S> m;
    m.cfg = cfg;
    auto sd = [&](const char* label) { return derive_seed(seed, label); };
    m.in_v = DsStackP<S>::init(cfg.channels, cfg.width, sd("in_v"));
    m.in_h = DsStackP<S>::init(cfg.channels, cfg.width, sd("in_h"));
    m.in_d = DsStackP<S>::init(cfg.channels, cfg.width, sd("in_d"));
    m.attn1 = CrossAttnP<S>::init(cfg.width, sd("attn1"));
    m.attn2 = CrossAttnP<S>::init(cfg.width, sd("attn2"));
    m.rep1 = ConvPairP<S>::init(cfg.width, cfg.v2_hidden(), sd("rep1"));
    m.rep2 = ConvPairP<S>::init(cfg.width, cfg.v2_hidden(), sd("rep2"));
    for (int i = 0; i < 5; ++i)
        m.res[std::size_t(i)] = ConvP<S>::init(cfg.width, cfg.width, 3, sd(("res" + std::to_string(i)).c_str()),
                                               i == 4 ? 0.2 : 1.0);
    m.out_v = DsStackP<S>::init(cfg.width, cfg.channels, sd("out_v"), 0.1);
    m.out_h = DsStackP<S>::init(cfg.width, cfg.channels, sd("out_h"), 0.1);
    m.out_d = DsStackP<S>::init(cfg.width, cfg.channels, sd("out_d"), 0.1);
    return m;
}

using Hfrm = HfrmT<float>;

/// One-off eager evaluation of a single HFRM.
template <class S>
std::array<TensorT<S>, 3> hfrm_forward(const HfrmT<S>& model, const TensorT<S>& V, const TensorT<S>& H,
                                       const TensorT<S>& D) {
    TapeT<S> tape;
    Bound<S> bd = bind(tape, const_cast<HfrmT<S>&>(model), false);
    auto out = model.forward(bd, tape.leaf(V), tape.leaf(H), tape.leaf(D));
    return {tape.value(out[0]), tape.value(out[1]), tape.value(out[2])};
}

// ---------------------------------------------------------------------------
// full restoration pipeline (Fig. 2): diffusion on the apex, HFRM per level,
// inverse transform down to the image

template <class S>
struct RestoreGraph {
    VarT<S> apex_hat;
    std::vector<std::array<VarT<S>, 3>> bands_hat;  // finest level first
    VarT<S> image;
};

template <class S>
RestoreGraph<S> build_restore_graph(TapeT<S>& tape, const NoiseEstimatorT<S>& estimator, const Bound<S>& est_bd,
                                    const std::vector<HfrmT<S>>& hfrms, const std::vector<Bound<S>>& hfrm_bds,
                                    const wavelet::CoefficientPyramidT<S>& pyr,
                                    const diffusion::NoiseSchedule& sched, const diffusion::SamplerPlan& plan,
                                    std::uint64_t seed) {
    require(int(hfrms.size()) == pyr.depth(), "wcdm_restore: HFRM count must equal pyramid depth");
    require(hfrm_bds.size() == hfrms.size(), "wcdm_restore: binding count mismatch");

    RestoreGraph<S> g;
    VarT<S> cond = tape.leaf(pyr.apex);
    diffusion::DenoiseVarFn<S> den = [&](VarT<S> x, VarT<S> c, int t) {
        return estimator.forward(est_bd, x, c, std::vector<int>(std::size_t(tape.value(x).shape.b), t));
    };
    g.apex_hat = diffusion::sample(tape, den, cond, sched, plan, seed);

    VarT<S> a = g.apex_hat;
    g.bands_hat.resize(hfrms.size());
    for (int k = pyr.depth() - 1; k >= 0; --k) {
        const auto& lv = pyr.levels[std::size_t(k)];
        auto bands = hfrms[std::size_t(k)].forward(hfrm_bds[std::size_t(k)], tape.leaf(lv.V), tape.leaf(lv.H),
                                                   tape.leaf(lv.D));
        g.bands_hat[std::size_t(k)] = bands;
        a = wavelet::idwt2d(a, bands[0], bands[1], bands[2]);
    }
    g.image = a;
    return g;
}

template <class S>
TensorT<S> wcdm_restore(const NoiseEstimatorT<S>& estimator, const std::vector<HfrmT<S>>& hfrms,
                        const wavelet::CoefficientPyramidT<S>& pyr, const diffusion::NoiseSchedule& sched,
                        const diffusion::SamplerPlan& plan, std::uint64_t seed) {
    TapeT<S> tape;
    Bound<S> est_bd = bind(tape, const_cast<NoiseEstimatorT<S>&>(estimator), false);
    std::vector<Bound<S>> hfrm_bds;
    for (const auto& h : hfrms) hfrm_bds.push_back(bind(tape, const_cast<HfrmT<S>&>(h), false));
    RestoreGraph<S> g = build_restore_graph(tape, estimator, est_bd, hfrms, hfrm_bds, pyr, sched, plan, seed);
    return tape.value(g.image);
}

/// Reverse-denoising of one apex coefficient with the parameters bound once.
template <class S>
TensorT<S> sample_apex(const NoiseEstimatorT<S>& estimator, const TensorT<S>& condition,
                       const diffusion::NoiseSchedule& sched, const diffusion::SamplerPlan& plan,
                       std::uint64_t seed) {
    TapeT<S> tape;
    Bound<S> bd = bind(tape, const_cast<NoiseEstimatorT<S>&>(estimator), false);
    diffusion::DenoiseVarFn<S> den = [&](VarT<S> x, VarT<S> c, int t) {
        return estimator.forward(bd, x, c, std::vector<int>(std::size_t(tape.value(x).shape.b), t));
    };
    VarT<S> out = diffusion::sample(tape, den, tape.leaf(condition), sched, plan, seed);
    return tape.value(out);
}

/// Injectable-estimator variant (the estimator is any callback).
template <class S>
TensorT<S> wcdm_restore(const diffusion::DenoiseFn<S>& estimator, const std::vector<HfrmT<S>>& hfrms,
                        const wavelet::CoefficientPyramidT<S>& pyr, const diffusion::NoiseSchedule& sched,
                        const diffusion::SamplerPlan& plan, std::uint64_t seed) {
    require(int(hfrms.size()) == pyr.depth(), "wcdm_restore: HFRM count must equal pyramid depth");
    TensorT<S> a = diffusion::sample(estimator, pyr.apex, sched, plan, seed);
    for (int k = pyr.depth() - 1; k >= 0; --k) {
        const auto& lv = pyr.levels[std::size_t(k)];
        auto bands = hfrm_forward(hfrms[std::size_t(k)], lv.V, lv.H, lv.D);
        a = wavelet::idwt2d(a, bands[0], bands[1], bands[2]);
    }
    return a;
}

}  // namespace wcdm::models
