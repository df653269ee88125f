#pragma once

#include "wcdm/tape.hpp"

namespace wcdm::wavelet {

/// One orthonormal Haar analysis step: four half-resolution sub-bands.
/// A = average, V/H/D = vertical/horizontal/diagonal detail.
template <class S>
struct WaveletBandsT {
    TensorT<S> A, V, H, D;
};

template <class S>
struct LevelBandsT {
    TensorT<S> V, H, D;
};

/// K high-frequency triples (finest first) plus the scale-K average coefficient.
template <class S>
struct CoefficientPyramidT {
    std::vector<LevelBandsT<S>> levels;
    TensorT<S> apex;

    int depth() const { return int(levels.size()); }
};

using WaveletBands = WaveletBandsT<float>;
using CoefficientPyramid = CoefficientPyramidT<float>;

template <class S>
WaveletBandsT<S> dwt2d(const TensorT<S>& x) {
    require(x.shape.h > 0 && x.shape.w > 0 && x.shape.h % 2 == 0 && x.shape.w % 2 == 0,
            "dwt2d: spatial extents must be even and positive, got " + x.shape.str());
    Shape hs{x.shape.b, x.shape.c, x.shape.h / 2, x.shape.w / 2};
    WaveletBandsT<S> out{TensorT<S>(hs), TensorT<S>(hs), TensorT<S>(hs), TensorT<S>(hs)};
    for (int b = 0; b < x.shape.b; ++b)
        for (int c = 0; c < x.shape.c; ++c)
            for (int y = 0; y < hs.h; ++y)
                for (int w = 0; w < hs.w; ++w) {
                    const S a = x.at(b, c, 2 * y, 2 * w);
                    const S bb = x.at(b, c, 2 * y, 2 * w + 1);
                    const S cc = x.at(b, c, 2 * y + 1, 2 * w);
                    const S d = x.at(b, c, 2 * y + 1, 2 * w + 1);
                    out.A.at(b, c, y, w) = (a + bb + cc + d) / 2;
                    out.H.at(b, c, y, w) = (a + bb - cc - d) / 2;
                    out.V.at(b, c, y, w) = (a - bb + cc - d) / 2;
                    out.D.at(b, c, y, w) = (a - bb - cc + d) / 2;
                }
    return out;
}

template <class S>
TensorT<S> idwt2d(const TensorT<S>& A, const TensorT<S>& V, const TensorT<S>& H, const TensorT<S>& D) {
    require(A.shape == V.shape && A.shape == H.shape && A.shape == D.shape,
            "idwt2d: band shape mismatch");
    Shape fs{A.shape.b, A.shape.c, A.shape.h * 2, A.shape.w * 2};
    TensorT<S> out(fs);
    for (int b = 0; b < A.shape.b; ++b)
        for (int c = 0; c < A.shape.c; ++c)
            for (int y = 0; y < A.shape.h; ++y)
                for (int w = 0; w < A.shape.w; ++w) {
                    const S a = A.at(b, c, y, w);
                    const S v = V.at(b, c, y, w);
                    const S h = H.at(b, c, y, w);
                    const S d = D.at(b, c, y, w);
                    out.at(b, c, 2 * y, 2 * w) = (a + h + v + d) / 2;
                    out.at(b, c, 2 * y, 2 * w + 1) = (a + h - v - d) / 2;
                    out.at(b, c, 2 * y + 1, 2 * w) = (a - h + v - d) / 2;
                    out.at(b, c, 2 * y + 1, 2 * w + 1) = (a - h - v + d) / 2;
                }
    return out;
}

template <class S>
TensorT<S> idwt2d(const WaveletBandsT<S>& bands) {
    return idwt2d(bands.A, bands.V, bands.H, bands.D);
}

/// Recursive analysis of the average coefficient, K levels deep.
template <class S>
CoefficientPyramidT<S> decompose(const TensorT<S>& image, int K) {
    require(K >= 1, "decompose: K must be positive");
    const int div = 1 << K;
    require(image.shape.h % div == 0 && image.shape.w % div == 0,
            "decompose: extents must be divisible by 2^K, got " + image.shape.str() + " for K=" + std::to_string(K));
    CoefficientPyramidT<S> pyr;
    TensorT<S> a = image;
    for (int k = 0; k < K; ++k) {
        WaveletBandsT<S> b = dwt2d(a);
        pyr.levels.push_back({std::move(b.V), std::move(b.H), std::move(b.D)});
        a = std::move(b.A);
    }
    pyr.apex = std::move(a);
    return pyr;
}

template <class S>
TensorT<S> reconstruct(const CoefficientPyramidT<S>& pyr) {
    require(pyr.depth() >= 1, "reconstruct: empty pyramid");
    TensorT<S> a = pyr.apex;
    for (int k = pyr.depth() - 1; k >= 0; --k) {
        const LevelBandsT<S>& lv = pyr.levels[std::size_t(k)];
        require(a.shape == lv.V.shape, "reconstruct: malformed pyramid at level " + std::to_string(k + 1));
        a = idwt2d(a, lv.V, lv.H, lv.D);
    }
    return a;
}

/// Which coefficients to take from the second pyramid in swap_bands.
struct BandSelector {
    bool apex = false;
    std::vector<std::pair<int, char>> bands;  // (level 1-based, 'V'|'H'|'D')

    static BandSelector none() { return {}; }
    static BandSelector only_apex() { return {true, {}}; }
    static BandSelector one(int level, char band) { return {false, {{level, band}}}; }
    static BandSelector all(int K) {
        BandSelector s;
        s.apex = true;
        for (int k = 1; k <= K; ++k)
            for (char b : {'V', 'H', 'D'}) s.bands.emplace_back(k, b);
        return s;
    }
};

template <class S>
CoefficientPyramidT<S> swap_bands(const CoefficientPyramidT<S>& pa, const CoefficientPyramidT<S>& pb,
                                  const BandSelector& sel) {
    require(pa.depth() == pb.depth(), "swap_bands: pyramid depth mismatch");
    require(pa.apex.shape == pb.apex.shape, "swap_bands: apex shape mismatch");
    for (int k = 0; k < pa.depth(); ++k)
        require(pa.levels[std::size_t(k)].V.shape == pb.levels[std::size_t(k)].V.shape,
                "swap_bands: band shape mismatch at level " + std::to_string(k + 1));
    CoefficientPyramidT<S> out = pa;
    if (sel.apex) out.apex = pb.apex;
    for (auto [level, band] : sel.bands) {
        require(level >= 1 && level <= pa.depth(), "swap_bands: level out of range");
        const LevelBandsT<S>& src = pb.levels[std::size_t(level - 1)];
        LevelBandsT<S>& dst = out.levels[std::size_t(level - 1)];
        switch (band) {
            case 'V': dst.V = src.V; break;
            case 'H': dst.H = src.H; break;
            case 'D': dst.D = src.D; break;
            default: require(false, std::string("swap_bands: unknown band '") + band + "'");
        }
    }
    return out;
}

template <class S>
double energy(const TensorT<S>& t) {
    return t.data.template cast<double>().square().sum();
}

template <class S>
double energy(const WaveletBandsT<S>& b) {
    return energy(b.A) + energy(b.V) + energy(b.H) + energy(b.D);
}

template <class S>
double energy(const CoefficientPyramidT<S>& p) {
    double e = energy(p.apex);
    for (const auto& lv : p.levels) e += energy(lv.V) + energy(lv.H) + energy(lv.D);
    return e;
}

/// Taped synthesis step. The transform is orthonormal, so the adjoint of the
/// inverse is the forward transform applied to the output gradient.
template <class S>
VarT<S> idwt2d(VarT<S> a, VarT<S> v, VarT<S> h, VarT<S> d) {
    TapeT<S>& t = *a.tape;
    const int ia = a.id, iv = v.id, ih = h.id, id = d.id;
    TensorT<S> out = idwt2d(t.value(a), t.value(v), t.value(h), t.value(d));
    return t.make(std::move(out), {a, v, h, d},
                  [ia, iv, ih, id](TapeT<S>& t, int self) {
                      WaveletBandsT<S> g = dwt2d(t.accum(self));
                      if (t.requires_grad_at(ia)) t.accum(ia).data += g.A.data;
                      if (t.requires_grad_at(iv)) t.accum(iv).data += g.V.data;
                      if (t.requires_grad_at(ih)) t.accum(ih).data += g.H.data;
                      if (t.requires_grad_at(id)) t.accum(id).data += g.D.data;
                  },
                  "idwt2d");
}

}  // namespace wcdm::wavelet
