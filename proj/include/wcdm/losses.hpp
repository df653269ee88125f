#pragma once

#include "wcdm/tape.hpp"

namespace wcdm::train {

/// Anisotropic total variation, normalized by element count.
template <class S>
VarT<S> tv(VarT<S> x) {
    const Shape s = x.tape->value(x).shape;
    require(s.h >= 2 && s.w >= 2, "tv: spatial extents must be >= 2, got " + s.str());
    VarT<S> total = add(sum_all(abs(diff_h(x))), sum_all(abs(diff_v(x))));
    return scale(total, S(1.0 / double(s.numel())));
}

/// Noise-prediction MSE plus restored-apex MSE.
template <class S>
VarT<S> loss_diffusion(VarT<S> eps_true, VarT<S> eps_pred, VarT<S> apex_hat, VarT<S> apex_ref) {
    return add(mse(eps_pred, eps_true), mse(apex_hat, apex_ref));
}

/// lambda1 * sum_k TV({V,H,D}) + lambda2 * sum_k MSE({V,H,D}, refs), the band
/// triple treated as one concatenated tensor.
template <class S>
VarT<S> loss_detail(const std::vector<std::array<VarT<S>, 3>>& pred, const std::vector<std::array<VarT<S>, 3>>& ref,
                    S lambda1, S lambda2) {
    require(!pred.empty() && pred.size() == ref.size(), "loss_detail: level count mismatch");
    VarT<S> acc;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        VarT<S> p = concat_channels<S>({pred[k][0], pred[k][1], pred[k][2]});
        VarT<S> r = concat_channels<S>({ref[k][0], ref[k][1], ref[k][2]});
        VarT<S> term = add(scale(tv(p), lambda1), scale(mse(p, r), lambda2));
        acc = k == 0 ? term : add(acc, term);
    }
    return acc;
}

template <class S>
TensorT<S> gaussian_window(int channels, int size, double sigma) {
    TensorT<S> w({channels, 1, size, size});
    const double mid = (size - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - mid, dx = x - mid;
            sum += std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y - mid, dx = x - mid;
            const S v = S(std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma)) / sum);
            for (int c = 0; c < channels; ++c) w.at(c, 0, y, x) = v;
        }
    return w;
}

/// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=(0.01)^2, C2=(0.03)^2
/// on unit dynamic range. Valid windows only (no padding).
template <class S>
VarT<S> ssim(VarT<S> a, VarT<S> b) {
    TapeT<S>& tape = *a.tape;
    const Shape s = tape.value(a).shape;
    require(tape.value(b).shape == s, "ssim: shape mismatch");
    constexpr int kWindow = 11;
    require(s.h >= kWindow && s.w >= kWindow, "ssim: spatial extents must be >= 11");
    const S c1 = S(0.01 * 0.01), c2 = S(0.03 * 0.03);

    VarT<S> win = tape.leaf(gaussian_window<S>(s.c, kWindow, 1.5));
    auto blur = [&](VarT<S> x) { return depthwise_conv2d(x, win); };

    VarT<S> mu_a = blur(a);
    VarT<S> mu_b = blur(b);
    VarT<S> mu_aa = mul(mu_a, mu_a);
    VarT<S> mu_bb = mul(mu_b, mu_b);
    VarT<S> mu_ab = mul(mu_a, mu_b);
    VarT<S> var_a = sub(blur(mul(a, a)), mu_aa);
    VarT<S> var_b = sub(blur(mul(b, b)), mu_bb);
    VarT<S> cov = sub(blur(mul(a, b)), mu_ab);

    VarT<S> num = mul(add_scalar(scale(mu_ab, S(2)), c1), add_scalar(scale(cov, S(2)), c2));
    VarT<S> den = mul(add_scalar(add(mu_aa, mu_bb), c1), add_scalar(add(var_a, var_b), c2));
    return mean_all(div(num, den));
}

/// L1 + (1 - SSIM).
template <class S>
VarT<S> loss_content(VarT<S> out, VarT<S> ref) {
    return add(mae(out, ref), add_scalar(scale(ssim(out, ref), S(-1)), S(1)));
}

template <class S>
VarT<S> loss_total(VarT<S> diffusion_term, VarT<S> detail_term, VarT<S> content_term) {
    return add(add(diffusion_term, detail_term), content_term);
}

// eager conveniences for metric-style use

template <class S>
S ssim_value(const TensorT<S>& a, const TensorT<S>& b) {
    TapeT<S> tape;
    return tape.value(ssim(tape.leaf(a), tape.leaf(b))).item();
}

template <class S>
S tv_value(const TensorT<S>& x) {
    TapeT<S> tape;
    return tape.value(tv(tape.leaf(x))).item();
}

}  // namespace wcdm::train
