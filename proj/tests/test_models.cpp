#include "wcdm/models.hpp"

#include "ref_ops.hpp"

#include <doctest.h>

#include <cstring>

using namespace wcdm;
using namespace wcdm::models;

namespace {

template <class S, class M>
void zero_params(M& m) {
    m.visit_params("", [](const std::string&, TensorT<S>& t) { t.data.setZero(); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) { return (a.data - b.data).abs().maxCoeff(); }

}  // namespace

TEST_CASE("estimate_noise: output shape equals x_t shape") {
    UnetConfig cfg;
    cfg.base_width = 8;
    cfg.depth = 2;
    cfg.temb_dim = 8;
    NoiseEstimator m = make_noise_estimator<float>(cfg, 1);
    CHECK(param_count(m) > 0);

    Tensor x = normal_tensor<float>({1, 3, 16, 16}, 2);
    Tensor cond = normal_tensor<float>({1, 3, 16, 16}, 3);
    Tensor eps = estimate_noise(m, x, cond, 10);
    CHECK(eps.shape == x.shape);

    CHECK_THROWS_AS(estimate_noise(m, x, normal_tensor<float>({1, 3, 8, 8}, 4), 10), std::invalid_argument);
    CHECK_THROWS_AS(estimate_noise(m, x, cond, 0), std::invalid_argument);
}

TEST_CASE("estimate_noise: the time embedding is live and evaluation deterministic") {
    UnetConfig cfg;
    cfg.base_width = 8;
    cfg.depth = 1;
    cfg.temb_dim = 8;
    NoiseEstimator m = make_noise_estimator<float>(cfg, 5);
    Tensor x = normal_tensor<float>({2, 3, 8, 8}, 6);
    Tensor cond = normal_tensor<float>({2, 3, 8, 8}, 7);

    Tensor a = estimate_noise(m, x, cond, 3);
    Tensor b = estimate_noise(m, x, cond, 150);
    CHECK(max_abs_diff(a, b) > 1e-8);

    Tensor a2 = estimate_noise(m, x, cond, 3);
    CHECK(std::memcmp(a.data.data(), a2.data.data(), std::size_t(a.numel()) * sizeof(float)) == 0);
}

TEST_CASE("x0-form estimator still returns the predicted noise") {
    UnetConfig cfg;
    cfg.base_width = 8;
    cfg.depth = 1;
    cfg.temb_dim = 8;
    NoiseEstimator plain = make_noise_estimator<float>(cfg, 90);
    NoiseEstimator x0form = plain;
    diffusion::NoiseSchedule sched = diffusion::make_schedule(50, 1e-3, 2e-2);
    x0form.set_x0_form(sched);

    Tensor x = normal_tensor<float>({2, 3, 8, 8}, 91);
    Tensor cond = normal_tensor<float>({2, 3, 8, 8}, 92);
    const int t = 17;
    Tensor g = estimate_noise(plain, x, cond, t);  // plain head output = clean-signal estimate
    Tensor eps = estimate_noise(x0form, x, cond, t);
    const double ab = sched.abar(t);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double expect = (double(x.data[i]) - std::sqrt(ab) * double(g.data[i])) / std::sqrt(1.0 - ab);
        CHECK(eps.data[i] == doctest::Approx(expect).epsilon(1e-4));
    }
    CHECK_THROWS_AS(estimate_noise(x0form, x, cond, 51), std::invalid_argument);

    // the final implicit step of a sampler run returns the clean-signal
    // estimate exactly, so the output cannot amplify the initial draw
    diffusion::SamplerPlan plan = diffusion::make_plan(5, 50);
    diffusion::DenoiseFn<float> den = [&](const Tensor& xt, const Tensor& c, int tt) {
        return estimate_noise(x0form, xt, c, tt);
    };
    Tensor out = diffusion::sample(den, cond, sched, plan, 93);
    CHECK(out.shape == cond.shape);
}

TEST_CASE("noise estimator gradients match finite differences on a small instantiation") {
    UnetConfig cfg;
    cfg.x_channels = 2;
    cfg.cond_channels = 2;
    cfg.base_width = 6;
    cfg.depth = 1;
    cfg.temb_dim = 4;
    NoiseEstimatorT<double> m = make_noise_estimator<double>(cfg, 8);

    Tensord x = ref::random_tensor({1, 2, 6, 6}, 9, 0.5);
    Tensord cond = ref::random_tensor({1, 2, 6, 6}, 10, 0.5);
    Tensord proj = ref::random_tensor({1, 2, 6, 6}, 11);

    ref::GradCheck check;
    m.visit_params("", [&](const std::string&, Tensord& t) { check.params.push_back(&t); });
    check.build = [&](Taped& tape, std::vector<Vard>& pv) {
        Bound<double> bd = bind(tape, m, true);
        pv = bd.var_order;
        Vard out = m.forward(bd, tape.leaf(x), tape.leaf(cond), {40});
        return mean_all(mul(out, tape.leaf(proj)));
    };
    // subsampled here; the acceptance suite sweeps every entry
    CHECK(check.max_rel_error(1e-3, 1e-4, 17) < 1e-3);
}

TEST_CASE("hfrm_forward: zero residual weights reduce to the identity skip path") {
    HfrmConfig cfg;
    cfg.width = 8;
    for (HfrmVariant v : {HfrmVariant::v1_default, HfrmVariant::v2_no_attention, HfrmVariant::v3_reversed}) {
        cfg.variant = v;
        Hfrm m = make_hfrm<float>(cfg, 20);
        zero_params<float>(m);
        Tensor V = normal_tensor<float>({1, 3, 8, 8}, 21);
        Tensor H = normal_tensor<float>({1, 3, 8, 8}, 22);
        Tensor D = normal_tensor<float>({1, 3, 8, 8}, 23);
        auto out = hfrm_forward(m, V, H, D);
        CHECK(max_abs_diff(out[0], V) == 0.0);
        CHECK(max_abs_diff(out[1], H) == 0.0);
        CHECK(max_abs_diff(out[2], D) == 0.0);
    }
}

TEST_CASE("hfrm_forward: shape contract and band mismatch error") {
    HfrmConfig cfg;
    cfg.width = 8;
    Hfrm m = make_hfrm<float>(cfg, 24);
    Tensor V = normal_tensor<float>({1, 3, 32, 32}, 25);
    auto out = hfrm_forward(m, V, normal_tensor<float>({1, 3, 32, 32}, 26), normal_tensor<float>({1, 3, 32, 32}, 27));
    for (const auto& t : out) CHECK(t.shape == V.shape);

    Taped dummy;
    Hfrm m2 = make_hfrm<float>(cfg, 28);
    Tensor bad = normal_tensor<float>({1, 3, 16, 32}, 29);
    CHECK_THROWS_AS(hfrm_forward(m2, V, V, bad), std::invalid_argument);
}

TEST_CASE("hfrm cross-band coupling: V perturbs D-hat, D leaves V-hat alone (v1)") {
    HfrmConfig cfg;
    cfg.width = 8;
    Hfrm m = make_hfrm<float>(cfg, 30);
    Tensor V = normal_tensor<float>({1, 3, 8, 8}, 31);
    Tensor H = normal_tensor<float>({1, 3, 8, 8}, 32);
    Tensor D = normal_tensor<float>({1, 3, 8, 8}, 33);
    auto base = hfrm_forward(m, V, H, D);

    Tensor Vp = V;
    Vp.data[10] += 0.5f;
    auto pv = hfrm_forward(m, Vp, H, D);
    CHECK(max_abs_diff(pv[2], base[2]) > 1e-7);  // D-hat sees V

    Tensor Dp = D;
    Dp.data[10] += 0.5f;
    auto pd = hfrm_forward(m, V, H, Dp);
    CHECK(max_abs_diff(pd[0], base[0]) == 0.0);  // V-hat path never touches D
    CHECK(max_abs_diff(pd[1], base[1]) == 0.0);
}

TEST_CASE("hfrm_variant: v2 parameter count within 5% of v1, attention path decoupled") {
    HfrmConfig cfg;
    cfg.width = 16;
    cfg.variant = HfrmVariant::v1_default;
    Hfrm v1 = make_hfrm<float>(cfg, 40);
    cfg.variant = HfrmVariant::v2_no_attention;
    Hfrm v2 = make_hfrm<float>(cfg, 40);
    const double c1 = double(param_count(v1));
    const double c2 = double(param_count(v2));
    CHECK(std::abs(c2 - c1) / c1 < 0.05);

    // v2: D-hat independent of cross-band perturbations
    Tensor V = normal_tensor<float>({1, 3, 8, 8}, 41);
    Tensor H = normal_tensor<float>({1, 3, 8, 8}, 42);
    Tensor D = normal_tensor<float>({1, 3, 8, 8}, 43);
    auto base = hfrm_forward(v2, V, H, D);
    Tensor Vp = V;
    Vp.data.setRandom();
    auto pv = hfrm_forward(v2, Vp, H, D);
    CHECK(max_abs_diff(pv[2], base[2]) == 0.0);

    // v3: the coupling reverses, D feeds V-hat and H-hat
    cfg.variant = HfrmVariant::v3_reversed;
    Hfrm v3 = make_hfrm<float>(cfg, 40);
    auto b3 = hfrm_forward(v3, V, H, D);
    Tensor Dp = D;
    Dp.data[5] += 0.5f;
    auto p3 = hfrm_forward(v3, V, H, Dp);
    CHECK(max_abs_diff(p3[0], b3[0]) > 1e-7);
    CHECK(max_abs_diff(p3[1], b3[1]) > 1e-7);

    CHECK_THROWS_AS(parse_hfrm_variant("v9"), std::invalid_argument);
    CHECK(parse_hfrm_variant("v1_default") == HfrmVariant::v1_default);
}

TEST_CASE("hfrm gradients match finite differences at toy size") {
    HfrmConfig cfg;
    cfg.channels = 2;
    cfg.width = 4;
    HfrmT<double> m = make_hfrm<double>(cfg, 50);
    Tensord V = ref::random_tensor({1, 2, 4, 4}, 51, 0.5);
    Tensord H = ref::random_tensor({1, 2, 4, 4}, 52, 0.5);
    Tensord D = ref::random_tensor({1, 2, 4, 4}, 53, 0.5);
    Tensord proj = ref::random_tensor({1, 2, 4, 4}, 54);

    ref::GradCheck check;
    m.visit_params("", [&](const std::string&, Tensord& t) { check.params.push_back(&t); });
    check.build = [&](Taped& tape, std::vector<Vard>& pv) {
        Bound<double> bd = bind(tape, m, true);
        pv = bd.var_order;
        auto out = m.forward(bd, tape.leaf(V), tape.leaf(H), tape.leaf(D));
        Vard s = mean_all(mul(out[0], tape.leaf(proj)));
        s = add(s, mean_all(mul(out[2], tape.leaf(proj))));
        return s;
    };
    CHECK(check.max_rel_error(1e-3, 1e-4, 3) < 1e-3);
}

TEST_CASE("progressive dilation sequence 1,2,4,2,1: support grows then shrinks") {
    CHECK(std::vector<int>(std::begin(Hfrm::dilations), std::end(Hfrm::dilations)) ==
          std::vector<int>{1, 2, 4, 2, 1});

    // impulse through the five dilated convolutions with all-ones kernels
    Tensor x = Tensor::zeros({1, 1, 41, 41});
    x.at(0, 0, 20, 20) = 1.0f;
    Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0f);
    std::vector<int> widths;
    for (int d : Hfrm::dilations) {
        x = ops::conv2d(x, ones, 1, d, d);
        int lo = 41, hi = -1;
        for (int h = 0; h < 41; ++h)
            for (int w = 0; w < 41; ++w)
                if (x.at(0, 0, h, w) != 0.0f) {
                    lo = std::min(lo, h);
                    hi = std::max(hi, h);
                }
        widths.push_back(hi - lo + 1);
    }
    CHECK(widths == std::vector<int>{3, 7, 15, 19, 21});
}

TEST_CASE("wcdm_restore: oracle estimator and identity HFRMs reproduce the assembled pyramid") {
    const int K = 2;
    Tensor low({1, 3, 16, 16});
    Tensor target({1, 3, 16, 16});
    for (int c = 0; c < 3; ++c)
        for (int h = 0; h < 16; ++h)
            for (int w = 0; w < 16; ++w) {
                target.at(0, c, h, w) = 0.5f + 0.3f * float(std::sin(0.3 * h + 0.2 * w + c));
                low.at(0, c, h, w) = 0.2f * target.at(0, c, h, w);
            }
    auto pyr = wavelet::decompose(low, K);
    Tensor apex_target = wavelet::decompose(target, K).apex;

    diffusion::NoiseSchedule sched = diffusion::make_schedule(200, 1e-4, 2e-2);
    diffusion::SamplerPlan plan = diffusion::make_plan(10, 200);
    diffusion::DenoiseFn<float> oracle = [&](const Tensor& x, const Tensor&, int t) {
        const double ab = sched.abar(t);
        Tensor e;
        e.shape = x.shape;
        e.data = (x.data - apex_target.data * float(std::sqrt(ab))) * float(1.0 / std::sqrt(1.0 - ab));
        return e;
    };

    HfrmConfig hcfg;
    std::vector<Hfrm> hfrms;
    for (int k = 0; k < K; ++k) {
        Hfrm h = make_hfrm<float>(hcfg, 60 + std::uint64_t(k));
        zero_params<float>(h);
        hfrms.push_back(std::move(h));
    }

    Tensor restored = wcdm_restore(oracle, hfrms, pyr, sched, plan, 99);
    CHECK(restored.shape == low.shape);

    auto assembled = pyr;
    assembled.apex = apex_target;
    Tensor expect = wavelet::reconstruct(assembled);
    CHECK(max_abs_diff(restored, expect) < 1e-4);

    Tensor again = wcdm_restore(oracle, hfrms, pyr, sched, plan, 99);
    CHECK(std::memcmp(restored.data.data(), again.data.data(), std::size_t(restored.numel()) * sizeof(float)) == 0);

    hfrms.pop_back();
    CHECK_THROWS_AS(wcdm_restore(oracle, hfrms, pyr, sched, plan, 99), std::invalid_argument);
}

TEST_CASE("wcdm_restore with a real estimator is deterministic and shape-preserving") {
    UnetConfig cfg;
    cfg.base_width = 8;
    cfg.depth = 1;
    cfg.temb_dim = 8;
    NoiseEstimator est = make_noise_estimator<float>(cfg, 70);
    HfrmConfig hcfg;
    hcfg.width = 8;
    std::vector<Hfrm> hfrms{make_hfrm<float>(hcfg, 71)};

    Tensor low = normal_tensor<float>({1, 3, 16, 16}, 72, 0.3);
    auto pyr = wavelet::decompose(low, 1);
    diffusion::NoiseSchedule sched = diffusion::make_schedule(200, 1e-4, 2e-2);
    diffusion::SamplerPlan plan = diffusion::make_plan(5, 200);

    Tensor a = wcdm_restore(est, hfrms, pyr, sched, plan, 7);
    Tensor b = wcdm_restore(est, hfrms, pyr, sched, plan, 7);
    CHECK(a.shape == low.shape);
    CHECK(std::memcmp(a.data.data(), b.data.data(), std::size_t(a.numel()) * sizeof(float)) == 0);
}
