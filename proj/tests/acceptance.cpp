// Acceptance suite: one pass/fail line per criterion, exit code = failures.
// argv[1] = path to the CLI binary (used by the determinism criterion).
#include "wcdm/data.hpp"
#include "wcdm/training.hpp"

#include "ref_ops.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace wcdm;
namespace fs = std::filesystem;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s (%s)\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

template <class F>
void guarded(int criterion, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(criterion, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------

void criterion1_wavelet_roundtrip() {
    Timer timer;
    double worst_rt = 0, worst_energy = 0;
    CounterRng shapes(20260808);
    for (int i = 0; i < 100; ++i) {
        const int K = 1 + i % 3;
        const int div = 1 << K;
        const int h = div * int(shapes.uniform_int(std::max(1L, 8L / div), 64 / div));
        const int w = div * int(shapes.uniform_int(std::max(1L, 8L / div), 64 / div));
        Tensor x = normal_tensor<float>({1, 3, h, w}, derive_seed(1, "c1", std::uint64_t(i)));
        auto pyr = wavelet::decompose(x, K);
        Tensor rec = wavelet::reconstruct(pyr);
        worst_rt = std::max(worst_rt, double((rec.data - x.data).abs().maxCoeff()));
        const double ex = wavelet::energy(x);
        worst_energy = std::max(worst_energy, std::abs(wavelet::energy(pyr) - ex) / ex);
    }
    const double t = timer.seconds();
    report(1, worst_rt <= 1e-5 && worst_energy <= 1e-5 && t < 5.0,
           fmt("max roundtrip %.2e, max energy rel err %.2e, %.2f s", worst_rt, worst_energy, t));
}

void criterion2_ddim_inversion() {
    Timer timer;
    const diffusion::NoiseSchedule sched = diffusion::make_schedule(200, 1e-4, 2e-2);
    Tensor x0 = normal_tensor<float>({1, 3, 8, 8}, 21);
    Tensor eps = normal_tensor<float>(x0.shape, 22);
    double worst = 0;
    for (int t = 1; t <= 200; ++t) {
        Tensor xt = diffusion::q_sample(x0, t, eps, sched);
        Tensor rec = diffusion::ddim_step(xt, eps, t, 0, sched);
        worst = std::max(worst, double((rec.data - x0.data).abs().maxCoeff()));
    }
    const double t = timer.seconds();
    report(2, worst <= 1e-5 && t < 5.0, fmt("max recovery error %.2e over t=1..200, %.2f s", worst, t));
}

void criterion3_sampler_plan() {
    const diffusion::SamplerPlan plan = diffusion::make_plan(10, 200);
    bool ok = plan.pairs.size() == 10;
    int expect = 181;
    for (std::size_t i = 0; ok && i < plan.pairs.size(); ++i) {
        ok = plan.pairs[i].first == expect &&
             plan.pairs[i].second == (i + 1 < plan.pairs.size() ? plan.pairs[i + 1].first : 0);
        expect -= 20;
    }
    report(3, ok, ok ? "t = 181,161,...,1 with final t_next = 0" : "sequence mismatch");
}

void criterion4_gradient_fidelity() {
    Timer timer;
    double worst = 0;
    std::string worst_name = "none";
    auto run = [&](const char* name, ref::GradCheck& check, int stride = 1) {
        const double err = check.max_rel_error(1e-3, 1e-4, stride);
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    };

    {  // conv2d (input and kernel), strided and dilated
        std::vector<Tensord> p{ref::random_tensor({2, 3, 8, 8}, 41, 0.7), ref::random_tensor({4, 3, 3, 3}, 42, 0.7)};
        Tensord proj = ref::random_tensor({2, 4, 4, 4}, 43);
        ref::GradCheck c;
        c.params = {&p[0], &p[1]};
        c.build = [&](Taped& tape, std::vector<Vard>& pv) {
            for (auto* q : c.params) pv.push_back(tape.leaf(*q, true));
            return mean_all(mul(conv2d(pv[0], pv[1], 2, 1, 1), tape.leaf(proj)));
        };
        run("conv2d", c);
        ref::GradCheck d;
        d.params = {&p[0], &p[1]};
        Tensord proj2 = ref::random_tensor({2, 4, 4, 4}, 44);
        d.build = [&](Taped& tape, std::vector<Vard>& pv) {
            for (auto* q : d.params) pv.push_back(tape.leaf(*q, true));
            return mean_all(mul(conv2d(pv[0], pv[1], 1, 2, 2), tape.leaf(ref::random_tensor({2, 4, 8, 8}, 45))));
        };
        run("conv2d_dilated", d);
    }
    {  // depthwise separable
        std::vector<Tensord> p{ref::random_tensor({1, 3, 6, 6}, 46, 0.7), ref::random_tensor({3, 1, 3, 3}, 47, 0.7),
                               ref::random_tensor({5, 3, 1, 1}, 48, 0.7)};
        Tensord proj = ref::random_tensor({1, 5, 6, 6}, 49);
        ref::GradCheck c;
        c.params = {&p[0], &p[1], &p[2]};
        c.build = [&](Taped& tape, std::vector<Vard>& pv) {
            for (auto* q : c.params) pv.push_back(tape.leaf(*q, true));
            return mean_all(mul(depthwise_separable_conv(pv[0], pv[1], pv[2]), tape.leaf(proj)));
        };
        run("depthwise_separable", c);
    }
    {  // cross attention
        std::vector<Tensord> p;
        p.push_back(ref::random_tensor({1, 2, 3, 3}, 50, 0.7));  // query src
        p.push_back(ref::random_tensor({1, 4, 3, 3}, 51, 0.7));  // kv src
        const Shape shapes[8] = {{3, 2, 1, 1}, {1, 3, 1, 1}, {3, 4, 1, 1}, {1, 3, 1, 1},
                                 {3, 4, 1, 1}, {1, 3, 1, 1}, {2, 3, 1, 1}, {1, 2, 1, 1}};
        for (int i = 0; i < 8; ++i) p.push_back(ref::random_tensor(shapes[i], 52 + std::uint64_t(i), 0.7));
        Tensord proj = ref::random_tensor({1, 2, 3, 3}, 60);
        ref::GradCheck c;
        for (auto& q : p) c.params.push_back(&q);
        c.build = [&](Taped& tape, std::vector<Vard>& pv) {
            for (auto* q : c.params) pv.push_back(tape.leaf(*q, true));
            CrossAttnVars<double> a{pv[2], pv[3], pv[4], pv[5], pv[6], pv[7], pv[8], pv[9]};
            return mean_all(mul(cross_attention(pv[0], pv[1], a), tape.leaf(proj)));
        };
        run("cross_attention", c);
    }
    {  // group norm
        std::vector<Tensord> p{ref::random_tensor({2, 4, 5, 5}, 61, 0.7), ref::random_tensor({1, 4, 1, 1}, 62, 0.5),
                               ref::random_tensor({1, 4, 1, 1}, 63, 0.5)};
        Tensord proj = ref::random_tensor({2, 4, 5, 5}, 64);
        ref::GradCheck c;
        c.params = {&p[0], &p[1], &p[2]};
        c.build = [&](Taped& tape, std::vector<Vard>& pv) {
            for (auto* q : c.params) pv.push_back(tape.leaf(*q, true));
            return mean_all(mul(group_norm(pv[0], pv[1], pv[2], 2), tape.leaf(proj)));
        };
        run("group_norm", c);
    }
    {  // full HFRM
        models::HfrmConfig hcfg;
        hcfg.channels = 2;
        hcfg.width = 4;
        models::HfrmT<double> m = models::make_hfrm<double>(hcfg, 65);
        Tensord V = ref::random_tensor({1, 2, 4, 4}, 66, 0.5);
        Tensord H = ref::random_tensor({1, 2, 4, 4}, 67, 0.5);
        Tensord D = ref::random_tensor({1, 2, 4, 4}, 68, 0.5);
        Tensord proj = ref::random_tensor({1, 2, 4, 4}, 69);
        ref::GradCheck c;
        m.visit_params("", [&](const std::string&, Tensord& t) { c.params.push_back(&t); });
        c.build = [&](Taped& tape, std::vector<Vard>& pv) {
            models::Bound<double> bd = models::bind(tape, m, true);
            pv = bd.var_order;
            auto out = m.forward(bd, tape.leaf(V), tape.leaf(H), tape.leaf(D));
            Vard s = mean_all(mul(out[0], tape.leaf(proj)));
            s = add(s, mean_all(mul(out[1], tape.leaf(proj))));
            return add(s, mean_all(mul(out[2], tape.leaf(proj))));
        };
        run("hfrm", c);
    }
    std::int64_t unet_params = 0;
    {  // U-Net with at most 1e4 parameters, every entry checked
        models::UnetConfig ucfg;
        ucfg.x_channels = 2;
        ucfg.cond_channels = 2;
        ucfg.base_width = 6;
        ucfg.depth = 1;
        ucfg.temb_dim = 4;
        models::NoiseEstimatorT<double> m = models::make_noise_estimator<double>(ucfg, 70);
        unet_params = models::param_count(m);
        Tensord x = ref::random_tensor({1, 2, 8, 8}, 71, 0.5);
        Tensord cond = ref::random_tensor({1, 2, 8, 8}, 72, 0.5);
        Tensord proj = ref::random_tensor({1, 2, 8, 8}, 73);
        ref::GradCheck c;
        m.visit_params("", [&](const std::string&, Tensord& t) { c.params.push_back(&t); });
        c.build = [&](Taped& tape, std::vector<Vard>& pv) {
            models::Bound<double> bd = models::bind(tape, m, true);
            pv = bd.var_order;
            Vard out = m.forward(bd, tape.leaf(x), tape.leaf(cond), {40});
            return mean_all(mul(out, tape.leaf(proj)));
        };
        run("unet", c);
    }
    const double t = timer.seconds();
    report(4, worst <= 1e-3 && unet_params <= 10000 && t < 60.0,
           fmt("max rel err %.2e (worst: %s), unet params %lld, %.1f s", worst, worst_name.c_str(),
               (long long)unet_params, t));
}

// shared toy-model machinery for criteria 5, 6, 8 --------------------------

train::TrainConfig toy_config(std::uint64_t seed, const std::string& strategy, const std::string& variant) {
    train::TrainConfig cfg;
    cfg.K = 1;
    cfg.T = 200;
    cfg.S = 5;
    cfg.batch = 4;
    cfg.patch = 32;
    cfg.iters = 2000;
    cfg.seed = seed;
    cfg.strategy = strategy;
    cfg.hfrm_variant = variant;
    cfg.base_width = 16;
    cfg.depth = 2;
    cfg.temb_dim = 32;
    cfg.hfrm_width = 16;
    cfg.lr = 2e-3f;
    cfg.lr_decay = 0.8f;
    cfg.decay_every = 500;
    cfg.checkpoint_every = 1000000;
    return cfg;
}

std::vector<data::ImagePair> toy_set(std::uint64_t seed, int count) {
    data::SynthConfig sc;  // defaults match the toy spec: gamma 1.5-2.5, scale 0.2-0.5, sigma <= 0.02
    sc.extent = 32;
    sc.seed = seed;
    sc.count = count;
    return data::synth_dataset(sc);
}

train::TrainState train_toy(const train::TrainConfig& cfg, const std::vector<data::ImagePair>& set,
                            const std::string& out_dir) {
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (const auto& p : set) pairs.emplace_back(p.low, p.high);
    train::TrainState st = train::init_train_state(cfg);
    std::cerr << "  [training " << out_dir << " seed " << cfg.seed << " " << cfg.strategy << " "
              << cfg.hfrm_variant << "]" << std::endl;
    train::train(st, pairs, out_dir);
    return st;
}

struct EvalResult {
    double psnr = 0, ssim = 0;
};

EvalResult evaluate(const train::TrainState& st, const std::vector<data::ImagePair>& eval_set,
                    std::uint64_t enhance_seed) {
    EvalResult r;
    for (const auto& p : eval_set) {
        Tensor enhanced = train::enhance_image(st, p.low, derive_seed(enhance_seed, p.identifier));
        r.psnr += data::psnr(enhanced, p.high);
        r.ssim += data::ssim(enhanced, p.high);
    }
    r.psnr /= double(eval_set.size());
    r.ssim /= double(eval_set.size());
    return r;
}

struct Shared {
    std::vector<data::ImagePair> train_set, eval_set;
    std::optional<train::TrainState> fdrd_s1;  // criterion 5 model (v1, seed 1)
    double baseline_psnr = 0, baseline_ssim = 0;
    std::string work;
};

void criterion5_toy_training(Shared& sh) {
    Timer timer;
    sh.train_set = toy_set(1001, 64);
    sh.eval_set = toy_set(2002, 64);
    for (const auto& p : sh.eval_set) {
        sh.baseline_psnr += data::psnr(p.low, p.high);
        sh.baseline_ssim += data::ssim(p.low, p.high);
    }
    sh.baseline_psnr /= double(sh.eval_set.size());
    sh.baseline_ssim /= double(sh.eval_set.size());

    sh.fdrd_s1 = train_toy(toy_config(1, "fd_rd", "v1_default"), sh.train_set, sh.work + "/c5_model");
    EvalResult r = evaluate(*sh.fdrd_s1, sh.eval_set, 555);
    const double t = timer.seconds();
    const bool pass = r.psnr >= sh.baseline_psnr + 3.0 && r.ssim >= sh.baseline_ssim + 0.05 && t < 1800.0;
    report(5, pass,
           fmt("psnr %.2f dB (baseline %.2f, +%.2f), ssim %.3f (baseline %.3f, +%.3f), %.0f s", r.psnr,
               sh.baseline_psnr, r.psnr - sh.baseline_psnr, r.ssim, sh.baseline_ssim, r.ssim - sh.baseline_ssim,
               t));
}

void criterion6_consistency(Shared& sh) {
    require(sh.fdrd_s1.has_value(), "criterion 5 model unavailable");
    train::TrainState fd = train_toy(toy_config(1, "fd", "v1_default"), sh.train_set, sh.work + "/c6_fd_model");

    auto study = [&](const train::TrainState& st, double& pixel_std_mean, double& pixel_std_max,
                     double& psnr_std) {
        const std::uint64_t seeds[5] = {9101, 9202, 9303, 9404, 9505};
        std::vector<std::vector<Tensor>> outs(5);
        std::vector<double> psnrs(5, 0.0);
        for (int r = 0; r < 5; ++r) {
            for (const auto& p : sh.eval_set) {
                Tensor e = train::enhance_image(st, p.low, derive_seed(seeds[r], p.identifier));
                psnrs[std::size_t(r)] += data::psnr(e, p.high);
                outs[std::size_t(r)].push_back(std::move(e));
            }
            psnrs[std::size_t(r)] /= double(sh.eval_set.size());
        }
        double sum_std = 0, max_std = 0;
        std::int64_t count = 0;
        for (std::size_t img = 0; img < sh.eval_set.size(); ++img) {
            const std::int64_t n = outs[0][img].numel();
            for (std::int64_t i = 0; i < n; ++i) {
                double mean = 0;
                for (int r = 0; r < 5; ++r) mean += outs[std::size_t(r)][img].data[i];
                mean /= 5.0;
                double var = 0;
                for (int r = 0; r < 5; ++r) {
                    const double d = outs[std::size_t(r)][img].data[i] - mean;
                    var += d * d;
                }
                const double sd = std::sqrt(var / 5.0);
                sum_std += sd;
                max_std = std::max(max_std, sd);
                ++count;
            }
        }
        pixel_std_mean = sum_std / double(count);
        pixel_std_max = max_std;
        double pm = 0;
        for (double p : psnrs) pm += p;
        pm /= 5.0;
        double pv = 0;
        for (double p : psnrs) pv += (p - pm) * (p - pm);
        psnr_std = std::sqrt(pv / 4.0);  // sample std over the five runs
    };

    double fdrd_std = 0, fdrd_max = 0, fdrd_psnr_std = 0;
    double fd_std = 0, fd_max = 0, fd_psnr_std = 0;
    study(*sh.fdrd_s1, fdrd_std, fdrd_max, fdrd_psnr_std);
    study(fd, fd_std, fd_max, fd_psnr_std);

    const bool pass = fdrd_std <= 1e-3 && fd_std > fdrd_std && fdrd_psnr_std <= 0.01;
    report(6, pass,
           fmt("fd_rd pixel std %.2e (max %.2e), psnr std %.4f dB; fd-only pixel std %.2e (psnr std %.4f dB)",
               fdrd_std, fdrd_max, fdrd_psnr_std, fd_std, fd_psnr_std));
}

void criterion7_k_efficiency(Shared& sh) {
    models::UnetConfig ucfg;
    ucfg.base_width = 16;
    ucfg.depth = 2;
    ucfg.temb_dim = 32;
    models::NoiseEstimator est = models::make_noise_estimator<float>(ucfg, 7001);
    const diffusion::NoiseSchedule sched = diffusion::make_schedule(200, 1e-4, 2e-2);
    auto rows = data::bench_sampling(est, 64, {1, 2, 3}, 10, 3, sched, 7002);
    std::ofstream csv(sh.work + "/c7_bench.csv");
    data::bench_csv(rows, csv);
    const double t1 = rows[0].mean_s, t2 = rows[1].mean_s, t3 = rows[2].mean_s;
    const bool pass = t1 > t2 && t2 > t3 && t1 / t2 >= 2.0;
    report(7, pass, fmt("time K=1 %.4fs > K=2 %.4fs > K=3 %.4fs, ratio K1/K2 = %.2f", t1, t2, t3, t1 / t2));
}

void criterion8_hfrm_ablation(Shared& sh) {
    require(sh.fdrd_s1.has_value(), "criterion 5 model unavailable");
    int hold = 0;
    std::string detail;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        EvalResult v1, v2, v3;
        if (seed == 1) {
            v1 = evaluate(*sh.fdrd_s1, sh.eval_set, 555);
        } else {
            train::TrainState m =
                train_toy(toy_config(seed, "fd_rd", "v1_default"), sh.train_set,
                          sh.work + "/c8_v1_s" + std::to_string(seed));
            v1 = evaluate(m, sh.eval_set, 555);
        }
        train::TrainState m2 = train_toy(toy_config(seed, "fd_rd", "v2_no_attention"), sh.train_set,
                                         sh.work + "/c8_v2_s" + std::to_string(seed));
        v2 = evaluate(m2, sh.eval_set, 555);
        train::TrainState m3 = train_toy(toy_config(seed, "fd_rd", "v3_reversed"), sh.train_set,
                                         sh.work + "/c8_v3_s" + std::to_string(seed));
        v3 = evaluate(m3, sh.eval_set, 555);
        const bool ordered = v1.psnr >= v3.psnr && v3.psnr >= v2.psnr;
        hold += ordered ? 1 : 0;
        detail += fmt("[seed %llu: v1 %.2f v3 %.2f v2 %.2f %s] ", (unsigned long long)seed, v1.psnr, v3.psnr,
                      v2.psnr, ordered ? "ok" : "off");
    }
    report(8, hold >= 2, fmt("ordering v1 >= v3 >= v2 held in %d of 3 repetitions %s", hold, detail.c_str()));
}

void criterion9_swap_experiment() {
    data::SynthConfig sc;
    sc.extent = 32;
    sc.seed = 9009;
    sc.count = 20;
    int hold = 0;
    double min_margin = 1e30;
    for (int i = 0; i < 20; ++i) {
        data::ImagePair p = data::synth_pair(sc, i);
        auto pa = wavelet::decompose(p.high, 1);
        auto pb = wavelet::decompose(p.low, 1);
        auto err_for = [&](const wavelet::BandSelector& sel) {
            Tensor rec = wavelet::reconstruct(wavelet::swap_bands(pa, pb, sel));
            return double((rec.data - p.high.data).abs().mean());
        };
        const double apex_err = err_for(wavelet::BandSelector::only_apex());
        double worst_band = 0;
        for (char band : {'V', 'H', 'D'})
            worst_band = std::max(worst_band, err_for(wavelet::BandSelector::one(1, band)));
        if (apex_err > worst_band) ++hold;
        min_margin = std::min(min_margin, apex_err / std::max(1e-12, worst_band));
    }
    report(9, hold == 20, fmt("apex swap dominated every single band swap in %d/20 pairs, min ratio %.1fx", hold,
                              min_margin));
}

// criterion 10: CLI determinism ---------------------------------------------

struct Cli {
    std::string bin;
    std::string work;

    int run(const std::string& args) const {
        const std::string cmd = bin + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str());
    }
};

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "missing output: " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool same_file(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

void criterion10_cli_determinism(const Cli& cli) {
    const std::string& w = cli.work;
    bool ok = true;
    std::string what = "all outputs byte-identical";
    auto check = [&](bool cond, const std::string& name) {
        if (!cond && ok) {
            ok = false;
            what = "mismatch: " + name;
        }
    };

    // synth: twice plus a rerun from the echoed config
    check(cli.run("synth --out " + w + "/sy1 --seed 42 --count 4 --extent 16") == 0, "synth run");
    check(cli.run("synth --out " + w + "/sy2 --seed 42 --count 4 --extent 16") == 0, "synth rerun");
    check(cli.run("synth --config " + w + "/sy1/config.json --out " + w + "/sy3") == 0, "synth echo rerun");
    for (const char* f : {"low/pair_00000.png", "high/pair_00003.png", "config.json"}) {
        check(same_file(w + "/sy1/" + f, w + "/sy2/" + f), std::string("synth ") + f);
        check(same_file(w + "/sy1/" + f, w + "/sy3/" + f), std::string("synth echo ") + f);
    }

    // train: tiny budget, echoed-config rerun
    const std::string tr = " --data " + w + "/sy1 --seed 5 --K 1 --T 20 --S 2 --batch 1 --patch 16 --iters 2"
                           " --base-width 8 --depth 1 --temb-dim 8 --hfrm-width 8";
    check(cli.run("train --out " + w + "/tr1" + tr) == 0, "train run");
    check(cli.run("train --config " + w + "/tr1/config.json --out " + w + "/tr2") == 0, "train echo rerun");
    for (const char* f : {"ckpt_final.bin", "ckpt_final.json", "loss_log.csv", "config.json"})
        check(same_file(w + "/tr1/" + std::string(f), w + "/tr2/" + std::string(f)), std::string("train ") + f);

    // enhance
    check(cli.run("enhance --out " + w + "/en1 --checkpoint " + w + "/tr1/ckpt_final --input " + w +
                  "/sy1 --seed 9") == 0,
          "enhance run");
    check(cli.run("enhance --config " + w + "/en1/config.json --out " + w + "/en2") == 0, "enhance echo rerun");
    for (const char* f : {"pair_00000_enhanced.png", "pair_00003_enhanced.png", "metrics.csv", "config.json"})
        check(same_file(w + "/en1/" + std::string(f), w + "/en2/" + std::string(f)), std::string("enhance ") + f);

    // dwt
    check(cli.run("dwt --out " + w + "/dw1 --input " + w + "/sy1/high/pair_00000.png --K 2") == 0, "dwt run");
    check(cli.run("dwt --config " + w + "/dw1/config.json --out " + w + "/dw2") == 0, "dwt echo rerun");
    for (const char* f : {"A2.png", "V1.png", "H2.png", "D1.png", "mapping.txt", "report.txt", "config.json"})
        check(same_file(w + "/dw1/" + std::string(f), w + "/dw2/" + std::string(f)), std::string("dwt ") + f);

    // swap-exp
    check(cli.run("swap-exp --out " + w + "/sx1 --a " + w + "/sy1/high/pair_00000.png --b " + w +
                  "/sy1/low/pair_00000.png --K 1") == 0,
          "swap-exp run");
    check(cli.run("swap-exp --config " + w + "/sx1/config.json --out " + w + "/sx2") == 0, "swap-exp echo rerun");
    for (const char* f : {"errors.csv", "recon_apex.png", "recon_none.png", "config.json"})
        check(same_file(w + "/sx1/" + std::string(f), w + "/sx2/" + std::string(f)), std::string("swap-exp ") + f);

    // ablate (S axis over one tiny model)
    const std::string ab = " --data " + w + "/sy1 --eval-data " + w + "/sy1 --axis S --values 2,4 --seed 5"
                           " --K 1 --T 20 --S 2 --batch 1 --patch 16 --iters 1 --base-width 8 --depth 1"
                           " --temb-dim 8 --hfrm-width 8";
    check(cli.run("ablate --out " + w + "/ab1" + ab) == 0, "ablate run");
    check(cli.run("ablate --config " + w + "/ab1/config.json --out " + w + "/ab2") == 0, "ablate echo rerun");
    for (const char* f : {"ablate.csv", "config.json"})
        check(same_file(w + "/ab1/" + std::string(f), w + "/ab2/" + std::string(f)), std::string("ablate ") + f);

    // schedule
    check(cli.run("schedule --out " + w + "/sc1 --T 20 --S 4") == 0, "schedule run");
    check(cli.run("schedule --config " + w + "/sc1/config.json --out " + w + "/sc2") == 0, "schedule echo rerun");
    for (const char* f : {"schedule.csv", "plan.csv", "config.json"})
        check(same_file(w + "/sc1/" + std::string(f), w + "/sc2/" + std::string(f)), std::string("schedule ") + f);

    // bench: timing columns are measurements and cannot reproduce byte-exactly;
    // the structural columns and the config echo must
    check(cli.run("bench --out " + w + "/be1 --extent 16 --K-list 1,2 --S 2 --reps 1 --base-width 4 --depth 1"
                  " --temb-dim 4 --T 20") == 0,
          "bench run");
    check(cli.run("bench --config " + w + "/be1/config.json --out " + w + "/be2") == 0, "bench echo rerun");
    check(same_file(w + "/be1/config.json", w + "/be2/config.json"), "bench config.json");
    auto structure = [](const std::string& csv) {
        std::string cols;
        std::stringstream ss(csv);
        std::string line;
        while (std::getline(ss, line)) {
            std::size_t third_comma = 0;
            int commas = 0;
            for (std::size_t i = 0; i < line.size(); ++i)
                if (line[i] == ',' && ++commas == 3) {
                    third_comma = i;
                    break;
                }
            cols += line.substr(0, third_comma) + "\n";
        }
        return cols;
    };
    check(structure(slurp(w + "/be1/bench.csv")) == structure(slurp(w + "/be2/bench.csv")), "bench csv structure");

    report(10, ok, what);
}

}  // namespace

int main(int argc, char** argv) {
    require(argc >= 2, "usage: wcdm_acceptance <path-to-cli> [workdir]");
    Shared sh;
    sh.work = argc >= 3 ? argv[2] : "acceptance_work";
    fs::remove_all(sh.work);
    fs::create_directories(sh.work);

    guarded(1, [&] { criterion1_wavelet_roundtrip(); });
    guarded(2, [&] { criterion2_ddim_inversion(); });
    guarded(3, [&] { criterion3_sampler_plan(); });
    guarded(4, [&] { criterion4_gradient_fidelity(); });
    guarded(5, [&] { criterion5_toy_training(sh); });
    guarded(6, [&] { criterion6_consistency(sh); });
    guarded(7, [&] { criterion7_k_efficiency(sh); });
    guarded(8, [&] { criterion8_hfrm_ablation(sh); });
    guarded(9, [&] { criterion9_swap_experiment(); });
    guarded(10, [&] {
        Cli cli{argv[1], sh.work + "/cli"};
        fs::create_directories(cli.work);
        criterion10_cli_determinism(cli);
    });

    std::printf("%d of 10 criteria passed\n", 10 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
