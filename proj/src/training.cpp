#include "wcdm/training.hpp"

#include "wcdm/checkpoint.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace wcdm::train {

void TrainConfig::validate() const {
    require(K >= 1, "config: K must be >= 1");
    require(T >= 1 && S >= 1 && S <= T && T % S == 0, "config: need 1 <= S <= T with S dividing T");
    require(lambda1 >= 0 && lambda2 >= 0, "config: lambda weights must be non-negative");
    require(lr > 0 && lr_decay > 0 && lr_decay <= 1 && decay_every >= 1, "config: bad learning-rate schedule");
    require(batch >= 1 && iters >= 0 && checkpoint_every >= 1, "config: bad loop settings");
    require(channels >= 1 && base_width >= 1 && depth >= 1 && hfrm_width >= 1, "config: bad model widths");
    require(temb_dim >= 2 && temb_dim % 2 == 0, "config: temb_dim must be even");
    require(patch % (1 << K) == 0, "config: patch must be divisible by 2^K");
    require((patch >> K) % (1 << depth) == 0,
            "config: apex extent (patch / 2^K) must be divisible by 2^depth for the estimator");
    require(strategy == "fd_rd" || strategy == "fd", "config: strategy must be fd_rd or fd");
    require(estimator_param == "x0" || estimator_param == "eps", "config: estimator_param must be x0 or eps");
    models::parse_hfrm_variant(hfrm_variant);
    require(beta_start > 0 && beta_start <= beta_end && beta_end < 1, "config: bad beta range");
}

models::UnetConfig TrainConfig::unet_config() const {
    models::UnetConfig u;
    u.x_channels = channels;
    u.cond_channels = channels;
    u.base_width = base_width;
    u.depth = depth;
    u.temb_dim = temb_dim;
    return u;
}

models::HfrmConfig TrainConfig::hfrm_config() const {
    models::HfrmConfig h;
    h.channels = channels;
    h.width = hfrm_width;
    h.variant = models::parse_hfrm_variant(hfrm_variant);
    return h;
}

std::int64_t TrainState::param_count() const {
    std::int64_t n = models::param_count(estimator);
    for (const auto& h : hfrms) n += models::param_count(h);
    return n;
}

TrainState init_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.sched = diffusion::make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    st.plan = diffusion::make_plan(cfg.S, cfg.T);
    st.estimator = models::make_noise_estimator<float>(cfg.unet_config(), derive_seed(cfg.seed, "init.est"));
    if (cfg.estimator_param == "x0") st.estimator.set_x0_form(st.sched);
    for (int k = 1; k <= cfg.K; ++k)
        st.hfrms.push_back(models::make_hfrm<float>(cfg.hfrm_config(), derive_seed(cfg.seed, "init.hfrm", k)));
    st.visit_params([&](const std::string&, Tensor& t) {
        st.moment1.emplace_back(t.shape);
        st.moment2.emplace_back(t.shape);
    });
    return st;
}

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long step, float lr, float beta1,
                 float beta2, float eps) {
    require(grad.shape == param.shape && m.shape == param.shape && v.shape == param.shape,
            "adam_update: accumulator/gradient shape mismatch");
    require(step >= 1, "adam_update: step must be >= 1");
    m.data = beta1 * m.data + (1.0f - beta1) * grad.data;
    v.data = beta2 * v.data + (1.0f - beta2) * grad.data.square();
    const float bc1 = float(1.0 - std::pow(double(beta1), double(step)));
    const float bc2 = float(1.0 - std::pow(double(beta2), double(step)));
    param.data -= lr * (m.data / bc1) / ((v.data / bc2).sqrt() + eps);
}

float lr_at(const TrainConfig& cfg, long completed) {
    return cfg.lr * float(std::pow(double(cfg.lr_decay), double(completed / cfg.decay_every)));
}

LossReport train_step(TrainState& st, const Tensor& low, const Tensor& high) {
    const TrainConfig& cfg = st.cfg;
    require_same_shape(low, high, "train_step");
    require(low.shape.h % (1 << cfg.K) == 0 && low.shape.w % (1 << cfg.K) == 0,
            "train_step: batch extents must be divisible by 2^K");
    const long it = st.iter;

    const auto pyr_low = wavelet::decompose(low, cfg.K);
    const auto pyr_high = wavelet::decompose(high, cfg.K);

    CounterRng trng(derive_seed(cfg.seed, "t", std::uint64_t(it)));
    std::vector<int> ts(std::size_t(low.shape.b));
    for (auto& t : ts) t = int(trng.uniform_int(1, cfg.T));
    const Tensor eps = normal_tensor<float>(pyr_high.apex.shape, derive_seed(cfg.seed, "eps", std::uint64_t(it)));
    const std::uint64_t chain_seed = derive_seed(cfg.seed, "chain", std::uint64_t(it));

    Tape tape;
    LossReport rep;
    try {
        models::Bound<float> est_bd = models::bind(tape, st.estimator, true);
        std::vector<models::Bound<float>> hfrm_bds;
        for (auto& h : st.hfrms) hfrm_bds.push_back(models::bind(tape, h, true));

        Var cond = tape.leaf(pyr_low.apex);
        Var x0 = tape.leaf(pyr_high.apex);
        Var eps_v = tape.leaf(eps);
        Var x_t = tape.leaf(diffusion::q_sample(pyr_high.apex, ts, eps, st.sched));
        Var eps_pred = st.estimator.forward(est_bd, x_t, cond, ts);

        Var apex_hat, ldiff;
        if (cfg.strategy == "fd_rd") {
            diffusion::DenoiseVarFn<float> den = [&](Var x, Var c, int t) {
                return st.estimator.forward(est_bd, x, c, std::vector<int>(std::size_t(low.shape.b), t));
            };
            apex_hat = diffusion::sample(tape, den, cond, st.sched, st.plan, chain_seed);
            ldiff = loss_diffusion(eps_v, eps_pred, apex_hat, x0);
        } else {
            // forward-diffusion-only ablation: one-step x0 prediction stands in
            // for the reverse chain so the remaining losses stay defined
            std::vector<float> inv_ca(ts.size()), ce(ts.size());
            for (std::size_t i = 0; i < ts.size(); ++i) {
                const double ab = st.sched.abar(ts[i]);
                inv_ca[i] = float(1.0 / std::sqrt(ab));
                ce[i] = float(std::sqrt(1.0 - ab));
            }
            apex_hat = scale_per_sample(sub(x_t, scale_per_sample(eps_pred, ce)), inv_ca);
            ldiff = mse(eps_pred, eps_v);
        }

        std::vector<std::array<Var, 3>> preds, refs;
        for (int k = 0; k < cfg.K; ++k) {
            const auto& lv = pyr_low.levels[std::size_t(k)];
            preds.push_back(st.hfrms[std::size_t(k)].forward(hfrm_bds[std::size_t(k)], tape.leaf(lv.V),
                                                             tape.leaf(lv.H), tape.leaf(lv.D)));
            const auto& rv = pyr_high.levels[std::size_t(k)];
            refs.push_back({tape.leaf(rv.V), tape.leaf(rv.H), tape.leaf(rv.D)});
        }
        Var ldet = loss_detail(preds, refs, cfg.lambda1, cfg.lambda2);

        Var image_hat = apex_hat;
        for (int k = cfg.K - 1; k >= 0; --k)
            image_hat = wavelet::idwt2d(image_hat, preds[std::size_t(k)][0], preds[std::size_t(k)][1],
                                        preds[std::size_t(k)][2]);
        Var lcon = loss_content(image_hat, tape.leaf(high));
        Var ltot = loss_total(ldiff, ldet, lcon);

        rep.loss_diff = double(tape.value(ldiff).item());
        rep.loss_detail = double(tape.value(ldet).item());
        rep.loss_content = double(tape.value(lcon).item());
        rep.loss_total = double(tape.value(ltot).item());

        tape.backward(ltot);

        const float lr_now = lr_at(cfg, it);
        rep.lr = lr_now;
        const long step = it + 1;
        std::size_t pi = 0;
        auto apply = [&](models::Bound<float>& bd) {
            for (std::size_t j = 0; j < bd.order.size(); ++j, ++pi)
                adam_update(*bd.order[j].second, tape.grad(bd.var_order[j]), st.moment1[pi], st.moment2[pi],
                            step, lr_now);
        };
        apply(est_bd);
        for (auto& bd : hfrm_bds) apply(bd);
        require(pi == st.moment1.size(), "train_step: optimizer state misaligned");
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("train_step aborted at iteration " + std::to_string(it + 1) + ": " + e.what());
    }

    st.iter = it + 1;
    rep.iteration = st.iter;
    return rep;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, long epoch) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    CounterRng rng(derive_seed(seed, "epoch", std::uint64_t(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = std::size_t(rng.uniform_int(0, std::int64_t(i)));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

void crop_into(Tensor& dst, int slot, const Tensor& src, int oy, int ox, int patch) {
    for (int c = 0; c < src.shape.c; ++c)
        for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x) dst.at(slot, c, y, x) = src.at(0, c, oy + y, ox + x);
}

std::string ckpt_stem(const std::string& out_dir, const std::string& tag) {
    return out_dir + "/ckpt_" + tag;
}

}  // namespace

TrainResult train(TrainState& st, const std::vector<std::pair<Tensor, Tensor>>& pairs, const std::string& out_dir,
                  std::ostream* log) {
    const TrainConfig& cfg = st.cfg;
    require(!pairs.empty(), "train: empty dataset");
    for (const auto& [lo, hi] : pairs) {
        require(lo.shape == hi.shape && lo.shape.b == 1, "train: pairs must be matching single images");
        require(lo.shape.h >= cfg.patch && lo.shape.w >= cfg.patch, "train: images smaller than patch");
        require(lo.shape.c == cfg.channels, "train: channel count mismatch");
    }
    std::filesystem::create_directories(out_dir);

    TrainResult result;
    const std::size_t n = pairs.size();
    long cached_epoch = -1;
    std::vector<std::size_t> order;

    Tensor low({cfg.batch, cfg.channels, cfg.patch, cfg.patch});
    Tensor high(low.shape);
    while (st.iter < cfg.iters) {
        const long it = st.iter;
        CounterRng crng(derive_seed(cfg.seed, "crop", std::uint64_t(it)));
        for (int j = 0; j < cfg.batch; ++j) {
            const long global = it * cfg.batch + j;
            const long epoch = global / long(n);
            if (epoch != cached_epoch) {
                order = epoch_order(n, cfg.seed, epoch);
                cached_epoch = epoch;
            }
            const std::size_t idx = order[std::size_t(global % long(n))];
            const auto& [lo, hi] = pairs[idx];
            const int oy = int(crng.uniform_int(0, lo.shape.h - cfg.patch));
            const int ox = int(crng.uniform_int(0, lo.shape.w - cfg.patch));
            crop_into(low, j, lo, oy, ox, cfg.patch);
            crop_into(high, j, hi, oy, ox, cfg.patch);
        }
        LossReport rep = train_step(st, low, high);
        if (log) loss_csv_row(*log, rep);
        result.reports.push_back(rep);
        if (st.iter % cfg.checkpoint_every == 0 && st.iter < cfg.iters) {
            char tag[32];
            std::snprintf(tag, sizeof tag, "%06ld", st.iter);
            save_state(st, ckpt_stem(out_dir, tag));
        }
    }
    result.checkpoint_stem = ckpt_stem(out_dir, "final");
    save_state(st, result.checkpoint_stem);
    return result;
}

void loss_csv_header(std::ostream& os) {
    os << "iteration,lr,loss_diff,loss_detail,loss_content,loss_total\n";
}

void loss_csv_row(std::ostream& os, const LossReport& r) {
    char line[192];
    std::snprintf(line, sizeof line, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.iteration, double(r.lr), r.loss_diff,
                  r.loss_detail, r.loss_content, r.loss_total);
    os << line;
}

void save_state(const TrainState& st, const std::string& path_stem) {
    std::vector<checkpoint::Entry> entries;
    auto& mut = const_cast<TrainState&>(st);
    std::size_t pi = 0;
    mut.visit_params([&](const std::string& name, Tensor& t) {
        entries.push_back({name, t});
        entries.push_back({"adam.m." + name, st.moment1[pi]});
        entries.push_back({"adam.v." + name, st.moment2[pi]});
        ++pi;
    });
    checkpoint::save(path_stem + ".bin", entries);

    nlohmann::ordered_json j;
    const TrainConfig& c = st.cfg;
    j["K"] = c.K;
    j["T"] = c.T;
    j["S"] = c.S;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["lr"] = c.lr;
    j["lr_decay"] = c.lr_decay;
    j["decay_every"] = c.decay_every;
    j["batch"] = c.batch;
    j["patch"] = c.patch;
    j["iters"] = c.iters;
    j["seed"] = c.seed;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["strategy"] = c.strategy;
    j["estimator_param"] = c.estimator_param;
    j["hfrm_variant"] = c.hfrm_variant;
    j["channels"] = c.channels;
    j["base_width"] = c.base_width;
    j["depth"] = c.depth;
    j["temb_dim"] = c.temb_dim;
    j["hfrm_width"] = c.hfrm_width;
    j["checkpoint_every"] = c.checkpoint_every;
    j["iter"] = st.iter;
    j["param_count"] = st.param_count();
    std::ofstream os(path_stem + ".json");
    require(bool(os), "save_state: cannot write manifest: " + path_stem + ".json");
    os << j.dump(2) << "\n";
}

TrainState load_state(const std::string& path_stem) {
    std::string stem = path_stem;
    if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".bin") stem = stem.substr(0, stem.size() - 4);
    std::ifstream is(stem + ".json");
    require(bool(is), "load_state: missing manifest: " + stem + ".json");
    nlohmann::json j = nlohmann::json::parse(is);

    TrainConfig c;
    c.K = j.at("K");
    c.T = j.at("T");
    c.S = j.at("S");
    c.lambda1 = j.at("lambda1");
    c.lambda2 = j.at("lambda2");
    c.lr = j.at("lr");
    c.lr_decay = j.at("lr_decay");
    c.decay_every = j.at("decay_every");
    c.batch = j.at("batch");
    c.patch = j.at("patch");
    c.iters = j.at("iters");
    c.seed = j.at("seed");
    c.beta_start = j.at("beta_start");
    c.beta_end = j.at("beta_end");
    c.strategy = j.at("strategy");
    c.estimator_param = j.at("estimator_param");
    c.hfrm_variant = j.at("hfrm_variant");
    c.channels = j.at("channels");
    c.base_width = j.at("base_width");
    c.depth = j.at("depth");
    c.temb_dim = j.at("temb_dim");
    c.hfrm_width = j.at("hfrm_width");
    c.checkpoint_every = j.at("checkpoint_every");

    TrainState st = init_train_state(c);
    st.iter = j.at("iter");

    const auto entries = checkpoint::load(stem + ".bin");
    std::size_t pi = 0;
    st.visit_params([&](const std::string& name, Tensor& t) {
        const Tensor* p = checkpoint::find(entries, name);
        require(p != nullptr, "load_state: missing parameter " + name);
        require(p->shape == t.shape, "load_state: shape mismatch for " + name);
        t = *p;
        const Tensor* m = checkpoint::find(entries, "adam.m." + name);
        const Tensor* v = checkpoint::find(entries, "adam.v." + name);
        require(m && v && m->shape == t.shape && v->shape == t.shape,
                "load_state: missing optimizer state for " + name);
        st.moment1[pi] = *m;
        st.moment2[pi] = *v;
        ++pi;
    });
    return st;
}

Tensor enhance_image(const TrainState& st, const Tensor& low, std::uint64_t seed, int S_override) {
    const TrainConfig& cfg = st.cfg;
    require(low.shape.h % (1 << cfg.K) == 0 && low.shape.w % (1 << cfg.K) == 0,
            "enhance: image extents must be divisible by 2^K");
    require((low.shape.h >> cfg.K) % (1 << cfg.depth) == 0 && (low.shape.w >> cfg.K) % (1 << cfg.depth) == 0,
            "enhance: apex extents must be divisible by 2^depth");
    const auto pyr = wavelet::decompose(low, cfg.K);
    const diffusion::SamplerPlan plan =
        S_override > 0 ? diffusion::make_plan(S_override, cfg.T) : st.plan;
    Tensor out = models::wcdm_restore(st.estimator, st.hfrms, pyr, st.sched, plan, seed);
    return ops::clamp(out, 0.0f, 1.0f);
}

}  // namespace wcdm::train
