// Command-line driver: synthetic data, training, enhancement, wavelet
// inspection, coefficient-swap experiments, ablations, and timing runs.
#include "wcdm/data.hpp"
#include "wcdm/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace wcdm;

namespace {

// Effective configuration: defaults <- config file (unknown keys rejected)
// <- explicit flags. The echo excludes the output directory so a rerun from
// the echo reproduces outputs byte for byte.
class Config {
public:
    explicit Config(ordered_json defaults) : j_(std::move(defaults)) {}

    void load_file(const std::string& path) {
        std::ifstream is(path);
        require(bool(is), "cannot open config: " + path);
        ordered_json file = ordered_json::parse(is);
        for (auto& [key, value] : file.items()) {
            require(j_.contains(key), "unknown config key: " + key);
            j_[key] = value;
        }
    }

    template <class T>
    void override_with(const std::string& key, const std::optional<T>& flag) {
        if (flag) j_[key] = *flag;
    }

    template <class T>
    T get(const std::string& key) const {
        return j_.at(key).get<T>();
    }

    void echo(const std::string& out_dir) const {
        fs::create_directories(out_dir);
        std::ofstream os(out_dir + "/config.json");
        require(bool(os), "cannot write config echo in " + out_dir);
        os << j_.dump(2) << "\n";
    }

    const ordered_json& json() const { return j_; }

private:
    ordered_json j_;
};

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    require(!out.empty(), "empty list: " + csv);
    return out;
}

std::vector<std::string> parse_str_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(tok);
    }
    require(!out.empty(), "empty list: " + csv);
    return out;
}

ordered_json train_defaults() {
    train::TrainConfig d;
    ordered_json j;
    j["seed"] = d.seed;
    j["data"] = "";
    j["K"] = d.K;
    j["T"] = d.T;
    j["S"] = d.S;
    j["lambda1"] = d.lambda1;
    j["lambda2"] = d.lambda2;
    j["lr"] = d.lr;
    j["lr_decay"] = d.lr_decay;
    j["decay_every"] = d.decay_every;
    j["batch"] = d.batch;
    j["patch"] = d.patch;
    j["iters"] = d.iters;
    j["beta_start"] = d.beta_start;
    j["beta_end"] = d.beta_end;
    j["strategy"] = d.strategy;
    j["estimator_param"] = d.estimator_param;
    j["hfrm_variant"] = d.hfrm_variant;
    j["channels"] = d.channels;
    j["base_width"] = d.base_width;
    j["depth"] = d.depth;
    j["temb_dim"] = d.temb_dim;
    j["hfrm_width"] = d.hfrm_width;
    j["checkpoint_every"] = d.checkpoint_every;
    j["resume"] = "";
    return j;
}

train::TrainConfig train_config_from(const Config& cfg) {
    train::TrainConfig c;
    c.seed = cfg.get<std::uint64_t>("seed");
    c.K = cfg.get<int>("K");
    c.T = cfg.get<int>("T");
    c.S = cfg.get<int>("S");
    c.lambda1 = cfg.get<float>("lambda1");
    c.lambda2 = cfg.get<float>("lambda2");
    c.lr = cfg.get<float>("lr");
    c.lr_decay = cfg.get<float>("lr_decay");
    c.decay_every = cfg.get<int>("decay_every");
    c.batch = cfg.get<int>("batch");
    c.patch = cfg.get<int>("patch");
    c.iters = cfg.get<long>("iters");
    c.beta_start = cfg.get<double>("beta_start");
    c.beta_end = cfg.get<double>("beta_end");
    c.strategy = cfg.get<std::string>("strategy");
    c.estimator_param = cfg.get<std::string>("estimator_param");
    c.hfrm_variant = cfg.get<std::string>("hfrm_variant");
    c.channels = cfg.get<int>("channels");
    c.base_width = cfg.get<int>("base_width");
    c.depth = cfg.get<int>("depth");
    c.temb_dim = cfg.get<int>("temb_dim");
    c.hfrm_width = cfg.get<int>("hfrm_width");
    c.checkpoint_every = cfg.get<long>("checkpoint_every");
    return c;
}

struct TrainFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> data, strategy, estimator_param, hfrm_variant, resume;
    std::optional<int> K, T, S, decay_every, batch, patch, channels, base_width, depth, temb_dim, hfrm_width;
    std::optional<long> iters, checkpoint_every;
    std::optional<float> lambda1, lambda2, lr, lr_decay;
    std::optional<double> beta_start, beta_end;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
    app->add_option("--seed", f.seed);
    app->add_option("--data", f.data, "dataset root with low/ and high/");
    app->add_option("--K", f.K);
    app->add_option("--T", f.T);
    app->add_option("--S", f.S);
    app->add_option("--lambda1", f.lambda1);
    app->add_option("--lambda2", f.lambda2);
    app->add_option("--lr", f.lr);
    app->add_option("--lr-decay", f.lr_decay);
    app->add_option("--decay-every", f.decay_every);
    app->add_option("--batch", f.batch);
    app->add_option("--patch", f.patch);
    app->add_option("--iters", f.iters);
    app->add_option("--beta-start", f.beta_start);
    app->add_option("--beta-end", f.beta_end);
    app->add_option("--strategy", f.strategy, "fd_rd or fd");
    app->add_option("--estimator-param", f.estimator_param, "x0 or eps");
    app->add_option("--hfrm-variant", f.hfrm_variant);
    app->add_option("--channels", f.channels);
    app->add_option("--base-width", f.base_width);
    app->add_option("--depth", f.depth);
    app->add_option("--temb-dim", f.temb_dim);
    app->add_option("--hfrm-width", f.hfrm_width);
    app->add_option("--checkpoint-every", f.checkpoint_every);
}

void apply_train_flags(Config& cfg, const TrainFlags& f) {
    cfg.override_with("seed", f.seed);
    cfg.override_with("data", f.data);
    cfg.override_with("K", f.K);
    cfg.override_with("T", f.T);
    cfg.override_with("S", f.S);
    cfg.override_with("lambda1", f.lambda1);
    cfg.override_with("lambda2", f.lambda2);
    cfg.override_with("lr", f.lr);
    cfg.override_with("lr_decay", f.lr_decay);
    cfg.override_with("decay_every", f.decay_every);
    cfg.override_with("batch", f.batch);
    cfg.override_with("patch", f.patch);
    cfg.override_with("iters", f.iters);
    cfg.override_with("beta_start", f.beta_start);
    cfg.override_with("beta_end", f.beta_end);
    cfg.override_with("strategy", f.strategy);
    cfg.override_with("estimator_param", f.estimator_param);
    cfg.override_with("hfrm_variant", f.hfrm_variant);
    cfg.override_with("channels", f.channels);
    cfg.override_with("base_width", f.base_width);
    cfg.override_with("depth", f.depth);
    cfg.override_with("temb_dim", f.temb_dim);
    cfg.override_with("hfrm_width", f.hfrm_width);
    cfg.override_with("checkpoint_every", f.checkpoint_every);
    cfg.override_with("resume", f.resume);
}

std::vector<std::pair<Tensor, Tensor>> as_tensor_pairs(const std::vector<data::ImagePair>& pairs) {
    std::vector<std::pair<Tensor, Tensor>> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.emplace_back(p.low, p.high);
    return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Config& cfg, const std::string& out) {
    data::SynthConfig sc;
    sc.seed = cfg.get<std::uint64_t>("seed");
    sc.count = cfg.get<int>("count");
    sc.extent = cfg.get<int>("extent");
    sc.content = cfg.get<std::string>("content");
    sc.gamma_min = cfg.get<double>("gamma_min");
    sc.gamma_max = cfg.get<double>("gamma_max");
    sc.scale_min = cfg.get<double>("scale_min");
    sc.scale_max = cfg.get<double>("scale_max");
    sc.sigma_min = cfg.get<double>("sigma_min");
    sc.sigma_max = cfg.get<double>("sigma_max");
    sc.validate();
    cfg.echo(out);
    data::write_dataset(data::synth_dataset(sc), out);
    std::cout << "wrote " << sc.count << " pairs under " << out << "\n";
    return 0;
}

int cmd_train(const Config& cfg, const std::string& out) {
    train::TrainConfig tc = train_config_from(cfg);
    tc.validate();
    const std::string data_root = cfg.get<std::string>("data");
    require(!data_root.empty(), "train: --data is required");
    auto pairs = as_tensor_pairs(data::load_dataset(data_root));
    cfg.echo(out);

    const std::string resume = cfg.get<std::string>("resume");
    train::TrainState st = resume.empty() ? train::init_train_state(tc) : train::load_state(resume);
    if (!resume.empty()) {
        st.cfg.iters = tc.iters;  // allow extending a finished run
        require(st.cfg.seed == tc.seed, "train: resume seed differs from config");
    }
    std::cerr << "parameters: " << st.param_count() << ", iterations " << st.iter << " -> " << tc.iters << "\n";

    std::ofstream log(out + "/loss_log.csv");
    require(bool(log), "train: cannot write loss log");
    train::loss_csv_header(log);
    train::TrainResult res = train::train(st, pairs, out, &log);
    if (!res.reports.empty())
        std::cerr << "final loss " << res.reports.back().loss_total << "\n";
    std::cout << "checkpoint: " << res.checkpoint_stem << ".bin\n";
    return 0;
}

int cmd_enhance(const Config& cfg, const std::string& out) {
    const std::string ckpt = cfg.get<std::string>("checkpoint");
    const std::string input = cfg.get<std::string>("input");
    require(!ckpt.empty() && !input.empty(), "enhance: --checkpoint and --input are required");
    const std::uint64_t seed = cfg.get<std::uint64_t>("seed");
    const int S = cfg.get<int>("S");
    train::TrainState st = train::load_state(ckpt);
    cfg.echo(out);

    // single PNG, or a dataset root with low/ (+ optional high/ references)
    std::vector<std::pair<std::string, std::string>> inputs;  // (id, low path)
    std::vector<std::string> refs;                            // matching reference path or ""
    if (fs::is_directory(input)) {
        auto pairs_dir = fs::is_directory(input + "/low") ? input + "/low" : input;
        for (const auto& e : fs::directory_iterator(pairs_dir))
            if (e.path().extension() == ".png") inputs.emplace_back(e.path().stem().string(), e.path().string());
        std::sort(inputs.begin(), inputs.end());
        for (const auto& [id, path] : inputs) {
            const std::string ref = fs::path(path).parent_path().parent_path().string() + "/high/" + id + ".png";
            refs.push_back(fs::exists(ref) ? ref : "");
        }
    } else {
        inputs.emplace_back(fs::path(input).stem().string(), input);
        const fs::path p(input);
        const std::string ref = p.parent_path().parent_path().string() + "/high/" + p.stem().string() + ".png";
        refs.push_back(p.parent_path().filename() == "low" && fs::exists(ref) ? ref : "");
    }
    require(!inputs.empty(), "enhance: no PNG inputs under " + input);

    std::ofstream metrics;
    bool any_ref = false;
    for (const auto& r : refs) any_ref = any_ref || !r.empty();
    if (any_ref) {
        metrics.open(out + "/metrics.csv");
        metrics << "id,psnr,ssim\n";
    }
    double psnr_sum = 0, ssim_sum = 0;
    int ref_count = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& [id, path] = inputs[i];
        Tensor low = data::load_image(path);
        Tensor enhanced = train::enhance_image(st, low, derive_seed(seed, "enhance." + id), S);
        data::save_image(enhanced, out + "/" + id + "_enhanced.png");
        if (!refs[i].empty()) {
            Tensor high = data::load_image(refs[i]);
            const double p = data::psnr(enhanced, high);
            const double s = data::ssim(enhanced, high);
            char line[128];
            std::snprintf(line, sizeof line, "%s,%.6f,%.6f\n", id.c_str(), p, s);
            metrics << line;
            psnr_sum += p;
            ssim_sum += s;
            ++ref_count;
        }
    }
    if (ref_count > 0) {
        char line[128];
        std::snprintf(line, sizeof line, "mean,%.6f,%.6f\n", psnr_sum / ref_count, ssim_sum / ref_count);
        metrics << line;
        std::cout << "mean psnr " << psnr_sum / ref_count << " dB, mean ssim " << ssim_sum / ref_count << "\n";
    }
    std::cout << "enhanced " << inputs.size() << " image(s) into " << out << "\n";
    return 0;
}

int cmd_dwt(const Config& cfg, const std::string& out) {
    const std::string input = cfg.get<std::string>("input");
    const int K = cfg.get<int>("K");
    require(!input.empty(), "dwt: --input is required");
    Tensor img = data::load_image(input);
    auto pyr = wavelet::decompose(img, K);
    cfg.echo(out);

    std::ofstream mapping(out + "/mapping.txt");
    auto dump_band = [&](const Tensor& band, const std::string& name) {
        const float lo = band.data.minCoeff(), hi = band.data.maxCoeff();
        Tensor mapped;
        mapped.shape = band.shape;
        mapped.data = hi > lo ? ((band.data - lo) / (hi - lo)).eval() : (band.data * 0.0f).eval();
        data::save_image(mapped, out + "/" + name + ".png");
        char line[96];
        std::snprintf(line, sizeof line, "%s %.9g %.9g\n", name.c_str(), double(lo), double(hi));
        mapping << line;
    };
    dump_band(pyr.apex, "A" + std::to_string(K));
    for (int k = 1; k <= K; ++k) {
        dump_band(pyr.levels[std::size_t(k - 1)].V, "V" + std::to_string(k));
        dump_band(pyr.levels[std::size_t(k - 1)].H, "H" + std::to_string(k));
        dump_band(pyr.levels[std::size_t(k - 1)].D, "D" + std::to_string(k));
    }

    const Tensor rec = wavelet::reconstruct(pyr);
    const double err = double((rec.data - img.data).abs().maxCoeff());
    const double ratio = wavelet::energy(pyr) / std::max(1e-30, wavelet::energy(img));
    std::ofstream report(out + "/report.txt");
    char line[128];
    std::snprintf(line, sizeof line, "roundtrip_max_abs %.3e\nenergy_ratio %.9f\n", err, ratio);
    report << line;
    std::cout << line;
    return 0;
}

int cmd_swap_exp(const Config& cfg, const std::string& out) {
    const std::string a_path = cfg.get<std::string>("a");
    const std::string b_path = cfg.get<std::string>("b");
    const int K = cfg.get<int>("K");
    require(!a_path.empty() && !b_path.empty(), "swap-exp: --a and --b are required");
    Tensor a = data::load_image(a_path);
    Tensor b = data::load_image(b_path);
    require(a.shape == b.shape, "swap-exp: images must share extents");
    cfg.echo(out);

    auto pa = wavelet::decompose(a, K);
    auto pb = wavelet::decompose(b, K);
    std::vector<std::pair<std::string, wavelet::BandSelector>> selectors;
    selectors.emplace_back("none", wavelet::BandSelector::none());
    selectors.emplace_back("apex", wavelet::BandSelector::only_apex());
    for (int k = 1; k <= K; ++k)
        for (char band : {'V', 'H', 'D'})
            selectors.emplace_back(std::string(1, band) + std::to_string(k), wavelet::BandSelector::one(k, band));
    selectors.emplace_back("all", wavelet::BandSelector::all(K));

    std::ofstream table(out + "/errors.csv");
    table << "selector,mean_abs_error\n";
    for (const auto& [name, sel] : selectors) {
        Tensor rec = wavelet::reconstruct(wavelet::swap_bands(pa, pb, sel));
        const double err = double((rec.data - a.data).abs().mean());
        data::save_image(ops::clamp(rec, 0.0f, 1.0f), out + "/recon_" + name + ".png");
        char line[96];
        std::snprintf(line, sizeof line, "%s,%.9f\n", name.c_str(), err);
        table << line;
    }
    std::cout << "wrote " << selectors.size() << " reconstructions and errors.csv\n";
    return 0;
}

int cmd_ablate(const Config& cfg, const std::string& out) {
    const std::string axis = cfg.get<std::string>("axis");
    const std::string data_root = cfg.get<std::string>("data");
    const std::string eval_root = cfg.get<std::string>("eval_data");
    require(!data_root.empty() && !eval_root.empty(), "ablate: --data and --eval-data are required");
    train::TrainConfig base = train_config_from(cfg);
    base.validate();
    auto pairs = as_tensor_pairs(data::load_dataset(data_root));
    auto eval_pairs = data::load_dataset(eval_root);
    cfg.echo(out);

    std::string values = cfg.get<std::string>("values");
    if (values.empty()) {
        if (axis == "K") values = "1,2,3";
        else if (axis == "S") values = "5,10,20,25";
        else if (axis == "hfrm_variant") values = "v1_default,v2_no_attention,v3_reversed";
        else if (axis == "train_strategy") values = "fd_rd,fd";
        else throw std::invalid_argument("ablate: unknown axis " + axis + " (K, S, hfrm_variant, train_strategy)");
    }

    const std::uint64_t eval_seed = derive_seed(base.seed, "ablate.eval");
    auto evaluate = [&](const train::TrainState& st, int S_override) {
        double psnr_sum = 0, ssim_sum = 0;
        for (std::size_t i = 0; i < eval_pairs.size(); ++i) {
            Tensor enhanced = train::enhance_image(st, eval_pairs[i].low,
                                                   derive_seed(eval_seed, eval_pairs[i].identifier), S_override);
            psnr_sum += data::psnr(enhanced, eval_pairs[i].high);
            ssim_sum += data::ssim(enhanced, eval_pairs[i].high);
        }
        return std::make_pair(psnr_sum / double(eval_pairs.size()), ssim_sum / double(eval_pairs.size()));
    };

    std::ofstream table(out + "/ablate.csv");
    table << "axis,value,psnr,ssim\n";
    auto emit = [&](const std::string& value, double p, double s) {
        char line[128];
        std::snprintf(line, sizeof line, "%s,%s,%.6f,%.6f\n", axis.c_str(), value.c_str(), p, s);
        table << line;
        std::cout << line;
    };

    if (axis == "S") {
        for (int S : parse_int_list(values))
            require(S >= 1 && S <= base.T && base.T % S == 0,
                    "ablate: S=" + std::to_string(S) + " must divide T=" + std::to_string(base.T));
        train::TrainState st = train::init_train_state(base);
        train::train(st, pairs, out + "/model_S");
        for (int S : parse_int_list(values)) {
            auto [p, s] = evaluate(st, S);
            emit(std::to_string(S), p, s);
        }
        return 0;
    }

    for (const std::string& value : parse_str_list(values)) {
        train::TrainConfig tc = base;
        if (axis == "K") tc.K = std::stoi(value);
        else if (axis == "hfrm_variant") tc.hfrm_variant = value;
        else if (axis == "train_strategy") tc.strategy = value;
        tc.validate();
        train::TrainState st = train::init_train_state(tc);
        train::train(st, pairs, out + "/model_" + axis + "_" + value);
        auto [p, s] = evaluate(st, 0);
        emit(value, p, s);
    }
    return 0;
}

int cmd_bench(const Config& cfg, const std::string& out) {
    models::UnetConfig ucfg;
    ucfg.x_channels = ucfg.cond_channels = cfg.get<int>("channels");
    ucfg.base_width = cfg.get<int>("base_width");
    ucfg.depth = cfg.get<int>("depth");
    ucfg.temb_dim = cfg.get<int>("temb_dim");
    const std::uint64_t seed = cfg.get<std::uint64_t>("seed");
    models::NoiseEstimator est = models::make_noise_estimator<float>(ucfg, derive_seed(seed, "bench.init"));
    diffusion::NoiseSchedule sched =
        diffusion::make_schedule(cfg.get<int>("T"), cfg.get<double>("beta_start"), cfg.get<double>("beta_end"));
    cfg.echo(out);

    auto rows = data::bench_sampling(est, cfg.get<int>("extent"), parse_int_list(cfg.get<std::string>("K_list")),
                                     cfg.get<int>("S"), cfg.get<int>("reps"), sched, seed);
    std::ofstream table(out + "/bench.csv");
    data::bench_csv(rows, table);
    data::bench_csv(rows, std::cout);
    return 0;
}

int cmd_schedule(const Config& cfg, const std::string& out) {
    diffusion::NoiseSchedule sched =
        diffusion::make_schedule(cfg.get<int>("T"), cfg.get<double>("beta_start"), cfg.get<double>("beta_end"));
    cfg.echo(out);
    std::ofstream table(out + "/schedule.csv");
    diffusion::schedule_csv(sched, table);
    const int S = cfg.get<int>("S");
    if (S > 0) {
        std::ofstream plan(out + "/plan.csv");
        diffusion::plan_csv(diffusion::make_plan(S, sched.steps()), plan);
    }
    std::cout << "wrote schedule.csv" << (S > 0 ? " and plan.csv" : "") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wavelet-domain conditional diffusion toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out_dir = "out";
    std::optional<std::string> config_path;
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--config", config_path, "JSON config (flat keys; flags override)");

    // synth
    auto* synth = app.add_subcommand("synth", "emit a synthetic low/normal-light dataset");
    std::optional<std::uint64_t> sy_seed;
    std::optional<int> sy_count, sy_extent;
    std::optional<std::string> sy_content;
    std::optional<double> sy_gmin, sy_gmax, sy_smin, sy_smax, sy_nmin, sy_nmax;
    synth->add_option("--seed", sy_seed);
    synth->add_option("--count", sy_count);
    synth->add_option("--extent", sy_extent);
    synth->add_option("--content", sy_content, "gradients|rectangles|blobs|mixed");
    synth->add_option("--gamma-min", sy_gmin);
    synth->add_option("--gamma-max", sy_gmax);
    synth->add_option("--scale-min", sy_smin);
    synth->add_option("--scale-max", sy_smax);
    synth->add_option("--sigma-min", sy_nmin);
    synth->add_option("--sigma-max", sy_nmax);

    // train
    auto* tr = app.add_subcommand("train", "train the diffusion model and HFRMs");
    TrainFlags tf;
    add_train_flags(tr, tf);
    tr->add_option("--resume", tf.resume, "checkpoint stem to resume from");

    // enhance
    auto* en = app.add_subcommand("enhance", "restore low-light image(s) with a checkpoint");
    std::optional<std::uint64_t> en_seed;
    std::optional<std::string> en_ckpt, en_input;
    std::optional<int> en_S;
    en->add_option("--seed", en_seed);
    en->add_option("--checkpoint", en_ckpt, "checkpoint stem or .bin");
    en->add_option("--input", en_input, "PNG file or dataset root");
    en->add_option("--S", en_S, "sampling steps (0 = trained setting)");

    // dwt
    auto* dw = app.add_subcommand("dwt", "dump the coefficient pyramid of an image");
    std::optional<std::string> dw_input;
    std::optional<int> dw_K;
    dw->add_option("--input", dw_input);
    dw->add_option("--K", dw_K);

    // swap-exp
    auto* sw = app.add_subcommand("swap-exp", "coefficient-exchange reconstruction study");
    std::optional<std::string> sw_a, sw_b;
    std::optional<int> sw_K;
    sw->add_option("--a", sw_a);
    sw->add_option("--b", sw_b);
    sw->add_option("--K", sw_K);

    // ablate
    auto* ab = app.add_subcommand("ablate", "PSNR/SSIM sweep over one axis");
    TrainFlags abf;
    add_train_flags(ab, abf);
    std::optional<std::string> ab_axis, ab_values, ab_eval;
    ab->add_option("--axis", ab_axis, "K | S | hfrm_variant | train_strategy");
    ab->add_option("--values", ab_values, "comma-separated settings");
    ab->add_option("--eval-data", ab_eval, "held-out dataset root");

    // bench
    auto* be = app.add_subcommand("bench", "sampling-time table per wavelet scale");
    std::optional<std::uint64_t> be_seed;
    std::optional<int> be_extent, be_S, be_reps, be_bw, be_depth, be_temb, be_ch, be_T;
    std::optional<std::string> be_Ks;
    std::optional<double> be_b0, be_b1;
    be->add_option("--seed", be_seed);
    be->add_option("--extent", be_extent);
    be->add_option("--K-list", be_Ks);
    be->add_option("--S", be_S);
    be->add_option("--reps", be_reps);
    be->add_option("--base-width", be_bw);
    be->add_option("--depth", be_depth);
    be->add_option("--temb-dim", be_temb);
    be->add_option("--channels", be_ch);
    be->add_option("--T", be_T);
    be->add_option("--beta-start", be_b0);
    be->add_option("--beta-end", be_b1);

    // schedule
    auto* sc = app.add_subcommand("schedule", "print the variance schedule and sampler plan as CSV");
    std::optional<int> sc_T, sc_S;
    std::optional<double> sc_b0, sc_b1;
    sc->add_option("--T", sc_T);
    sc->add_option("--S", sc_S);
    sc->add_option("--beta-start", sc_b0);
    sc->add_option("--beta-end", sc_b1);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            Config cfg(ordered_json{{"seed", 0},
                                    {"count", 64},
                                    {"extent", 32},
                                    {"content", "mixed"},
                                    {"gamma_min", 1.5},
                                    {"gamma_max", 2.5},
                                    {"scale_min", 0.2},
                                    {"scale_max", 0.5},
                                    {"sigma_min", 0.0},
                                    {"sigma_max", 0.02}});
            if (config_path) cfg.load_file(*config_path);
            cfg.override_with("seed", sy_seed);
            cfg.override_with("count", sy_count);
            cfg.override_with("extent", sy_extent);
            cfg.override_with("content", sy_content);
            cfg.override_with("gamma_min", sy_gmin);
            cfg.override_with("gamma_max", sy_gmax);
            cfg.override_with("scale_min", sy_smin);
            cfg.override_with("scale_max", sy_smax);
            cfg.override_with("sigma_min", sy_nmin);
            cfg.override_with("sigma_max", sy_nmax);
            return cmd_synth(cfg, out_dir);
        }
        if (*tr) {
            Config cfg(train_defaults());
            if (config_path) cfg.load_file(*config_path);
            apply_train_flags(cfg, tf);
            return cmd_train(cfg, out_dir);
        }
        if (*en) {
            Config cfg(ordered_json{{"seed", 0}, {"checkpoint", ""}, {"input", ""}, {"S", 0}});
            if (config_path) cfg.load_file(*config_path);
            cfg.override_with("seed", en_seed);
            cfg.override_with("checkpoint", en_ckpt);
            cfg.override_with("input", en_input);
            cfg.override_with("S", en_S);
            return cmd_enhance(cfg, out_dir);
        }
        if (*dw) {
            Config cfg(ordered_json{{"input", ""}, {"K", 1}});
            if (config_path) cfg.load_file(*config_path);
            cfg.override_with("input", dw_input);
            cfg.override_with("K", dw_K);
            return cmd_dwt(cfg, out_dir);
        }
        if (*sw) {
            Config cfg(ordered_json{{"a", ""}, {"b", ""}, {"K", 1}});
            if (config_path) cfg.load_file(*config_path);
            cfg.override_with("a", sw_a);
            cfg.override_with("b", sw_b);
            cfg.override_with("K", sw_K);
            return cmd_swap_exp(cfg, out_dir);
        }
        if (*ab) {
            ordered_json defaults = train_defaults();
            defaults.erase("resume");
            defaults["axis"] = "S";
            defaults["values"] = "";
            defaults["eval_data"] = "";
            Config cfg(defaults);
            if (config_path) cfg.load_file(*config_path);
            apply_train_flags(cfg, abf);
            cfg.override_with("axis", ab_axis);
            cfg.override_with("values", ab_values);
            cfg.override_with("eval_data", ab_eval);
            return cmd_ablate(cfg, out_dir);
        }
        if (*be) {
            Config cfg(ordered_json{{"seed", 0},
                                    {"extent", 64},
                                    {"K_list", "1,2,3"},
                                    {"S", 10},
                                    {"reps", 3},
                                    {"base_width", 16},
                                    {"depth", 2},
                                    {"temb_dim", 32},
                                    {"channels", 3},
                                    {"T", 200},
                                    {"beta_start", 1e-4},
                                    {"beta_end", 2e-2}});
            if (config_path) cfg.load_file(*config_path);
            cfg.override_with("seed", be_seed);
            cfg.override_with("extent", be_extent);
            cfg.override_with("K_list", be_Ks);
            cfg.override_with("S", be_S);
            cfg.override_with("reps", be_reps);
            cfg.override_with("base_width", be_bw);
            cfg.override_with("depth", be_depth);
            cfg.override_with("temb_dim", be_temb);
            cfg.override_with("channels", be_ch);
            cfg.override_with("T", be_T);
            cfg.override_with("beta_start", be_b0);
            cfg.override_with("beta_end", be_b1);
            return cmd_bench(cfg, out_dir);
        }
        if (*sc) {
            Config cfg(ordered_json{{"T", 200}, {"S", 10}, {"beta_start", 1e-4}, {"beta_end", 2e-2}});
            if (config_path) cfg.load_file(*config_path);
            cfg.override_with("T", sc_T);
            cfg.override_with("S", sc_S);
            cfg.override_with("beta_start", sc_b0);
            cfg.override_with("beta_end", sc_b1);
            return cmd_schedule(cfg, out_dir);
        }
    } catch (const std::bad_alloc&) {
        std::cerr << "error: allocation failure (out of memory); reduce extent, width, or batch\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
