#include "wcdm/data.hpp"

#include "wcdm/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>

namespace wcdm::data {

void SynthConfig::validate() const {
    require(gamma_min >= 1.0 && gamma_min <= gamma_max, "synth: need gamma >= 1");
    require(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0, "synth: need 0 < scale <= 1");
    require(sigma_min >= 0.0 && sigma_min <= sigma_max, "synth: need sigma >= 0");
    require(extent >= 2, "synth: extent too small");
    require(count >= 0, "synth: negative count");
    require(content == "gradients" || content == "rectangles" || content == "blobs" || content == "mixed",
            "synth: unknown content kind: " + content);
}

namespace {

void paint_gradient(Tensor& img, CounterRng& rng) {
    const int e = img.shape.h;
    const double theta = rng.uniform() * 2.0 * 3.14159265358979323846;
    const double cx = std::cos(theta), sy = std::sin(theta);
    double tint[3];
    for (auto& t : tint) t = 0.6 + 0.4 * rng.uniform();
    const double lo = 0.15 + 0.2 * rng.uniform();
    const double hi = 0.65 + 0.3 * rng.uniform();
    for (int y = 0; y < e; ++y)
        for (int x = 0; x < e; ++x) {
            const double g = (cx * x / (e - 1) + sy * y / (e - 1) + 1.0) / 2.0;
            for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = float((lo + (hi - lo) * g) * tint[c]);
        }
}

void paint_rectangles(Tensor& img, CounterRng& rng) {
    const int e = img.shape.h;
    const int n = int(rng.uniform_int(2, 4));
    for (int i = 0; i < n; ++i) {
        const int wd = int(rng.uniform_int(e / 6 + 1, e / 2));
        const int ht = int(rng.uniform_int(e / 6 + 1, e / 2));
        const int x0 = int(rng.uniform_int(0, e - wd - 1));
        const int y0 = int(rng.uniform_int(0, e - ht - 1));
        double col[3];
        for (auto& c : col) c = 0.1 + 0.85 * rng.uniform();
        for (int y = y0; y < y0 + ht; ++y)
            for (int x = x0; x < x0 + wd; ++x)
                for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = float(col[c]);
    }
}

void paint_blobs(Tensor& img, CounterRng& rng) {
    const int e = img.shape.h;
    const int n = int(rng.uniform_int(2, 3));
    for (int i = 0; i < n; ++i) {
        const double cy = rng.uniform() * e, cx = rng.uniform() * e;
        const double rad = e / 8.0 + rng.uniform() * e / 4.0;
        const double amp = -0.3 + 0.7 * rng.uniform();
        double tint[3];
        for (auto& t : tint) t = 0.5 + 0.5 * rng.uniform();
        for (int y = 0; y < e; ++y)
            for (int x = 0; x < e; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                const double v = amp * std::exp(-d2 / (2.0 * rad * rad));
                for (int c = 0; c < 3; ++c) img.at(0, c, y, x) += float(v * tint[c]);
            }
    }
}

}  // namespace

ImagePair synth_pair(const SynthConfig& cfg, int index) {
    cfg.validate();
    CounterRng rng(derive_seed(cfg.seed, "pair", std::uint64_t(index)));

    Tensor high({1, 3, cfg.extent, cfg.extent});
    if (cfg.content == "gradients") {
        paint_gradient(high, rng);
    } else if (cfg.content == "rectangles") {
        const float base = float(0.2 + 0.3 * rng.uniform());
        high.data.setConstant(base);
        paint_rectangles(high, rng);
    } else if (cfg.content == "blobs") {
        const float base = float(0.3 + 0.3 * rng.uniform());
        high.data.setConstant(base);
        paint_blobs(high, rng);
    } else {  // mixed
        paint_gradient(high, rng);
        paint_rectangles(high, rng);
        paint_blobs(high, rng);
    }
    high = ops::clamp(high, 0.0f, 1.0f);

    const double gamma = cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * rng.uniform();
    const double scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * rng.uniform();
    const double sigma = cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * rng.uniform();

    Tensor low(high.shape);
    for (std::int64_t i = 0; i < high.numel(); ++i) {
        const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
        low.data[i] = float(scale * std::pow(double(high.data[i]), gamma) + noise);
    }
    low = ops::clamp(low, 0.0f, 1.0f);

    char id[32];
    std::snprintf(id, sizeof id, "pair_%05d", index);
    return {std::move(low), std::move(high), id};
}

std::vector<ImagePair> synth_dataset(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<ImagePair> out;
    out.reserve(std::size_t(cfg.count));
    for (int i = 0; i < cfg.count; ++i) out.push_back(synth_pair(cfg, i));
    return out;
}

void write_dataset(const std::vector<ImagePair>& pairs, const std::string& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root + "/low");
    fs::create_directories(root + "/high");
    for (const auto& p : pairs) {
        save_image(p.low, root + "/low/" + p.identifier + ".png");
        save_image(p.high, root + "/high/" + p.identifier + ".png");
    }
}

std::vector<ImagePair> load_dataset(const std::string& root) {
    namespace fs = std::filesystem;
    require(fs::is_directory(root + "/low") && fs::is_directory(root + "/high"),
            "load_dataset: expected <root>/low and <root>/high under " + root);
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root + "/low"))
        if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    require(!ids.empty(), "load_dataset: no PNGs under " + root + "/low");
    std::vector<ImagePair> out;
    for (const auto& id : ids) {
        const std::string high_path = root + "/high/" + id + ".png";
        require(fs::exists(high_path), "load_dataset: missing counterpart " + high_path);
        out.push_back({load_image(root + "/low/" + id + ".png"), load_image(high_path), id});
    }
    return out;
}

double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    const double mse = (a.data - b.data).template cast<double>().square().mean();
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor& a, const Tensor& b) {
    return double(train::ssim_value(a, b));
}

std::vector<BenchRow> bench_sampling(const models::NoiseEstimator& estimator, int extent,
                                     const std::vector<int>& Ks, int S, int repetitions,
                                     const diffusion::NoiseSchedule& sched, std::uint64_t seed) {
    require(repetitions >= 1, "bench_sampling: need at least one repetition");
    SynthConfig scfg;
    scfg.extent = extent;
    scfg.seed = seed;
    const Tensor image = synth_pair(scfg, 0).low;
    const diffusion::SamplerPlan plan = diffusion::make_plan(S, sched.steps());

    std::vector<BenchRow> rows;
    for (int K : Ks) {
        require(K >= 1 && extent % (1 << K) == 0, "bench_sampling: extent not divisible by 2^K");
        const Tensor cond = wavelet::decompose(image, K).apex;
        std::vector<double> times;
        for (int r = 0; r < repetitions; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            (void)models::sample_apex(estimator, cond, sched, plan, derive_seed(seed, "bench", std::uint64_t(r)));
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
        double mean = 0;
        for (double t : times) mean += t;
        mean /= double(times.size());
        double var = 0;
        for (double t : times) var += (t - mean) * (t - mean);
        var /= double(times.size());
        rows.push_back({K, S, extent, repetitions, mean, std::sqrt(var)});
    }
    return rows;
}

void bench_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
    os << "K,S,extent,mean_s,std_s\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%d,%d,%d,%.6f,%.6f\n", r.K, r.S, r.extent, r.mean_s, r.std_s);
        os << line;
    }
}

}  // namespace wcdm::data
