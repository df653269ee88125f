#pragma once

#include "wcdm/image_io.hpp"
#include "wcdm/losses.hpp"
#include "wcdm/models.hpp"

#include <ostream>

namespace wcdm::data {

/// Desk-scale stand-in for low/normal-light pairs: structured content plus a
/// gamma + gain + sensor-noise degradation, low = clamp(scale * high^gamma + noise).
struct SynthConfig {
    double gamma_min = 1.5, gamma_max = 2.5;
    double scale_min = 0.2, scale_max = 0.5;
    double sigma_min = 0.0, sigma_max = 0.02;
    int extent = 32;
    std::string content = "mixed";  // gradients | rectangles | blobs | mixed
    std::uint64_t seed = 0;
    int count = 64;

    void validate() const;
};

struct ImagePair {
    Tensor low, high;  // (1,3,E,E) in [0,1]
    std::string identifier;
};

/// Deterministic in (cfg.seed, index).
ImagePair synth_pair(const SynthConfig& cfg, int index);
std::vector<ImagePair> synth_dataset(const SynthConfig& cfg);

/// Directory layout <root>/low/<id>.png, <root>/high/<id>.png.
void write_dataset(const std::vector<ImagePair>& pairs, const std::string& root);
std::vector<ImagePair> load_dataset(const std::string& root);

/// 10*log10(1/MSE) on unit range, capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b);

/// Re-export of the windowed SSIM used by training; inputs in [0,1].
double ssim(const Tensor& a, const Tensor& b);

struct BenchRow {
    int K = 0, S = 0, extent = 0, repetitions = 0;
    double mean_s = 0, std_s = 0;
};

/// Wall-clock per-image reverse-denoising time per wavelet scale K, single
/// threaded, fixed estimator width. Population std (zero for one repetition).
std::vector<BenchRow> bench_sampling(const models::NoiseEstimator& estimator, int extent,
                                     const std::vector<int>& Ks, int S, int repetitions,
                                     const diffusion::NoiseSchedule& sched, std::uint64_t seed);

void bench_csv(const std::vector<BenchRow>& rows, std::ostream& os);

}  // namespace wcdm::data
