#pragma once

#include "wcdm/losses.hpp"
#include "wcdm/models.hpp"

#include <optional>
#include <ostream>

namespace wcdm::train {

struct TrainConfig {
    int K = 2;
    int T = 200;
    int S = 10;
    float lambda1 = 0.01f;
    float lambda2 = 0.1f;
    float lr = 1e-4f;
    float lr_decay = 0.8f;
    int decay_every = 5000;
    int batch = 8;
    int patch = 256;
    long iters = 100000;
    std::uint64_t seed = 0;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    std::string strategy = "fd_rd";  // "fd_rd" (full) or "fd" (forward diffusion only)
    std::string estimator_param = "eps";  // network output form: "eps" or "x0"
    std::string hfrm_variant = "v1_default";
    int channels = 3;
    int base_width = 16;
    int depth = 2;
    int temb_dim = 32;
    int hfrm_width = 16;
    long checkpoint_every = 1000;

    void validate() const;
    models::UnetConfig unet_config() const;
    models::HfrmConfig hfrm_config() const;
};

struct LossReport {
    long iteration = 0;  // 1-based, after the step
    float lr = 0;
    double loss_diff = 0;
    double loss_detail = 0;
    double loss_content = 0;
    double loss_total = 0;
};

struct TrainState {
    TrainConfig cfg;
    diffusion::NoiseSchedule sched;
    diffusion::SamplerPlan plan;
    models::NoiseEstimator estimator;
    std::vector<models::Hfrm> hfrms;
    std::vector<Tensor> moment1, moment2;  // Adam accumulators, parameter order
    long iter = 0;

    std::int64_t param_count() const;

    /// Fixed enumeration over every trainable tensor: "est.*", "hfrm<k>.*".
    template <class F>
    void visit_params(F&& f) {
        estimator.visit_params("est.", f);
        for (std::size_t k = 0; k < hfrms.size(); ++k)
            hfrms[k].visit_params("hfrm" + std::to_string(k + 1) + ".", f);
    }
};

TrainState init_train_state(const TrainConfig& cfg);

/// Standard bias-corrected Adam on one tensor; step is the 1-based update count.
void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long step, float lr,
                 float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

/// Learning rate in effect once `completed` iterations have run.
float lr_at(const TrainConfig& cfg, long completed);

/// One Algorithm-1 step on a (low, high) batch: forward diffusion noise term,
/// in-training reverse denoising (strategy fd_rd), HFRM restoration,
/// reconstruction, total loss, single optimizer update.
LossReport train_step(TrainState& state, const Tensor& low, const Tensor& high);

struct TrainResult {
    std::string checkpoint_stem;  // final checkpoint path without extension
    std::vector<LossReport> reports;
};

/// Runs train_step from state.iter to cfg.iters over shuffled random crops.
/// Batches are a pure function of (seed, iteration), so resuming from a
/// checkpoint reproduces an uninterrupted run. Writes periodic checkpoints
/// into out_dir and CSV rows to log if given.
TrainResult train(TrainState& state, const std::vector<std::pair<Tensor, Tensor>>& pairs,
                  const std::string& out_dir, std::ostream* log = nullptr);

void loss_csv_header(std::ostream& os);
void loss_csv_row(std::ostream& os, const LossReport& r);

/// Checkpoint = container (params + Adam moments) + JSON manifest (config, iter).
void save_state(const TrainState& state, const std::string& path_stem);
TrainState load_state(const std::string& path_stem);

/// Full enhancement of one low-light image, clamped to [0,1]. Pure in
/// (state parameters, image, seed); S overrides the trained sampling plan
/// when positive.
Tensor enhance_image(const TrainState& state, const Tensor& low, std::uint64_t seed, int S_override = 0);

}  // namespace wcdm::train
