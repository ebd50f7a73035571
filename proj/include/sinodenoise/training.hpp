#pragma once

#include "sinodenoise/container.hpp"
#include "sinodenoise/networks.hpp"
#include "sinodenoise/noise_model.hpp"
#include "sinodenoise/tomo_sim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sd::training {

struct TrainConfig {
  std::string regime; // n2ntd_anm | noise2void_4r | half2half | noise2clean | n2ntd_mse_ablation
  double learning_rate = 1e-4;
  int batch_size = 16;       // 64 for the supervised/paired regimes
  int patch_size = 64;
  int plateau_patience = 10; // epochs without >0.1% validation improvement
  int max_epochs = 200;
  int steps_per_epoch = 50;
  std::uint64_t seed = 0;
  bool freeze_noise_layers = true;
  int margin = 4;            // border pixels excluded from every loss
  int workers = 1;           // SINODENOISE_WORKERS overrides at the CLI level

  void validate() const;
};

// --- losses ---------------------------------------------------------------
// All loss math runs in double so analytic gradients survive finite-
// difference checks at 1e-4 relative.

// Per-pixel negative log likelihood of the noisy value under
// N(mu_x, sigma_x2 + mu_x/lambda + sigma_e2/lambda^2). Gradients are wrt
// mu_x (including its path through the noise variance), sigma_x2, lambda,
// and sigma_e2.
struct NllPointGrads {
  double d_mu = 0.0, d_sigma_x2 = 0.0, d_lambda = 0.0, d_sigma_e2 = 0.0;
};
double nll_point(double y, double mu_x, double sigma_x2, double lambda,
                 double sigma_e2, NllPointGrads* grads = nullptr);

// Mean NLL over explicit per-pixel variances (no noise-model coupling).
double nll_loss(const std::vector<double>& y, const std::vector<double>& mu_x,
                const std::vector<double>& sigma_x2,
                const std::vector<double>& sigma_n2);

// Mean squared error over the margin-masked interior; optional gradient wrt
// pred (same shape, zeros on the margin).
double mse_loss(const nn::Tensor& pred, const nn::Tensor& target, int margin,
                nn::Tensor* grad_pred = nullptr);

// --- pair generation --------------------------------------------------------
// Splits one measured transmission stack into two half-dose-statistics
// realizations: e ~ N(0, v_half - v), T1 = T + e, T2 = T - e, where
// v = T/I0 + sigma_e2/I0^2 and v_half = 2T/I0 + 4 sigma_e2/I0^2.
std::pair<TransmissionStack, TransmissionStack> half2half_pair(
    const TransmissionStack& t, std::uint64_t seed);

// --- patch sampling ----------------------------------------------------------
struct PatchIndex {
  int frame = 0, r0 = 0, c0 = 0;
};

class PatchSampler {
public:
  // frame_pool: candidate center frames (window margins already applied).
  PatchSampler(std::vector<int> frame_pool, int rows, int cols, int patch_size,
               std::uint64_t seed);
  PatchIndex next();

private:
  std::vector<int> pool_;
  int rows_, cols_, patch_;
  Rng rng_;
};

// patch_size x patch_size crop of frame f as a 1-channel tensor
nn::Tensor crop_patch(const FrameStack& stack, const PatchIndex& idx, int patch_size);

// Window of 1-channel patch tensors around center frame idx.frame, identical
// crop across all frames; edge frames replicated.
networks::FrameWindow crop_window(const FrameStack& stack, const PatchIndex& idx,
                                  int patch_size, int k);

// --- model wrapper ------------------------------------------------------------
// One trained network of whichever architecture the regime requires, plus
// optional attached noise model, with checkpoint (de)serialization.
struct Model {
  std::string regime;
  networks::NetConfig net_cfg;
  std::optional<networks::N2ntdNet> n2ntd;      // n2ntd_anm / n2ntd_mse_ablation
  std::optional<networks::Blindspot4rNet> bs4r; // noise2void_4r
  std::optional<networks::Noise2CleanNet> n2c;  // noise2clean
  std::optional<networks::Half2HalfNet> h2h;    // half2half
  std::optional<noise_model::NoiseModel> noise;

  static Model create(const std::string& regime, const networks::NetConfig& cfg,
                      std::uint64_t seed);
  std::vector<nn::Param*> params();
  container::Checkpoint to_checkpoint(std::uint64_t seed) const;
  static Model from_checkpoint(const container::Checkpoint& ckpt);
};

// --- training loop -------------------------------------------------------------
struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0, val_loss = 0.0, lr = 0.0, wall_time_s = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  int epochs_run = 0;
  double best_val_loss = 0.0;
};

// Trains model.{net} on the dataset per the regime wiring. Deterministic for
// a fixed seed and worker count. Throws DomainError on NaN loss.
TrainResult train(Model& model, const tomo_sim::SequenceDataset& data,
                  const TrainConfig& cfg);

std::string epoch_log_json(const std::vector<EpochRecord>& log);

} // namespace sd::training
