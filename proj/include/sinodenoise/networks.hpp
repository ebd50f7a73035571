#pragma once

#include "sinodenoise/nn.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sd::networks {

// Per-pixel clean-data distribution parameters predicted by a network.
struct PosteriorMaps {
  nn::Tensor mu_x;     // clean-mean estimate, transmission units
  nn::Tensor sigma_x2; // clean-variance estimate, > 0 everywhere
};

// Window of adjacent frames around the excluded center frame i.
// past: i-k ... i-1; future: i+k ... i+1 (reversed for backward recurrence).
struct FrameWindow {
  std::vector<nn::Tensor> past;
  std::vector<nn::Tensor> future;
  nn::Tensor center; // carried for inference, never fed to a blind network
  int k = 3;
};

struct NetConfig {
  int k = 3;
  int feat_channels = 64; // feature extractor width
  int feat_depth = 8;     // conv+ReLU layers in the extractor
  int lstm_channels = 64; // ConvLSTM hidden channels
  int head_channels = 64; // fusing CNN width
  int head_depth = 3;     // fusing CNN layers (last maps to 2 channels)
  int se_hidden = 8;      // squeeze-excitation bottleneck
  int trunk_depth = 8;    // DnCNN trunk depth (baselines, 4R)
  int trunk_channels = 64;
  int mix_channels = 32;  // 4R branch-combination width (1x1 convs)
  bool linear_mu = false; // MSE ablation: raw mu head, no activation
};

constexpr float kSigmaFloor = 1e-8f;

// Plain conv+ReLU pipeline, bias-free; ReLU after every layer except the last.
struct ConvStack {
  std::vector<nn::Conv2d> layers;

  struct Cache {
    std::vector<nn::ConvCache> conv;
    std::vector<nn::Tensor> relu_out; // one per non-final layer
  };

  void init(const std::string& name, const std::vector<int>& widths, int kernel,
            bool causal, Rng& rng);
  nn::Tensor forward(const nn::Tensor& x, Cache* cache) const;
  nn::Tensor backward(Cache& cache, const nn::Tensor& gy);
  void collect(std::vector<nn::Param*>& out);
};

// ---------------------------------------------------------------------------
// Noise2NoiseTD: time-distributed blind model. Shared feature extractor,
// one ConvLSTM pass over past and one over future (tied weights),
// squeeze-excitation gating over the concatenated branch outputs, fusing CNN.
class N2ntdNet {
public:
  void init(const NetConfig& cfg, std::uint64_t seed);

  struct Cache {
    std::vector<ConvStack::Cache> past_feat, future_feat;
    std::vector<nn::ConvLSTMStepCache> past_steps, future_steps;
    nn::SECache se;
    ConvStack::Cache head;
    nn::Tensor raw_mu, raw_sigma;
  };

  PosteriorMaps forward(const FrameWindow& window, Cache* cache) const;
  // Accumulates parameter grads; optionally returns grads wrt input frames.
  void backward(Cache& cache, const nn::Tensor& g_mu, const nn::Tensor& g_sigma,
                std::vector<nn::Tensor>* g_past = nullptr,
                std::vector<nn::Tensor>* g_future = nullptr);

  // exposed building blocks
  nn::Tensor features(const nn::Tensor& frame) const;
  const NetConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();

private:
  NetConfig cfg_;
  ConvStack extractor_;
  nn::ConvLSTMCell lstm_;
  nn::SEBlock se_;
  ConvStack head_;
};

// ---------------------------------------------------------------------------
// Noise2Void-4R: four rotated copies through a shared vertical half-plane
// trunk, one-row shift, de-rotation, 1x1 combination. The receptive field of
// output pixel (r, c) excludes input pixel (r, c).
class Blindspot4rNet {
public:
  void init(const NetConfig& cfg, std::uint64_t seed);

  struct Cache {
    std::vector<ConvStack::Cache> branch; // 4 trunk caches (rotated inputs)
    ConvStack::Cache mix;
    nn::Tensor raw_mu, raw_sigma;
  };

  PosteriorMaps forward(const nn::Tensor& frame, Cache* cache) const;
  // Returns grad wrt the input frame (used by the blind-spot Jacobian test).
  nn::Tensor backward(Cache& cache, const nn::Tensor& g_mu, const nn::Tensor& g_sigma);

  const NetConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();

private:
  NetConfig cfg_;
  ConvStack trunk_; // shared across the four rotations
  ConvStack mix_;   // 1x1 combination layers
};

// ---------------------------------------------------------------------------
// Noise2Clean baseline: DnCNN trunk over [center, 2k neighbors, noise map],
// residual learning: output = center - trunk(input).
class Noise2CleanNet {
public:
  void init(const NetConfig& cfg, std::uint64_t seed);

  struct Cache {
    ConvStack::Cache trunk;
    nn::Tensor center;
  };

  // window.center is an input channel here (supervised model is not blind).
  nn::Tensor forward(const FrameWindow& window, const nn::Tensor& noise_level_map,
                     Cache* cache) const;
  void backward(Cache& cache, const nn::Tensor& g_out);

  const NetConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();

private:
  NetConfig cfg_;
  ConvStack trunk_;
};

// ---------------------------------------------------------------------------
// Half2Half baseline: plain DnCNN trunk, direct prediction in transmission
// domain.
class Half2HalfNet {
public:
  void init(const NetConfig& cfg, std::uint64_t seed);

  struct Cache {
    ConvStack::Cache trunk;
  };

  nn::Tensor forward(const nn::Tensor& frame, Cache* cache) const;
  void backward(Cache& cache, const nn::Tensor& g_out);

  const NetConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();

private:
  NetConfig cfg_;
  ConvStack trunk_;
};

std::size_t total_param_count(const std::vector<nn::Param*>& params);

} // namespace sd::networks
