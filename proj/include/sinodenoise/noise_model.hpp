#pragma once

#include "sinodenoise/ct_physics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sd::noise_model {

// root mean square relative error in percent; truth must be strictly positive
double rmsre(const std::vector<double>& pred, const std::vector<double>& truth);

struct FitReport {
  double train_rmsre = 0.0;   // percent
  double heldout_rmsre = 0.0; // percent (NaN when no held-out samples given)
  int epochs = 0;
  std::vector<std::string> warnings;
};

struct FluxSample {
  double ma = 0.0;
  std::vector<double> flux; // per-column truth, photons
};

// The adaptable noise model: lambda(i, mA) = max(slope(mA) * e(i) + bias(mA),
// lambda_min) with (slope, bias) from a 1 -> h -> 2 ReLU MLP over the tube
// current, plus one scalar electronic-noise variance. A constant-lambda
// variant backs the lambda=const ablation.
class NoiseModel {
public:
  static constexpr double kLambdaMin = 1.0;

  NoiseModel() = default;
  NoiseModel(int n_cols, int hidden = 16);

  int n_cols() const { return n_cols_; }
  int hidden() const { return hidden_; }

  // --- lambda path ---------------------------------------------------------
  double lambda_of(int column, double ma) const;
  std::vector<double> predict_flux_profile(double ma) const;
  // Accumulates parameter gradients given dL/dlambda at (column, mA).
  void lambda_backward(int column, double ma, double g_lambda);

  // --- electronic noise ----------------------------------------------------
  double sigma_e2() const;            // softplus(raw), >= 0
  void set_sigma_e2(double value);    // inverse-softplus initialization
  void sigma_e2_backward(double g);   // accumulates into the raw parameter

  // mu_x / lambda + sigma_e2 / lambda^2
  double sigma_n2(double mu_x, int column, double ma) const;

  // --- pre-estimation ------------------------------------------------------
  // MSE fit of the lambda layers (Adam, lr 1e-2, 1000 epochs). Freezes the
  // embedding and current maps afterwards. Held-out samples feed the report.
  FitReport pretrain(const std::vector<FluxSample>& train,
                     const std::vector<FluxSample>& heldout,
                     int epochs = 1000, double lr = 1e-2);

  // --- training-loop integration -------------------------------------------
  void zero_grad();
  // Adam step over the unfrozen parameters (lambda layers honor frozen flag).
  void adam_step(double lr);

  bool lambda_frozen() const { return lambda_frozen_; }
  void set_lambda_frozen(bool v) { lambda_frozen_ = v; }
  bool constant_lambda_mode() const { return constant_lambda_; }
  void set_constant_lambda_mode(bool v) { constant_lambda_ = v; }

  const std::vector<double>& embedding() const { return embedding_; }
  std::vector<double>& embedding_mut() { return embedding_; }
  void set_constant_lambda_value(double lambda);

  // flat named-tensor serialization support
  struct NamedVector {
    std::string name;
    std::vector<double>* data;
  };
  std::vector<NamedVector> named_parameters();

private:
  struct SlopeBias {
    double slope = 0.0, bias = 0.0;
    std::vector<double> a1, z1; // MLP hidden activations for backward
  };
  SlopeBias slope_bias(double ma) const;

  int n_cols_ = 0;
  int hidden_ = 16;
  bool lambda_frozen_ = false;
  bool constant_lambda_ = false;

  std::vector<double> embedding_;       // n_cols
  std::vector<double> w_in_, b_in_;     // hidden
  std::vector<double> w_out_, b_out_;   // 2*hidden, 2
  std::vector<double> sigma_e2_raw_{1.0};
  std::vector<double> lambda_const_raw_{100.0};

  // Adam state, one slot per parameter vector (same order as grads_)
  struct AdamState {
    std::vector<double> m, v;
  };
  std::vector<double> g_embedding_, g_w_in_, g_b_in_, g_w_out_, g_b_out_;
  std::vector<double> g_sigma_e2_raw_{0.0}, g_lambda_const_raw_{0.0};
  std::vector<AdamState> adam_;
  std::int64_t adam_t_ = 0;

  void ensure_grad_shapes();
  std::vector<std::pair<std::vector<double>*, std::vector<double>*>> param_grad_pairs(
      bool lambda_only);
};

} // namespace sd::noise_model
