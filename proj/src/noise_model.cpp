#include "sinodenoise/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace sd::noise_model {

namespace {

double softplus(double x) {
  if (x > 20.0) return x;
  return std::log1p(std::exp(x));
}

double inv_softplus(double y) {
  if (y > 20.0) return y;
  return std::log(std::expm1(y));
}

double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void adam_update(std::vector<double>& p, const std::vector<double>& g,
                 std::vector<double>& m, std::vector<double>& v,
                 std::int64_t t, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (m.size() != p.size()) m.assign(p.size(), 0.0);
  if (v.size() != p.size()) v.assign(p.size(), 0.0);
  const double c1 = 1.0 - std::pow(b1, double(t));
  const double c2 = 1.0 - std::pow(b2, double(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

} // namespace

double rmsre(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw ValidationError("rmsre: size mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(truth[i] > 0.0))
      throw ValidationError("rmsre: non-positive reference at index " + std::to_string(i));
    const double r = (pred[i] - truth[i]) / truth[i];
    acc += r * r;
  }
  return std::sqrt(acc / double(pred.size())) * 100.0;
}

NoiseModel::NoiseModel(int n_cols, int hidden) : n_cols_(n_cols), hidden_(hidden) {
  if (n_cols <= 0 || hidden <= 0)
    throw ConfigError("NoiseModel: n_cols and hidden must be positive");
  embedding_.assign(n_cols_, 0.0);
  w_in_.assign(hidden_, 0.0);
  b_in_.assign(hidden_, 0.0);
  w_out_.assign(2 * hidden_, 0.0);
  b_out_.assign(2, 0.0);
  sigma_e2_raw_[0] = inv_softplus(1.0);
  ensure_grad_shapes();
}

void NoiseModel::ensure_grad_shapes() {
  g_embedding_.assign(embedding_.size(), 0.0);
  g_w_in_.assign(w_in_.size(), 0.0);
  g_b_in_.assign(b_in_.size(), 0.0);
  g_w_out_.assign(w_out_.size(), 0.0);
  g_b_out_.assign(b_out_.size(), 0.0);
  g_sigma_e2_raw_.assign(1, 0.0);
  g_lambda_const_raw_.assign(1, 0.0);
}

NoiseModel::SlopeBias NoiseModel::slope_bias(double ma) const {
  SlopeBias sb;
  sb.z1.resize(hidden_);
  sb.a1.resize(hidden_);
  for (int j = 0; j < hidden_; ++j) {
    sb.z1[j] = w_in_[j] * ma + b_in_[j];
    sb.a1[j] = std::max(sb.z1[j], 0.0);
  }
  sb.slope = b_out_[0];
  sb.bias = b_out_[1];
  for (int j = 0; j < hidden_; ++j) {
    sb.slope += w_out_[j] * sb.a1[j];
    sb.bias += w_out_[hidden_ + j] * sb.a1[j];
  }
  return sb;
}

double NoiseModel::lambda_of(int column, double ma) const {
  if (constant_lambda_) return std::max(lambda_const_raw_[0], kLambdaMin);
  if (column < 0 || column >= n_cols_)
    throw ValidationError("lambda_of: column " + std::to_string(column) + " out of range");
  const SlopeBias sb = slope_bias(ma);
  return std::max(sb.slope * embedding_[column] + sb.bias, kLambdaMin);
}

std::vector<double> NoiseModel::predict_flux_profile(double ma) const {
  std::vector<double> out(n_cols_);
  if (constant_lambda_) {
    std::fill(out.begin(), out.end(), std::max(lambda_const_raw_[0], kLambdaMin));
    return out;
  }
  const SlopeBias sb = slope_bias(ma);
  for (int i = 0; i < n_cols_; ++i)
    out[i] = std::max(sb.slope * embedding_[i] + sb.bias, kLambdaMin);
  return out;
}

void NoiseModel::lambda_backward(int column, double ma, double g_lambda) {
  if (constant_lambda_) {
    if (lambda_const_raw_[0] > kLambdaMin) g_lambda_const_raw_[0] += g_lambda;
    return;
  }
  const SlopeBias sb = slope_bias(ma);
  const double raw = sb.slope * embedding_[column] + sb.bias;
  if (raw <= kLambdaMin) return; // clamp active: zero gradient
  g_embedding_[column] += g_lambda * sb.slope;
  const double g_slope = g_lambda * embedding_[column];
  const double g_bias = g_lambda;
  g_b_out_[0] += g_slope;
  g_b_out_[1] += g_bias;
  for (int j = 0; j < hidden_; ++j) {
    g_w_out_[j] += g_slope * sb.a1[j];
    g_w_out_[hidden_ + j] += g_bias * sb.a1[j];
    if (sb.z1[j] > 0.0) {
      const double g_a1 = g_slope * w_out_[j] + g_bias * w_out_[hidden_ + j];
      g_w_in_[j] += g_a1 * ma;
      g_b_in_[j] += g_a1;
    }
  }
}

double NoiseModel::sigma_e2() const { return softplus(sigma_e2_raw_[0]); }

void NoiseModel::set_sigma_e2(double value) {
  if (!(value > 0.0)) throw ConfigError("sigma_e2 must be positive");
  sigma_e2_raw_[0] = inv_softplus(value);
}

void NoiseModel::sigma_e2_backward(double g) {
  g_sigma_e2_raw_[0] += g * softplus_grad(sigma_e2_raw_[0]);
}

double NoiseModel::sigma_n2(double mu_x, int column, double ma) const {
  const double lam = lambda_of(column, ma);
  return mu_x / lam + sigma_e2() / (lam * lam);
}

void NoiseModel::set_constant_lambda_value(double lambda) {
  lambda_const_raw_[0] = lambda;
}

void NoiseModel::zero_grad() { ensure_grad_shapes(); }

std::vector<std::pair<std::vector<double>*, std::vector<double>*>>
NoiseModel::param_grad_pairs(bool lambda_only) {
  std::vector<std::pair<std::vector<double>*, std::vector<double>*>> out;
  if (constant_lambda_) {
    if (!lambda_frozen_) out.push_back({&lambda_const_raw_, &g_lambda_const_raw_});
  } else if (!lambda_frozen_) {
    out.push_back({&embedding_, &g_embedding_});
    out.push_back({&w_in_, &g_w_in_});
    out.push_back({&b_in_, &g_b_in_});
    out.push_back({&w_out_, &g_w_out_});
    out.push_back({&b_out_, &g_b_out_});
  }
  if (!lambda_only) out.push_back({&sigma_e2_raw_, &g_sigma_e2_raw_});
  return out;
}

void NoiseModel::adam_step(double lr) {
  auto pairs = param_grad_pairs(false);
  if (adam_.size() != pairs.size()) adam_.assign(pairs.size(), AdamState{});
  ++adam_t_;
  for (std::size_t k = 0; k < pairs.size(); ++k)
    adam_update(*pairs[k].first, *pairs[k].second, adam_[k].m, adam_[k].v,
                adam_t_, lr);
}

FitReport NoiseModel::pretrain(const std::vector<FluxSample>& train,
                               const std::vector<FluxSample>& heldout,
                               int epochs, double lr) {
  FitReport report;
  if (constant_lambda_)
    throw ConfigError("pretrain: constant-lambda mode has no flux fit");
  if (train.empty()) throw ValidationError("pretrain: no training samples");
  for (const auto& s : train) {
    if (int(s.flux.size()) != n_cols_)
      throw ValidationError("pretrain: flux profile width mismatch");
    for (double f : s.flux)
      if (!(f > 0.0)) throw ValidationError("pretrain: non-positive flux sample");
  }

  std::set<double> currents;
  for (const auto& s : train) currents.insert(s.ma);
  if (currents.size() < 2)
    report.warnings.push_back(
        "pretrain: only one distinct tube current; current response is "
        "unconstrained away from it");

  // Identity-like start: hidden units pass the current through, the output
  // averages them into slope = mA and bias = 0, and the embedding carries the
  // column shape as mean flux per unit current.
  double mean_ma = 0.0;
  for (const auto& s : train) mean_ma += s.ma;
  mean_ma /= double(train.size());
  if (!(mean_ma > 0.0)) throw ValidationError("pretrain: mean current must be positive");
  for (int j = 0; j < hidden_; ++j) {
    w_in_[j] = 1.0;
    b_in_[j] = 0.0;
    w_out_[j] = 1.0 / double(hidden_);
    w_out_[hidden_ + j] = 0.0;
  }
  b_out_[0] = 0.0;
  b_out_[1] = 0.0;
  for (int i = 0; i < n_cols_; ++i) {
    double acc = 0.0;
    for (const auto& s : train) acc += s.flux[std::size_t(i)];
    embedding_[i] = acc / double(train.size()) / mean_ma;
  }

  const double n_terms = double(train.size()) * double(n_cols_);
  std::vector<AdamState> st(5);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    zero_grad();
    for (const auto& s : train) {
      for (int i = 0; i < n_cols_; ++i) {
        const double pred = lambda_of(i, s.ma);
        lambda_backward(i, s.ma, 2.0 * (pred - s.flux[std::size_t(i)]) / n_terms);
      }
    }
    auto pairs = param_grad_pairs(true);
    for (std::size_t k = 0; k < pairs.size(); ++k)
      adam_update(*pairs[k].first, *pairs[k].second, st[k].m, st[k].v, epoch, lr);
  }
  report.epochs = epochs;

  auto eval = [this](const std::vector<FluxSample>& set) {
    std::vector<double> pred, truth;
    for (const auto& s : set) {
      auto p = predict_flux_profile(s.ma);
      pred.insert(pred.end(), p.begin(), p.end());
      truth.insert(truth.end(), s.flux.begin(), s.flux.end());
    }
    return rmsre(pred, truth);
  };
  report.train_rmsre = eval(train);
  report.heldout_rmsre =
      heldout.empty() ? std::numeric_limits<double>::quiet_NaN() : eval(heldout);
  lambda_frozen_ = true;
  return report;
}

std::vector<NoiseModel::NamedVector> NoiseModel::named_parameters() {
  return {
      {"noise.embedding", &embedding_},   {"noise.w_in", &w_in_},
      {"noise.b_in", &b_in_},             {"noise.w_out", &w_out_},
      {"noise.b_out", &b_out_},           {"noise.sigma_e2_raw", &sigma_e2_raw_},
      {"noise.lambda_const", &lambda_const_raw_},
  };
}

} // namespace sd::noise_model
