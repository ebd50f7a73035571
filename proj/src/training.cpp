#include "sinodenoise/training.hpp"

#include "sinodenoise/ct_physics.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

namespace sd::training {

namespace {

const std::vector<std::string> kRegimes = {
    "n2ntd_anm", "noise2void_4r", "half2half", "noise2clean", "n2ntd_mse_ablation"};

bool regime_uses_window(const std::string& r) {
  return r == "n2ntd_anm" || r == "n2ntd_mse_ablation" || r == "noise2clean";
}

bool regime_uses_noise_model(const std::string& r) {
  return r == "n2ntd_anm" || r == "noise2void_4r";
}

constexpr double kLogClamp = 1e-6;

} // namespace

void TrainConfig::validate() const {
  if (std::find(kRegimes.begin(), kRegimes.end(), regime) == kRegimes.end())
    throw ConfigError("unknown training regime '" + regime + "'");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patch_size < 16) throw ConfigError("patch_size must be >= 16");
  if (margin < 0 || 2 * margin >= patch_size)
    throw ConfigError("margin leaves no interior in the patch");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

// --- losses -----------------------------------------------------------------

double nll_point(double y, double mu_x, double sigma_x2, double lambda,
                 double sigma_e2, NllPointGrads* grads) {
  const double sigma_n2 = mu_x / lambda + sigma_e2 / (lambda * lambda);
  const double sy2 = sigma_x2 + sigma_n2;
  if (!(sy2 > 0.0)) throw DomainError("nll_point: non-positive total variance");
  const double d = y - mu_x;
  const double loss = d * d / (2.0 * sy2) + 0.5 * std::log(sy2);
  if (grads) {
    const double d_sy2 = -d * d / (2.0 * sy2 * sy2) + 0.5 / sy2;
    grads->d_mu = -d / sy2 + d_sy2 / lambda;
    grads->d_sigma_x2 = d_sy2;
    grads->d_lambda =
        d_sy2 * (-mu_x / (lambda * lambda) - 2.0 * sigma_e2 / (lambda * lambda * lambda));
    grads->d_sigma_e2 = d_sy2 / (lambda * lambda);
  }
  return loss;
}

double nll_loss(const std::vector<double>& y, const std::vector<double>& mu_x,
                const std::vector<double>& sigma_x2,
                const std::vector<double>& sigma_n2) {
  const std::size_t n = y.size();
  if (mu_x.size() != n || sigma_x2.size() != n || sigma_n2.size() != n || n == 0)
    throw ValidationError("nll_loss: shape mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double sy2 = sigma_x2[i] + sigma_n2[i];
    if (!(sy2 > 0.0)) throw DomainError("nll_loss: non-positive total variance");
    const double d = y[i] - mu_x[i];
    acc += d * d / (2.0 * sy2) + 0.5 * std::log(sy2);
  }
  return acc / double(n);
}

double mse_loss(const nn::Tensor& pred, const nn::Tensor& target, int margin,
                nn::Tensor* grad_pred) {
  if (!pred.same_shape(target))
    throw ValidationError("mse_loss: shape mismatch");
  const int r0 = margin, r1 = pred.h - margin, c0 = margin, c1 = pred.w - margin;
  if (r1 <= r0 || c1 <= c0)
    throw ValidationError("mse_loss: margin leaves no interior");
  const double n = double(pred.c) * (r1 - r0) * (c1 - c0);
  if (grad_pred) *grad_pred = nn::Tensor(pred.c, pred.h, pred.w);
  double acc = 0.0;
  for (int ch = 0; ch < pred.c; ++ch)
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) {
        const double d = double(pred.at(ch, r, c)) - double(target.at(ch, r, c));
        acc += d * d;
        if (grad_pred) grad_pred->at(ch, r, c) = float(2.0 * d / n);
      }
  return acc / n;
}

// --- pair generation ----------------------------------------------------------

std::pair<TransmissionStack, TransmissionStack> half2half_pair(
    const TransmissionStack& t, std::uint64_t seed) {
  if (!t.meta.has_flux())
    throw ValidationError("half2half_pair: incident flux unknown");
  if (int(t.meta.tube_current.size()) != t.frames)
    throw ValidationError("half2half_pair: tube current schedule length mismatch");
  TransmissionStack a = t, b = t;
  Rng rng(seed);
  const double se2 = t.meta.electronic_variance;
  for (int f = 0; f < t.frames; ++f)
    for (int r = 0; r < t.rows; ++r)
      for (int c = 0; c < t.cols; ++c) {
        const double i0 = t.meta.flux(f, c);
        const double tv = std::max(double(t.at(f, r, c)), 0.0);
        // v_half - v = T/I0 + 3 sigma_e^2/I0^2, always >= 0
        const double var = tv / i0 + 3.0 * se2 / (i0 * i0);
        const double e = rng.normal(0.0, std::sqrt(var));
        a.at(f, r, c) = float(double(t.at(f, r, c)) + e);
        b.at(f, r, c) = float(double(t.at(f, r, c)) - e);
      }
  for (auto* s : {&a, &b}) {
    for (auto& ma : s->meta.tube_current) ma *= 0.5;
    s->meta.dose_fraction *= 0.5;
  }
  return {std::move(a), std::move(b)};
}

// --- patch sampling --------------------------------------------------------------

PatchSampler::PatchSampler(std::vector<int> frame_pool, int rows, int cols,
                           int patch_size, std::uint64_t seed)
    : pool_(std::move(frame_pool)), rows_(rows), cols_(cols), patch_(patch_size),
      rng_(seed) {
  if (pool_.empty()) throw ValidationError("PatchSampler: empty frame pool");
  if (rows_ < patch_ || cols_ < patch_)
    throw ValidationError("PatchSampler: frames smaller than the patch size");
}

PatchIndex PatchSampler::next() {
  PatchIndex idx;
  idx.frame = pool_[std::size_t(rng_.uniform_int(0, std::int64_t(pool_.size()) - 1))];
  idx.r0 = int(rng_.uniform_int(0, rows_ - patch_));
  idx.c0 = int(rng_.uniform_int(0, cols_ - patch_));
  return idx;
}

nn::Tensor crop_patch(const FrameStack& stack, const PatchIndex& idx, int patch_size) {
  nn::Tensor out(1, patch_size, patch_size);
  for (int r = 0; r < patch_size; ++r)
    for (int c = 0; c < patch_size; ++c)
      out.at(0, r, c) = stack.at(idx.frame, idx.r0 + r, idx.c0 + c);
  return out;
}

networks::FrameWindow crop_window(const FrameStack& stack, const PatchIndex& idx,
                                  int patch_size, int k) {
  networks::FrameWindow w;
  w.k = k;
  auto clamped = [&](int f) {
    PatchIndex j = idx;
    j.frame = std::clamp(f, 0, stack.frames - 1);
    return crop_patch(stack, j, patch_size);
  };
  for (int j = k; j >= 1; --j) w.past.push_back(clamped(idx.frame - j));
  for (int j = k; j >= 1; --j) w.future.push_back(clamped(idx.frame + j));
  w.center = crop_patch(stack, idx, patch_size);
  return w;
}

// --- model wrapper ------------------------------------------------------------------

Model Model::create(const std::string& regime, const networks::NetConfig& cfg,
                    std::uint64_t seed) {
  Model m;
  m.regime = regime;
  m.net_cfg = cfg;
  if (regime == "n2ntd_anm" || regime == "n2ntd_mse_ablation") {
    m.n2ntd.emplace();
    m.n2ntd->init(cfg, seed);
  } else if (regime == "noise2void_4r") {
    m.bs4r.emplace();
    m.bs4r->init(cfg, seed);
  } else if (regime == "noise2clean") {
    m.n2c.emplace();
    m.n2c->init(cfg, seed);
  } else if (regime == "half2half") {
    m.h2h.emplace();
    m.h2h->init(cfg, seed);
  } else {
    throw ConfigError("unknown training regime '" + regime + "'");
  }
  return m;
}

std::vector<nn::Param*> Model::params() {
  if (n2ntd) return n2ntd->params();
  if (bs4r) return bs4r->params();
  if (n2c) return n2c->params();
  if (h2h) return h2h->params();
  throw ValidationError("Model::params: no network initialized");
}

container::Checkpoint Model::to_checkpoint(std::uint64_t seed) const {
  container::Checkpoint ckpt;
  ckpt.architecture = regime;
  ckpt.seed = seed;
  auto& hp = ckpt.hyperparams;
  hp["k"] = std::to_string(net_cfg.k);
  hp["feat_channels"] = std::to_string(net_cfg.feat_channels);
  hp["feat_depth"] = std::to_string(net_cfg.feat_depth);
  hp["lstm_channels"] = std::to_string(net_cfg.lstm_channels);
  hp["head_channels"] = std::to_string(net_cfg.head_channels);
  hp["head_depth"] = std::to_string(net_cfg.head_depth);
  hp["se_hidden"] = std::to_string(net_cfg.se_hidden);
  hp["trunk_depth"] = std::to_string(net_cfg.trunk_depth);
  hp["trunk_channels"] = std::to_string(net_cfg.trunk_channels);
  hp["mix_channels"] = std::to_string(net_cfg.mix_channels);
  hp["linear_mu"] = net_cfg.linear_mu ? "1" : "0";

  Model& self = const_cast<Model&>(*this);
  for (nn::Param* p : self.params()) {
    container::CheckpointTensor t;
    t.name = p->name;
    for (int d : p->shape) t.shape.push_back(d);
    t.values = p->value;
    ckpt.tensors.push_back(std::move(t));
  }
  if (noise) {
    hp["noise_n_cols"] = std::to_string(noise->n_cols());
    hp["noise_hidden"] = std::to_string(noise->hidden());
    hp["noise_frozen"] = noise->lambda_frozen() ? "1" : "0";
    hp["noise_constant"] = noise->constant_lambda_mode() ? "1" : "0";
    auto& nm = const_cast<noise_model::NoiseModel&>(*noise);
    for (const auto& nv : nm.named_parameters()) {
      container::CheckpointTensor t;
      t.name = nv.name;
      t.shape = {std::int64_t(nv.data->size())};
      t.values.reserve(nv.data->size());
      for (double x : *nv.data) t.values.push_back(float(x));
      ckpt.tensors.push_back(std::move(t));
    }
  }
  return ckpt;
}

Model Model::from_checkpoint(const container::Checkpoint& ckpt) {
  const auto& hp = ckpt.hyperparams;
  auto geti = [&](const std::string& key) {
    const auto it = hp.find(key);
    if (it == hp.end())
      throw ValidationError("checkpoint manifest missing hyperparam '" + key + "'");
    return std::stoi(it->second);
  };
  networks::NetConfig cfg;
  cfg.k = geti("k");
  cfg.feat_channels = geti("feat_channels");
  cfg.feat_depth = geti("feat_depth");
  cfg.lstm_channels = geti("lstm_channels");
  cfg.head_channels = geti("head_channels");
  cfg.head_depth = geti("head_depth");
  cfg.se_hidden = geti("se_hidden");
  cfg.trunk_depth = geti("trunk_depth");
  cfg.trunk_channels = geti("trunk_channels");
  cfg.mix_channels = geti("mix_channels");
  cfg.linear_mu = geti("linear_mu") != 0;

  Model m = create(ckpt.architecture, cfg, ckpt.seed);
  for (nn::Param* p : m.params()) {
    const auto* t = ckpt.find(p->name);
    if (!t) throw ValidationError("checkpoint missing tensor '" + p->name + "'");
    if (t->values.size() != p->value.size())
      throw ValidationError("checkpoint tensor '" + p->name + "' has wrong size");
    p->value = t->values;
  }
  if (hp.count("noise_n_cols")) {
    m.noise.emplace(geti("noise_n_cols"), geti("noise_hidden"));
    for (const auto& nv : m.noise->named_parameters()) {
      const auto* t = ckpt.find(nv.name);
      if (!t) throw ValidationError("checkpoint missing tensor '" + nv.name + "'");
      if (t->values.size() != nv.data->size())
        throw ValidationError("checkpoint tensor '" + nv.name + "' has wrong size");
      for (std::size_t i = 0; i < t->values.size(); ++i)
        (*nv.data)[i] = double(t->values[i]);
    }
    m.noise->set_lambda_frozen(geti("noise_frozen") != 0);
    m.noise->set_constant_lambda_mode(geti("noise_constant") != 0);
  }
  return m;
}

// --- training loop ----------------------------------------------------------------

namespace {

// per-sample noise-model gradient record, applied by the master in sample order
struct NoiseGrads {
  std::vector<std::pair<int, double>> lambda_by_col; // (column, dL/dlambda)
  double ma = 0.0;
  double sigma_e2 = 0.0;
};

struct TrainContext {
  const tomo_sim::SequenceDataset* data = nullptr;
  ProjectionStack noisy_proj;         // for the MSE-ablation / noise2clean inputs
  TransmissionStack half_a, half_b;   // half2half realizations
  int patch = 0, margin = 0, k = 0;
  double inv_batch = 1.0;
};

// Runs forward + loss (+ backward into the model's params when learn=true)
// for one patch sample. Gradients are pre-scaled by 1/batch.
double process_sample(Model& m, const TrainContext& ctx, const PatchIndex& idx,
                      bool learn, NoiseGrads* ng) {
  const int p = ctx.patch, margin = ctx.margin;
  const int r0 = margin, r1 = p - margin;
  const double n_int = double(r1 - r0) * double(r1 - r0);
  const double gscale = learn ? ctx.inv_batch / n_int : 0.0;
  const auto& noisy = ctx.data->noisy;

  if (m.regime == "n2ntd_anm" || m.regime == "noise2void_4r") {
    const double ma = noisy.meta.tube_current[std::size_t(idx.frame)];
    const double se2 = m.noise->sigma_e2();
    networks::PosteriorMaps maps;
    networks::N2ntdNet::Cache ncache;
    networks::Blindspot4rNet::Cache bcache;
    nn::Tensor center;
    if (m.regime == "n2ntd_anm") {
      auto window = crop_window(noisy, idx, p, ctx.k);
      center = window.center;
      maps = m.n2ntd->forward(window, &ncache);
    } else {
      center = crop_patch(noisy, idx, p);
      maps = m.bs4r->forward(center, &bcache);
    }
    if (ng) {
      ng->ma = ma;
      ng->lambda_by_col.assign(std::size_t(r1 - r0), {0, 0.0});
    }
    nn::Tensor g_mu(1, p, p), g_sigma(1, p, p);
    double loss = 0.0;
    for (int c = r0; c < r1; ++c) {
      const int col = idx.c0 + c;
      const double lambda = m.noise->lambda_of(col, ma);
      double g_lambda_col = 0.0;
      for (int r = r0; r < r1; ++r) {
        NllPointGrads g;
        loss += nll_point(double(center.at(0, r, c)), double(maps.mu_x.at(0, r, c)),
                          double(maps.sigma_x2.at(0, r, c)), lambda, se2,
                          learn ? &g : nullptr);
        if (learn) {
          g_mu.at(0, r, c) = float(g.d_mu * gscale);
          g_sigma.at(0, r, c) = float(g.d_sigma_x2 * gscale);
          g_lambda_col += g.d_lambda * gscale;
          if (ng) ng->sigma_e2 += g.d_sigma_e2 * gscale;
        }
      }
      if (learn && ng) ng->lambda_by_col[std::size_t(c - r0)] = {col, g_lambda_col};
    }
    if (learn) {
      if (m.regime == "n2ntd_anm")
        m.n2ntd->backward(ncache, g_mu, g_sigma);
      else
        m.bs4r->backward(bcache, g_mu, g_sigma);
    }
    return loss / n_int;
  }

  if (m.regime == "n2ntd_mse_ablation") {
    auto window = crop_window(noisy, idx, p, ctx.k);
    networks::N2ntdNet::Cache cache;
    auto maps = m.n2ntd->forward(window, &cache);
    // compare in the projection domain: -ln(T), both sides clamped
    nn::Tensor pred_p(1, p, p), target_p(1, p, p);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) {
        pred_p.at(0, r, c) =
            float(-std::log(std::max(double(maps.mu_x.at(0, r, c)), kLogClamp)));
        target_p.at(0, r, c) =
            float(-std::log(std::max(double(window.center.at(0, r, c)), kLogClamp)));
      }
    nn::Tensor g_pred;
    const double loss = mse_loss(pred_p, target_p, margin, learn ? &g_pred : nullptr);
    if (learn) {
      nn::Tensor g_mu(1, p, p), g_sigma(1, p, p);
      for (int r = r0; r < r1; ++r)
        for (int c = r0; c < r1; ++c) {
          const double mu = double(maps.mu_x.at(0, r, c));
          if (mu > kLogClamp)
            g_mu.at(0, r, c) = float(double(g_pred.at(0, r, c)) * (-1.0 / mu) * ctx.inv_batch);
        }
      m.n2ntd->backward(cache, g_mu, g_sigma);
    }
    return loss;
  }

  if (m.regime == "noise2clean") {
    auto window = crop_window(ctx.noisy_proj, idx, p, ctx.k);
    // noise-level map: projection-domain noise stddev estimate per pixel
    nn::Tensor nmap(1, p, p);
    const double se2 = noisy.meta.electronic_variance;
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) {
        const double i0 = noisy.meta.flux(idx.frame, idx.c0 + c);
        const double tv =
            std::max(double(noisy.at(idx.frame, idx.r0 + r, idx.c0 + c)),
                     ct_physics::kTransmissionClamp);
        const double var_t = tv / i0 + se2 / (i0 * i0);
        nmap.at(0, r, c) = float(std::sqrt(var_t) / tv);
      }
    networks::Noise2CleanNet::Cache cache;
    auto out = m.n2c->forward(window, nmap, &cache);
    const auto target = crop_patch(ctx.data->clean, idx, p);
    nn::Tensor g_out;
    const double loss = mse_loss(out, target, margin, learn ? &g_out : nullptr);
    if (learn) {
      for (auto& g : g_out.v) g = float(double(g) * ctx.inv_batch);
      m.n2c->backward(cache, g_out);
    }
    return loss;
  }

  if (m.regime == "half2half") {
    const auto input = crop_patch(ctx.half_a, idx, p);
    const auto target = crop_patch(ctx.half_b, idx, p);
    networks::Half2HalfNet::Cache cache;
    auto out = m.h2h->forward(input, &cache);
    nn::Tensor g_out;
    const double loss = mse_loss(out, target, margin, learn ? &g_out : nullptr);
    if (learn) {
      for (auto& g : g_out.v) g = float(double(g) * ctx.inv_batch);
      m.h2h->backward(cache, g_out);
    }
    return loss;
  }

  throw ConfigError("unknown training regime '" + m.regime + "'");
}

void zero_all(Model& m) {
  for (nn::Param* p : m.params()) p->zero_grad();
  if (m.noise) m.noise->zero_grad();
}

void copy_weights(Model& dst, Model& src) {
  auto dp = dst.params();
  auto sp = src.params();
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i]->value = sp[i]->value;
  if (src.noise) dst.noise = src.noise;
}

} // namespace

TrainResult train(Model& model, const tomo_sim::SequenceDataset& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.regime != model.regime)
    throw ConfigError("regime '" + cfg.regime + "' does not match model '" +
                      model.regime + "'");
  if (regime_uses_noise_model(cfg.regime) && !model.noise)
    throw ConfigError("regime '" + cfg.regime + "' requires an attached noise model");

  const auto& noisy = data.noisy;
  const int frames = noisy.frames;
  const int window_margin = regime_uses_window(cfg.regime) ? model.net_cfg.k : 0;
  if (frames < 2 * window_margin + 1)
    throw ValidationError("dataset has fewer frames than the model window needs");
  if (noisy.rows < cfg.patch_size || noisy.cols < cfg.patch_size)
    throw ValidationError("dataset frames are smaller than the patch size");

  TrainContext ctx;
  ctx.data = &data;
  ctx.patch = cfg.patch_size;
  ctx.margin = cfg.margin;
  ctx.k = model.net_cfg.k;
  ctx.inv_batch = 1.0 / double(cfg.batch_size);
  if (cfg.regime == "n2ntd_mse_ablation" || cfg.regime == "noise2clean")
    ctx.noisy_proj = ct_physics::transmission_to_projection(noisy);
  if (cfg.regime == "half2half") {
    auto pair = half2half_pair(noisy, cfg.seed ^ 0x68326832ULL);
    ctx.half_a = std::move(pair.first);
    ctx.half_b = std::move(pair.second);
  }

  // validation split: every 20th eligible frame
  std::vector<int> train_pool, val_pool;
  for (int f = window_margin; f < frames - window_margin; ++f)
    ((f % 20 == 0) ? val_pool : train_pool).push_back(f);
  if (train_pool.empty()) throw ValidationError("no training frames after the split");

  if (model.noise) model.noise->set_lambda_frozen(cfg.freeze_noise_layers);

  PatchSampler sampler(train_pool, noisy.rows, noisy.cols, cfg.patch_size, cfg.seed);
  nn::Adam adam;
  adam.lr = cfg.learning_rate;
  auto params = model.params();

  // fixed deterministic validation crops: three column positions per frame,
  // placed at the quartiles so each crop overlaps the detector region that
  // actually sees the object rather than the air columns at the borders
  std::vector<PatchIndex> val_crops;
  for (int f : val_pool) {
    const int rmid = (noisy.rows - cfg.patch_size) / 2;
    const int span = noisy.cols - cfg.patch_size;
    for (int c0 : {span / 4, span / 2, (3 * span) / 4})
      val_crops.push_back({f, rmid, c0});
  }
  if (val_crops.empty())
    val_crops.push_back({train_pool.front(), 0, 0}); // tiny datasets: proxy validation

  auto eval_val = [&]() {
    double acc = 0.0;
    for (const auto& idx : val_crops)
      acc += process_sample(model, ctx, idx, false, nullptr);
    return acc / double(val_crops.size());
  };

  const int workers = std::max(1, cfg.workers);
  std::vector<Model> clones;
  if (workers > 1) clones.assign(std::size_t(workers), model);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      std::vector<PatchIndex> batch(std::size_t(cfg.batch_size));
      for (auto& idx : batch) idx = sampler.next();

      std::vector<double> losses(batch.size(), 0.0);
      std::vector<NoiseGrads> records(batch.size());
      const bool want_noise = regime_uses_noise_model(cfg.regime);
      zero_all(model);

      if (workers == 1) {
        for (std::size_t s = 0; s < batch.size(); ++s)
          losses[s] = process_sample(model, ctx, batch[s], true,
                                     want_noise ? &records[s] : nullptr);
      } else {
        for (auto& clone : clones) {
          copy_weights(clone, model);
          zero_all(clone);
        }
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
          pool.emplace_back([&, w] {
            for (std::size_t s = std::size_t(w); s < batch.size(); s += std::size_t(workers))
              losses[s] = process_sample(clones[std::size_t(w)], ctx, batch[s], true,
                                         want_noise ? &records[s] : nullptr);
          });
        for (auto& th : pool) th.join();
        // reduce clone gradients into the master in fixed worker order
        for (int w = 0; w < workers; ++w) {
          auto cp = clones[std::size_t(w)].params();
          for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < params[i]->grad.size(); ++j)
              params[i]->grad[j] += cp[i]->grad[j];
        }
      }

      if (want_noise && model.noise) {
        for (const auto& rec : records) {
          for (const auto& [col, g] : rec.lambda_by_col)
            if (g != 0.0) model.noise->lambda_backward(col, rec.ma, g);
          model.noise->sigma_e2_backward(rec.sigma_e2);
        }
      }

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= double(batch.size());
      if (!std::isfinite(batch_loss))
        throw DomainError("training aborted: non-finite loss at epoch " +
                          std::to_string(epoch) + " step " + std::to_string(step) +
                          " (frame " + std::to_string(batch[0].frame) + ")");
      epoch_loss += batch_loss;

      adam.step(params);
      if (model.noise && regime_uses_noise_model(cfg.regime))
        model.noise->adam_step(adam.lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / double(cfg.steps_per_epoch);
    rec.val_loss = eval_val();
    rec.lr = cfg.learning_rate;
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.log.push_back(rec);
    result.epochs_run = epoch;

    if (!std::isfinite(rec.val_loss))
      throw DomainError("training aborted: non-finite validation loss at epoch " +
                        std::to_string(epoch));
    if (!std::isfinite(best_val) ||
        rec.val_loss < best_val - 0.001 * std::abs(best_val)) {
      best_val = rec.val_loss;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
    }
    if (bad_epochs >= cfg.plateau_patience) break;
  }
  result.best_val_loss = best_val;
  return result;
}

std::string epoch_log_json(const std::vector<EpochRecord>& log) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : log)
    arr.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"val_loss", r.val_loss},
                   {"lr", r.lr},
                   {"wall_time_s", r.wall_time_s}});
  return arr.dump(2);
}

} // namespace sd::training
