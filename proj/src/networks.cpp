#include "sinodenoise/networks.hpp"

#include "sinodenoise/ct_physics.hpp" // error types

#include <cmath>

namespace sd::networks {

using nn::Tensor;

void ConvStack::init(const std::string& name, const std::vector<int>& widths, int kernel,
                     bool causal, Rng& rng) {
  layers.clear();
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    nn::Conv2d conv;
    const std::string lname = name + ".conv" + std::to_string(i);
    if (causal)
      conv.init_causal(lname, widths[i], widths[i + 1], kernel, rng);
    else
      conv.init(lname, widths[i], widths[i + 1], kernel, rng);
    layers.push_back(std::move(conv));
  }
}

Tensor ConvStack::forward(const Tensor& x, Cache* cache) const {
  if (cache) {
    cache->conv.assign(layers.size(), {});
    cache->relu_out.clear();
  }
  Tensor cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cur = nn::conv2d_forward(layers[i], cur, cache ? &cache->conv[i] : nullptr);
    if (i + 1 < layers.size()) {
      cur = nn::relu_forward(cur);
      if (cache) cache->relu_out.push_back(cur);
    }
  }
  return cur;
}

Tensor ConvStack::backward(Cache& cache, const Tensor& gy) {
  Tensor g = gy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) g = nn::relu_backward(cache.relu_out[i], g);
    g = nn::conv2d_backward(layers[i], cache.conv[i], g);
  }
  return g;
}

void ConvStack::collect(std::vector<nn::Param*>& out) {
  for (auto& l : layers) out.push_back(&l.w);
}

std::size_t total_param_count(const std::vector<nn::Param*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

namespace {

std::vector<int> repeat_widths(int cin, int mid, int depth, int cout) {
  std::vector<int> widths{cin};
  for (int i = 0; i < depth - 1; ++i) widths.push_back(mid);
  widths.push_back(cout);
  return widths;
}

// split the 2-channel head output into activated (mu, sigma_x2) maps
PosteriorMaps apply_heads(const Tensor& raw, bool linear_mu, Tensor* raw_mu_out,
                          Tensor* raw_sigma_out) {
  auto parts = nn::split_channels(raw, {1, 1});
  PosteriorMaps maps;
  maps.mu_x = linear_mu ? parts[0] : nn::softplus_forward(parts[0]);
  maps.sigma_x2 = nn::softplus_forward(parts[1]);
  for (auto& v : maps.sigma_x2.v) v += kSigmaFloor;
  if (raw_mu_out) *raw_mu_out = maps.mu_x; // post-activation (enough for backward)
  if (raw_sigma_out) {
    *raw_sigma_out = maps.sigma_x2;
    for (auto& v : raw_sigma_out->v) v -= kSigmaFloor; // softplus output
  }
  return maps;
}

Tensor heads_backward(const Tensor& act_mu, const Tensor& act_sigma, bool linear_mu,
                      const Tensor& g_mu, const Tensor& g_sigma) {
  Tensor g0 = linear_mu ? g_mu : nn::softplus_backward(act_mu, g_mu);
  Tensor g1 = nn::softplus_backward(act_sigma, g_sigma);
  return nn::concat_channels({&g0, &g1});
}

} // namespace

// ---------------------------------------------------------------------------

void N2ntdNet::init(const NetConfig& cfg, std::uint64_t seed) {
  cfg_ = cfg;
  Rng rng(seed);
  extractor_.init("extractor",
                  repeat_widths(1, cfg.feat_channels, cfg.feat_depth, cfg.feat_channels),
                  3, false, rng);
  lstm_.init("lstm", cfg.feat_channels, cfg.lstm_channels, rng);
  se_.init("se", 2 * cfg.lstm_channels, cfg.se_hidden, rng);
  head_.init("head",
             repeat_widths(2 * cfg.lstm_channels, cfg.head_channels, cfg.head_depth, 2),
             3, false, rng);
}

Tensor N2ntdNet::features(const Tensor& frame) const {
  return extractor_.forward(frame, nullptr);
}

PosteriorMaps N2ntdNet::forward(const FrameWindow& window, Cache* cache) const {
  if ((int)window.past.size() != cfg_.k || (int)window.future.size() != cfg_.k)
    throw ValidationError("n2ntd forward: window must carry k past and k future frames");

  const int k = cfg_.k;
  if (cache) {
    cache->past_feat.assign((std::size_t)k, {});
    cache->future_feat.assign((std::size_t)k, {});
    cache->past_steps.assign((std::size_t)k, {});
    cache->future_steps.assign((std::size_t)k, {});
  }

  nn::ConvLSTMState past_state, future_state;
  for (int i = 0; i < k; ++i) {
    Tensor f = extractor_.forward(window.past[(std::size_t)i],
                                  cache ? &cache->past_feat[(std::size_t)i] : nullptr);
    past_state = nn::convlstm_step(lstm_, f, past_state,
                                   cache ? &cache->past_steps[(std::size_t)i] : nullptr);
  }
  for (int i = 0; i < k; ++i) {
    Tensor f = extractor_.forward(window.future[(std::size_t)i],
                                  cache ? &cache->future_feat[(std::size_t)i] : nullptr);
    future_state = nn::convlstm_step(lstm_, f, future_state,
                                     cache ? &cache->future_steps[(std::size_t)i] : nullptr);
  }

  Tensor fused = nn::concat_channels({&past_state.h, &future_state.h});
  nn::SECache local_se;
  fused = nn::se_forward(se_, fused, cache ? &cache->se : &local_se);
  Tensor raw = head_.forward(fused, cache ? &cache->head : nullptr);
  return apply_heads(raw, cfg_.linear_mu, cache ? &cache->raw_mu : nullptr,
                     cache ? &cache->raw_sigma : nullptr);
}

void N2ntdNet::backward(Cache& cache, const Tensor& g_mu, const Tensor& g_sigma,
                        std::vector<Tensor>* g_past, std::vector<Tensor>* g_future) {
  Tensor g_raw = heads_backward(cache.raw_mu, cache.raw_sigma, cfg_.linear_mu, g_mu, g_sigma);
  Tensor g_fused = head_.backward(cache.head, g_raw);
  g_fused = nn::se_backward(se_, cache.se, g_fused);
  auto branch_grads = nn::split_channels(g_fused, {cfg_.lstm_channels, cfg_.lstm_channels});

  const int k = cfg_.k;
  auto bptt = [&](std::vector<nn::ConvLSTMStepCache>& steps,
                  std::vector<ConvStack::Cache>& feats, const Tensor& g_final_h,
                  std::vector<Tensor>* g_frames) {
    Tensor gh = g_final_h;
    Tensor gc; // empty = zero
    if (g_frames) g_frames->assign((std::size_t)k, {});
    for (int i = k - 1; i >= 0; --i) {
      Tensor gx, gh_prev, gc_prev;
      nn::convlstm_step_backward(lstm_, steps[(std::size_t)i], gh, gc, &gx, &gh_prev, &gc_prev);
      Tensor g_frame = extractor_.backward(feats[(std::size_t)i], gx);
      if (g_frames) (*g_frames)[(std::size_t)i] = std::move(g_frame);
      gh = std::move(gh_prev);
      gc = std::move(gc_prev);
    }
  };
  bptt(cache.past_steps, cache.past_feat, branch_grads[0], g_past);
  bptt(cache.future_steps, cache.future_feat, branch_grads[1], g_future);
}

std::vector<nn::Param*> N2ntdNet::params() {
  std::vector<nn::Param*> out;
  extractor_.collect(out);
  out.push_back(&lstm_.gates.w);
  out.push_back(&se_.w1);
  out.push_back(&se_.b1);
  out.push_back(&se_.w2);
  out.push_back(&se_.b2);
  head_.collect(out);
  return out;
}

// ---------------------------------------------------------------------------

void Blindspot4rNet::init(const NetConfig& cfg, std::uint64_t seed) {
  cfg_ = cfg;
  Rng rng(seed);
  trunk_.init("trunk",
              repeat_widths(1, cfg.trunk_channels, cfg.trunk_depth, cfg.trunk_channels),
              3, /*causal=*/true, rng);
  mix_.init("mix", {4 * cfg.trunk_channels, cfg.mix_channels, 2}, 1, false, rng);
}

PosteriorMaps Blindspot4rNet::forward(const Tensor& frame, Cache* cache) const {
  if (frame.c != 1) throw ValidationError("blindspot4r: expected a single-channel frame");
  if (cache) cache->branch.assign(4, {});

  std::vector<Tensor> branches;
  branches.reserve(4);
  for (int b = 0; b < 4; ++b) {
    Tensor rotated = nn::rot90(frame, b);
    Tensor f = trunk_.forward(rotated, cache ? &cache->branch[(std::size_t)b] : nullptr);
    f = nn::shift_down(f);
    branches.push_back(nn::rot90(f, -b));
  }
  std::vector<const Tensor*> ptrs;
  for (auto& b : branches) ptrs.push_back(&b);
  Tensor combined = nn::concat_channels(ptrs);
  Tensor raw = mix_.forward(combined, cache ? &cache->mix : nullptr);
  return apply_heads(raw, cfg_.linear_mu, cache ? &cache->raw_mu : nullptr,
                     cache ? &cache->raw_sigma : nullptr);
}

Tensor Blindspot4rNet::backward(Cache& cache, const Tensor& g_mu, const Tensor& g_sigma) {
  Tensor g_raw = heads_backward(cache.raw_mu, cache.raw_sigma, cfg_.linear_mu, g_mu, g_sigma);
  Tensor g_combined = mix_.backward(cache.mix, g_raw);

  std::vector<int> sizes(4, cfg_.trunk_channels);
  auto branch_grads = nn::split_channels(g_combined, sizes);

  Tensor g_frame;
  for (int b = 0; b < 4; ++b) {
    Tensor g = nn::rot90(branch_grads[(std::size_t)b], b); // undo de-rotation
    g = nn::shift_down_backward(g);
    Tensor gb = trunk_.backward(cache.branch[(std::size_t)b], g);
    gb = nn::rot90(gb, -b); // back to the original orientation
    if (g_frame.size() == 0)
      g_frame = std::move(gb);
    else
      for (std::size_t i = 0; i < g_frame.v.size(); ++i) g_frame.v[i] += gb.v[i];
  }
  return g_frame;
}

std::vector<nn::Param*> Blindspot4rNet::params() {
  std::vector<nn::Param*> out;
  trunk_.collect(out);
  mix_.collect(out);
  return out;
}

// ---------------------------------------------------------------------------

void Noise2CleanNet::init(const NetConfig& cfg, std::uint64_t seed) {
  cfg_ = cfg;
  Rng rng(seed);
  trunk_.init("trunk",
              repeat_widths(2 * cfg.k + 2, cfg.trunk_channels, cfg.trunk_depth, 1),
              3, false, rng);
}

Tensor Noise2CleanNet::forward(const FrameWindow& window, const Tensor& noise_level_map,
                               Cache* cache) const {
  if (noise_level_map.size() == 0)
    throw ValidationError("noise2clean: noise level map is required");
  if ((int)window.past.size() != cfg_.k || (int)window.future.size() != cfg_.k)
    throw ValidationError("noise2clean: window must carry k past and k future frames");
  std::vector<const Tensor*> channels;
  channels.push_back(&window.center);
  for (const auto& t : window.past) channels.push_back(&t);
  for (const auto& t : window.future) channels.push_back(&t);
  channels.push_back(&noise_level_map);
  Tensor input = nn::concat_channels(channels);
  Tensor residual = trunk_.forward(input, cache ? &cache->trunk : nullptr);
  if (cache) cache->center = window.center;
  Tensor out = window.center;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= residual.v[i];
  return out;
}

void Noise2CleanNet::backward(Cache& cache, const Tensor& g_out) {
  Tensor g_resid = g_out;
  for (auto& v : g_resid.v) v = -v;
  trunk_.backward(cache.trunk, g_resid);
}

std::vector<nn::Param*> Noise2CleanNet::params() {
  std::vector<nn::Param*> out;
  trunk_.collect(out);
  return out;
}

// ---------------------------------------------------------------------------

void Half2HalfNet::init(const NetConfig& cfg, std::uint64_t seed) {
  cfg_ = cfg;
  Rng rng(seed);
  trunk_.init("trunk", repeat_widths(1, cfg.trunk_channels, cfg.trunk_depth, 1),
              3, false, rng);
}

Tensor Half2HalfNet::forward(const Tensor& frame, Cache* cache) const {
  return trunk_.forward(frame, cache ? &cache->trunk : nullptr);
}

void Half2HalfNet::backward(Cache& cache, const Tensor& g_out) {
  trunk_.backward(cache.trunk, g_out);
}

std::vector<nn::Param*> Half2HalfNet::params() {
  std::vector<nn::Param*> out;
  trunk_.collect(out);
  return out;
}

} // namespace sd::networks
