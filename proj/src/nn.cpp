#include "sinodenoise/nn.hpp"

#include "sinodenoise/ct_physics.hpp" // error types

#include <cmath>
#include <numeric>

namespace sd::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

void Param::init(const std::string& n, std::vector<int> s) {
  name = n;
  shape = std::move(s);
  std::size_t sz = 1;
  for (int d : shape) sz *= (std::size_t)d;
  value.assign(sz, 0.0f);
  grad.assign(sz, 0.0f);
  adam_m.assign(sz, 0.0f);
  adam_v.assign(sz, 0.0f);
}

void he_normal_init(Param& p, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / std::max(1, fan_in));
  for (auto& v : p.value) v = (float)rng.normal(0.0, stddev);
}

void Adam::step(const std::vector<Param*>& params) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, (double)t);
  const double bc2 = 1.0 - std::pow(beta2, (double)t);
  for (Param* p : params) {
    if (p->frozen) continue;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = (float)(beta1 * p->adam_m[i] + (1.0 - beta1) * g);
      p->adam_v[i] = (float)(beta2 * p->adam_v[i] + (1.0 - beta2) * g * g);
      const double mhat = p->adam_m[i] / bc1;
      const double vhat = p->adam_v[i] / bc2;
      p->value[i] -= (float)(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// ---------------------------------------------------------------------------

void Conv2d::init(const std::string& name, int cin_, int cout_, int k, Rng& rng) {
  cin = cin_;
  cout = cout_;
  kh = kw = k;
  pad_top = pad_bottom = pad_left = pad_right = k / 2;
  w.init(name, {cout, cin, kh, kw});
  he_normal_init(w, cin * kh * kw, rng);
}

void Conv2d::init_causal(const std::string& name, int cin_, int cout_, int k, Rng& rng) {
  // vertical half-plane receptive field: pad the full kernel height above,
  // nothing below, so output row r sees input rows <= r
  cin = cin_;
  cout = cout_;
  kh = kw = k;
  pad_top = k - 1;
  pad_bottom = 0;
  pad_left = pad_right = k / 2;
  w.init(name, {cout, cin, kh, kw});
  he_normal_init(w, cin * kh * kw, rng);
}

Tensor conv2d_forward(const Conv2d& conv, const Tensor& x, ConvCache* cache) {
  if (x.c != conv.cin)
    throw ValidationError("conv2d: input channels " + std::to_string(x.c) +
                          " != expected " + std::to_string(conv.cin));
  const int ho = conv.out_h(x.h), wo = conv.out_w(x.w);
  const int kdim = conv.cin * conv.kh * conv.kw;

  Eigen::MatrixXf local_col;
  Eigen::MatrixXf& col = cache ? cache->col : local_col;
  col.resize(kdim, (Eigen::Index)ho * wo);
  if (cache) {
    cache->h_in = x.h;
    cache->w_in = x.w;
  }

  for (int r = 0; r < ho; ++r) {
    for (int cidx = 0; cidx < wo; ++cidx) {
      float* dst = col.data() + (std::size_t)(r * wo + cidx) * kdim;
      std::size_t k = 0;
      for (int ch = 0; ch < conv.cin; ++ch)
        for (int i = 0; i < conv.kh; ++i) {
          const int rr = r + i - conv.pad_top;
          for (int j = 0; j < conv.kw; ++j, ++k) {
            const int cc = cidx + j - conv.pad_left;
            dst[k] = (rr >= 0 && rr < x.h && cc >= 0 && cc < x.w) ? x.at(ch, rr, cc) : 0.0f;
          }
        }
    }
  }

  Tensor y(conv.cout, ho, wo);
  ConstRowMap wmap(conv.w.value.data(), conv.cout, kdim);
  RowMap ymap(y.v.data(), conv.cout, (Eigen::Index)ho * wo);
  ymap.noalias() = wmap * col;
  return y;
}

Tensor conv2d_backward(Conv2d& conv, const ConvCache& cache, const Tensor& gy) {
  const int ho = gy.h, wo = gy.w;
  const int kdim = conv.cin * conv.kh * conv.kw;
  ConstRowMap gymap(gy.v.data(), conv.cout, (Eigen::Index)ho * wo);

  RowMap gwmap(conv.w.grad.data(), conv.cout, kdim);
  gwmap.noalias() += gymap * cache.col.transpose();

  ConstRowMap wmap(conv.w.value.data(), conv.cout, kdim);
  Eigen::MatrixXf gcol = wmap.transpose() * gymap; // kdim x (ho*wo)

  Tensor gx(conv.cin, cache.h_in, cache.w_in);
  for (int r = 0; r < ho; ++r) {
    for (int cidx = 0; cidx < wo; ++cidx) {
      const float* src = gcol.data() + (std::size_t)(r * wo + cidx) * kdim;
      std::size_t k = 0;
      for (int ch = 0; ch < conv.cin; ++ch)
        for (int i = 0; i < conv.kh; ++i) {
          const int rr = r + i - conv.pad_top;
          for (int j = 0; j < conv.kw; ++j, ++k) {
            const int cc = cidx + j - conv.pad_left;
            if (rr >= 0 && rr < gx.h && cc >= 0 && cc < gx.w) gx.at(ch, rr, cc) += src[k];
          }
        }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.v.size(); ++i)
    if (y.v[i] <= 0.0f) gx.v[i] = 0.0f;
  return gx;
}

Tensor sigmoid_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.v) v = 1.0f / (1.0f + std::exp(-v));
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] *= y.v[i] * (1.0f - y.v[i]);
  return gx;
}

Tensor tanh_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.v) v = std::tanh(v);
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] *= 1.0f - y.v[i] * y.v[i];
  return gx;
}

Tensor softplus_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.v) {
    // numerically stable log(1 + exp(v))
    v = v > 20.0f ? v : std::log1p(std::exp(std::min(v, 20.0f)));
  }
  return y;
}

Tensor softplus_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  // d softplus/dx = sigmoid(x) = 1 - exp(-y)
  for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] *= 1.0f - std::exp(-y.v[i]);
  return gx;
}

// ---------------------------------------------------------------------------

void ConvLSTMCell::init(const std::string& name, int cin_, int ch_, Rng& rng) {
  cin = cin_;
  ch = ch_;
  gates.init(name + ".gates", cin + ch, 4 * ch, 3, rng);
}

ConvLSTMState convlstm_step(const ConvLSTMCell& cell, const Tensor& x,
                            const ConvLSTMState& state, ConvLSTMStepCache* cache) {
  Tensor h = state.h, c = state.c;
  if (h.size() == 0) h = Tensor(cell.ch, x.h, x.w);
  if (c.size() == 0) c = Tensor(cell.ch, x.h, x.w);
  if (h.h != x.h || h.w != x.w)
    throw ValidationError("convlstm_step: state shape does not match input");

  Tensor xh = concat_channels({&x, &h});
  ConvCache local;
  Tensor z = conv2d_forward(cell.gates, xh, cache ? &cache->conv : &local);
  auto parts = split_channels(z, {cell.ch, cell.ch, cell.ch, cell.ch});
  Tensor gi = sigmoid_forward(parts[0]);
  Tensor gf = sigmoid_forward(parts[1]);
  Tensor go = sigmoid_forward(parts[2]);
  Tensor gg = tanh_forward(parts[3]);

  ConvLSTMState out;
  out.c = Tensor(cell.ch, x.h, x.w);
  for (std::size_t i = 0; i < out.c.v.size(); ++i)
    out.c.v[i] = gf.v[i] * c.v[i] + gi.v[i] * gg.v[i];
  Tensor tc = tanh_forward(out.c);
  out.h = Tensor(cell.ch, x.h, x.w);
  for (std::size_t i = 0; i < out.h.v.size(); ++i) out.h.v[i] = go.v[i] * tc.v[i];

  if (cache) {
    cache->xh = std::move(xh);
    cache->gi = std::move(gi);
    cache->gf = std::move(gf);
    cache->go = std::move(go);
    cache->gg = std::move(gg);
    cache->c_prev = std::move(c);
    cache->c_new = out.c;
    cache->tanh_c = std::move(tc);
  }
  return out;
}

void convlstm_step_backward(ConvLSTMCell& cell, const ConvLSTMStepCache& cache,
                            const Tensor& gh, const Tensor& gc,
                            Tensor* gx, Tensor* gh_prev, Tensor* gc_prev) {
  const std::size_t n = cache.gi.v.size();
  Tensor d_tc = cache.go; // gh * go
  for (std::size_t i = 0; i < n; ++i) d_tc.v[i] = gh.v[i] * cache.go.v[i];
  Tensor d_c = tanh_backward(cache.tanh_c, d_tc);
  if (gc.size() != 0)
    for (std::size_t i = 0; i < n; ++i) d_c.v[i] += gc.v[i];

  Tensor d_go_pre(cache.go.c, cache.go.h, cache.go.w);
  Tensor d_gi_pre = d_go_pre, d_gf_pre = d_go_pre, d_gg_pre = d_go_pre;
  for (std::size_t i = 0; i < n; ++i) {
    const float d_go = gh.v[i] * cache.tanh_c.v[i];
    d_go_pre.v[i] = d_go * cache.go.v[i] * (1.0f - cache.go.v[i]);
    const float d_gi = d_c.v[i] * cache.gg.v[i];
    d_gi_pre.v[i] = d_gi * cache.gi.v[i] * (1.0f - cache.gi.v[i]);
    const float d_gf = d_c.v[i] * cache.c_prev.v[i];
    d_gf_pre.v[i] = d_gf * cache.gf.v[i] * (1.0f - cache.gf.v[i]);
    const float d_gg = d_c.v[i] * cache.gi.v[i];
    d_gg_pre.v[i] = d_gg * (1.0f - cache.gg.v[i] * cache.gg.v[i]);
  }

  Tensor gz = concat_channels({&d_gi_pre, &d_gf_pre, &d_go_pre, &d_gg_pre});
  Tensor gxh = conv2d_backward(cell.gates, cache.conv, gz);
  auto parts = split_channels(gxh, {cell.cin, cell.ch});
  if (gx) *gx = std::move(parts[0]);
  if (gh_prev) *gh_prev = std::move(parts[1]);
  if (gc_prev) {
    *gc_prev = Tensor(cache.c_prev.c, cache.c_prev.h, cache.c_prev.w);
    for (std::size_t i = 0; i < n; ++i) gc_prev->v[i] = d_c.v[i] * cache.gf.v[i];
  }
}

// ---------------------------------------------------------------------------

void SEBlock::init(const std::string& name, int channels_, int hidden_, Rng& rng) {
  channels = channels_;
  hidden = hidden_;
  w1.init(name + ".w1", {hidden, channels});
  b1.init(name + ".b1", {hidden});
  w2.init(name + ".w2", {channels, hidden});
  b2.init(name + ".b2", {channels});
  he_normal_init(w1, channels, rng);
  he_normal_init(w2, hidden, rng);
}

Tensor se_forward(const SEBlock& se, const Tensor& x, SECache* cache) {
  if (x.c != se.channels) throw ValidationError("se_forward: channel mismatch");
  const std::size_t hw = (std::size_t)x.h * x.w;
  std::vector<float> pooled((std::size_t)x.c);
  for (int ch = 0; ch < x.c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x.v[(std::size_t)ch * hw + i];
    pooled[(std::size_t)ch] = (float)(s / (double)hw);
  }
  std::vector<float> z1((std::size_t)se.hidden), a1((std::size_t)se.hidden);
  for (int i = 0; i < se.hidden; ++i) {
    double s = se.b1.value[(std::size_t)i];
    for (int j = 0; j < se.channels; ++j)
      s += se.w1.value[(std::size_t)i * se.channels + j] * pooled[(std::size_t)j];
    z1[(std::size_t)i] = (float)s;
    a1[(std::size_t)i] = (float)std::max(0.0, s);
  }
  std::vector<float> gates((std::size_t)se.channels);
  for (int i = 0; i < se.channels; ++i) {
    double s = se.b2.value[(std::size_t)i];
    for (int j = 0; j < se.hidden; ++j)
      s += se.w2.value[(std::size_t)i * se.hidden + j] * a1[(std::size_t)j];
    gates[(std::size_t)i] = (float)(1.0 / (1.0 + std::exp(-s)));
  }
  Tensor y = x;
  for (int ch = 0; ch < x.c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) y.v[(std::size_t)ch * hw + i] *= gates[(std::size_t)ch];
  if (cache) {
    cache->x = x;
    cache->pooled = std::move(pooled);
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
    cache->gates = std::move(gates);
  }
  return y;
}

Tensor se_backward(SEBlock& se, const SECache& cache, const Tensor& gy) {
  const Tensor& x = cache.x;
  const std::size_t hw = (std::size_t)x.h * x.w;

  Tensor gx = gy;
  std::vector<float> g_gate((std::size_t)se.channels, 0.0f);
  for (int ch = 0; ch < x.c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t idx = (std::size_t)ch * hw + i;
      s += (double)gy.v[idx] * x.v[idx];
      gx.v[idx] *= cache.gates[(std::size_t)ch];
    }
    g_gate[(std::size_t)ch] = (float)s;
  }

  std::vector<float> g_logit((std::size_t)se.channels);
  for (int i = 0; i < se.channels; ++i) {
    const float g = cache.gates[(std::size_t)i];
    g_logit[(std::size_t)i] = g_gate[(std::size_t)i] * g * (1.0f - g);
  }

  std::vector<float> g_a1((std::size_t)se.hidden, 0.0f);
  for (int i = 0; i < se.channels; ++i) {
    se.b2.grad[(std::size_t)i] += g_logit[(std::size_t)i];
    for (int j = 0; j < se.hidden; ++j) {
      se.w2.grad[(std::size_t)i * se.hidden + j] += g_logit[(std::size_t)i] * cache.a1[(std::size_t)j];
      g_a1[(std::size_t)j] += se.w2.value[(std::size_t)i * se.hidden + j] * g_logit[(std::size_t)i];
    }
  }

  std::vector<float> g_pooled((std::size_t)se.channels, 0.0f);
  for (int i = 0; i < se.hidden; ++i) {
    if (cache.z1[(std::size_t)i] <= 0.0f) continue;
    se.b1.grad[(std::size_t)i] += g_a1[(std::size_t)i];
    for (int j = 0; j < se.channels; ++j) {
      se.w1.grad[(std::size_t)i * se.channels + j] += g_a1[(std::size_t)i] * cache.pooled[(std::size_t)j];
      g_pooled[(std::size_t)j] += se.w1.value[(std::size_t)i * se.channels + j] * g_a1[(std::size_t)i];
    }
  }

  const float inv_hw = 1.0f / (float)hw;
  for (int ch = 0; ch < x.c; ++ch)
    for (std::size_t i = 0; i < hw; ++i)
      gx.v[(std::size_t)ch * hw + i] += g_pooled[(std::size_t)ch] * inv_hw;
  return gx;
}

// ---------------------------------------------------------------------------

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
  int c = 0;
  for (const Tensor* t : xs) c += t->c;
  Tensor y(c, xs[0]->h, xs[0]->w);
  std::size_t offset = 0;
  for (const Tensor* t : xs) {
    if (t->h != y.h || t->w != y.w)
      throw ValidationError("concat_channels: spatial shape mismatch");
    std::copy(t->v.begin(), t->v.end(), y.v.begin() + (std::ptrdiff_t)offset);
    offset += t->size();
  }
  return y;
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes) {
  std::vector<Tensor> out;
  std::size_t offset = 0;
  for (int c : sizes) {
    Tensor t(c, x.h, x.w);
    std::copy(x.v.begin() + (std::ptrdiff_t)offset,
              x.v.begin() + (std::ptrdiff_t)(offset + t.size()), t.v.begin());
    offset += t.size();
    out.push_back(std::move(t));
  }
  if (offset != x.size()) throw ValidationError("split_channels: sizes do not sum to channels");
  return out;
}

Tensor rot90(const Tensor& x, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return x;
  if (k == 2) {
    Tensor y(x.c, x.h, x.w);
    for (int ch = 0; ch < x.c; ++ch)
      for (int r = 0; r < x.h; ++r)
        for (int c = 0; c < x.w; ++c)
          y.at(ch, x.h - 1 - r, x.w - 1 - c) = x.at(ch, r, c);
    return y;
  }
  Tensor y(x.c, x.w, x.h);
  for (int ch = 0; ch < x.c; ++ch)
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c) {
        if (k == 1)
          y.at(ch, x.w - 1 - c, r) = x.at(ch, r, c); // counter-clockwise
        else
          y.at(ch, c, x.h - 1 - r) = x.at(ch, r, c); // clockwise
      }
  return y;
}

Tensor shift_down(const Tensor& x) {
  Tensor y(x.c, x.h, x.w);
  for (int ch = 0; ch < x.c; ++ch)
    for (int r = 1; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c) y.at(ch, r, c) = x.at(ch, r - 1, c);
  return y;
}

Tensor shift_down_backward(const Tensor& gy) {
  Tensor gx(gy.c, gy.h, gy.w);
  for (int ch = 0; ch < gy.c; ++ch)
    for (int r = 1; r < gy.h; ++r)
      for (int c = 0; c < gy.w; ++c) gx.at(ch, r - 1, c) = gy.at(ch, r, c);
  return gx;
}

} // namespace sd::nn
