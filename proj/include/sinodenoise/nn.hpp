#pragma once

#include "sinodenoise/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace sd::nn {

// Single-sample feature map, C x H x W, C order.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v((std::size_t)c_ * h_ * w_, 0.0f) {}

  std::size_t size() const { return (std::size_t)c * h * w; }
  float& at(int ch, int r, int col) { return v[((std::size_t)ch * h + r) * w + col]; }
  float at(int ch, int r, int col) const { return v[((std::size_t)ch * h + r) * w + col]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;
  std::vector<float> adam_m, adam_v;
  bool frozen = false;

  std::size_t size() const { return value.size(); }
  void init(const std::string& n, std::vector<int> s);
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

struct Adam {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;

  void step(const std::vector<Param*>& params);
};

// He-normal fill, fan-in based, deterministic per seed.
void he_normal_init(Param& p, int fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Bias-free 2-D convolution, stride 1, independent padding per border.

struct Conv2d {
  int cin = 0, cout = 0, kh = 0, kw = 0;
  int pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
  Param w; // cout x cin x kh x kw

  void init(const std::string& name, int cin_, int cout_, int k, Rng& rng);
  void init_causal(const std::string& name, int cin_, int cout_, int k, Rng& rng);
  int out_h(int h) const { return h + pad_top + pad_bottom - kh + 1; }
  int out_w(int w_) const { return w_ + pad_left + pad_right - kw + 1; }
};

struct ConvCache {
  Eigen::MatrixXf col; // (cin*kh*kw) x (hout*wout)
  int h_in = 0, w_in = 0;
};

Tensor conv2d_forward(const Conv2d& conv, const Tensor& x, ConvCache* cache);
// Accumulates into conv.w.grad; returns grad wrt input.
Tensor conv2d_backward(Conv2d& conv, const ConvCache& cache, const Tensor& gy);

// ---------------------------------------------------------------------------
// Pointwise activations. Backward takes the forward *output* where possible.

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& y, const Tensor& gy);
Tensor sigmoid_forward(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);
Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& gy);
Tensor softplus_forward(const Tensor& x);
Tensor softplus_backward(const Tensor& y, const Tensor& gy);

// ---------------------------------------------------------------------------
// ConvLSTM cell: gates from Conv([x; h]) only (no peephole), bias-free.
// i, f, o = sigmoid, g = tanh; c' = f*c + i*g; h' = o * tanh(c').

struct ConvLSTMCell {
  int cin = 0, ch = 0;
  Conv2d gates; // (cin+ch) -> 4*ch, 3x3, same padding

  void init(const std::string& name, int cin_, int ch_, Rng& rng);
};

struct ConvLSTMStepCache {
  Tensor xh;            // concatenated input
  ConvCache conv;
  Tensor gi, gf, go, gg; // post-activation gates
  Tensor c_prev, c_new, tanh_c;
};

struct ConvLSTMState {
  Tensor h, c;
};

ConvLSTMState convlstm_step(const ConvLSTMCell& cell, const Tensor& x,
                            const ConvLSTMState& state, ConvLSTMStepCache* cache);
// Backward for one step. gh/gc are grads wrt h'/c'; outputs grads wrt x and
// the previous state. Accumulates into cell.gates.w.grad.
void convlstm_step_backward(ConvLSTMCell& cell, const ConvLSTMStepCache& cache,
                            const Tensor& gh, const Tensor& gc,
                            Tensor* gx, Tensor* gh_prev, Tensor* gc_prev);

// ---------------------------------------------------------------------------
// Squeeze-excitation channel gating: GAP -> fc1 -> ReLU -> fc2 -> sigmoid,
// output x * gate(channel).

struct SEBlock {
  int channels = 0, hidden = 0;
  Param w1, b1, w2, b2;

  void init(const std::string& name, int channels_, int hidden_, Rng& rng);
};

struct SECache {
  Tensor x;
  std::vector<float> pooled, z1, a1, gates;
};

Tensor se_forward(const SEBlock& se, const Tensor& x, SECache* cache);
Tensor se_backward(SEBlock& se, const SECache& cache, const Tensor& gy);

// ---------------------------------------------------------------------------
// Structural ops.

Tensor concat_channels(const std::vector<const Tensor*>& xs);
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes);
// Counter-clockwise rotation by quarter turns (k in [0,3]).
Tensor rot90(const Tensor& x, int quarter_turns);
// Shift feature map down by one row, zero-filling row 0.
Tensor shift_down(const Tensor& x);
Tensor shift_down_backward(const Tensor& gy);

} // namespace sd::nn
