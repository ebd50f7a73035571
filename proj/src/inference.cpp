#include "sinodenoise/inference.hpp"

#include <algorithm>
#include <cmath>

namespace sd::inference {

namespace {

// Frames are edge-extended before the forward pass so that convolution padding
// artifacts land outside the detector area; callers read network outputs at an
// offset of kEdgePad and discard the apron.
constexpr int kEdgePad = 8;

nn::Tensor full_frame(const FrameStack& stack, int f, int pad = kEdgePad) {
  nn::Tensor t(1, stack.rows + 2 * pad, stack.cols + 2 * pad);
  const int fc = std::clamp(f, 0, stack.frames - 1);
  for (int r = 0; r < t.h; ++r) {
    const int rr = std::clamp(r - pad, 0, stack.rows - 1);
    for (int c = 0; c < t.w; ++c)
      t.at(0, r, c) = stack.at(fc, rr, std::clamp(c - pad, 0, stack.cols - 1));
  }
  return t;
}

networks::FrameWindow frame_window(const FrameStack& stack, int f, int k) {
  networks::FrameWindow w;
  w.k = k;
  for (int j = k; j >= 1; --j) w.past.push_back(full_frame(stack, f - j));
  for (int j = k; j >= 1; --j) w.future.push_back(full_frame(stack, f + j));
  w.center = full_frame(stack, f);
  return w;
}

} // namespace

double posterior_mean(double y, double mu_x, double sigma_x2, double sigma_n2) {
  const double denom = sigma_x2 + sigma_n2;
  if (!(denom > 0.0)) throw DomainError("posterior_mean: zero total variance");
  return (y * sigma_x2 + mu_x * sigma_n2) / denom;
}

nn::Tensor posterior_mean(const nn::Tensor& y, const networks::PosteriorMaps& maps,
                          const nn::Tensor& sigma_n2) {
  if (!y.same_shape(maps.mu_x) || !y.same_shape(maps.sigma_x2) ||
      !y.same_shape(sigma_n2))
    throw ValidationError("posterior_mean: shape mismatch");
  nn::Tensor out(y.c, y.h, y.w);
  for (std::size_t i = 0; i < y.v.size(); ++i)
    out.v[i] = float(posterior_mean(double(y.v[i]), double(maps.mu_x.v[i]),
                                    double(maps.sigma_x2.v[i]), double(sigma_n2.v[i])));
  return out;
}

ProjectionStack denoise_stack(training::Model& model, const TransmissionStack& noisy,
                              const DenoiseOptions& opts) {
  const int k = model.net_cfg.k;
  const bool windowed = model.regime == "n2ntd_anm" ||
                        model.regime == "n2ntd_mse_ablation" ||
                        model.regime == "noise2clean";
  if (windowed && noisy.frames < 2 * k + 1)
    throw ValidationError("denoise_stack: stack shorter than the model window");
  if ((model.regime == "n2ntd_anm" || model.regime == "noise2void_4r") &&
      !model.noise && !opts.passthrough)
    throw ValidationError("denoise_stack: regime requires an attached noise model");

  ProjectionStack out;
  out.frames = noisy.frames;
  out.rows = noisy.rows;
  out.cols = noisy.cols;
  out.data.resize(noisy.size());
  out.meta = noisy.meta;

  auto to_proj = [](double t) {
    return float(-std::log(std::max(t, ct_physics::kTransmissionClamp)));
  };

  const double se2_meta = noisy.meta.electronic_variance;
  ProjectionStack noisy_proj;
  if (model.regime == "noise2clean" && !opts.passthrough)
    noisy_proj = ct_physics::transmission_to_projection(noisy);

  for (int f = 0; f < noisy.frames; ++f) {
    if (opts.passthrough) {
      for (int r = 0; r < noisy.rows; ++r)
        for (int c = 0; c < noisy.cols; ++c)
          out.at(f, r, c) = to_proj(double(noisy.at(f, r, c)));
      continue;
    }

    if (model.regime == "n2ntd_anm" || model.regime == "noise2void_4r") {
      networks::PosteriorMaps maps;
      if (model.regime == "n2ntd_anm") {
        auto window = frame_window(noisy, f, k);
        networks::N2ntdNet::Cache cache;
        maps = model.n2ntd->forward(window, &cache);
      } else {
        auto frame = full_frame(noisy, f);
        networks::Blindspot4rNet::Cache cache;
        maps = model.bs4r->forward(frame, &cache);
      }
      const double ma = noisy.meta.tube_current[std::size_t(f)];
      const double se2 = model.noise->sigma_e2();
      for (int c = 0; c < noisy.cols; ++c) {
        const double lambda = model.noise->lambda_of(c, ma);
        for (int r = 0; r < noisy.rows; ++r) {
          const double mu = double(maps.mu_x.at(0, r + kEdgePad, c + kEdgePad));
          const double sn2 = mu / lambda + se2 / (lambda * lambda);
          const double xhat =
              posterior_mean(double(noisy.at(f, r, c)), mu,
                             double(maps.sigma_x2.at(0, r + kEdgePad, c + kEdgePad)), sn2);
          out.at(f, r, c) = to_proj(xhat);
        }
      }
    } else if (model.regime == "n2ntd_mse_ablation") {
      auto window = frame_window(noisy, f, k);
      networks::N2ntdNet::Cache cache;
      auto maps = model.n2ntd->forward(window, &cache);
      for (int r = 0; r < noisy.rows; ++r)
        for (int c = 0; c < noisy.cols; ++c)
          out.at(f, r, c) = to_proj(double(maps.mu_x.at(0, r + kEdgePad, c + kEdgePad)));
    } else if (model.regime == "noise2clean") {
      auto window = frame_window(noisy_proj, f, k);
      nn::Tensor nmap(1, noisy.rows + 2 * kEdgePad, noisy.cols + 2 * kEdgePad);
      for (int r = 0; r < nmap.h; ++r)
        for (int c = 0; c < nmap.w; ++c) {
          const int rr = std::clamp(r - kEdgePad, 0, noisy.rows - 1);
          const int cc = std::clamp(c - kEdgePad, 0, noisy.cols - 1);
          const double i0 = noisy.meta.flux(f, cc);
          const double tv = std::max(double(noisy.at(f, rr, cc)),
                                     ct_physics::kTransmissionClamp);
          const double var_t = tv / i0 + se2_meta / (i0 * i0);
          nmap.at(0, r, c) = float(std::sqrt(var_t) / tv);
        }
      networks::Noise2CleanNet::Cache cache;
      auto pred = model.n2c->forward(window, nmap, &cache);
      for (int r = 0; r < noisy.rows; ++r)
        for (int c = 0; c < noisy.cols; ++c)
          out.at(f, r, c) = pred.at(0, r + kEdgePad, c + kEdgePad);
    } else if (model.regime == "half2half") {
      auto frame = full_frame(noisy, f);
      networks::Half2HalfNet::Cache cache;
      auto pred = model.h2h->forward(frame, &cache);
      for (int r = 0; r < noisy.rows; ++r)
        for (int c = 0; c < noisy.cols; ++c)
          out.at(f, r, c) = to_proj(double(pred.at(0, r + kEdgePad, c + kEdgePad)));
    } else {
      throw ConfigError("denoise_stack: unknown regime '" + model.regime + "'");
    }
  }
  return out;
}

} // namespace sd::inference
