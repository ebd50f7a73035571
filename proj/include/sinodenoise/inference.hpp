#pragma once

#include "sinodenoise/training.hpp"

namespace sd::inference {

// Bayesian fusion of the blind prediction with the excluded noisy value:
// xhat = (y * sigma_x2_weighted prior mean) -- per pixel
// xhat = (y * sigma_x2 + mu_x * sigma_n2) / (sigma_x2 + sigma_n2).
double posterior_mean(double y, double mu_x, double sigma_x2, double sigma_n2);

nn::Tensor posterior_mean(const nn::Tensor& y, const networks::PosteriorMaps& maps,
                          const nn::Tensor& sigma_n2);

struct DenoiseOptions {
  // plumbing test mode: the model is bypassed and y passes straight through
  bool passthrough = false;
};

// Slides the model over every frame (edge windows replicate the nearest
// frames), fuses with the noisy measurement where the regime defines a
// posterior, and returns projection-domain output of equal frame count.
ProjectionStack denoise_stack(training::Model& model, const TransmissionStack& noisy,
                              const DenoiseOptions& opts = {});

} // namespace sd::inference
