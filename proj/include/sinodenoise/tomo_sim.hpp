#pragma once

#include "sinodenoise/ct_physics.hpp"

#include <cstdint>
#include <vector>

namespace sd {

struct PhantomImage {
  int n = 0;               // n x n
  double pixel_size = 1.0; // arbitrary length unit
  std::vector<float> data; // row-major, values >= 0

  float& at(int r, int c) { return data[(std::size_t)r * n + c]; }
  float at(int r, int c) const { return data[(std::size_t)r * n + c]; }
};

struct ScanGeometry {
  int n_angles = 0;
  std::vector<double> angles; // radians, strictly increasing, default uniform in [0, pi)
  int n_detector_cols = 0;
  double detector_spacing = 1.0;

  static ScanGeometry uniform(int n_angles, int n_detector_cols, double spacing = 1.0);
};

namespace tomo_sim {

// Standard ellipse-composite phantom; variant_seed != 0 jitters ellipse
// parameters by <= 5% to generate distinct anatomies.
PhantomImage shepp_logan_phantom(int n, std::uint64_t variant_seed);

// Discrete Radon transform, one frame (1 x n_detector_cols) per angle.
ProjectionStack forward_project(const PhantomImage& img, const ScanGeometry& geom);

// Ram-Lak (frequency domain) filtered back-projection with linear interpolation.
PhantomImage fbp_reconstruct(const ProjectionStack& sino, const ScanGeometry& geom, int n);

struct SequenceDataset {
  ProjectionStack clean;      // frames x rows x cols; row r = phantom r's sinogram
  TransmissionStack noisy;    // measured transmissions at the per-frame flux
};

// Projects each phantom into detector row r of every frame, then simulates
// the measurement with the given bowtie profile, per-frame mA schedule,
// electronic noise and dose fraction.
SequenceDataset make_sequence_dataset(const std::vector<PhantomImage>& phantoms,
                                      const ScanGeometry& geom,
                                      const std::vector<double>& flux_per_ma,
                                      const std::vector<double>& ma_schedule,
                                      double sigma_e2, double alpha,
                                      std::uint64_t seed);

} // namespace tomo_sim
} // namespace sd
