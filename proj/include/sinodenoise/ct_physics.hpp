#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sd {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Per-frame / per-column acquisition parameters. Effective incident flux of
// pixel (frame f, column c) is tube_current[f] * incident_flux[c];
// dose_fraction is provenance (already folded into tube_current when a
// low-dose stack is derived).
struct AcquisitionMeta {
  std::vector<double> tube_current;  // mA, one per frame, > 0
  std::vector<double> incident_flux; // photons per mA, one per column; empty if unknown
  double dose_fraction = 1.0;        // alpha in (0, 1]
  double electronic_variance = 0.0;  // sigma_e^2, photons^2
  double electronic_mean = 0.0;      // mu_e, calibrated to 0

  bool has_flux() const { return !incident_flux.empty(); }
  // flux at (frame, column), photons
  double flux(int frame, int column) const {
    return tube_current[(std::size_t)frame] * incident_flux[(std::size_t)column];
  }
};

struct FrameStack {
  int frames = 0, rows = 0, cols = 0;
  std::vector<float> data; // C order, frames x rows x cols
  AcquisitionMeta meta;

  std::size_t size() const { return (std::size_t)frames * rows * cols; }
  float& at(int f, int r, int c) {
    return data[((std::size_t)f * rows + r) * cols + c];
  }
  float at(int f, int r, int c) const {
    return data[((std::size_t)f * rows + r) * cols + c];
  }
};

// Line integrals p of attenuation; finite and >= 0.
struct ProjectionStack : FrameStack {};

// T = exp(-p), dimensionless, in (0, 1] for clean data (noise may exceed 1).
struct TransmissionStack : FrameStack {};

namespace ct_physics {

inline constexpr double kTransmissionClamp = 1e-6;

// Elementwise T = exp(-p). Rejects non-finite input.
TransmissionStack projection_to_transmission(const ProjectionStack& p);

// Elementwise p = -ln(max(T, 1e-6)); clamped pixel count is reported.
ProjectionStack transmission_to_projection(const TransmissionStack& t,
                                           std::int64_t* clamped_count = nullptr);

// Mixed Poisson-Gaussian measurement: I = Poisson(I0*T) + N(0, sigma_e^2),
// returned as I / I0. Deterministic given the seed.
TransmissionStack simulate_measurement(const TransmissionStack& t_clean,
                                       std::uint64_t rng_seed);

// sigma_x^2 + mu_x / I0 + sigma_e^2 / I0^2
double gaussian_total_variance(double mu_x, double sigma_x2, double i0, double sigma_e2);

// Variance of the additive Gaussian used by simulate_low_dose: the gap between
// the total measurement variance at flux alpha*I0 and at flux I0.
inline double low_dose_added_variance(double t, double alpha, double i0, double sigma_e2) {
  return (1.0 - alpha) / alpha * t / i0 +
         (1.0 - alpha * alpha) / (alpha * alpha) * sigma_e2 / (i0 * i0);
}

// Variance-matched low-dose simulation: adds zero-mean Gaussian noise so the
// output variance about the clean signal matches flux alpha*I0. Output
// tube currents and dose_fraction are scaled by alpha.
TransmissionStack simulate_low_dose(const TransmissionStack& t_fd, double alpha,
                                    std::uint64_t rng_seed);

// Gaussian bell flux profile: I0(i) = mA * f_max * exp(-((i-c)/(w*n))^2).
std::vector<double> bowtie_flux_profile(int n_cols, double ma,
                                        double f_max = 2e3, double width = 0.35);

} // namespace ct_physics
} // namespace sd
