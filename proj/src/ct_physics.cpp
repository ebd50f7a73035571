#include "sinodenoise/ct_physics.hpp"

#include "sinodenoise/rng.hpp"

#include <cmath>

namespace sd::ct_physics {

namespace {

void check_meta_shapes(const FrameStack& s, bool need_flux) {
  if ((int)s.meta.tube_current.size() != s.frames)
    throw ValidationError("meta.tube_current length " +
                          std::to_string(s.meta.tube_current.size()) +
                          " does not match frame count " + std::to_string(s.frames));
  if (need_flux) {
    if (!s.meta.has_flux())
      throw ConfigError("incident_flux is required but missing from metadata");
    if ((int)s.meta.incident_flux.size() != s.cols)
      throw ValidationError("meta.incident_flux length does not match column count");
  }
}

std::string index_string(const FrameStack& s, std::size_t flat) {
  int c = (int)(flat % s.cols);
  int r = (int)((flat / s.cols) % s.rows);
  int f = (int)(flat / ((std::size_t)s.rows * s.cols));
  return "(frame " + std::to_string(f) + ", row " + std::to_string(r) +
         ", col " + std::to_string(c) + ")";
}

} // namespace

TransmissionStack projection_to_transmission(const ProjectionStack& p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!std::isfinite(p.data[i]))
      throw ValidationError("non-finite projection value at " + index_string(p, i));
  TransmissionStack t;
  t.frames = p.frames;
  t.rows = p.rows;
  t.cols = p.cols;
  t.meta = p.meta;
  t.data.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    t.data[i] = (float)std::exp(-(double)p.data[i]);
  return t;
}

ProjectionStack transmission_to_projection(const TransmissionStack& t,
                                           std::int64_t* clamped_count) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t.data[i]))
      throw ValidationError("non-finite transmission value at " + index_string(t, i));
  ProjectionStack p;
  p.frames = t.frames;
  p.rows = t.rows;
  p.cols = t.cols;
  p.meta = t.meta;
  p.data.resize(t.size());
  std::int64_t clamped = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = t.data[i];
    if (v < kTransmissionClamp) {
      v = kTransmissionClamp;
      ++clamped;
    }
    p.data[i] = (float)(-std::log(v));
  }
  if (clamped_count) *clamped_count = clamped;
  return p;
}

TransmissionStack simulate_measurement(const TransmissionStack& t_clean,
                                       std::uint64_t rng_seed) {
  check_meta_shapes(t_clean, /*need_flux=*/true);
  TransmissionStack out = t_clean;
  Rng rng(rng_seed);
  const double sigma_e = std::sqrt(t_clean.meta.electronic_variance);
  for (int f = 0; f < t_clean.frames; ++f) {
    for (int r = 0; r < t_clean.rows; ++r) {
      for (int c = 0; c < t_clean.cols; ++c) {
        const double i0 = t_clean.meta.flux(f, c);
        const double mean = i0 * (double)t_clean.at(f, r, c);
        // counts may go negative through electronic noise; kept as-is so the
        // transmission stays unbiased, clamping happens only at the log step
        double counts = (double)rng.poisson(mean);
        if (sigma_e > 0.0) counts += rng.normal(0.0, sigma_e);
        out.at(f, r, c) = (float)(counts / i0);
      }
    }
  }
  return out;
}

double gaussian_total_variance(double mu_x, double sigma_x2, double i0, double sigma_e2) {
  if (i0 <= 0.0) throw DomainError("gaussian_total_variance: I0 must be positive");
  if (sigma_x2 < 0.0) throw DomainError("gaussian_total_variance: sigma_x2 must be >= 0");
  if (sigma_e2 < 0.0) throw DomainError("gaussian_total_variance: sigma_e2 must be >= 0");
  return sigma_x2 + mu_x / i0 + sigma_e2 / (i0 * i0);
}

TransmissionStack simulate_low_dose(const TransmissionStack& t_fd, double alpha,
                                    std::uint64_t rng_seed) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("simulate_low_dose: alpha must lie strictly in (0, 1)");
  check_meta_shapes(t_fd, /*need_flux=*/true);
  TransmissionStack out = t_fd;
  Rng rng(rng_seed);
  const double sigma_e2 = t_fd.meta.electronic_variance;
  for (int f = 0; f < t_fd.frames; ++f) {
    for (int r = 0; r < t_fd.rows; ++r) {
      for (int c = 0; c < t_fd.cols; ++c) {
        const double i0 = t_fd.meta.flux(f, c);
        const double t = std::max(0.0, (double)t_fd.at(f, r, c));
        const double var = low_dose_added_variance(t, alpha, i0, sigma_e2);
        out.at(f, r, c) = (float)((double)t_fd.at(f, r, c) +
                                  rng.normal(0.0, std::sqrt(var)));
      }
    }
  }
  for (double& ma : out.meta.tube_current) ma *= alpha;
  out.meta.dose_fraction = t_fd.meta.dose_fraction * alpha;
  return out;
}

std::vector<double> bowtie_flux_profile(int n_cols, double ma, double f_max, double width) {
  if (n_cols < 1) throw DomainError("bowtie_flux_profile: n_cols must be >= 1");
  if (ma <= 0.0) throw DomainError("bowtie_flux_profile: mA must be positive");
  std::vector<double> flux((std::size_t)n_cols);
  const double center = (n_cols - 1) / 2.0;
  const double scale = width * n_cols;
  for (int i = 0; i < n_cols; ++i) {
    const double u = (i - center) / scale;
    flux[(std::size_t)i] = ma * f_max * std::exp(-u * u);
  }
  return flux;
}

} // namespace sd::ct_physics
