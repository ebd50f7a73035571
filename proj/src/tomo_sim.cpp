#include "sinodenoise/tomo_sim.hpp"

#include "sinodenoise/rng.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>

namespace sd {

ScanGeometry ScanGeometry::uniform(int n_angles, int n_detector_cols, double spacing) {
  ScanGeometry g;
  g.n_angles = n_angles;
  g.n_detector_cols = n_detector_cols;
  g.detector_spacing = spacing;
  g.angles.resize((std::size_t)n_angles);
  for (int i = 0; i < n_angles; ++i)
    g.angles[(std::size_t)i] = M_PI * i / n_angles;
  return g;
}

namespace tomo_sim {

namespace {

struct Ellipse {
  double value, a, b, x0, y0, phi; // phi in radians
};

// classic Shepp-Logan parameter table, unit square coordinates
const Ellipse kSheppLogan[] = {
    {2.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
    {-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
    {-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0 * M_PI / 180.0},
    {-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0 * M_PI / 180.0},
    {0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
    {0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
    {0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
    {0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
    {0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
    {0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
};

double bilinear(const PhantomImage& img, double x, double y) {
  // (x, y) in length units, image centered at the origin
  const double px = img.pixel_size;
  const double fc = x / px + (img.n - 1) / 2.0;
  const double fr = y / px + (img.n - 1) / 2.0;
  const int c0 = (int)std::floor(fc);
  const int r0 = (int)std::floor(fr);
  if (c0 < -1 || c0 > img.n - 1 || r0 < -1 || r0 > img.n - 1) return 0.0;
  const double wc = fc - c0;
  const double wr = fr - r0;
  auto v = [&](int r, int c) -> double {
    if (r < 0 || r >= img.n || c < 0 || c >= img.n) return 0.0;
    return img.at(r, c);
  };
  return (1 - wr) * ((1 - wc) * v(r0, c0) + wc * v(r0, c0 + 1)) +
         wr * ((1 - wc) * v(r0 + 1, c0) + wc * v(r0 + 1, c0 + 1));
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::mutex fftw_plan_mutex; // FFTW planning is not thread-safe

} // namespace

PhantomImage shepp_logan_phantom(int n, std::uint64_t variant_seed) {
  if (n < 16) throw DomainError("shepp_logan_phantom: n must be >= 16");
  std::vector<Ellipse> ellipses(std::begin(kSheppLogan), std::end(kSheppLogan));
  if (variant_seed != 0) {
    Rng rng(variant_seed);
    for (auto& e : ellipses) {
      auto jitter = [&] { return 1.0 + 0.05 * (2.0 * rng.uniform() - 1.0); };
      e.value *= jitter();
      e.a *= jitter();
      e.b *= jitter();
      e.x0 += 0.05 * (2.0 * rng.uniform() - 1.0) * e.a;
      e.y0 += 0.05 * (2.0 * rng.uniform() - 1.0) * e.b;
      e.phi += 0.05 * (2.0 * rng.uniform() - 1.0);
    }
  }
  PhantomImage img;
  img.n = n;
  img.pixel_size = 2.0 / n; // image spans [-1, 1] in length units
  img.data.assign((std::size_t)n * n, 0.0f);
  for (int r = 0; r < n; ++r) {
    const double y = (r - (n - 1) / 2.0) * img.pixel_size;
    for (int c = 0; c < n; ++c) {
      const double x = (c - (n - 1) / 2.0) * img.pixel_size;
      double v = 0.0;
      for (const auto& e : ellipses) {
        const double dx = x - e.x0, dy = y - e.y0;
        const double cs = std::cos(e.phi), sn = std::sin(e.phi);
        const double xr = dx * cs + dy * sn;
        const double yr = -dx * sn + dy * cs;
        if (xr * xr / (e.a * e.a) + yr * yr / (e.b * e.b) <= 1.0) v += e.value;
      }
      img.at(r, c) = (float)std::max(0.0, v);
    }
  }
  return img;
}

ProjectionStack forward_project(const PhantomImage& img, const ScanGeometry& geom) {
  const double diag = img.n * img.pixel_size * std::sqrt(2.0);
  const double span = geom.n_detector_cols * geom.detector_spacing;
  if (span < diag)
    throw ConfigError("forward_project: detector span " + std::to_string(span) +
                      " does not cover image diagonal " + std::to_string(diag));

  ProjectionStack sino;
  sino.frames = geom.n_angles;
  sino.rows = 1;
  sino.cols = geom.n_detector_cols;
  sino.data.assign(sino.size(), 0.0f);
  sino.meta.tube_current.assign((std::size_t)geom.n_angles, 1.0);

  const double step = 0.5 * img.pixel_size;
  const double radius = img.n * img.pixel_size / std::sqrt(2.0); // circumscribed circle
  const double det_center = (geom.n_detector_cols - 1) / 2.0;

#pragma omp parallel for schedule(static)
  for (int a = 0; a < geom.n_angles; ++a) {
    const double theta = geom.angles[(std::size_t)a];
    const double cs = std::cos(theta), sn = std::sin(theta);
    for (int j = 0; j < geom.n_detector_cols; ++j) {
      const double s = (j - det_center) * geom.detector_spacing;
      if (std::abs(s) >= radius) continue;
      const double half_chord = std::sqrt(radius * radius - s * s);
      const int n_steps = (int)std::ceil(2.0 * half_chord / step);
      double sum = 0.0;
      for (int k = 0; k < n_steps; ++k) {
        const double t = -half_chord + (k + 0.5) * (2.0 * half_chord / n_steps);
        const double x = s * cs - t * sn;
        const double y = s * sn + t * cs;
        sum += bilinear(img, x, y);
      }
      sino.at(a, 0, j) = (float)(sum * (2.0 * half_chord / n_steps));
    }
  }
  return sino;
}

PhantomImage fbp_reconstruct(const ProjectionStack& sino, const ScanGeometry& geom, int n) {
  if (sino.frames != geom.n_angles)
    throw ValidationError("fbp_reconstruct: sinogram frame count " +
                          std::to_string(sino.frames) + " != n_angles " +
                          std::to_string(geom.n_angles));
  if (sino.rows != 1)
    throw ValidationError("fbp_reconstruct: expected single-row sinogram frames");
  if (sino.cols != geom.n_detector_cols)
    throw ValidationError("fbp_reconstruct: column count mismatch");

  const int n_det = sino.cols;
  const int m = next_pow2(std::max(64, 2 * n_det));
  const double spacing = geom.detector_spacing;

  // ramp |nu| in cycles per length unit
  std::vector<double> ramp((std::size_t)m / 2 + 1);
  for (int k = 0; k <= m / 2; ++k) ramp[(std::size_t)k] = k / (m * spacing);

  std::vector<double> filtered((std::size_t)geom.n_angles * n_det);
  {
    std::vector<double> in((std::size_t)m);
    std::vector<std::complex<double>> freq((std::size_t)m / 2 + 1);
    fftw_plan fwd, bwd;
    {
      std::lock_guard<std::mutex> lock(fftw_plan_mutex);
      fwd = fftw_plan_dft_r2c_1d(m, in.data(),
                                 reinterpret_cast<fftw_complex*>(freq.data()),
                                 FFTW_ESTIMATE);
      bwd = fftw_plan_dft_c2r_1d(m, reinterpret_cast<fftw_complex*>(freq.data()),
                                 in.data(), FFTW_ESTIMATE);
    }
    for (int a = 0; a < geom.n_angles; ++a) {
      std::fill(in.begin(), in.end(), 0.0);
      for (int j = 0; j < n_det; ++j) in[(std::size_t)j] = sino.at(a, 0, j);
      fftw_execute(fwd);
      for (int k = 0; k <= m / 2; ++k) freq[(std::size_t)k] *= ramp[(std::size_t)k];
      fftw_execute(bwd);
      for (int j = 0; j < n_det; ++j)
        filtered[(std::size_t)a * n_det + j] = in[(std::size_t)j] / m;
    }
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }

  PhantomImage img;
  img.n = n;
  img.pixel_size = spacing;
  img.data.assign((std::size_t)n * n, 0.0f);
  const double det_center = (n_det - 1) / 2.0;
  const double dtheta = M_PI / geom.n_angles;

#pragma omp parallel for schedule(static)
  for (int r = 0; r < n; ++r) {
    const double y = (r - (n - 1) / 2.0) * img.pixel_size;
    for (int c = 0; c < n; ++c) {
      const double x = (c - (n - 1) / 2.0) * img.pixel_size;
      double acc = 0.0;
      for (int a = 0; a < geom.n_angles; ++a) {
        const double theta = geom.angles[(std::size_t)a];
        const double s = x * std::cos(theta) + y * std::sin(theta);
        const double fj = s / spacing + det_center;
        const int j0 = (int)std::floor(fj);
        if (j0 < 0 || j0 >= n_det - 1) continue;
        const double w = fj - j0;
        acc += (1.0 - w) * filtered[(std::size_t)a * n_det + j0] +
               w * filtered[(std::size_t)a * n_det + j0 + 1];
      }
      img.at(r, c) = (float)(acc * dtheta);
    }
  }
  return img;
}

SequenceDataset make_sequence_dataset(const std::vector<PhantomImage>& phantoms,
                                      const ScanGeometry& geom,
                                      const std::vector<double>& flux_per_ma,
                                      const std::vector<double>& ma_schedule,
                                      double sigma_e2, double alpha,
                                      std::uint64_t seed) {
  if ((int)ma_schedule.size() != geom.n_angles)
    throw ConfigError("make_sequence_dataset: mA schedule length must equal n_angles");
  if ((int)flux_per_ma.size() != geom.n_detector_cols)
    throw ConfigError("make_sequence_dataset: flux profile length must equal detector columns");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw DomainError("make_sequence_dataset: alpha must lie in (0, 1]");
  if (phantoms.empty())
    throw ConfigError("make_sequence_dataset: at least one phantom required");

  const int rows = (int)phantoms.size();
  SequenceDataset ds;
  ds.clean.frames = geom.n_angles;
  ds.clean.rows = rows;
  ds.clean.cols = geom.n_detector_cols;
  ds.clean.data.assign(ds.clean.size(), 0.0f);

  for (int r = 0; r < rows; ++r) {
    auto sino = forward_project(phantoms[(std::size_t)r], geom);
    for (int a = 0; a < geom.n_angles; ++a)
      for (int j = 0; j < geom.n_detector_cols; ++j)
        ds.clean.at(a, r, j) = sino.at(a, 0, j);
  }

  AcquisitionMeta meta;
  meta.tube_current.resize((std::size_t)geom.n_angles);
  for (int a = 0; a < geom.n_angles; ++a)
    meta.tube_current[(std::size_t)a] = alpha * ma_schedule[(std::size_t)a];
  meta.incident_flux = flux_per_ma;
  meta.dose_fraction = alpha;
  meta.electronic_variance = sigma_e2;
  ds.clean.meta = meta;

  TransmissionStack t_clean = ct_physics::projection_to_transmission(ds.clean);
  ds.noisy = ct_physics::simulate_measurement(t_clean, seed);
  return ds;
}

} // namespace tomo_sim
} // namespace sd
