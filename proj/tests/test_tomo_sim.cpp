#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sinodenoise/tomo_sim.hpp"

#include <cmath>
#include <numeric>

using namespace sd;
using namespace sd::tomo_sim;

namespace {

PhantomImage uniform_disk(int n, double pixel_size, float value, double radius_frac) {
  PhantomImage img;
  img.n = n;
  img.pixel_size = pixel_size;
  img.data.assign((std::size_t)n * n, 0.0f);
  const double radius = radius_frac * n * pixel_size / 2.0;
  for (int r = 0; r < n; ++r) {
    const double y = (r - (n - 1) / 2.0) * pixel_size;
    for (int c = 0; c < n; ++c) {
      const double x = (c - (n - 1) / 2.0) * pixel_size;
      if (x * x + y * y <= radius * radius) img.at(r, c) = value;
    }
  }
  return img;
}

double image_max(const PhantomImage& img) {
  double m = 0.0;
  for (float v : img.data) m = std::max(m, (double)v);
  return m;
}

double interior_rmse(const PhantomImage& a, const PhantomImage& b, double disk_frac) {
  const int n = a.n;
  const double radius = disk_frac * n / 2.0;
  double ss = 0.0;
  std::size_t count = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double dy = r - (n - 1) / 2.0, dx = c - (n - 1) / 2.0;
      if (dx * dx + dy * dy > radius * radius) continue;
      const double d = a.at(r, c) - b.at(r, c);
      ss += d * d;
      ++count;
    }
  return std::sqrt(ss / count);
}

} // namespace

TEST_CASE("shepp_logan_phantom: determinism, bounds, variant support") {
  CHECK_THROWS_AS(shepp_logan_phantom(8, 0), DomainError);

  auto p0 = shepp_logan_phantom(64, 0);
  auto p0b = shepp_logan_phantom(64, 0);
  CHECK(p0.data == p0b.data);
  CHECK(image_max(p0) <= 2.0);
  for (float v : p0.data) CHECK(v >= 0.0f);

  auto p1 = shepp_logan_phantom(64, 1);
  CHECK(p1.data != p0.data);

  // supports agree within a 10%-dilated mask: every nonzero pixel of the
  // variant lies within radius-6 of a nonzero pixel of the canonical phantom
  const int dilate = 6;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      if (p1.at(r, c) <= 0.0f) continue;
      bool covered = false;
      for (int dr = -dilate; dr <= dilate && !covered; ++dr)
        for (int dc = -dilate; dc <= dilate && !covered; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < 64 && cc >= 0 && cc < 64 && p0.at(rr, cc) > 0.0f)
            covered = true;
        }
      CHECK(covered);
    }
}

TEST_CASE("forward_project: zero image, linearity, detector span check") {
  PhantomImage zero;
  zero.n = 32;
  zero.pixel_size = 1.0;
  zero.data.assign(32 * 32, 0.0f);
  auto geom = ScanGeometry::uniform(8, 48, 1.0);
  auto sino = forward_project(zero, geom);
  for (float v : sino.data) CHECK(v == 0.0f);

  auto tight = ScanGeometry::uniform(8, 16, 1.0);
  CHECK_THROWS_AS(forward_project(zero, tight), ConfigError);

  auto f = uniform_disk(32, 1.0, 1.0f, 0.6);
  auto g = shepp_logan_phantom(32, 0);
  g.pixel_size = 1.0; // same grid as f for the linearity check
  PhantomImage combo = f;
  for (std::size_t i = 0; i < combo.data.size(); ++i)
    combo.data[i] = 2.0f * f.data[i] + 3.0f * g.data[i];
  auto pf = forward_project(f, geom);
  auto pg = forward_project(g, geom);
  auto pc = forward_project(combo, geom);
  for (std::size_t i = 0; i < pc.data.size(); ++i) {
    const double expect = 2.0 * pf.data[i] + 3.0 * pg.data[i];
    CHECK(pc.data[i] == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("forward_project: central ray of a uniform disk equals 2*r*mu within 2%") {
  const int n = 256;
  auto disk = uniform_disk(n, 1.0, 0.7f, 0.5); // radius = 64 length units
  auto geom = ScanGeometry::uniform(4, 384, 1.0);
  auto sino = forward_project(disk, geom);
  const double expect = 2.0 * 64.0 * 0.7;
  for (int a = 0; a < 4; ++a) {
    // detector center falls between bins for even column counts
    const double central = 0.5 * (sino.at(a, 0, 191) + sino.at(a, 0, 192));
    CHECK(central == doctest::Approx(expect).epsilon(0.02));
  }
}

TEST_CASE("forward_project: mass preservation per frame within 1%") {
  auto phantom = shepp_logan_phantom(128, 0);
  phantom.pixel_size = 1.0; // pixel-unit grid, spacing 1 detector
  auto geom = ScanGeometry::uniform(12, 192, 1.0);
  auto sino = forward_project(phantom, geom);
  const double image_sum =
      std::accumulate(phantom.data.begin(), phantom.data.end(), 0.0);
  for (int a = 0; a < geom.n_angles; ++a) {
    double frame_sum = 0.0;
    for (int j = 0; j < geom.n_detector_cols; ++j) frame_sum += sino.at(a, 0, j);
    CHECK(frame_sum == doctest::Approx(image_sum * phantom.pixel_size).epsilon(0.01));
  }
}

TEST_CASE("consecutive clean frames are more similar than frames 90 degrees apart") {
  auto phantom = shepp_logan_phantom(128, 0);
  auto geom = ScanGeometry::uniform(360, 192, phantom.pixel_size);
  auto sino = forward_project(phantom, geom);
  auto mad = [&](int a, int b) {
    double s = 0.0;
    for (int j = 0; j < geom.n_detector_cols; ++j)
      s += std::abs(sino.at(a, 0, j) - sino.at(b, 0, j));
    return s / geom.n_detector_cols;
  };
  double adjacent = 0.0, far = 0.0;
  for (int a = 0; a + 180 < 360; ++a) {
    adjacent += mad(a, a + 1);
    far += mad(a, a + 180); // 180 frames = 90 degrees for angles in [0, pi)
  }
  CHECK(adjacent < far);
}

TEST_CASE("fbp_reconstruct: zero sinogram and shape validation") {
  auto geom = ScanGeometry::uniform(16, 48, 1.0);
  ProjectionStack sino;
  sino.frames = 16;
  sino.rows = 1;
  sino.cols = 48;
  sino.data.assign(sino.size(), 0.0f);
  sino.meta.tube_current.assign(16, 1.0);
  auto img = fbp_reconstruct(sino, geom, 32);
  for (float v : img.data) CHECK(v == 0.0f);

  sino.frames = 15;
  sino.data.resize((std::size_t)15 * 48);
  sino.meta.tube_current.resize(15);
  CHECK_THROWS_AS(fbp_reconstruct(sino, geom, 32), ValidationError);
}

TEST_CASE("fbp(forward(phantom)) self-consistency and angle-count monotonicity") {
  const int n = 256;
  auto phantom = shepp_logan_phantom(n, 0);
  double prev_rmse = 1e9;
  const double max_val = image_max(phantom);
  for (int n_angles : {90, 180, 360}) {
    auto geom = ScanGeometry::uniform(n_angles, 384, phantom.pixel_size);
    auto sino = forward_project(phantom, geom);
    auto rec = fbp_reconstruct(sino, geom, n);
    const double rmse = interior_rmse(rec, phantom, 0.8);
    CHECK(rmse < prev_rmse);
    prev_rmse = rmse;
    if (n_angles == 360) CHECK(rmse < 0.05 * max_val);
  }
}

TEST_CASE("fbp_reconstruct: uniform disk interior mean within 5%") {
  const int n = 128;
  auto disk = uniform_disk(n, 2.0 / n, 1.0f, 0.5);
  auto geom = ScanGeometry::uniform(180, 192, disk.pixel_size);
  auto sino = forward_project(disk, geom);
  auto rec = fbp_reconstruct(sino, geom, n);
  double sum = 0.0;
  std::size_t count = 0;
  const double radius = 0.4 * n / 2.0; // stay clear of the rim
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double dy = r - (n - 1) / 2.0, dx = c - (n - 1) / 2.0;
      if (dx * dx + dy * dy > radius * radius) continue;
      sum += rec.at(r, c);
      ++count;
    }
  CHECK(sum / count == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("make_sequence_dataset: vanishing noise limit and schedule checks") {
  std::vector<PhantomImage> phantoms = {shepp_logan_phantom(64, 0),
                                        shepp_logan_phantom(64, 1)};
  auto geom = ScanGeometry::uniform(32, 96, phantoms[0].pixel_size);
  std::vector<double> flux(96, 1e9);
  std::vector<double> ma(32, 1.0);

  auto ds = make_sequence_dataset(phantoms, geom, flux, ma, 0.0, 1.0, 42);
  CHECK(ds.clean.frames == 32);
  CHECK(ds.clean.rows == 2);
  auto t_clean = ct_physics::projection_to_transmission(ds.clean);
  for (std::size_t i = 0; i < ds.noisy.size(); ++i)
    CHECK(std::abs(ds.noisy.data[i] - t_clean.data[i]) <= 1e-3);

  // constant schedule -> identical per-frame currents
  for (double c : ds.noisy.meta.tube_current) CHECK(c == doctest::Approx(1.0));

  std::vector<double> bad_ma(31, 1.0);
  CHECK_THROWS_AS(make_sequence_dataset(phantoms, geom, flux, bad_ma, 0.0, 1.0, 1),
                  ConfigError);
}

TEST_CASE("make_sequence_dataset: sinusoidal mA anticorrelates with noise variance") {
  std::vector<PhantomImage> phantoms;
  for (int i = 0; i < 4; ++i) phantoms.push_back(shepp_logan_phantom(64, (std::uint64_t)i));
  auto geom = ScanGeometry::uniform(64, 96, phantoms[0].pixel_size);
  std::vector<double> flux = ct_physics::bowtie_flux_profile(96, 1.0);
  std::vector<double> ma(64);
  for (int a = 0; a < 64; ++a)
    ma[(std::size_t)a] = 225.0 + 175.0 * std::sin(2.0 * M_PI * a / 64.0); // in [50, 400]

  auto ds = make_sequence_dataset(phantoms, geom, flux, ma, 10.0, 1.0, 9);
  auto t_clean = ct_physics::projection_to_transmission(ds.clean);

  // Spearman rank correlation between mA and per-frame residual variance
  std::vector<double> var((std::size_t)64);
  for (int a = 0; a < 64; ++a) {
    double ss = 0.0;
    for (int r = 0; r < ds.noisy.rows; ++r)
      for (int c = 0; c < ds.noisy.cols; ++c) {
        const double d = ds.noisy.at(a, r, c) - t_clean.at(a, r, c);
        ss += d * d;
      }
    var[(std::size_t)a] = ss;
  }
  auto ranks = [](const std::vector<double>& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[(std::size_t)a] < v[(std::size_t)b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[(std::size_t)idx[i]] = (double)i;
    return r;
  };
  auto rm = ranks(ma), rv = ranks(var);
  double num = 0.0;
  for (std::size_t i = 0; i < rm.size(); ++i) {
    const double d = rm[i] - rv[i];
    num += d * d;
  }
  const double nn = (double)rm.size();
  const double rho = 1.0 - 6.0 * num / (nn * (nn * nn - 1.0));
  CHECK(rho < -0.9);
}
