#include "sinodenoise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sd::metrics {

namespace {

void check_shapes(std::size_t a, std::size_t b, std::size_t expect) {
  if (a != expect || b != expect)
    throw ValidationError("metric inputs do not match the stated shape");
}

double stack_max(const FrameStack& s) {
  double m = 0.0;
  for (float v : s.data) m = std::max(m, (double)v);
  return m;
}

} // namespace

double psnr(const std::vector<float>& a, const std::vector<float>& b,
            int rows, int cols, double data_range) {
  const std::size_t n = (std::size_t)rows * cols;
  check_shapes(a.size(), b.size(), n);
  if (data_range <= 0.0) throw DomainError("psnr: data_range must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (double)a[i] - (double)b[i];
    mse += d * d;
  }
  mse /= (double)n;
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const std::vector<float>& a, const std::vector<float>& b,
            int rows, int cols, double data_range) {
  const std::size_t n = (std::size_t)rows * cols;
  check_shapes(a.size(), b.size(), n);
  if (rows < 11 || cols < 11)
    throw DomainError("ssim: images must be at least 11x11");

  constexpr int kWin = 11;
  constexpr int kHalf = kWin / 2;
  constexpr double kSigma = 1.5;
  double w[kWin][kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double di = i - kHalf, dj = j - kHalf;
      w[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      wsum += w[i][j];
    }
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) w[i][j] /= wsum;

  const double c1 = std::pow(0.01 * data_range, 2);
  const double c2 = std::pow(0.03 * data_range, 2);

  double total = 0.0;
  std::size_t count = 0;
  for (int r = kHalf; r < rows - kHalf; ++r) {
    for (int c = kHalf; c < cols - kHalf; ++c) {
      double mu_a = 0.0, mu_b = 0.0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const std::size_t idx = (std::size_t)(r + i - kHalf) * cols + (c + j - kHalf);
          mu_a += w[i][j] * a[idx];
          mu_b += w[i][j] * b[idx];
        }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const std::size_t idx = (std::size_t)(r + i - kHalf) * cols + (c + j - kHalf);
          const double da = a[idx] - mu_a, db = b[idx] - mu_b;
          va += w[i][j] * da * da;
          vb += w[i][j] * db * db;
          cov += w[i][j] * da * db;
        }
      total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / (double)count;
}

double gmsd(const std::vector<float>& a, const std::vector<float>& b,
            int rows, int cols, double data_range) {
  const std::size_t n = (std::size_t)rows * cols;
  check_shapes(a.size(), b.size(), n);

  // 2x2 average pooling (the reference definition's downsampling step)
  const int dr = rows / 2, dc = cols / 2;
  if (dr < 3 || dc < 3) throw DomainError("gmsd: image too small after downsampling");
  std::vector<double> da((std::size_t)dr * dc), db((std::size_t)dr * dc);
  for (int r = 0; r < dr; ++r)
    for (int c = 0; c < dc; ++c) {
      auto pool = [&](const std::vector<float>& img) {
        return 0.25 * ((double)img[(std::size_t)(2 * r) * cols + 2 * c] +
                       (double)img[(std::size_t)(2 * r) * cols + 2 * c + 1] +
                       (double)img[(std::size_t)(2 * r + 1) * cols + 2 * c] +
                       (double)img[(std::size_t)(2 * r + 1) * cols + 2 * c + 1]);
      };
      da[(std::size_t)r * dc + c] = pool(a);
      db[(std::size_t)r * dc + c] = pool(b);
    }

  // Prewitt gradient magnitudes on the interior
  const double c_const = 0.0026 * data_range * data_range;
  std::vector<double> gms;
  gms.reserve((std::size_t)(dr - 2) * (dc - 2));
  auto grad_mag = [&](const std::vector<double>& img, int r, int c) {
    auto v = [&](int rr, int cc) { return img[(std::size_t)rr * dc + cc]; };
    const double gx = (v(r - 1, c + 1) + v(r, c + 1) + v(r + 1, c + 1) -
                       v(r - 1, c - 1) - v(r, c - 1) - v(r + 1, c - 1)) / 3.0;
    const double gy = (v(r + 1, c - 1) + v(r + 1, c) + v(r + 1, c + 1) -
                       v(r - 1, c - 1) - v(r - 1, c) - v(r - 1, c + 1)) / 3.0;
    return std::sqrt(gx * gx + gy * gy);
  };
  for (int r = 1; r < dr - 1; ++r)
    for (int c = 1; c < dc - 1; ++c) {
      const double ma = grad_mag(da, r, c);
      const double mb = grad_mag(db, r, c);
      gms.push_back((2.0 * ma * mb + c_const) / (ma * ma + mb * mb + c_const));
    }

  double mean = 0.0;
  for (double v : gms) mean += v;
  mean /= (double)gms.size();
  double var = 0.0;
  for (double v : gms) var += (v - mean) * (v - mean);
  return std::sqrt(var / (double)gms.size());
}

std::vector<double> per_frame_metric(const FrameStack& denoised,
                                     const FrameStack& reference,
                                     const std::string& metric) {
  if (denoised.frames != reference.frames || denoised.rows != reference.rows ||
      denoised.cols != reference.cols)
    throw ValidationError("per_frame_metric: stack shapes differ");
  const double range = std::max(stack_max(reference), 1e-12);
  const std::size_t fsz = (std::size_t)denoised.rows * denoised.cols;
  std::vector<double> out;
  out.reserve((std::size_t)denoised.frames);
  for (int f = 0; f < denoised.frames; ++f) {
    std::vector<float> a(denoised.data.begin() + (std::size_t)f * fsz,
                         denoised.data.begin() + (std::size_t)(f + 1) * fsz);
    std::vector<float> b(reference.data.begin() + (std::size_t)f * fsz,
                         reference.data.begin() + (std::size_t)(f + 1) * fsz);
    if (metric == "psnr")
      out.push_back(psnr(a, b, denoised.rows, denoised.cols, range));
    else if (metric == "ssim")
      out.push_back(ssim(a, b, denoised.rows, denoised.cols, range));
    else if (metric == "gmsd")
      out.push_back(gmsd(a, b, denoised.rows, denoised.cols, range));
    else
      throw ConfigError("unknown metric: " + metric);
  }
  return out;
}

std::vector<MetricRow> evaluate_pair(const FrameStack& denoised,
                                     const FrameStack& reference,
                                     const std::string& domain_tag,
                                     const std::string& dataset,
                                     const std::string& dose,
                                     const std::string& regime) {
  const double range = std::max(stack_max(reference), 1e-12);
  std::vector<MetricRow> rows;
  for (const char* metric : {"ssim", "psnr", "gmsd"}) {
    auto values = per_frame_metric(denoised, reference, metric);
    double mean = 0.0;
    std::size_t finite = 0;
    for (double v : values)
      if (std::isfinite(v)) {
        mean += v;
        ++finite;
      }
    MetricRow row{dataset, dose, regime, domain_tag, metric, 0.0, 0.0, range};
    if (finite > 0) {
      mean /= (double)finite;
      double var = 0.0;
      for (double v : values)
        if (std::isfinite(v)) var += (v - mean) * (v - mean);
      row.mean = mean;
      row.stddev = std::sqrt(var / (double)finite);
    } else {
      row.mean = std::numeric_limits<double>::infinity(); // identical stacks (PSNR)
    }
    rows.push_back(row);
  }
  return rows;
}

} // namespace sd::metrics
