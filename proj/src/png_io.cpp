#include "sinodenoise/png_io.hpp"

#include "sinodenoise/ct_physics.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace sd::png_io {

namespace {

void write_gray_buffer(const std::filesystem::path& path,
                       const std::vector<unsigned char>& buf, int rows, int cols) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw ValidationError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw ValidationError("libpng failure writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(cols), png_uint_32(rows), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < rows; ++r)
    png_write_row(png, const_cast<png_bytep>(&buf[std::size_t(r) * cols]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

unsigned char to_byte(float v, float lo, float hi) {
  const float t = (v - lo) / (hi - lo);
  return (unsigned char)std::lround(std::clamp(t, 0.0f, 1.0f) * 255.0f);
}

} // namespace

void write_gray_png(const std::filesystem::path& path, const std::vector<float>& img,
                    int rows, int cols, float lo, float hi) {
  if (int(img.size()) != rows * cols)
    throw ValidationError("write_gray_png: image size mismatch");
  if (!(hi > lo)) throw ValidationError("write_gray_png: empty intensity window");
  std::vector<unsigned char> buf(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) buf[i] = to_byte(img[i], lo, hi);
  write_gray_buffer(path, buf, rows, cols);
}

void write_panel_png(const std::filesystem::path& path,
                     const std::vector<const std::vector<float>*>& images,
                     int rows, int cols, float lo, float hi) {
  if (images.empty()) throw ValidationError("write_panel_png: no images");
  for (const auto* img : images)
    if (int(img->size()) != rows * cols)
      throw ValidationError("write_panel_png: image size mismatch");
  const int sep = 2;
  const int total_cols = int(images.size()) * cols + (int(images.size()) - 1) * sep;
  std::vector<unsigned char> buf(std::size_t(rows) * total_cols, 255);
  for (std::size_t p = 0; p < images.size(); ++p) {
    const int off = int(p) * (cols + sep);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        buf[std::size_t(r) * total_cols + off + c] =
            to_byte((*images[p])[std::size_t(r) * cols + c], lo, hi);
  }
  write_gray_buffer(path, buf, rows, total_cols);
}

void write_box_plot_png(const std::filesystem::path& path,
                        const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& samples) {
  if (labels.size() != samples.size() || samples.empty())
    throw ValidationError("write_box_plot_png: label/sample count mismatch");

  auto quantile = [](std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * double(v.size() - 1);
    const std::size_t i = std::size_t(pos);
    const double frac = pos - double(i);
    return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
  };

  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (const auto& s : samples) {
    if (s.empty()) throw ValidationError("write_box_plot_png: empty sample group");
    vmin = std::min(vmin, *std::min_element(s.begin(), s.end()));
    vmax = std::max(vmax, *std::max_element(s.begin(), s.end()));
  }
  if (!(vmax > vmin)) vmax = vmin + 1.0;

  const int rows = 240, group_w = 60, margin = 20;
  const int cols = margin * 2 + group_w * int(samples.size());
  std::vector<unsigned char> buf(std::size_t(rows) * cols, 255);
  auto set = [&](int r, int c, unsigned char v) {
    if (r >= 0 && r < rows && c >= 0 && c < cols) buf[std::size_t(r) * cols + c] = v;
  };
  auto to_row = [&](double v) {
    return int(std::lround((rows - 2 * margin) * (1.0 - (v - vmin) / (vmax - vmin)))) +
           margin;
  };

  for (std::size_t g = 0; g < samples.size(); ++g) {
    const auto& s = samples[g];
    const int cx = margin + int(g) * group_w + group_w / 2;
    const int half = group_w / 4;
    const int r_lo = to_row(quantile(s, 0.0)), r_q1 = to_row(quantile(s, 0.25));
    const int r_med = to_row(quantile(s, 0.5)), r_q3 = to_row(quantile(s, 0.75));
    const int r_hi = to_row(quantile(s, 1.0));
    for (int r = r_hi; r <= r_lo; ++r) set(r, cx, 0); // whisker line
    for (int c = cx - half; c <= cx + half; ++c) {
      set(r_q1, c, 0);
      set(r_q3, c, 0);
      set(r_med, c, 64);
      set(r_lo, c, 0);
      set(r_hi, c, 0);
    }
    for (int r = r_q3; r <= r_q1; ++r) {
      set(r, cx - half, 0);
      set(r, cx + half, 0);
    }
  }
  write_gray_buffer(path, buf, rows, cols);
}

} // namespace sd::png_io
