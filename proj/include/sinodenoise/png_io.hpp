#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sd::png_io {

// 8-bit grayscale PNG; values mapped linearly from [lo, hi] and clipped.
void write_gray_png(const std::filesystem::path& path, const std::vector<float>& img,
                    int rows, int cols, float lo, float hi);

// Side-by-side comparison panel of equally sized grayscale images with a
// shared intensity window and a 2-pixel separator.
void write_panel_png(const std::filesystem::path& path,
                     const std::vector<const std::vector<float>*>& images,
                     int rows, int cols, float lo, float hi);

// Minimal box plot (median, quartile box, min/max whiskers) of one sample
// distribution per labeled group.
void write_box_plot_png(const std::filesystem::path& path,
                        const std::vector<std::string>& labels,
                        const std::vector<std::vector<double>>& samples);

} // namespace sd::png_io
