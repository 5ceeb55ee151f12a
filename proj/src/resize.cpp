#include "xaibench/resize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xaibench {

ResampleAxis plan_resample(int src_size, int dst_size) {
  if (src_size < 1 || dst_size < 1) throw std::invalid_argument("sizes must be >= 1");
  ResampleAxis axis;
  axis.taps.resize(dst_size);
  double scale = static_cast<double>(src_size) / dst_size;
  double filter_scale = std::max(1.0, scale);
  double support = filter_scale;  // triangle kernel radius 1, widened on downscale
  for (int j = 0; j < dst_size; ++j) {
    double center = (j + 0.5) * scale;
    int lo = std::max(0, static_cast<int>(std::floor(center - support + 0.5)));
    int hi = std::min(src_size, static_cast<int>(std::floor(center + support + 0.5)));
    auto& tap = axis.taps[j];
    tap.first = lo;
    tap.weights.resize(hi - lo);
    double total = 0;
    for (int i = lo; i < hi; ++i) {
      double d = std::abs((i + 0.5 - center) / filter_scale);
      double w = std::max(0.0, 1.0 - d);
      tap.weights[i - lo] = w;
      total += w;
    }
    // The window always contains the nearest source center, so total > 0.
    for (double& w : tap.weights) w /= total;
  }
  return axis;
}

namespace {

// Applies a plan along the row axis of an H×W plane.
std::vector<double> apply_rows(const std::vector<double>& src, int height, int width,
                               const ResampleAxis& axis) {
  int target = static_cast<int>(axis.taps.size());
  std::vector<double> out(static_cast<std::size_t>(target) * width, 0.0);
  for (int r = 0; r < target; ++r) {
    const auto& tap = axis.taps[r];
    for (std::size_t k = 0; k < tap.weights.size(); ++k) {
      const double* in_row = src.data() + static_cast<std::size_t>(tap.first + k) * width;
      double w = tap.weights[k];
      double* out_row = out.data() + static_cast<std::size_t>(r) * width;
      for (int c = 0; c < width; ++c) out_row[c] += w * in_row[c];
    }
  }
  (void)height;
  return out;
}

std::vector<double> apply_cols(const std::vector<double>& src, int height, int width,
                               const ResampleAxis& axis) {
  int target = static_cast<int>(axis.taps.size());
  std::vector<double> out(static_cast<std::size_t>(height) * target, 0.0);
  for (int r = 0; r < height; ++r) {
    const double* in_row = src.data() + static_cast<std::size_t>(r) * width;
    double* out_row = out.data() + static_cast<std::size_t>(r) * target;
    for (int c = 0; c < target; ++c) {
      const auto& tap = axis.taps[c];
      double acc = 0;
      for (std::size_t k = 0; k < tap.weights.size(); ++k) {
        acc += tap.weights[k] * in_row[tap.first + k];
      }
      out_row[c] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<double> resize_plane(const std::vector<double>& src, int height, int width,
                                 int target_height, int target_width) {
  if (static_cast<std::size_t>(height) * width != src.size()) {
    throw std::invalid_argument("plane size mismatch");
  }
  ResampleAxis rows = plan_resample(height, target_height);
  ResampleAxis cols = plan_resample(width, target_width);
  return apply_cols(apply_rows(src, height, width, rows), target_height, width, cols);
}

Tensor resize_image(const Tensor& image, int target_height, int target_width) {
  if (image.shape.size() != 3) throw std::invalid_argument("expected a C×H×W tensor");
  int channels = image.shape[0], height = image.shape[1], width = image.shape[2];
  Tensor out({channels, target_height, target_width});
  std::vector<double> plane(static_cast<std::size_t>(height) * width);
  for (int c = 0; c < channels; ++c) {
    const double* src = image.data.data() + static_cast<std::size_t>(c) * height * width;
    std::copy(src, src + plane.size(), plane.begin());
    auto resized = resize_plane(plane, height, width, target_height, target_width);
    std::copy(resized.begin(), resized.end(),
              out.data.begin() + static_cast<std::size_t>(c) * target_height * target_width);
  }
  return out;
}

BitMask resize_mask(const BitMask& mask, int target_height, int target_width) {
  std::vector<double> plane(mask.bits.begin(), mask.bits.end());
  auto resized = resize_plane(plane, mask.height, mask.width, target_height, target_width);
  BitMask out(target_height, target_width);
  for (std::size_t i = 0; i < resized.size(); ++i) out.bits[i] = resized[i] > 0.0 ? 1 : 0;
  return out;
}

}  // namespace xaibench
