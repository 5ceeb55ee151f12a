#pragma once

#include <vector>

#include "xaibench/bitmask.hpp"
#include "xaibench/tensor.hpp"

namespace xaibench {

// One axis of a separable bilinear resample: for each output index, the first
// contributing source index and its normalized non-negative weights. Uses
// half-pixel center alignment; on downscale the triangle kernel support grows
// with the scale factor so every source pixel contributes somewhere.
struct ResampleAxis {
  struct Tap {
    int first = 0;
    std::vector<double> weights;
  };
  std::vector<Tap> taps;
};

ResampleAxis plan_resample(int src_size, int dst_size);

// Two-pass separable resample of a single H×W plane.
std::vector<double> resize_plane(const std::vector<double>& src, int height, int width,
                                 int target_height, int target_width);

// Resamples each channel of a C×H×W tensor independently.
Tensor resize_image(const Tensor& image, int target_height, int target_width);

// Resamples the mask as a 0/1 image, then marks every non-zero pixel True.
BitMask resize_mask(const BitMask& mask, int target_height, int target_width);

}  // namespace xaibench
