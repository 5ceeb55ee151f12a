#pragma once

#include <stdexcept>
#include <string_view>
#include <vector>

#include "xaibench/bitmask.hpp"
#include "xaibench/tensor.hpp"

namespace xaibench {

struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major, all >= 0

  Heatmap() = default;
  Heatmap(int h, int w) : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0) {}

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

enum class Pooling {
  SumPos,
  SumAbs,
  L1Norm,
  MaxNorm,
  L2Norm,
  L2NormSq,
  PosSum,
  PosMaxNorm,
  PosL2Norm,
  PosL2NormSq,
};

inline constexpr Pooling kAllPoolings[] = {
    Pooling::SumPos,     Pooling::SumAbs,     Pooling::L1Norm,    Pooling::MaxNorm,
    Pooling::L2Norm,     Pooling::L2NormSq,   Pooling::PosSum,    Pooling::PosMaxNorm,
    Pooling::PosL2Norm,  Pooling::PosL2NormSq,
};

std::string_view pooling_name(Pooling p);
bool pooling_from_name(std::string_view name, Pooling& out);

// Collapses C×H×W signed relevance to a non-negative per-pixel heatmap.
Heatmap pool(const Tensor& relevance, Pooling technique);

struct ZeroHeatmap : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fraction of the total heatmap mass inside the ground-truth mask.
double mass_accuracy(const Heatmap& heatmap, const BitMask& gt);

// Fraction of the K = |GT| highest-valued pixels that land inside the mask.
// Ties sort by descending value then ascending row-major index.
double rank_accuracy(const Heatmap& heatmap, const BitMask& gt);

struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Aggregate {
  double mean = 0;
  double std = 0;     // population
  double median = 0;  // lower middle for even counts
  int count = 0;
};

Aggregate aggregate(const std::vector<double>& scores);

}  // namespace xaibench
