#include "xaibench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xaibench {

namespace {

constexpr std::string_view kPoolingNames[] = {
    "sum_pos", "sum_abs", "l1_norm", "max_norm", "l2_norm",
    "l2_norm_sq", "pos_sum", "pos_max_norm", "pos_l2_norm", "pos_l2_norm_sq",
};

}  // namespace

std::string_view pooling_name(Pooling p) { return kPoolingNames[static_cast<int>(p)]; }

bool pooling_from_name(std::string_view name, Pooling& out) {
  for (int i = 0; i < 10; ++i) {
    if (kPoolingNames[i] == name) {
      out = static_cast<Pooling>(i);
      return true;
    }
  }
  return false;
}

Heatmap pool(const Tensor& relevance, Pooling technique) {
  if (relevance.shape.size() != 3 || relevance.shape[0] < 1) {
    throw std::invalid_argument("pooling expects a C×H×W tensor");
  }
  int channels = relevance.shape[0], height = relevance.shape[1], width = relevance.shape[2];
  std::size_t plane = static_cast<std::size_t>(height) * width;
  Heatmap out(height, width);
  for (std::size_t p = 0; p < plane; ++p) {
    double sum = 0, abs_sum = 0, abs_max = 0, sq = 0;
    double pos_sum = 0, pos_max = 0, pos_sq = 0;
    for (int c = 0; c < channels; ++c) {
      double v = relevance.data[c * plane + p];
      sum += v;
      abs_sum += std::abs(v);
      abs_max = std::max(abs_max, std::abs(v));
      sq += v * v;
      double pos = std::max(v, 0.0);
      pos_sum += pos;
      pos_max = std::max(pos_max, pos);
      pos_sq += pos * pos;
    }
    double value = 0;
    switch (technique) {
      case Pooling::SumPos: value = std::max(sum, 0.0); break;
      case Pooling::SumAbs: value = std::abs(sum); break;
      case Pooling::L1Norm: value = abs_sum; break;
      case Pooling::MaxNorm: value = abs_max; break;
      case Pooling::L2Norm: value = std::sqrt(sq); break;
      case Pooling::L2NormSq: value = sq; break;
      case Pooling::PosSum: value = pos_sum; break;
      case Pooling::PosMaxNorm: value = pos_max; break;
      case Pooling::PosL2Norm: value = std::sqrt(pos_sq); break;
      case Pooling::PosL2NormSq: value = pos_sq; break;
    }
    out.values[p] = value;
  }
  return out;
}

namespace {

void check_pair(const Heatmap& heatmap, const BitMask& gt) {
  if (heatmap.height != gt.height || heatmap.width != gt.width) {
    throw std::invalid_argument("heatmap and mask dimensions differ");
  }
  if (gt.pixel_count() == 0) throw EmptyGT("ground-truth mask is empty");
}

}  // namespace

double mass_accuracy(const Heatmap& heatmap, const BitMask& gt) {
  check_pair(heatmap, gt);
  double total = 0, within = 0;
  for (std::size_t i = 0; i < heatmap.values.size(); ++i) {
    total += heatmap.values[i];
    if (gt.bits[i]) within += heatmap.values[i];
  }
  if (total == 0) throw ZeroHeatmap("heatmap has no mass");
  return within / total;
}

double rank_accuracy(const Heatmap& heatmap, const BitMask& gt) {
  check_pair(heatmap, gt);
  bool any = std::any_of(heatmap.values.begin(), heatmap.values.end(),
                         [](double v) { return v != 0.0; });
  if (!any) throw ZeroHeatmap("heatmap has no mass");
  int k = gt.pixel_count();
  std::vector<int> order(heatmap.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (heatmap.values[a] != heatmap.values[b]) return heatmap.values[a] > heatmap.values[b];
    return a < b;
  });
  int hits = 0;
  for (int i = 0; i < k; ++i) hits += gt.bits[order[i]] ? 1 : 0;
  return static_cast<double>(hits) / k;
}

Aggregate aggregate(const std::vector<double>& scores) {
  if (scores.empty()) throw EmptyInput("no scores to aggregate");
  // Sorting before accumulation makes the sums independent of the order
  // scores were collected in, so worker scheduling cannot change the report.
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  Aggregate a;
  a.count = static_cast<int>(sorted.size());
  double sum = 0;
  for (double s : sorted) sum += s;
  a.mean = sum / a.count;
  double sq = 0;
  for (double s : sorted) sq += (s - a.mean) * (s - a.mean);
  a.std = std::sqrt(sq / a.count);
  a.median = sorted[(sorted.size() - 1) / 2];
  return a;
}

}  // namespace xaibench
