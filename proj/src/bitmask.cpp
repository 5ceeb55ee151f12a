#include "xaibench/bitmask.hpp"

#include <algorithm>
#include <cmath>

namespace xaibench {

BitMask union_mask(const std::set<int>& ids, const ObjectMaskStore& store, int height,
                   int width) {
  BitMask out(height, width);
  for (int id : ids) {
    auto it = store.masks.find(id);
    if (it == store.masks.end()) {
      throw UnknownObjectId("no mask for object " + std::to_string(id));
    }
    const BitMask& m = it->second;
    if (m.height != height || m.width != width) {
      throw std::invalid_argument("mask size mismatch in union");
    }
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= m.bits[i];
  }
  return out;
}

std::vector<int> encode_rle(const BitMask& mask) {
  std::vector<int> runs;
  std::uint8_t current = 0;
  int length = 0;
  for (std::uint8_t b : mask.bits) {
    if (b == current) {
      ++length;
    } else {
      runs.push_back(length);
      current = b;
      length = 1;
    }
  }
  runs.push_back(length);
  return runs;
}

BitMask decode_rle(int height, int width, const std::vector<int>& runs) {
  BitMask mask(height, width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (int run : runs) {
    if (run < 0 || pos + run > mask.bits.size()) {
      throw std::invalid_argument("run lengths do not fit the mask");
    }
    std::fill_n(mask.bits.begin() + pos, run, value);
    pos += run;
    value ^= 1;
  }
  if (pos != mask.bits.size()) throw std::invalid_argument("run lengths do not cover the mask");
  return mask;
}

nlohmann::ordered_json mask_to_json(const BitMask& mask) {
  nlohmann::ordered_json j;
  j["height"] = mask.height;
  j["width"] = mask.width;
  j["rle"] = encode_rle(mask);
  return j;
}

BitMask mask_from_json(const nlohmann::json& j) {
  return decode_rle(j.at("height").get<int>(), j.at("width").get<int>(),
                    j.at("rle").get<std::vector<int>>());
}

SummaryStats summarize(const std::vector<double>& values) {
  if (values.empty()) throw EmptyCollection("no values to summarize");
  SummaryStats s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

MaskStats mask_stats(const std::vector<BitMask>& masks, const std::vector<int>& object_counts) {
  if (masks.empty()) throw EmptyCollection("no masks to summarize");
  if (masks.size() != object_counts.size()) {
    throw std::invalid_argument("one object count per mask required");
  }
  std::vector<double> pixels, objects;
  pixels.reserve(masks.size());
  objects.reserve(masks.size());
  for (const BitMask& m : masks) pixels.push_back(static_cast<double>(m.pixel_count()));
  for (int n : object_counts) objects.push_back(static_cast<double>(n));
  return MaskStats{summarize(pixels), summarize(objects)};
}

}  // namespace xaibench
