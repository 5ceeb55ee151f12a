#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace xaibench {

struct BitMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  BitMask() = default;
  BitMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int r, int c) { return bits[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return bits[static_cast<std::size_t>(r) * width + c]; }

  int pixel_count() const {
    int n = 0;
    for (std::uint8_t b : bits) n += b;
    return n;
  }

  bool operator==(const BitMask&) const = default;
};

struct ObjectMaskStore {
  std::map<int, BitMask> masks;
};

struct UnknownObjectId : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyCollection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A ground-truth object set or mask with nothing in it.
struct EmptyGT : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bitwise OR of the member masks; {} yields an all-False mask.
BitMask union_mask(const std::set<int>& ids, const ObjectMaskStore& store, int height,
                   int width);

// Run lengths of alternating False/True spans, always starting with a False run.
std::vector<int> encode_rle(const BitMask& mask);
BitMask decode_rle(int height, int width, const std::vector<int>& runs);

nlohmann::ordered_json mask_to_json(const BitMask& mask);
BitMask mask_from_json(const nlohmann::json& j);

struct SummaryStats {
  double min = 0, max = 0, mean = 0, std = 0;  // population std
};

SummaryStats summarize(const std::vector<double>& values);

struct MaskStats {
  SummaryStats pixels;
  SummaryStats objects;
};

// Parallel arrays: per-mask pixel footprint and the number of scene objects it
// covers.
MaskStats mask_stats(const std::vector<BitMask>& masks, const std::vector<int>& object_counts);

}  // namespace xaibench
