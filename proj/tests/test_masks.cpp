#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "xaibench/bitmask.hpp"
#include "xaibench/render.hpp"
#include "xaibench/resize.hpp"
#include "xaibench/rng.hpp"
#include "xaibench/scene.hpp"

using namespace xaibench;

namespace {

// Non-separable reference resampler: every output pixel sums over the full
// source plane with the product of two normalized triangle kernels.
std::vector<double> reference_resize(const std::vector<double>& src, int h, int w, int th,
                                     int tw) {
  auto axis_weights = [](int src_size, int dst_size, int j) {
    double scale = static_cast<double>(src_size) / dst_size;
    double fscale = std::max(1.0, scale);
    double center = (j + 0.5) * scale;
    std::vector<double> weights(src_size, 0.0);
    double total = 0;
    for (int i = 0; i < src_size; ++i) {
      double d = std::abs((i + 0.5 - center) / fscale);
      weights[i] = std::max(0.0, 1.0 - d);
      total += weights[i];
    }
    for (double& v : weights) v /= total;
    return weights;
  };
  std::vector<double> out(static_cast<std::size_t>(th) * tw, 0.0);
  for (int r = 0; r < th; ++r) {
    std::vector<double> wr = axis_weights(h, th, r);
    for (int c = 0; c < tw; ++c) {
      std::vector<double> wc = axis_weights(w, tw, c);
      double acc = 0;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          acc += wr[i] * wc[j] * src[static_cast<std::size_t>(i) * w + j];
        }
      }
      out[static_cast<std::size_t>(r) * tw + c] = acc;
    }
  }
  return out;
}

BitMask random_mask(int h, int w, Rng& rng, double density) {
  BitMask m(h, w);
  for (auto& b : m.bits) b = rng.next_double() < density ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("rle round-trips and always starts with a false run") {
  Rng rng(7);
  for (double density : {0.0, 0.15, 0.5, 0.85, 1.0}) {
    BitMask m = random_mask(9, 13, rng, density);
    std::vector<int> runs = encode_rle(m);
    int total = 0;
    for (int r : runs) total += r;
    CHECK(total == 9 * 13);
    CHECK(decode_rle(9, 13, runs) == m);
    if (m.bits[0] == 1) CHECK(runs[0] == 0);
  }
}

TEST_CASE("mask json embeds dimensions and rle") {
  Rng rng(11);
  BitMask m = random_mask(5, 8, rng, 0.4);
  BitMask back = mask_from_json(mask_to_json(m));
  CHECK(back == m);
}

TEST_CASE("union_mask ors members and rejects unknown ids") {
  ObjectMaskStore store;
  store.masks[0] = BitMask(4, 4);
  store.masks[1] = BitMask(4, 4);
  store.masks[0].at(0, 0) = 1;
  store.masks[1].at(3, 3) = 1;

  BitMask u = union_mask({0, 1}, store, 4, 4);
  CHECK(u.pixel_count() == 2);
  CHECK(u.at(0, 0) == 1);
  CHECK(u.at(3, 3) == 1);
  CHECK(union_mask({}, store, 4, 4).pixel_count() == 0);
  CHECK_THROWS_AS(union_mask({5}, store, 4, 4), UnknownObjectId);
}

TEST_CASE("resize_plane matches the non-separable reference") {
  Rng rng(21);
  for (auto [h, w, th, tw] : {std::array<int, 4>{48, 48, 32, 32},
                              std::array<int, 4>{9, 7, 5, 4},
                              std::array<int, 4>{5, 5, 9, 9},
                              std::array<int, 4>{16, 4, 4, 16}}) {
    std::vector<double> src(static_cast<std::size_t>(h) * w);
    for (double& v : src) v = rng.next_double();
    std::vector<double> fast = resize_plane(src, h, w, th, tw);
    std::vector<double> slow = reference_resize(src, h, w, th, tw);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("resize preserves constants and mask resize is monotone") {
  std::vector<double> flat(48 * 48, 0.37);
  for (double v : resize_plane(flat, 48, 48, 32, 32)) {
    CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
  }

  Rng rng(33);
  BitMask a = random_mask(48, 48, rng, 0.2);
  BitMask b = a;
  for (auto& bit : b.bits) {
    if (rng.next_double() < 0.2) bit = 1;  // b is a superset of a
  }
  BitMask ra = resize_mask(a, 32, 32);
  BitMask rb = resize_mask(b, 32, 32);
  for (std::size_t i = 0; i < ra.bits.size(); ++i) {
    if (ra.bits[i]) CHECK(rb.bits[i] == 1);
  }

  BitMask all_true(48, 48);
  std::fill(all_true.bits.begin(), all_true.bits.end(), 1);
  CHECK(resize_mask(all_true, 32, 32).pixel_count() == 32 * 32);
  CHECK(resize_mask(BitMask(48, 48), 32, 32).pixel_count() == 0);
}

TEST_CASE("rasterized masks partition the non-background region") {
  SceneGraph scene;
  scene.height = 48;
  scene.width = 48;
  auto add = [&](double x, double y, int size) {
    SceneObject o;
    o.id = scene.size();
    o.shape = o.id % 3;
    o.color = o.id % 8;
    o.material = o.id % 2;
    o.size = size;
    o.x = x;
    o.y = y;
    scene.objects.push_back(o);
  };
  add(12, 12, 1);
  add(20, 16, 0);  // overlaps the first object
  add(36, 36, 0);
  scene.validate();

  RenderResult r = rasterize_scene(scene, ShapeGeometry{});
  BitMask covered = union_mask({0, 1, 2}, r.masks, 48, 48);

  int painted = 0;
  constexpr double kBackground = 0.5;
  for (int row = 0; row < 48; ++row) {
    for (int col = 0; col < 48; ++col) {
      bool is_background = r.image.at3(0, row, col) == kBackground &&
                           r.image.at3(1, row, col) == kBackground &&
                           r.image.at3(2, row, col) == kBackground;
      painted += !is_background;
      CHECK(covered.at(row, col) == (is_background ? 0 : 1));
    }
  }
  CHECK(painted > 0);

  int overlap = 0;
  for (std::size_t i = 0; i < covered.bits.size(); ++i) {
    overlap += r.masks.masks.at(0).bits[i] && r.masks.masks.at(1).bits[i];
  }
  CHECK(overlap == 0);  // the owner map makes masks disjoint
}

TEST_CASE("occlusion order is back to front with id breaking ties") {
  SceneGraph scene;
  scene.height = 48;
  scene.width = 48;
  for (int i = 0; i < 2; ++i) {
    SceneObject o;
    o.id = i;
    o.shape = 0;
    o.color = i;
    o.material = 0;
    o.size = 0;
    o.x = 20;
    o.y = 20;  // identical position: the later id must win every pixel
    scene.objects.push_back(o);
  }
  scene.validate();
  CHECK_THROWS_AS(rasterize_scene(scene, ShapeGeometry{}), DegenerateObject);

  scene.objects[1].x = 24;  // partial overlap, same depth
  RenderResult r = rasterize_scene(scene, ShapeGeometry{});
  CHECK(r.masks.masks.at(1).at(20, 22) == 1);
  CHECK(r.masks.masks.at(0).at(20, 22) == 0);

  scene.objects[1].y = 18;  // now behind: object 0 paints over it
  RenderResult r2 = rasterize_scene(scene, ShapeGeometry{});
  CHECK(r2.masks.masks.at(0).at(19, 22) == 1);
  CHECK(r2.masks.masks.at(1).at(19, 22) == 0);
}

TEST_CASE("summary statistics match a direct computation") {
  std::vector<double> values{4, 1, 3, 2};
  SummaryStats s = summarize(values);
  CHECK(s.min == 1);
  CHECK(s.max == 4);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));

  std::vector<BitMask> masks(2, BitMask(4, 4));
  masks[0].at(0, 0) = 1;
  masks[1].at(0, 0) = 1;
  masks[1].at(0, 1) = 1;
  MaskStats ms = mask_stats(masks, {1, 2});
  CHECK(ms.pixels.min == 1);
  CHECK(ms.pixels.max == 2);
  CHECK(ms.objects.mean == doctest::Approx(1.5));
}
