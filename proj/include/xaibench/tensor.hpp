#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace xaibench {

// Dense row-major f64 tensor. Index math lives at the call sites; this type
// only owns shape and storage.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel(shape), 0.0) {}

  static std::int64_t numel(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // C×H×W accessor for image-like tensors.
  double& at3(int c, int h, int w) {
    return data[(static_cast<std::int64_t>(c) * shape[1] + h) * shape[2] + w];
  }
  double at3(int c, int h, int w) const {
    return data[(static_cast<std::int64_t>(c) * shape[1] + h) * shape[2] + w];
  }
};

}  // namespace xaibench
