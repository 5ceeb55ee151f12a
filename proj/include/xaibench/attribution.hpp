#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "xaibench/metrics.hpp"
#include "xaibench/net.hpp"
#include "xaibench/tensor.hpp"

namespace xaibench {

// A per-question result the caller must exclude from scoring rather than
// treat as a zero heatmap.
struct DiscardPoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integration endpoints coincide, so the completeness error is undefined.
struct DegenerateSpan : DiscardPoint {
  using DiscardPoint::DiscardPoint;
};

struct LayerNotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// R = g, g·x, g², or g²·x, with g the standard input gradient.
Tensor gradient_attribution(const Model& model, const Tensor& x, const std::vector<double>& q,
                            int target_class, bool squared, bool times_input);

struct NoiseConfig {
  double sigma = 0.0;  // noise std as a fraction of the input value range
  int n = 1;
  std::uint64_t seed = 0;
};

inline constexpr double kSmoothGradSigmaGrid[] = {0.02, 0.05, 0.10, 0.20, 0.30};
inline constexpr int kSmoothGradSampleGrid[] = {20, 50, 100, 300};

// Mean over n noisy samples of the per-sample gradient quantity. The noise
// amplitude is sigma·(x_max − x_min) over all channels jointly. sigma = 0
// reduces bit-exactly to gradient_attribution.
Tensor smoothgrad(const Model& model, const Tensor& x, const std::vector<double>& q,
                  int target_class, const NoiseConfig& cfg, bool squared, bool times_input);

// Per-pixel population variance of the unmodified gradient over noisy samples.
Tensor vargrad(const Model& model, const Tensor& x, const std::vector<double>& q,
               int target_class, const NoiseConfig& cfg);

// Deconvnet or guided backprop via the modified ReLU backward rules.
Tensor modified_backprop(const Model& model, const Tensor& x, const std::vector<double>& q,
                         int target_class, ReluMode mode, ReluScope scope);

enum class GradCamLayer { Conv, Relu, Batchnorm };

struct GradCamIntermediate {
  Tensor features;             // K×h×w activations of the chosen layer
  std::vector<double> alpha;   // spatial mean of ∂f_c/∂A^k
  Heatmap raw;                 // h×w, ReLU(Σ α_k A^k)
  Heatmap upsampled;           // bilinear to input H×W
  bool zero_flag = false;      // raw map identically zero
};

// Feature maps come from the chosen layer of the last convolutional block.
GradCamIntermediate grad_cam(const Model& model, const ForwardTrace& trace, int target_class,
                             GradCamLayer layer_choice);

// Guided backprop relevance, gated per pixel by the upsampled Grad-CAM map.
// Throws DiscardPoint when the Grad-CAM map is identically zero.
Tensor guided_grad_cam(const Model& model, const Tensor& x, const std::vector<double>& q,
                       int target_class, GradCamLayer layer_choice = GradCamLayer::Batchnorm);

struct IGConfig {
  enum class Baseline { Zeros, MeanImage, MeanChannels, Custom };
  Baseline baseline = Baseline::Zeros;
  Tensor custom;
  std::vector<int> step_schedule = {300, 1000, 3000, 10000, 30000};
  double tolerance = 0.01;
};

struct IGResult {
  Tensor relevance;
  double relative_error = 0;
  int steps_used = 0;
};

// Midpoint Riemann sum along the straight path from the baseline, using the
// smallest schedule entry whose completeness error beats the tolerance.
// Throws DiscardPoint when the schedule is exhausted and DegenerateSpan when
// f_c(x) equals f_c(baseline) exactly.
IGResult integrated_gradients(const Model& model, const Tensor& x, const std::vector<double>& q,
                              int target_class, const IGConfig& cfg);

struct LRPConfig {
  enum class HiddenRule { Epsilon, AlphaBeta };
  enum class Composite { None, ClassifierEpsilon, AllDenseEpsilon };
  enum class InputRule { None, Box, WSquared, Flat };

  HiddenRule hidden_rule = HiddenRule::Epsilon;
  Composite composite = Composite::None;
  InputRule input_rule = InputRule::None;
  double epsilon = 0.001;
  double input_low = 0.0;
  double input_high = 1.0;
  bool merge_batchnorm = false;

  // Excitation-backprop preset: alpha-beta everywhere, no input rule.
  static LRPConfig excitation_backprop() {
    LRPConfig cfg;
    cfg.hidden_rule = HiddenRule::AlphaBeta;
    cfg.composite = Composite::None;
    cfg.input_rule = InputRule::None;
    return cfg;
  }
};

struct LrpDiagnostics {
  // Total relevance at every activation boundary, input first, logits last.
  std::vector<double> boundary_sums;
};

// Layer-wise relevance propagation seeded with the target logit's value.
// ReLU passes relevance unchanged; the sum over pairs redistributes
// proportionally to forward contributions; pair concatenation returns
// image-side relevance and drops the question share.
Tensor lrp(const Model& model, const ForwardTrace& trace, int target_class,
           const LRPConfig& cfg, LrpDiagnostics* diagnostics = nullptr);

}  // namespace xaibench
