#include "xaibench/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "xaibench/resize.hpp"
#include "xaibench/rng.hpp"

namespace xaibench {

Tensor gradient_attribution(const Model& model, const Tensor& x, const std::vector<double>& q,
                            int target_class, bool squared, bool times_input) {
  ForwardTrace trace = forward(model, x, q);
  Tensor g = backward(model, trace, target_class);
  if (squared) {
    for (double& v : g.data) v *= v;
  }
  if (times_input) {
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= x.data[i];
  }
  return g;
}

namespace {

double noise_amplitude(const Tensor& x, double sigma) {
  auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  return sigma * (*hi - *lo);
}

void check_noise(const NoiseConfig& cfg) {
  if (cfg.sigma < 0 || cfg.n < 1) throw std::invalid_argument("bad noise config");
}

Tensor noisy_input(const Tensor& x, double amplitude, Rng& rng) {
  Tensor out = x;
  for (double& v : out.data) v += amplitude * rng.next_gaussian();
  return out;
}

}  // namespace

Tensor smoothgrad(const Model& model, const Tensor& x, const std::vector<double>& q,
                  int target_class, const NoiseConfig& cfg, bool squared, bool times_input) {
  check_noise(cfg);
  // Zero noise makes every sample the base gradient; skip the mean so the
  // result is bit-identical to the plain gradient.
  if (cfg.sigma == 0.0) {
    return gradient_attribution(model, x, q, target_class, squared, times_input);
  }
  double amplitude = noise_amplitude(x, cfg.sigma);
  Rng rng(cfg.seed);
  Tensor acc(x.shape);
  for (int k = 0; k < cfg.n; ++k) {
    Tensor xk = noisy_input(x, amplitude, rng);
    ForwardTrace trace = forward(model, xk, q);
    Tensor g = backward(model, trace, target_class);
    if (squared) {
      for (double& v : g.data) v *= v;
    }
    if (times_input) {
      for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= x.data[i];
    }
    for (std::size_t i = 0; i < g.data.size(); ++i) acc.data[i] += g.data[i];
  }
  for (double& v : acc.data) v /= cfg.n;
  return acc;
}

Tensor vargrad(const Model& model, const Tensor& x, const std::vector<double>& q,
               int target_class, const NoiseConfig& cfg) {
  check_noise(cfg);
  if (cfg.sigma == 0.0) return Tensor(x.shape);
  double amplitude = noise_amplitude(x, cfg.sigma);
  Rng rng(cfg.seed);
  std::vector<Tensor> samples;
  samples.reserve(cfg.n);
  for (int k = 0; k < cfg.n; ++k) {
    Tensor xk = noisy_input(x, amplitude, rng);
    ForwardTrace trace = forward(model, xk, q);
    samples.push_back(backward(model, trace, target_class));
  }
  // Shifted two-pass variance: exact zero when every sample is identical.
  Tensor var(x.shape);
  for (std::size_t i = 0; i < var.data.size(); ++i) {
    double base = samples[0].data[i];
    double shifted = 0;
    for (const Tensor& s : samples) shifted += s.data[i] - base;
    double mean = base + shifted / cfg.n;
    double sq = 0;
    for (const Tensor& s : samples) {
      double d = s.data[i] - mean;
      sq += d * d;
    }
    var.data[i] = sq / cfg.n;
  }
  return var;
}

Tensor modified_backprop(const Model& model, const Tensor& x, const std::vector<double>& q,
                         int target_class, ReluMode mode, ReluScope scope) {
  ForwardTrace trace = forward(model, x, q);
  return backward(model, trace, target_class, mode, scope);
}

GradCamIntermediate grad_cam(const Model& model, const ForwardTrace& trace, int target_class,
                             GradCamLayer layer_choice) {
  std::size_t chosen = model.layers.size();
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    if (model.stages[k] != Stage::Conv) continue;
    bool match = false;
    switch (layer_choice) {
      case GradCamLayer::Conv: match = std::holds_alternative<Conv2D>(model.layers[k]); break;
      case GradCamLayer::Relu: match = std::holds_alternative<ReLU>(model.layers[k]); break;
      case GradCamLayer::Batchnorm:
        match = std::holds_alternative<BatchNorm>(model.layers[k]);
        break;
    }
    if (match) chosen = k;
  }
  if (chosen == model.layers.size()) {
    throw LayerNotFound("no such layer in the convolutional stage");
  }

  GradCamIntermediate out;
  out.features = trace.activations[chosen + 1];
  const Tensor& a = out.features;
  Tensor da = backward_to_activation(model, trace, target_class, chosen + 1);
  int k_maps = a.shape[0], h = a.shape[1], w = a.shape[2];
  std::size_t plane = static_cast<std::size_t>(h) * w;
  out.alpha.resize(k_maps);
  for (int k = 0; k < k_maps; ++k) {
    double sum = 0;
    for (std::size_t p = 0; p < plane; ++p) sum += da.data[k * plane + p];
    out.alpha[k] = sum / static_cast<double>(plane);
  }
  out.raw = Heatmap(h, w);
  for (std::size_t p = 0; p < plane; ++p) {
    double acc = 0;
    for (int k = 0; k < k_maps; ++k) acc += out.alpha[k] * a.data[k * plane + p];
    out.raw.values[p] = std::max(acc, 0.0);
  }
  out.zero_flag = std::all_of(out.raw.values.begin(), out.raw.values.end(),
                              [](double v) { return v == 0.0; });
  out.upsampled = Heatmap(model.input_height, model.input_width);
  out.upsampled.values =
      resize_plane(out.raw.values, h, w, model.input_height, model.input_width);
  return out;
}

Tensor guided_grad_cam(const Model& model, const Tensor& x, const std::vector<double>& q,
                       int target_class, GradCamLayer layer_choice) {
  ForwardTrace trace = forward(model, x, q);
  GradCamIntermediate cam = grad_cam(model, trace, target_class, layer_choice);
  if (cam.zero_flag) throw DiscardPoint("grad-cam map is identically zero");
  Tensor gb = backward(model, trace, target_class, ReluMode::Guided, ReluScope::All);
  std::size_t plane = static_cast<std::size_t>(model.input_height) * model.input_width;
  for (int c = 0; c < model.input_channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) gb.data[c * plane + p] *= cam.upsampled.values[p];
  }
  return gb;
}

namespace {

Tensor make_baseline(const IGConfig& cfg, const Tensor& x) {
  switch (cfg.baseline) {
    case IGConfig::Baseline::Zeros:
      return Tensor(x.shape);
    case IGConfig::Baseline::MeanImage: {
      double mean = 0;
      for (double v : x.data) mean += v;
      mean /= static_cast<double>(x.data.size());
      Tensor out(x.shape);
      std::fill(out.data.begin(), out.data.end(), mean);
      return out;
    }
    case IGConfig::Baseline::MeanChannels: {
      Tensor out(x.shape);
      std::size_t plane = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
      for (int c = 0; c < x.shape[0]; ++c) {
        double mean = 0;
        for (std::size_t p = 0; p < plane; ++p) mean += x.data[c * plane + p];
        mean /= static_cast<double>(plane);
        for (std::size_t p = 0; p < plane; ++p) out.data[c * plane + p] = mean;
      }
      return out;
    }
    case IGConfig::Baseline::Custom:
      if (!cfg.custom.same_shape(x)) throw std::invalid_argument("baseline shape mismatch");
      return cfg.custom;
  }
  throw std::invalid_argument("bad baseline");
}

}  // namespace

IGResult integrated_gradients(const Model& model, const Tensor& x, const std::vector<double>& q,
                              int target_class, const IGConfig& cfg) {
  if (cfg.tolerance <= 0) throw std::invalid_argument("tolerance must be positive");
  for (std::size_t i = 0; i < cfg.step_schedule.size(); ++i) {
    if (cfg.step_schedule[i] < 1 ||
        (i > 0 && cfg.step_schedule[i] <= cfg.step_schedule[i - 1])) {
      throw std::invalid_argument("step schedule must be strictly increasing");
    }
  }
  Tensor baseline = make_baseline(cfg, x);
  double fx = forward(model, x, q).logits().data[target_class];
  double fb = forward(model, baseline, q).logits().data[target_class];
  double span = fx - fb;
  if (span == 0.0) throw DegenerateSpan("prediction equals the baseline prediction");

  Tensor diff(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) diff.data[i] = x.data[i] - baseline.data[i];

  for (int steps : cfg.step_schedule) {
    Tensor acc(x.shape);
    for (int k = 1; k <= steps; ++k) {
      double t = (k - 0.5) / steps;
      Tensor xt(x.shape);
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        xt.data[i] = baseline.data[i] + t * diff.data[i];
      }
      ForwardTrace trace = forward(model, xt, q);
      Tensor g = backward(model, trace, target_class);
      for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
    }
    IGResult result;
    result.relevance = Tensor(x.shape);
    double total = 0;
    for (std::size_t i = 0; i < acc.data.size(); ++i) {
      result.relevance.data[i] = diff.data[i] * acc.data[i] / steps;
      total += result.relevance.data[i];
    }
    result.relative_error = std::abs(total - span) / std::abs(span);
    result.steps_used = steps;
    if (result.relative_error < cfg.tolerance) return result;
  }
  throw DiscardPoint("completeness tolerance not reached by any step count");
}

namespace {

enum class Rule { Epsilon, AlphaBeta, Box, WSquared, Flat };

double sign_of(double v) { return v >= 0 ? 1.0 : -1.0; }

// Shared per-connection terms: contribution of one input to one neuron.
struct RuleTerms {
  Rule rule;
  double eps, low, high;

  double term(double x, double w) const {
    switch (rule) {
      case Rule::Epsilon: return x * w;
      case Rule::AlphaBeta: return std::max(x * w, 0.0);
      case Rule::Box: return x * w - low * std::max(w, 0.0) - high * std::min(w, 0.0);
      case Rule::WSquared: return w * w;
      case Rule::Flat: return 1.0;
    }
    return 0;
  }
  // Bias share of the denominator; the epsilon family also counts the bias in z.
  double bias_term(double b) const {
    switch (rule) {
      case Rule::Epsilon: return b;
      case Rule::AlphaBeta: return std::max(b, 0.0);
      default: return 0.0;
    }
  }
  // Returns 0 when the neuron's relevance must be skipped entirely.
  double stabilize(double denom) const {
    switch (rule) {
      case Rule::Epsilon:
      case Rule::Box:
        return denom + eps * sign_of(denom);
      case Rule::AlphaBeta:
      case Rule::WSquared:
      case Rule::Flat:
        return denom;
    }
    return denom;
  }
};

Tensor lrp_dense(const Dense& l, const Tensor& x, const Tensor& rout, const RuleTerms& rt) {
  Tensor rin(x.shape);
  std::size_t rows = x.data.size() / l.in_features;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xin = x.data.data() + r * l.in_features;
    const double* rj = rout.data.data() + r * l.out_features;
    double* ri = rin.data.data() + r * l.in_features;
    for (int o = 0; o < l.out_features; ++o) {
      if (rj[o] == 0.0) continue;
      const double* wrow = l.weights.data.data() + static_cast<std::size_t>(o) * l.in_features;
      double denom = rt.bias_term(l.bias[o]);
      for (int i = 0; i < l.in_features; ++i) denom += rt.term(xin[i], wrow[i]);
      denom = rt.stabilize(denom);
      if (denom == 0.0) continue;
      double scale = rj[o] / denom;
      for (int i = 0; i < l.in_features; ++i) ri[i] += rt.term(xin[i], wrow[i]) * scale;
    }
  }
  return rin;
}

Tensor lrp_conv(const Conv2D& l, const Tensor& x, const Tensor& rout, const RuleTerms& rt) {
  Tensor rin(x.shape);
  int h = x.shape[1], w = x.shape[2];
  int oh = rout.shape[1], ow = rout.shape[2];
  for (int oc = 0; oc < l.out_channels; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double rj = rout.at3(oc, oy, ox);
        if (rj == 0.0) continue;
        double denom = rt.bias_term(l.bias[oc]);
        for (int ic = 0; ic < l.in_channels; ++ic) {
          for (int kh = 0; kh < l.kernel; ++kh) {
            std::size_t xbase = (static_cast<std::size_t>(ic) * h + oy * l.stride + kh) * w +
                                ox * l.stride;
            std::size_t kbase = ((static_cast<std::size_t>(oc) * l.in_channels + ic) * l.kernel +
                                 kh) * l.kernel;
            for (int kw = 0; kw < l.kernel; ++kw) {
              denom += rt.term(x.data[xbase + kw], l.kernels.data[kbase + kw]);
            }
          }
        }
        denom = rt.stabilize(denom);
        if (denom == 0.0) continue;
        double scale = rj / denom;
        for (int ic = 0; ic < l.in_channels; ++ic) {
          for (int kh = 0; kh < l.kernel; ++kh) {
            std::size_t xbase = (static_cast<std::size_t>(ic) * h + oy * l.stride + kh) * w +
                                ox * l.stride;
            std::size_t kbase = ((static_cast<std::size_t>(oc) * l.in_channels + ic) * l.kernel +
                                 kh) * l.kernel;
            for (int kw = 0; kw < l.kernel; ++kw) {
              rin.data[xbase + kw] +=
                  rt.term(x.data[xbase + kw], l.kernels.data[kbase + kw]) * scale;
            }
          }
        }
      }
    }
  }
  return rin;
}

// Affine per-element treatment with the active rule.
Tensor lrp_bn(const BatchNorm& l, const Tensor& x, const Tensor& rout, const RuleTerms& rt) {
  Tensor rin(x.shape);
  std::size_t plane = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
  for (int c = 0; c < l.channels; ++c) {
    double scale = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
    double shift = l.beta[c] - l.mean[c] * scale;
    for (std::size_t p = 0; p < plane; ++p) {
      double rj = rout.data[c * plane + p];
      if (rj == 0.0) continue;
      double num = rt.term(x.data[c * plane + p], scale);
      double denom = rt.stabilize(num + rt.bias_term(shift));
      if (denom == 0.0) continue;
      rin.data[c * plane + p] = num / denom * rj;
    }
  }
  return rin;
}

Tensor lrp_sumpool(const Tensor& x, const Tensor& rout, double eps) {
  int p = x.shape[0], d = x.shape[1];
  Tensor rin(x.shape);
  for (int k = 0; k < d; ++k) {
    double total = 0;
    for (int r = 0; r < p; ++r) total += x.data[static_cast<std::size_t>(r) * d + k];
    double denom = total + eps * sign_of(total);
    double scale = rout.data[k] / denom;
    for (int r = 0; r < p; ++r) {
      rin.data[static_cast<std::size_t>(r) * d + k] =
          x.data[static_cast<std::size_t>(r) * d + k] * scale;
    }
  }
  return rin;
}

Tensor lrp_pair(const PairConcat& l, const Tensor& x, const Tensor& rout) {
  int c = x.shape[0];
  int cells = x.shape[1] * x.shape[2];
  std::size_t plane = static_cast<std::size_t>(cells);
  int d = 2 * c + l.question_dim;
  Tensor rin(x.shape);
  for (int i = 0; i < cells; ++i) {
    for (int j = 0; j < cells; ++j) {
      const double* row = rout.data.data() + (static_cast<std::size_t>(i) * cells + j) * d;
      for (int ch = 0; ch < c; ++ch) {
        rin.data[ch * plane + i] += row[ch];
        rin.data[ch * plane + j] += row[c + ch];
      }
    }
  }
  return rin;
}

// Folds every batchnorm directly feeding a convolution into that convolution.
Model fold_batchnorm(const Model& model) {
  Model out;
  out.input_channels = model.input_channels;
  out.input_height = model.input_height;
  out.input_width = model.input_width;
  out.question_dim = model.question_dim;
  out.question_table = model.question_table;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto* bn = std::get_if<BatchNorm>(&model.layers[k]);
    const Conv2D* next = (k + 1 < model.layers.size())
                             ? std::get_if<Conv2D>(&model.layers[k + 1])
                             : nullptr;
    if (bn && next) {
      Conv2D merged = *next;
      std::vector<double> scale(bn->channels), shift(bn->channels);
      for (int c = 0; c < bn->channels; ++c) {
        scale[c] = bn->gamma[c] / std::sqrt(bn->var[c] + bn->eps);
        shift[c] = bn->beta[c] - bn->mean[c] * scale[c];
      }
      for (int oc = 0; oc < merged.out_channels; ++oc) {
        for (int ic = 0; ic < merged.in_channels; ++ic) {
          for (int kk = 0; kk < merged.kernel * merged.kernel; ++kk) {
            std::size_t idx = (static_cast<std::size_t>(oc) * merged.in_channels + ic) *
                                  merged.kernel * merged.kernel + kk;
            merged.bias[oc] += merged.kernels.data[idx] * shift[ic];
            merged.kernels.data[idx] *= scale[ic];
          }
        }
      }
      out.layers.emplace_back(std::move(merged));
      out.stages.push_back(model.stages[k + 1]);
      ++k;  // the convolution is consumed
    } else {
      out.layers.push_back(model.layers[k]);
      out.stages.push_back(model.stages[k]);
    }
  }
  return out;
}

}  // namespace

Tensor lrp(const Model& model_in, const ForwardTrace& trace_in, int target_class,
           const LRPConfig& cfg, LrpDiagnostics* diagnostics) {
  if (cfg.epsilon <= 0) throw std::invalid_argument("epsilon must be positive");
  if (cfg.input_low > cfg.input_high) throw std::invalid_argument("bad input bounds");

  Model folded;
  ForwardTrace refolded;
  const Model* model = &model_in;
  const ForwardTrace* trace = &trace_in;
  if (cfg.merge_batchnorm) {
    folded = fold_batchnorm(model_in);
    refolded = forward(folded, trace_in.activations.front(), trace_in.question);
    model = &folded;
    trace = &refolded;
  }
  if (trace->activations.size() != model->layers.size() + 1) {
    throw TraceMismatch("trace does not match the model's layer count");
  }

  std::size_t first_linear = model->layers.size();
  for (std::size_t k = 0; k < model->layers.size(); ++k) {
    if (std::holds_alternative<Conv2D>(model->layers[k]) ||
        std::holds_alternative<Dense>(model->layers[k])) {
      first_linear = k;
      break;
    }
  }

  auto rule_for = [&](std::size_t k) {
    if (k == first_linear && cfg.input_rule != LRPConfig::InputRule::None) {
      switch (cfg.input_rule) {
        case LRPConfig::InputRule::Box: return Rule::Box;
        case LRPConfig::InputRule::WSquared: return Rule::WSquared;
        case LRPConfig::InputRule::Flat: return Rule::Flat;
        default: break;
      }
    }
    if (std::holds_alternative<Dense>(model->layers[k])) {
      if (cfg.composite == LRPConfig::Composite::AllDenseEpsilon) return Rule::Epsilon;
      if (cfg.composite == LRPConfig::Composite::ClassifierEpsilon &&
          model->stages[k] == Stage::Classifier) {
        return Rule::Epsilon;
      }
    }
    return cfg.hidden_rule == LRPConfig::HiddenRule::Epsilon ? Rule::Epsilon : Rule::AlphaBeta;
  };

  const Tensor& logits = trace->activations.back();
  if (target_class < 0 || target_class >= logits.size()) {
    throw TraceMismatch("target class out of range");
  }
  Tensor r(logits.shape);
  r.data[target_class] = logits.data[target_class];

  std::vector<double> sums(model->layers.size() + 1, 0.0);
  auto total = [](const Tensor& t) {
    double s = 0;
    for (double v : t.data) s += v;
    return s;
  };
  sums.back() = total(r);

  for (std::size_t k = model->layers.size(); k-- > 0;) {
    const Tensor& x = trace->activations[k];
    const Layer& layer = model->layers[k];
    RuleTerms rt{rule_for(k), cfg.epsilon, cfg.input_low, cfg.input_high};
    if (const auto* dense = std::get_if<Dense>(&layer)) {
      r = lrp_dense(*dense, x, r, rt);
    } else if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      r = lrp_conv(*conv, x, r, rt);
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      r = lrp_bn(*bn, x, r, rt);
    } else if (std::holds_alternative<SumPool>(layer)) {
      r = lrp_sumpool(x, r, cfg.epsilon);
    } else if (const auto* pc = std::get_if<PairConcat>(&layer)) {
      r = lrp_pair(*pc, x, r);
    }
    // ReLU: relevance passes through unchanged.
    sums[k] = total(r);
  }
  if (diagnostics) diagnostics->boundary_sums = std::move(sums);
  return r;
}

}  // namespace xaibench
