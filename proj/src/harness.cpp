#include "xaibench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "xaibench/attribution.hpp"
#include "xaibench/questions.hpp"
#include "xaibench/rng.hpp"

namespace fs = std::filesystem;

namespace xaibench {

namespace {

constexpr std::pair<GtKind, std::string_view> kGtNames[] = {
    {GtKind::SingleObject, "single_object"},
    {GtKind::Unique, "unique"},
    {GtKind::UniqueFirstNonEmpty, "unique_first_nonempty"},
    {GtKind::Union, "union"},
    {GtKind::AllObjects, "all_objects"},
};

constexpr std::string_view kMethods[] = {
    "gradient",        "smoothgrad", "vargrad",         "deconvnet",
    "guided_backprop", "grad_cam",   "guided_grad_cam", "integrated_gradients",
    "lrp",             "excitation_backprop",           "random",
};

struct ParsedVariant {
  enum class Kind {
    Gradient,
    SmoothGrad,
    VarGrad,
    Backprop,
    GradCam,
    GuidedGradCam,
    IntegratedGradients,
    Lrp,
    Random,
  };
  Kind kind = Kind::Gradient;
  bool squared = false, times_input = false;
  double sigma = 0.1;
  int samples = 50;
  ReluMode relu_mode = ReluMode::Standard;
  ReluScope relu_scope = ReluScope::All;
  GradCamLayer layer = GradCamLayer::Batchnorm;
  IGConfig::Baseline baseline = IGConfig::Baseline::Zeros;
  LRPConfig lrp;
};

bool parse_transform(std::string_view t, bool& squared, bool& times_input) {
  if (t == "plain") {
    squared = false, times_input = false;
  } else if (t == "x_input") {
    squared = false, times_input = true;
  } else if (t == "squared") {
    squared = true, times_input = false;
  } else if (t == "squared_x_input") {
    squared = true, times_input = true;
  } else {
    return false;
  }
  return true;
}

std::string transform_name(bool squared, bool times_input) {
  if (squared) return times_input ? "squared_x_input" : "squared";
  return times_input ? "x_input" : "plain";
}

std::string noise_suffix(double sigma, int samples) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "s%.2f_n%d", sigma, samples);
  return buf;
}

// "<head>s<sigma>_n<samples>", where head is "" or ends in '_'.
bool parse_noise_suffix(std::string_view v, std::string& head, double& sigma, int& samples) {
  std::size_t npos = v.rfind("_n");
  if (npos == std::string_view::npos) return false;
  std::string_view n_text = v.substr(npos + 2);
  if (n_text.empty()) return false;
  int n = 0;
  auto [p1, e1] = std::from_chars(n_text.data(), n_text.data() + n_text.size(), n);
  if (e1 != std::errc() || p1 != n_text.data() + n_text.size() || n < 1) return false;
  std::size_t spos = v.rfind('s', npos == 0 ? 0 : npos - 1);
  if (spos == std::string_view::npos || (spos > 0 && v[spos - 1] != '_')) return false;
  std::string sigma_text(v.substr(spos + 1, npos - spos - 1));
  char* end = nullptr;
  double s = std::strtod(sigma_text.c_str(), &end);
  if (sigma_text.empty() || end != sigma_text.c_str() + sigma_text.size() || s < 0 ||
      !std::isfinite(s)) {
    return false;
  }
  head = std::string(v.substr(0, spos > 0 ? spos - 1 : 0));
  sigma = s;
  samples = n;
  return true;
}

std::string lrp_variant_string(const LRPConfig& cfg) {
  std::string out;
  out += cfg.hidden_rule == LRPConfig::HiddenRule::Epsilon ? "epsilon" : "alphabeta";
  out += '+';
  switch (cfg.composite) {
    case LRPConfig::Composite::None: out += "none"; break;
    case LRPConfig::Composite::ClassifierEpsilon: out += "classifier_epsilon"; break;
    case LRPConfig::Composite::AllDenseEpsilon: out += "all_dense_epsilon"; break;
  }
  out += '+';
  switch (cfg.input_rule) {
    case LRPConfig::InputRule::None: out += "none"; break;
    case LRPConfig::InputRule::Box: out += "box"; break;
    case LRPConfig::InputRule::WSquared: out += "wsquared"; break;
    case LRPConfig::InputRule::Flat: out += "flat"; break;
  }
  if (cfg.merge_batchnorm) out += "+merge_bn";
  return out;
}

bool parse_lrp_variant(const std::string& text, LRPConfig& cfg) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t plus = text.find('+', start);
    parts.push_back(text.substr(start, plus - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  if (parts.size() < 3 || parts.size() > 4) return false;
  if (parts[0] == "epsilon") {
    cfg.hidden_rule = LRPConfig::HiddenRule::Epsilon;
  } else if (parts[0] == "alphabeta") {
    cfg.hidden_rule = LRPConfig::HiddenRule::AlphaBeta;
  } else {
    return false;
  }
  if (parts[1] == "none") {
    cfg.composite = LRPConfig::Composite::None;
  } else if (parts[1] == "classifier_epsilon") {
    cfg.composite = LRPConfig::Composite::ClassifierEpsilon;
  } else if (parts[1] == "all_dense_epsilon") {
    cfg.composite = LRPConfig::Composite::AllDenseEpsilon;
  } else {
    return false;
  }
  if (parts[2] == "none") {
    cfg.input_rule = LRPConfig::InputRule::None;
  } else if (parts[2] == "box") {
    cfg.input_rule = LRPConfig::InputRule::Box;
  } else if (parts[2] == "wsquared") {
    cfg.input_rule = LRPConfig::InputRule::WSquared;
  } else if (parts[2] == "flat") {
    cfg.input_rule = LRPConfig::InputRule::Flat;
  } else {
    return false;
  }
  cfg.merge_batchnorm = parts.size() == 4;
  if (cfg.merge_batchnorm && parts[3] != "merge_bn") return false;
  return true;
}

std::string default_variant(const std::string& method) {
  if (method == "gradient") return "plain";
  if (method == "smoothgrad") return "plain_" + noise_suffix(0.10, 50);
  if (method == "vargrad") return noise_suffix(0.10, 50);
  if (method == "deconvnet" || method == "guided_backprop") return "all";
  if (method == "grad_cam" || method == "guided_grad_cam") return "batchnorm";
  if (method == "integrated_gradients") return "zeros";
  if (method == "lrp") return "alphabeta+none+box";
  if (method == "excitation_backprop") return "default";
  if (method == "random") return "uniform";
  throw ConfigError("unknown method: " + method);
}

// Parses and canonicalizes; throws ConfigError with the offending text.
ParsedVariant parse_variant(const std::string& method, const std::string& variant,
                            std::string& canonical) {
  ParsedVariant pv;
  auto fail = [&]() -> ParsedVariant& {
    throw ConfigError("unknown variant for " + method + ": " + variant);
  };
  if (method == "gradient") {
    pv.kind = ParsedVariant::Kind::Gradient;
    if (!parse_transform(variant, pv.squared, pv.times_input)) fail();
    canonical = transform_name(pv.squared, pv.times_input);
  } else if (method == "smoothgrad") {
    pv.kind = ParsedVariant::Kind::SmoothGrad;
    std::string head;
    if (!parse_noise_suffix(variant, head, pv.sigma, pv.samples) ||
        !parse_transform(head, pv.squared, pv.times_input)) {
      fail();
    }
    canonical =
        transform_name(pv.squared, pv.times_input) + "_" + noise_suffix(pv.sigma, pv.samples);
  } else if (method == "vargrad") {
    pv.kind = ParsedVariant::Kind::VarGrad;
    std::string head;
    if (!parse_noise_suffix(variant, head, pv.sigma, pv.samples) || !head.empty()) fail();
    canonical = noise_suffix(pv.sigma, pv.samples);
  } else if (method == "deconvnet" || method == "guided_backprop") {
    pv.kind = ParsedVariant::Kind::Backprop;
    pv.relu_mode = method == "deconvnet" ? ReluMode::Deconvnet : ReluMode::Guided;
    if (variant == "all") {
      pv.relu_scope = ReluScope::All;
    } else if (variant == "conv_only") {
      pv.relu_scope = ReluScope::ConvOnly;
    } else {
      fail();
    }
    canonical = variant;
  } else if (method == "grad_cam" || method == "guided_grad_cam") {
    pv.kind = method == "grad_cam" ? ParsedVariant::Kind::GradCam
                                   : ParsedVariant::Kind::GuidedGradCam;
    if (variant == "conv") {
      pv.layer = GradCamLayer::Conv;
    } else if (variant == "relu") {
      pv.layer = GradCamLayer::Relu;
    } else if (variant == "batchnorm") {
      pv.layer = GradCamLayer::Batchnorm;
    } else {
      fail();
    }
    canonical = variant;
  } else if (method == "integrated_gradients") {
    pv.kind = ParsedVariant::Kind::IntegratedGradients;
    if (variant == "zeros") {
      pv.baseline = IGConfig::Baseline::Zeros;
    } else if (variant == "mean_image") {
      pv.baseline = IGConfig::Baseline::MeanImage;
    } else if (variant == "mean_channels") {
      pv.baseline = IGConfig::Baseline::MeanChannels;
    } else {
      fail();
    }
    canonical = variant;
  } else if (method == "lrp") {
    pv.kind = ParsedVariant::Kind::Lrp;
    if (!parse_lrp_variant(variant, pv.lrp)) fail();
    canonical = lrp_variant_string(pv.lrp);
  } else if (method == "excitation_backprop") {
    pv.kind = ParsedVariant::Kind::Lrp;
    pv.lrp = LRPConfig::excitation_backprop();
    if (variant != "default") fail();
    canonical = "default";
  } else if (method == "random") {
    pv.kind = ParsedVariant::Kind::Random;
    if (variant != "uniform") fail();
    canonical = "uniform";
  } else {
    throw ConfigError("unknown method: " + method);
  }
  return pv;
}

struct MethodOutput {
  bool direct = false;
  Tensor raw;
  Heatmap map;
};

MethodOutput compute_attribution(const Model& model, const Tensor& x,
                                 const std::vector<double>& q, int target,
                                 const ForwardTrace& trace, const ParsedVariant& pv, Rng rng) {
  MethodOutput out;
  switch (pv.kind) {
    case ParsedVariant::Kind::Gradient:
      out.raw = gradient_attribution(model, x, q, target, pv.squared, pv.times_input);
      break;
    case ParsedVariant::Kind::SmoothGrad: {
      NoiseConfig nc{pv.sigma, pv.samples, rng.next_u64()};
      out.raw = smoothgrad(model, x, q, target, nc, pv.squared, pv.times_input);
      break;
    }
    case ParsedVariant::Kind::VarGrad: {
      NoiseConfig nc{pv.sigma, pv.samples, rng.next_u64()};
      out.raw = vargrad(model, x, q, target, nc);
      break;
    }
    case ParsedVariant::Kind::Backprop:
      out.raw = modified_backprop(model, x, q, target, pv.relu_mode, pv.relu_scope);
      break;
    case ParsedVariant::Kind::GradCam: {
      GradCamIntermediate gc = grad_cam(model, trace, target, pv.layer);
      if (gc.zero_flag) throw DiscardPoint("grad-cam map is identically zero");
      out.direct = true;
      out.map = std::move(gc.upsampled);
      break;
    }
    case ParsedVariant::Kind::GuidedGradCam:
      out.raw = guided_grad_cam(model, x, q, target, pv.layer);
      break;
    case ParsedVariant::Kind::IntegratedGradients: {
      IGConfig cfg;
      cfg.baseline = pv.baseline;
      out.raw = integrated_gradients(model, x, q, target, cfg).relevance;
      break;
    }
    case ParsedVariant::Kind::Lrp:
      out.raw = lrp(model, trace, target, pv.lrp);
      break;
    case ParsedVariant::Kind::Random: {
      out.direct = true;
      out.map = Heatmap(x.shape[1], x.shape[2]);
      for (double& v : out.map.values) v = rng.next_double();
      break;
    }
  }
  return out;
}

const BitMask* resolve_gt(const DatasetQuestion& q, bool simple, GtKind kind) {
  switch (kind) {
    case GtKind::SingleObject:
      return simple && q.gt.unique ? &*q.gt.unique : nullptr;
    case GtKind::Unique:
      return q.gt.unique ? &*q.gt.unique : nullptr;
    case GtKind::UniqueFirstNonEmpty:
      return q.gt.unique_first_nonempty ? &*q.gt.unique_first_nonempty : nullptr;
    case GtKind::Union:
      return q.gt.set_union ? &*q.gt.set_union : nullptr;
    case GtKind::AllObjects:
      return &q.gt.all;
  }
  return nullptr;
}

bool program_has_count(const FunctionalProgram& program) {
  for (const ProgramNode& node : program.nodes) {
    if (node.function == Fn::Count) return true;
  }
  return false;
}

std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string sanitize_filename(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '.') {
      out += 'p';
    } else if (c == '+') {
      out += '-';
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::string_view gt_kind_name(GtKind kind) {
  for (const auto& [k, name] : kGtNames) {
    if (k == kind) return name;
  }
  return "";
}

bool gt_kind_from_name(std::string_view name, GtKind& out) {
  for (const auto& [k, n] : kGtNames) {
    if (n == name) {
      out = k;
      return true;
    }
  }
  return false;
}

std::string_view metric_kind_name(MetricKind kind) {
  return kind == MetricKind::Mass ? "mass" : "rank";
}

bool metric_kind_from_name(std::string_view name, MetricKind& out) {
  if (name == "mass") {
    out = MetricKind::Mass;
    return true;
  }
  if (name == "rank") {
    out = MetricKind::Rank;
    return true;
  }
  return false;
}

std::vector<std::string> known_methods() {
  return {kMethods, kMethods + std::size(kMethods)};
}

bool method_is_direct(const std::string& method) {
  return method == "grad_cam" || method == "random";
}

MethodSpec parse_method_spec(const std::string& text) {
  MethodSpec spec;
  std::size_t colon = text.find(':');
  spec.method = text.substr(0, colon);
  spec.variant =
      colon == std::string::npos ? default_variant(spec.method) : text.substr(colon + 1);
  std::string canonical;
  parse_variant(spec.method, spec.variant, canonical);
  spec.variant = canonical;
  return spec;
}

std::vector<std::string> method_variants(const std::string& method) {
  std::vector<std::string> out;
  if (method == "gradient") {
    out = {"plain", "x_input", "squared", "squared_x_input"};
  } else if (method == "smoothgrad") {
    for (const char* t : {"plain", "x_input", "squared", "squared_x_input"}) {
      for (double sigma : kSmoothGradSigmaGrid) {
        for (int n : kSmoothGradSampleGrid) {
          out.push_back(std::string(t) + "_" + noise_suffix(sigma, n));
        }
      }
    }
  } else if (method == "vargrad") {
    for (double sigma : kSmoothGradSigmaGrid) {
      for (int n : kSmoothGradSampleGrid) out.push_back(noise_suffix(sigma, n));
    }
  } else if (method == "deconvnet" || method == "guided_backprop") {
    out = {"all", "conv_only"};
  } else if (method == "grad_cam" || method == "guided_grad_cam") {
    out = {"conv", "relu", "batchnorm"};
  } else if (method == "integrated_gradients") {
    out = {"zeros", "mean_image", "mean_channels"};
  } else if (method == "lrp") {
    for (const char* hidden : {"epsilon", "alphabeta"}) {
      for (const char* composite : {"none", "classifier_epsilon", "all_dense_epsilon"}) {
        for (const char* input : {"none", "box", "wsquared", "flat"}) {
          for (bool merge : {false, true}) {
            std::string v = std::string(hidden) + "+" + composite + "+" + input;
            if (merge) v += "+merge_bn";
            out.push_back(std::move(v));
          }
        }
      }
    }
  } else if (method == "excitation_backprop") {
    out = {"default"};
  } else if (method == "random") {
    out = {"uniform"};
  } else {
    throw ConfigError("unknown method: " + method);
  }
  return out;
}

std::vector<ReportRow> run_evaluation(const Model& model, const Dataset& ds,
                                      const EvaluationConfig& cfg) {
  if (cfg.methods.empty() || cfg.poolings.empty() || cfg.gt_kinds.empty() ||
      cfg.metrics.empty()) {
    throw ConfigError("need at least one method, pooling, gt kind, and metric");
  }
  if (cfg.threads <= 0) throw ConfigError("threads must be positive");

  struct SpecPlan {
    MethodSpec spec;
    ParsedVariant pv;
    bool direct = false;
    std::vector<std::string> pooling_names;
    std::vector<Pooling> poolings;
  };
  std::vector<SpecPlan> specs;
  for (const MethodSpec& m : cfg.methods) {
    SpecPlan sp;
    sp.spec = m;
    std::string canonical;
    sp.pv = parse_variant(m.method, m.variant, canonical);
    sp.spec.variant = canonical;
    sp.direct = method_is_direct(m.method);
    if (sp.direct) {
      sp.pooling_names = {"none"};
    } else {
      sp.poolings = cfg.poolings;
      for (Pooling p : cfg.poolings) sp.pooling_names.emplace_back(pooling_name(p));
    }
    specs.push_back(std::move(sp));
  }

  struct Unit {
    const DatasetQuestion* q = nullptr;
    bool simple = false;
  };
  std::vector<Unit> units;
  for (const DatasetQuestion& q : ds.simple_questions) units.push_back({&q, true});
  for (const DatasetQuestion& q : ds.complex_questions) units.push_back({&q, false});

  const std::size_t n_gt = cfg.gt_kinds.size();
  const std::size_t n_metric = cfg.metrics.size();
  std::vector<std::size_t> spec_offset;
  std::size_t total_cells = 0;
  for (const SpecPlan& sp : specs) {
    spec_offset.push_back(total_cells);
    total_cells += sp.pooling_names.size() * n_gt * n_metric;
  }

  struct Outcome {
    std::size_t cell = 0;
    double score = 0;
    bool discarded = false;
  };
  std::vector<std::vector<Outcome>> results(units.size());
  std::vector<char> eligible(units.size(), 0);
  Rng base(cfg.seed);

  auto process = [&](std::size_t qi) {
    const Unit& u = units[qi];
    const DatasetQuestion& q = *u.q;
    const Tensor& x = ds.images[q.image_index];
    const std::vector<double>& qvec = model.embedding(program_key(q.raw));
    ForwardTrace trace = forward(model, x, qvec);
    std::vector<double> probs = softmax(trace.logits().data);
    int predicted = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[predicted]) predicted = static_cast<int>(c);
    }

    if (cfg.filters.correct_only && predicted != q.answer_class) return;
    if (!(probs[predicted] > cfg.filters.min_probability)) return;
    if (!cfg.filters.question_types.empty() &&
        std::find(cfg.filters.question_types.begin(), cfg.filters.question_types.end(),
                  q.family) == cfg.filters.question_types.end()) {
      return;
    }
    if (cfg.filters.exclude_counting && program_has_count(q.program)) return;
    if (cfg.filters.exclude_exist_no && q.program.nodes.back().function == Fn::Exist &&
        q.answer == "no") {
      return;
    }
    eligible[qi] = 1;

    std::vector<const BitMask*> gt(n_gt);
    std::vector<int> gt_pixels(n_gt, 0);
    for (std::size_t g = 0; g < n_gt; ++g) {
      gt[g] = resolve_gt(q, u.simple, cfg.gt_kinds[g]);
      if (gt[g]) gt_pixels[g] = gt[g]->pixel_count();
    }

    for (std::size_t si = 0; si < specs.size(); ++si) {
      const SpecPlan& sp = specs[si];
      Rng spec_rng = base.fork(qi).fork(si);
      bool attribution_discarded = false;
      std::vector<Heatmap> maps;
      try {
        MethodOutput mo = compute_attribution(model, x, qvec, predicted, trace, sp.pv, spec_rng);
        if (mo.direct) {
          maps.push_back(std::move(mo.map));
        } else {
          for (Pooling p : sp.poolings) maps.push_back(pool(mo.raw, p));
        }
      } catch (const DiscardPoint&) {
        attribution_discarded = true;
      }

      for (std::size_t pi = 0; pi < sp.pooling_names.size(); ++pi) {
        for (std::size_t g = 0; g < n_gt; ++g) {
          if (gt[g] && gt_pixels[g] < cfg.filters.min_gt_pixels) continue;  // ineligible
          for (std::size_t mi = 0; mi < n_metric; ++mi) {
            std::size_t cell = spec_offset[si] + (pi * n_gt + g) * n_metric + mi;
            if (!gt[g] || attribution_discarded) {
              results[qi].push_back({cell, 0.0, true});
              continue;
            }
            try {
              double score = cfg.metrics[mi] == MetricKind::Mass
                                 ? mass_accuracy(maps[pi], *gt[g])
                                 : rank_accuracy(maps[pi], *gt[g]);
              results[qi].push_back({cell, score, false});
            } catch (const ZeroHeatmap&) {
              results[qi].push_back({cell, 0.0, true});
            }
          }
        }
      }
    }
  };

  if (cfg.threads == 1) {
    for (std::size_t qi = 0; qi < units.size(); ++qi) process(qi);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        std::size_t qi = next.fetch_add(1);
        if (qi >= units.size()) break;
        process(qi);
      }
    };
    std::vector<std::thread> pool_threads;
    for (int t = 0; t < cfg.threads; ++t) pool_threads.emplace_back(worker);
    for (std::thread& t : pool_threads) t.join();
  }

  if (std::count(eligible.begin(), eligible.end(), 1) == 0) {
    throw NoEligibleQuestions("every question was removed by the filters");
  }

  std::vector<std::vector<double>> scores(total_cells);
  std::vector<int> discards(total_cells, 0);
  for (std::size_t qi = 0; qi < units.size(); ++qi) {
    for (const Outcome& o : results[qi]) {
      if (o.discarded) {
        ++discards[o.cell];
      } else {
        scores[o.cell].push_back(o.score);
      }
    }
  }

  std::vector<ReportRow> rows;
  for (std::size_t si = 0; si < specs.size(); ++si) {
    const SpecPlan& sp = specs[si];
    for (std::size_t pi = 0; pi < sp.pooling_names.size(); ++pi) {
      for (std::size_t g = 0; g < n_gt; ++g) {
        for (std::size_t mi = 0; mi < n_metric; ++mi) {
          std::size_t cell = spec_offset[si] + (pi * n_gt + g) * n_metric + mi;
          ReportRow row;
          row.method = sp.spec.method;
          row.variant = sp.spec.variant;
          row.pooling = sp.pooling_names[pi];
          row.gt = std::string(gt_kind_name(cfg.gt_kinds[g]));
          row.metric = std::string(metric_kind_name(cfg.metrics[mi]));
          row.n_scored = static_cast<int>(scores[cell].size());
          row.n_discarded = discards[cell];
          if (scores[cell].empty()) {
            row.mean = row.std_dev = row.median = std::nan("");
          } else {
            Aggregate a = aggregate(scores[cell]);
            row.mean = a.mean;
            row.std_dev = a.std;
            row.median = a.median;
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

std::vector<TuningChoice> tune_methods(const Model& model, const Dataset& ds,
                                       const std::vector<std::string>& method_grids,
                                       const std::vector<Pooling>& poolings,
                                       const QuestionFilters& extra_filters,
                                       std::uint64_t seed, int threads) {
  if (method_grids.empty()) throw ConfigError("need at least one method to tune");
  EvaluationConfig cfg;
  std::vector<std::string> method_names;
  for (const std::string& entry : method_grids) {
    if (entry.find(':') != std::string::npos) {
      MethodSpec spec = parse_method_spec(entry);
      method_names.push_back(spec.method);
      cfg.methods.push_back(std::move(spec));
    } else {
      method_names.push_back(entry);
      for (const std::string& variant : method_variants(entry)) {
        cfg.methods.push_back({entry, variant});
      }
    }
  }
  cfg.poolings = poolings;
  cfg.gt_kinds = {GtKind::SingleObject};
  cfg.metrics = {MetricKind::Mass, MetricKind::Rank};
  cfg.filters = extra_filters;
  cfg.filters.correct_only = true;
  cfg.seed = seed;
  cfg.threads = threads;
  std::vector<ReportRow> rows = run_evaluation(model, ds, cfg);

  // One winner per (method, metric); duplicate grid entries collapse.
  std::vector<std::string> unique_methods;
  for (const std::string& m : method_names) {
    if (std::find(unique_methods.begin(), unique_methods.end(), m) == unique_methods.end()) {
      unique_methods.push_back(m);
    }
  }
  std::vector<TuningChoice> out;
  for (const std::string& method : unique_methods) {
    for (MetricKind mk : {MetricKind::Mass, MetricKind::Rank}) {
      const ReportRow* best = nullptr;
      for (const ReportRow& row : rows) {
        if (row.method != method || row.metric != metric_kind_name(mk) || row.n_scored == 0) {
          continue;
        }
        if (!best || row.mean > best->mean) best = &row;
      }
      if (!best) {
        throw NoEligibleQuestions("no scored cell for method " + method);
      }
      out.push_back({method, std::string(metric_kind_name(mk)), best->variant, best->pooling,
                     best->mean});
    }
  }
  return out;
}

std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::Csv) {
    out = "method,variant,pooling,gt,metric,mean,std,median,n_scored,n_discarded\n";
    for (const ReportRow& r : rows) {
      out += r.method + "," + r.variant + "," + r.pooling + "," + r.gt + "," + r.metric + "," +
             fmt6(r.mean) + "," + fmt6(r.std_dev) + "," + fmt6(r.median) + "," +
             std::to_string(r.n_scored) + "," + std::to_string(r.n_discarded) + "\n";
    }
    return out;
  }
  out = "[\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ReportRow& r = rows[i];
    auto num = [](double v) { return std::isnan(v) ? std::string("null") : fmt6(v); };
    out += "{\"method\":\"" + r.method + "\",\"variant\":\"" + r.variant + "\",\"pooling\":\"" +
           r.pooling + "\",\"gt\":\"" + r.gt + "\",\"metric\":\"" + r.metric +
           "\",\"mean\":" + num(r.mean) + ",\"std\":" + num(r.std_dev) +
           ",\"median\":" + num(r.median) + ",\"n_scored\":" + std::to_string(r.n_scored) +
           ",\"n_discarded\":" + std::to_string(r.n_discarded) + "}";
    if (i + 1 < rows.size()) out += ",";
    out += "\n";
  }
  out += "]\n";
  return out;
}

void emit_report(const std::vector<ReportRow>& rows, ReportFormat format,
                 const std::string& path) {
  if (rows.empty()) throw ConfigError("refusing to write an empty report");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out << render_report(rows, format);
  if (!out) throw IoFailure("short write to " + path);
}

std::vector<ReportRow> parse_report_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  std::vector<ReportRow> rows;
  for (const auto& o : j) {
    ReportRow r;
    r.method = o.at("method").get<std::string>();
    r.variant = o.at("variant").get<std::string>();
    r.pooling = o.at("pooling").get<std::string>();
    r.gt = o.at("gt").get<std::string>();
    r.metric = o.at("metric").get<std::string>();
    r.mean = o.at("mean").is_null() ? std::nan("") : o.at("mean").get<double>();
    r.std_dev = o.at("std").is_null() ? std::nan("") : o.at("std").get<double>();
    r.median = o.at("median").is_null() ? std::nan("") : o.at("median").get<double>();
    r.n_scored = o.at("n_scored").get<int>();
    r.n_discarded = o.at("n_discarded").get<int>();
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string heatmap_to_pgm(const Heatmap& map) {
  double max_value = 0;
  for (double v : map.values) max_value = std::max(max_value, v);
  std::string out =
      "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  for (double v : map.values) {
    int byte = max_value > 0 ? static_cast<int>(std::floor(v / max_value * 255.0 + 0.5)) : 0;
    out += static_cast<char>(std::clamp(byte, 0, 255));
  }
  return out;
}

void dump_heatmaps(const Model& model, const Dataset& ds, const EvaluationConfig& cfg,
                   const std::vector<int>& question_ids, const std::string& out_dir) {
  if (cfg.methods.empty()) throw ConfigError("need at least one method");
  std::vector<const DatasetQuestion*> units;
  std::vector<char> simple_flags;
  for (const DatasetQuestion& q : ds.simple_questions) {
    units.push_back(&q);
    simple_flags.push_back(1);
  }
  for (const DatasetQuestion& q : ds.complex_questions) {
    units.push_back(&q);
    simple_flags.push_back(0);
  }
  for (int qid : question_ids) {
    if (qid < 0 || qid >= static_cast<int>(units.size())) {
      throw ConfigError("question id out of range: " + std::to_string(qid));
    }
  }
  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir);

  Rng base(cfg.seed);
  for (int qid : question_ids) {
    const DatasetQuestion& q = *units[qid];
    const Tensor& x = ds.images[q.image_index];
    const std::vector<double>& qvec = model.embedding(program_key(q.raw));
    ForwardTrace trace = forward(model, x, qvec);
    std::vector<double> probs = softmax(trace.logits().data);
    int predicted = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[predicted]) predicted = static_cast<int>(c);
    }
    for (std::size_t si = 0; si < cfg.methods.size(); ++si) {
      const MethodSpec& m = cfg.methods[si];
      std::string canonical;
      ParsedVariant pv = parse_variant(m.method, m.variant, canonical);
      std::string stem = "q" + std::to_string(qid) + "_" + m.method + "_" +
                         sanitize_filename(canonical);
      Rng spec_rng = base.fork(static_cast<std::uint64_t>(qid)).fork(si);
      Heatmap map;
      try {
        MethodOutput mo = compute_attribution(model, x, qvec, predicted, trace, pv, spec_rng);
        if (mo.direct) {
          map = std::move(mo.map);
        } else {
          if (cfg.poolings.empty()) throw ConfigError("need a pooling for " + m.method);
          map = pool(mo.raw, cfg.poolings.front());
        }
      } catch (const DiscardPoint& e) {
        std::ofstream note(dir / (stem + ".discard.txt"), std::ios::binary);
        note << "attribution discarded: " << e.what() << "\n";
        continue;
      }
      double max_value = 0;
      for (double v : map.values) max_value = std::max(max_value, v);
      std::ofstream out(dir / (stem + ".pgm"), std::ios::binary);
      if (!out) throw IoFailure("cannot open heatmap file for " + stem);
      out << heatmap_to_pgm(map);
      if (!out) throw IoFailure("short write for " + stem);
      if (max_value == 0) {
        std::ofstream note(dir / (stem + ".discard.txt"), std::ios::binary);
        note << "zero heatmap\n";
      }
    }
  }
}

}  // namespace xaibench
