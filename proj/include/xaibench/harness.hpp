#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xaibench/dataset.hpp"
#include "xaibench/metrics.hpp"
#include "xaibench/net.hpp"

namespace xaibench {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoEligibleQuestions : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ground-truth selections of increasing size. single_object is defined only
// for simple questions, where it equals the unique output object.
enum class GtKind { SingleObject, Unique, UniqueFirstNonEmpty, Union, AllObjects };

inline constexpr GtKind kAllGtKinds[] = {GtKind::SingleObject, GtKind::Unique,
                                         GtKind::UniqueFirstNonEmpty, GtKind::Union,
                                         GtKind::AllObjects};

std::string_view gt_kind_name(GtKind kind);
bool gt_kind_from_name(std::string_view name, GtKind& out);

enum class MetricKind { Mass, Rank };

std::string_view metric_kind_name(MetricKind kind);
bool metric_kind_from_name(std::string_view name, MetricKind& out);

// One attribution method plus a fully resolved variant string.
struct MethodSpec {
  std::string method;
  std::string variant;
};

// Accepts "method" (default variant) or "method:variant"; canonicalizes the
// variant spelling. Throws ConfigError on unknown names.
MethodSpec parse_method_spec(const std::string& text);

std::vector<std::string> known_methods();

// The full tuning grid of variant strings for one method.
std::vector<std::string> method_variants(const std::string& method);

// Direct methods produce a single heatmap with no channel axis, so the
// pooling column reads "none".
bool method_is_direct(const std::string& method);

struct QuestionFilters {
  bool correct_only = false;
  double min_probability = 0.0;  // keep when predicted probability exceeds this
  int min_gt_pixels = 0;
  std::vector<QuestionFamily> question_types;  // empty admits all families
  bool exclude_counting = false;
  bool exclude_exist_no = false;
};

struct EvaluationConfig {
  std::vector<MethodSpec> methods;
  std::vector<Pooling> poolings;
  std::vector<GtKind> gt_kinds;
  std::vector<MetricKind> metrics;
  QuestionFilters filters;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ReportRow {
  std::string method, variant, pooling, gt, metric;
  double mean = 0, std_dev = 0, median = 0;  // NaN when n_scored is 0
  int n_scored = 0;
  int n_discarded = 0;
};

// Scores every (question, method, pooling, gt, metric) cell over the simple
// and complex pools together. Attribution targets the predicted class. Per
// cell, n_scored + n_discarded equals the number of eligible questions.
// Deterministic for any thread count.
std::vector<ReportRow> run_evaluation(const Model& model, const Dataset& ds,
                                      const EvaluationConfig& cfg);

struct TuningChoice {
  std::string method;
  std::string metric;
  std::string variant;
  std::string pooling;
  double mean = 0;
};

// Argmax of mean accuracy per (method, metric) over the variant x pooling
// grid, measured on GT single_object with the correct-only filter. Ties keep
// the earlier grid entry.
std::vector<TuningChoice> tune_methods(const Model& model, const Dataset& ds,
                                       const std::vector<std::string>& method_grids,
                                       const std::vector<Pooling>& poolings,
                                       const QuestionFilters& extra_filters,
                                       std::uint64_t seed, int threads);

enum class ReportFormat { Csv, Json };

std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format);
void emit_report(const std::vector<ReportRow>& rows, ReportFormat format,
                 const std::string& path);
std::vector<ReportRow> parse_report_json(const std::string& text);

// P5 graymap of the heatmap scaled so its maximum maps to 255, rounding half
// up; an all-zero map stays all zero.
std::string heatmap_to_pgm(const Heatmap& map);

// Writes one graymap per (question id, method). Pooled methods use the first
// configured pooling. Discarded attributions and zero maps produce a sidecar
// .discard.txt note; zero maps still get their all-zero graymap.
void dump_heatmaps(const Model& model, const Dataset& ds, const EvaluationConfig& cfg,
                   const std::vector<int>& question_ids, const std::string& out_dir);

}  // namespace xaibench
