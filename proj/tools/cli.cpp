#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xaibench/dataset.hpp"
#include "xaibench/harness.hpp"
#include "xaibench/net.hpp"
#include "xaibench/train.hpp"

namespace {

using namespace xaibench;

constexpr int kExitConfig = 2;
constexpr int kExitNoEligible = 3;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string item = text.substr(start, comma - start);
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_size(const std::string& text, int& height, int& width) {
  return std::sscanf(text.c_str(), "%dx%d", &height, &width) == 2 && height > 0 && width > 0;
}

std::vector<Pooling> parse_poolings(const std::string& list) {
  std::vector<Pooling> out;
  for (const std::string& name : split_list(list)) {
    Pooling p;
    if (!pooling_from_name(name, p)) throw ConfigError("unknown pooling: " + name);
    out.push_back(p);
  }
  return out;
}

std::vector<GtKind> parse_gts(const std::string& list) {
  std::vector<GtKind> out;
  for (const std::string& name : split_list(list)) {
    GtKind g;
    if (!gt_kind_from_name(name, g)) throw ConfigError("unknown gt kind: " + name);
    out.push_back(g);
  }
  return out;
}

std::vector<MetricKind> parse_metrics(const std::string& list) {
  std::vector<MetricKind> out;
  for (const std::string& name : split_list(list)) {
    MetricKind m;
    if (!metric_kind_from_name(name, m)) throw ConfigError("unknown metric: " + name);
    out.push_back(m);
  }
  return out;
}

std::vector<QuestionFamily> parse_families(const std::string& list) {
  std::vector<QuestionFamily> out;
  for (const std::string& name : split_list(list)) {
    QuestionFamily f;
    if (!family_from_name(name, f)) throw ConfigError("unknown question type: " + name);
    out.push_back(f);
  }
  return out;
}

struct FilterFlags {
  bool correct_only = false;
  double min_probability = 0.0;
  int min_gt_pixels = 0;
  std::string question_types;
  bool exclude_counting = false;
  bool exclude_exist_no = false;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--correct-only", correct_only, "keep only correctly answered questions");
    cmd->add_option("--min-proba", min_probability,
                    "keep questions whose predicted probability exceeds this");
    cmd->add_option("--min-gt-pixels", min_gt_pixels,
                    "skip cells whose ground-truth mask is smaller than this");
    cmd->add_option("--question-types", question_types,
                    "comma list of question families to keep");
    cmd->add_flag("--exclude-counting", exclude_counting,
                  "drop questions whose program counts objects");
    cmd->add_flag("--exclude-exist-no", exclude_exist_no,
                  "drop exist questions whose answer is no");
  }

  QuestionFilters build() const {
    QuestionFilters f;
    f.correct_only = correct_only;
    f.min_probability = min_probability;
    f.min_gt_pixels = min_gt_pixels;
    if (!question_types.empty()) f.question_types = parse_families(question_types);
    f.exclude_counting = exclude_counting;
    f.exclude_exist_no = exclude_exist_no;
    return f;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Ground-truth evaluation of attribution heatmaps on synthetic scenes"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "build a dataset of scenes and questions");
  int gen_scenes = 200;
  std::string gen_size = "32x32";
  int gen_simple = 4, gen_complex = 6;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--scenes", gen_scenes, "number of scenes")->required();
  gen->add_option("--size", gen_size, "image size as HxW")->required();
  gen->add_option("--simple-per-scene", gen_simple, "simple questions per scene");
  gen->add_option("--complex-per-scene", gen_complex, "complex questions per scene");
  int gen_min_objects = 2, gen_max_objects = 6;
  gen->add_option("--min-objects", gen_min_objects, "minimum objects per scene");
  gen->add_option("--max-objects", gen_max_objects, "maximum objects per scene");
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->callback([&]() {
    DatasetParams params;
    params.scene_count = gen_scenes;
    if (!parse_size(gen_size, params.image_height, params.image_width)) {
      throw ConfigError("bad --size, expected HxW: " + gen_size);
    }
    params.simple_per_scene = gen_simple;
    params.complex_per_scene = gen_complex;
    params.min_objects = gen_min_objects;
    params.max_objects = gen_max_objects;
    params.seed = gen_seed;
    Dataset ds = generate_dataset(params, gen_out);
    std::printf("wrote %zu scenes, %zu simple and %zu complex questions to %s\n",
                ds.scenes.size(), ds.simple_questions.size(), ds.complex_questions.size(),
                gen_out.c_str());
  });

  auto* train_cmd = app.add_subcommand("train", "train the toy relation network");
  std::string train_data, train_out;
  TrainParams train_params;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--epochs", train_params.epochs, "training epochs")->required();
  train_cmd->add_option("--lr", train_params.lr, "Adam learning rate");
  train_cmd->add_option("--batch", train_params.batch, "batch size");
  train_cmd->add_option("--conv-width", train_params.conv_width, "conv channels per block");
  train_cmd->add_option("--rn-hidden", train_params.rn_hidden, "relation MLP width");
  train_cmd->add_option("--threads", train_params.threads, "worker threads");
  train_cmd->add_option("--seed", train_params.seed, "training seed")->required();
  train_cmd->add_flag("--verbose", train_params.verbose, "print per-epoch loss");
  train_cmd->add_option("--out", train_out, "model file to write")->required();
  train_cmd->callback([&]() {
    Dataset ds = load_dataset(train_data);
    TrainReport report;
    Model model = train_toy_model(ds, train_params, &report);
    save_model(model, train_out);
    std::printf("final loss %.6f, train accuracy %.4f\n", report.final_loss, report.train_accuracy);
    std::printf("held-out accuracy %.4f on %d questions\n", report.heldout_accuracy,
                report.heldout_count);
    std::printf("held-out color accuracy %.4f on %d simple color questions\n",
                report.heldout_color_accuracy, report.heldout_color_count);
  });

  auto* eval = app.add_subcommand("evaluate", "score attribution methods against ground truth");
  std::string eval_model, eval_data, eval_methods, eval_poolings, eval_gts, eval_metrics;
  std::string eval_report, eval_format = "csv";
  std::uint64_t eval_seed = 0;
  int eval_threads = 4;
  FilterFlags eval_filters;
  eval->add_option("--model", eval_model, "model file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--methods", eval_methods, "comma list of method[:variant]")->required();
  eval->add_option("--poolings", eval_poolings, "comma list of pooling names")->required();
  eval->add_option("--gts", eval_gts, "comma list of ground-truth kinds")->required();
  eval->add_option("--metrics", eval_metrics, "comma list of metrics (mass, rank)")->required();
  eval_filters.add_to(eval);
  eval->add_option("--seed", eval_seed, "evaluation seed")->required();
  eval->add_option("--threads", eval_threads, "worker threads");
  eval->add_option("--report", eval_report, "report file to write")->required();
  eval->add_option("--format", eval_format, "csv or json");
  eval->callback([&]() {
    Model model = load_model(eval_model);
    Dataset ds = load_dataset(eval_data);
    EvaluationConfig cfg;
    for (const std::string& entry : split_list(eval_methods)) {
      cfg.methods.push_back(parse_method_spec(entry));
    }
    cfg.poolings = parse_poolings(eval_poolings);
    cfg.gt_kinds = parse_gts(eval_gts);
    cfg.metrics = parse_metrics(eval_metrics);
    cfg.filters = eval_filters.build();
    cfg.seed = eval_seed;
    cfg.threads = eval_threads;
    ReportFormat format;
    if (eval_format == "csv") {
      format = ReportFormat::Csv;
    } else if (eval_format == "json") {
      format = ReportFormat::Json;
    } else {
      throw ConfigError("bad --format, expected csv or json: " + eval_format);
    }
    std::vector<ReportRow> rows = run_evaluation(model, ds, cfg);
    emit_report(rows, format, eval_report);
    std::printf("wrote %zu report rows to %s\n", rows.size(), eval_report.c_str());
  });

  auto* tune = app.add_subcommand(
      "tune", "pick the best variant and pooling per method on GT single_object");
  std::string tune_model, tune_data, tune_methods_list, tune_poolings, tune_report;
  std::uint64_t tune_seed = 0;
  int tune_threads = 4;
  FilterFlags tune_filters;
  tune->add_option("--model", tune_model, "model file")->required();
  tune->add_option("--data", tune_data, "dataset directory")->required();
  tune->add_option("--methods", tune_methods_list,
                   "comma list of methods (bare name tunes its whole grid)")
      ->required();
  tune->add_option("--poolings", tune_poolings, "comma list of pooling names")->required();
  tune_filters.add_to(tune);
  tune->add_option("--seed", tune_seed, "evaluation seed")->required();
  tune->add_option("--threads", tune_threads, "worker threads");
  tune->add_option("--report", tune_report, "optional file for the tuning table");
  tune->callback([&]() {
    Model model = load_model(tune_model);
    Dataset ds = load_dataset(tune_data);
    std::vector<TuningChoice> choices =
        tune_methods(model, ds, split_list(tune_methods_list), parse_poolings(tune_poolings),
                     tune_filters.build(), tune_seed, tune_threads);
    std::string table = "method,metric,variant,pooling,mean\n";
    for (const TuningChoice& c : choices) {
      char mean[32];
      std::snprintf(mean, sizeof(mean), "%.6f", c.mean);
      table += c.method + "," + c.metric + "," + c.variant + "," + c.pooling + "," + mean + "\n";
    }
    std::fputs(table.c_str(), stdout);
    if (!tune_report.empty()) {
      std::FILE* f = std::fopen(tune_report.c_str(), "wb");
      if (!f) throw IoFailure("cannot open " + tune_report);
      std::fputs(table.c_str(), f);
      std::fclose(f);
    }
  });

  auto* dump = app.add_subcommand("dump-heatmaps", "write graymap images of heatmaps");
  std::string dump_model, dump_data, dump_methods, dump_poolings = "sum_abs", dump_questions;
  std::string dump_out;
  std::uint64_t dump_seed = 0;
  dump->add_option("--model", dump_model, "model file")->required();
  dump->add_option("--data", dump_data, "dataset directory")->required();
  dump->add_option("--methods", dump_methods, "comma list of method[:variant]")->required();
  dump->add_option("--poolings", dump_poolings, "pooling for channel reduction (first used)");
  dump->add_option("--questions", dump_questions, "comma list of question ids")->required();
  dump->add_option("--seed", dump_seed, "seed for sampled methods");
  dump->add_option("--out", dump_out, "output directory")->required();
  dump->callback([&]() {
    Model model = load_model(dump_model);
    Dataset ds = load_dataset(dump_data);
    EvaluationConfig cfg;
    for (const std::string& entry : split_list(dump_methods)) {
      cfg.methods.push_back(parse_method_spec(entry));
    }
    cfg.poolings = parse_poolings(dump_poolings);
    cfg.seed = dump_seed;
    std::vector<int> ids;
    for (const std::string& item : split_list(dump_questions)) {
      try {
        ids.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError("bad question id: " + item);
      }
    }
    dump_heatmaps(model, ds, cfg, ids, dump_out);
    std::printf("wrote heatmaps for %zu questions to %s\n", ids.size(), dump_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const NoEligibleQuestions& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNoEligible;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
