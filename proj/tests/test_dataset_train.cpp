#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xaibench/dataset.hpp"
#include "xaibench/net.hpp"
#include "xaibench/scene.hpp"
#include "xaibench/train.hpp"

using namespace xaibench;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("xaibench_test_" + name);
  fs::remove_all(dir);
  return dir;
}

DatasetParams tiny_params(std::uint64_t seed) {
  DatasetParams p;
  p.scene_count = 6;
  p.image_height = 16;
  p.image_width = 16;
  p.native_size = 48;
  p.simple_per_scene = 2;
  p.complex_per_scene = 2;
  p.min_objects = 2;
  p.max_objects = 4;
  p.seed = seed;
  return p;
}

// 20×20 is the smallest square input the four-block conv stack accepts, and
// keeps the training tests fast.
DatasetParams train_params_dataset(std::uint64_t seed, int scenes, int simple, int complex_n) {
  DatasetParams p;
  p.scene_count = scenes;
  p.image_height = 20;
  p.image_width = 20;
  p.native_size = 48;
  p.simple_per_scene = simple;
  p.complex_per_scene = complex_n;
  p.min_objects = 2;
  p.max_objects = 4;
  p.seed = seed;
  return p;
}

bool same_questions(const std::vector<DatasetQuestion>& a,
                    const std::vector<DatasetQuestion>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].image_index != b[i].image_index) return false;
    if (program_key(a[i].raw) != program_key(b[i].raw)) return false;
    if (a[i].answer != b[i].answer || a[i].answer_class != b[i].answer_class) return false;
    if (a[i].family != b[i].family) return false;
    if (a[i].question_text != b[i].question_text) return false;
    if (a[i].gt.unique != b[i].gt.unique) return false;
    if (a[i].gt.unique_first_nonempty != b[i].gt.unique_first_nonempty) return false;
    if (a[i].gt.set_union != b[i].gt.set_union) return false;
    if (a[i].gt.all != b[i].gt.all) return false;
  }
  return true;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// True when every set pixel of inner is set in outer.
bool mask_subset(const BitMask& inner, const BitMask& outer) {
  for (std::size_t i = 0; i < inner.bits.size(); ++i) {
    if (inner.bits[i] && !outer.bits[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("generated dataset round-trips through the on-disk format") {
  fs::path dir = fresh_dir("roundtrip");
  Dataset ds = generate_dataset(tiny_params(31), dir.string());
  Dataset back = load_dataset(dir.string());

  REQUIRE(back.scenes.size() == ds.scenes.size());
  REQUIRE(back.images.size() == ds.images.size());
  for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
    CHECK(scene_to_json(back.scenes[s]) == scene_to_json(ds.scenes[s]));
    CHECK(back.images[s].shape == ds.images[s].shape);
    CHECK(back.images[s].data == ds.images[s].data);
    CHECK(back.masks[s].masks == ds.masks[s].masks);
  }
  CHECK(same_questions(back.simple_questions, ds.simple_questions));
  CHECK(same_questions(back.complex_questions, ds.complex_questions));

  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "scenes.json"));
  CHECK(fs::exists(dir / "images" / "img_00000.bin"));
  fs::remove_all(dir);
}

TEST_CASE("dataset generation is deterministic and seed-sensitive") {
  fs::path dir_a = fresh_dir("det_a");
  fs::path dir_b = fresh_dir("det_b");
  Dataset a = generate_dataset(tiny_params(33), dir_a.string());
  Dataset b = generate_dataset(tiny_params(33), dir_b.string());

  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t s = 0; s < a.images.size(); ++s) {
    CHECK(a.images[s].data == b.images[s].data);
  }
  CHECK(same_questions(a.simple_questions, b.simple_questions));
  CHECK(same_questions(a.complex_questions, b.complex_questions));
  // The stored artifacts are byte-identical, not merely equivalent.
  CHECK(file_bytes(dir_a / "images" / "img_00003.bin") ==
        file_bytes(dir_b / "images" / "img_00003.bin"));
  CHECK(file_bytes(dir_a / "manifest.json") == file_bytes(dir_b / "manifest.json"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("generated dataset respects structural invariants") {
  fs::path dir = fresh_dir("invariants");
  DatasetParams params = tiny_params(35);
  params.scene_count = 10;
  Dataset ds = generate_dataset(params, dir.string());
  fs::remove_all(dir);

  REQUIRE(static_cast<int>(ds.scenes.size()) == params.scene_count);
  CHECK(static_cast<int>(ds.simple_questions.size()) ==
        params.scene_count * params.simple_per_scene);
  CHECK(static_cast<int>(ds.complex_questions.size()) ==
        params.scene_count * params.complex_per_scene);

  for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
    const SceneGraph& scene = ds.scenes[s];
    int n = static_cast<int>(scene.objects.size());
    CHECK(n >= params.min_objects);
    CHECK(n <= params.max_objects);
    CHECK(static_cast<int>(ds.masks[s].masks.size()) == n);
    // Native-resolution masks are disjoint and non-empty.
    BitMask seen(scene.height, scene.width);
    for (const auto& [id, mask] : ds.masks[s].masks) {
      CHECK(mask.pixel_count() > 0);
      for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i]) {
          CHECK(seen.bits[i] == 0);
          seen.bits[i] = 1;
        }
      }
    }
    // Images are float32-quantized values in [0,1].
    for (double v : ds.images[s].data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(v == static_cast<double>(static_cast<float>(v)));
    }
  }

  auto check_question = [&](const DatasetQuestion& q) {
    CHECK(q.image_index >= 0);
    CHECK(q.image_index < params.scene_count);
    CHECK(q.gt.all.height == params.image_height);
    CHECK(q.gt.all.width == params.image_width);
    CHECK(q.gt.all.pixel_count() > 0);
    // Mask-level subset chain across the defined ground-truth kinds.
    if (q.gt.unique) {
      REQUIRE(q.gt.unique_first_nonempty.has_value());
      CHECK(q.gt.unique->pixel_count() > 0);
      CHECK(mask_subset(*q.gt.unique, *q.gt.unique_first_nonempty));
    }
    if (q.gt.unique_first_nonempty) {
      REQUIRE(q.gt.set_union.has_value());
      CHECK(mask_subset(*q.gt.unique_first_nonempty, *q.gt.set_union));
    }
    if (q.gt.set_union) CHECK(mask_subset(*q.gt.set_union, q.gt.all));
  };
  for (const DatasetQuestion& q : ds.simple_questions) {
    check_question(q);
    // Simple questions always isolate one object.
    CHECK(q.gt.unique.has_value());
    CHECK(q.family == QuestionFamily::Query);
  }
  for (const DatasetQuestion& q : ds.complex_questions) check_question(q);
}

TEST_CASE("load_dataset rejects a missing directory") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/xaibench_nowhere"), IoFailure);
}

TEST_CASE("training is deterministic across runs and thread counts") {
  fs::path dir = fresh_dir("train_det");
  Dataset ds = generate_dataset(train_params_dataset(41, 10, 3, 1), dir.string());
  fs::remove_all(dir);

  TrainParams tp;
  tp.epochs = 2;
  tp.seed = 5;
  tp.threads = 1;
  Model m1 = train_toy_model(ds, tp);
  Model m2 = train_toy_model(ds, tp);
  tp.threads = 3;
  Model m3 = train_toy_model(ds, tp);

  fs::path p1 = fresh_dir("model1"), p2 = fresh_dir("model2"), p3 = fresh_dir("model3");
  save_model(m1, p1.string());
  save_model(m2, p2.string());
  save_model(m3, p3.string());
  std::string b1 = file_bytes(p1), b2 = file_bytes(p2), b3 = file_bytes(p3);
  CHECK(b1 == b2);
  CHECK(b1 == b3);
  fs::remove(p1);
  fs::remove(p2);
  fs::remove(p3);
}

TEST_CASE("zero learning rate leaves the model at its initialization") {
  fs::path dir = fresh_dir("train_lr0");
  Dataset ds = generate_dataset(train_params_dataset(43, 8, 2, 1), dir.string());
  fs::remove_all(dir);

  TrainParams tp;
  tp.lr = 0.0;
  tp.weight_decay = 0.0;
  tp.seed = 11;
  tp.threads = 1;
  tp.epochs = 1;
  Model one = train_toy_model(ds, tp);
  tp.epochs = 4;
  Model four = train_toy_model(ds, tp);

  fs::path pa = fresh_dir("model_lr0_a"), pb = fresh_dir("model_lr0_b");
  save_model(one, pa.string());
  save_model(four, pb.string());
  CHECK(file_bytes(pa) == file_bytes(pb));
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("a tiny model fits a tiny training set") {
  fs::path dir = fresh_dir("train_fit");
  // Full 32×32 geometry: the 20×20 variant has a single relation cell and
  // not enough spatial capacity to memorize reliably.
  DatasetParams dp = train_params_dataset(45, 12, 4, 0);
  dp.image_height = 32;
  dp.image_width = 32;
  Dataset ds = generate_dataset(dp, dir.string());
  fs::remove_all(dir);

  TrainParams tp;
  tp.epochs = 40;
  tp.seed = 3;
  tp.threads = 1;
  TrainReport report;
  Model model = train_toy_model(ds, tp, &report);

  CHECK(std::isfinite(report.final_loss));
  CHECK(report.final_loss >= 0.0);
  CHECK(report.train_accuracy >= 0.5);
  CHECK(report.train_accuracy <= 1.0);
  CHECK(report.heldout_count > 0);
  CHECK(report.heldout_accuracy >= 0.0);
  CHECK(report.heldout_accuracy <= 1.0);

  // The trained model predicts through the same embedding path used above.
  const DatasetQuestion& q = ds.simple_questions.front();
  Prediction p = predict(model, ds.images[q.image_index], model.embedding(program_key(q.raw)));
  CHECK(p.class_id >= 0);
  CHECK(p.probability > 0.0);
  CHECK(p.probability <= 1.0);
}

TEST_CASE("training rejects bad parameters and degenerate splits") {
  fs::path dir = fresh_dir("train_bad");
  Dataset ds = generate_dataset(train_params_dataset(47, 2, 1, 0), dir.string());
  fs::remove_all(dir);

  TrainParams tp;
  tp.epochs = -1;
  CHECK_THROWS_AS(train_toy_model(ds, tp), std::invalid_argument);
  tp = TrainParams{};
  tp.batch = 0;
  CHECK_THROWS_AS(train_toy_model(ds, tp), std::invalid_argument);
  tp = TrainParams{};
  tp.holdout_fraction = 1.0;
  CHECK_THROWS_AS(train_toy_model(ds, tp), std::invalid_argument);

  // One scene: the scene-granular split leaves nothing to train on.
  fs::path dir1 = fresh_dir("train_one");
  Dataset one = generate_dataset(train_params_dataset(49, 1, 1, 0), dir1.string());
  fs::remove_all(dir1);
  tp = TrainParams{};
  tp.epochs = 1;
  CHECK_THROWS_AS(train_toy_model(one, tp), std::invalid_argument);
}

TEST_CASE("dataset parameter validation") {
  CHECK_THROWS_AS(generate_dataset(DatasetParams{.scene_count = 0}, "/tmp/unused"),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_dataset(DatasetParams{.simple_per_scene = -1}, "/tmp/unused"),
                  std::invalid_argument);
  DatasetParams none;
  none.simple_per_scene = 0;
  none.complex_per_scene = 0;
  CHECK_THROWS_AS(generate_dataset(none, "/tmp/unused"), std::invalid_argument);
  DatasetParams inverted;
  inverted.min_objects = 5;
  inverted.max_objects = 3;
  CHECK_THROWS_AS(generate_dataset(inverted, "/tmp/unused"), std::invalid_argument);
}
