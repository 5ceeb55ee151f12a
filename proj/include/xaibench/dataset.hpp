#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xaibench/bitmask.hpp"
#include "xaibench/program.hpp"
#include "xaibench/questions.hpp"
#include "xaibench/scene.hpp"
#include "xaibench/tensor.hpp"

namespace xaibench {

struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetParams {
  int scene_count = 200;
  int image_height = 32;
  int image_width = 32;
  int native_size = 48;  // rasterization resolution before downsampling
  int simple_per_scene = 4;
  int complex_per_scene = 6;
  int min_objects = 2;
  int max_objects = 6;
  std::uint64_t seed = 0;
};

// Ground-truth masks at model input resolution. unique is absent when the
// program has no unique node; the others are absent when the derived object
// set is empty. all is always present.
struct GroundTruthMasks {
  std::optional<BitMask> unique;
  std::optional<BitMask> unique_first_nonempty;
  std::optional<BitMask> set_union;
  BitMask all;
};

struct DatasetQuestion {
  int image_index = -1;
  std::string question_text;
  QuestionFamily family = QuestionFamily::Query;
  RawProgram raw;
  FunctionalProgram program;
  std::string answer;
  int answer_class = -1;
  GroundTruthMasks gt;
};

struct Dataset {
  DatasetParams params;
  std::vector<SceneGraph> scenes;      // native-resolution coordinates
  std::vector<Tensor> images;          // 3 x image_height x image_width, [0,1]
  std::vector<ObjectMaskStore> masks;  // native resolution, keyed by object id
  std::vector<DatasetQuestion> simple_questions;
  std::vector<DatasetQuestion> complex_questions;
};

// Builds scenes, images, questions, and ground-truth masks, writes the whole
// dataset plus manifest.json under out_dir, and returns the in-memory copy.
// Deterministic under params.seed, including the stored float32 images.
Dataset generate_dataset(const DatasetParams& params, const std::string& out_dir);

Dataset load_dataset(const std::string& dir);

}  // namespace xaibench
