#include "xaibench/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "xaibench/evaluate.hpp"
#include "xaibench/render.hpp"
#include "xaibench/resize.hpp"
#include "xaibench/rng.hpp"

namespace fs = std::filesystem;

namespace xaibench {

namespace {

constexpr char kImageMagic[4] = {'X', 'I', 'M', 'G'};

std::string image_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05d.bin", index);
  return buf;
}

void write_image_file(const fs::path& path, const Tensor& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out.write(kImageMagic, 4);
  std::uint32_t dims[3] = {static_cast<std::uint32_t>(image.shape[0]),
                           static_cast<std::uint32_t>(image.shape[1]),
                           static_cast<std::uint32_t>(image.shape[2])};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<float> f(image.data.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(image.data[i]);
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out) throw IoFailure("short write to " + path.string());
}

Tensor read_image_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  char magic[4];
  std::uint32_t dims[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || std::memcmp(magic, kImageMagic, 4) != 0) {
    throw IoFailure("bad image header in " + path.string());
  }
  Tensor t({static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])});
  std::vector<float> f(t.data.size());
  in.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!in) throw IoFailure("truncated image file " + path.string());
  for (std::size_t i = 0; i < f.size(); ++i) t.data[i] = f[i];
  return t;
}

// The on-disk format is float32; storing the rounded values in memory keeps
// the generated dataset identical to what a later load returns.
void quantize_to_f32(Tensor& image) {
  for (double& v : image.data) v = static_cast<float>(v);
}

struct ScenePlan {
  SceneGraph scene;
  RenderResult render;
  std::vector<GeneratedQuestion> simple;
  std::vector<GeneratedQuestion> complex;
};

bool place_objects(SceneGraph& scene, const DatasetParams& params, const ShapeGeometry& geo,
                   const AttributeVocabulary& vocab, Rng& rng) {
  int n = rng.next_int(params.min_objects, params.max_objects);
  scene.objects.clear();
  scene.height = params.native_size;
  scene.width = params.native_size;
  for (int i = 0; i < n; ++i) {
    SceneObject obj;
    obj.id = i;
    obj.shape = static_cast<int>(rng.next_below(vocab.shapes.size()));
    obj.color = static_cast<int>(rng.next_below(vocab.colors.size()));
    obj.material = static_cast<int>(rng.next_below(vocab.materials.size()));
    obj.size = static_cast<int>(rng.next_below(vocab.sizes.size()));
    int r = geo.radius(obj.size);
    int margin = r + 1;
    bool placed = false;
    for (int tries = 0; tries < 200 && !placed; ++tries) {
      int x = rng.next_int(margin, params.native_size - 1 - margin);
      int y = rng.next_int(margin, params.native_size - 1 - margin);
      bool clear = true;
      for (const SceneObject& other : scene.objects) {
        // Chebyshev separation beyond the larger footprint keeps every
        // object's center pixel visible, so no mask can vanish.
        int gap = std::max(r, geo.radius(other.size)) + 1;
        if (std::abs(x - static_cast<int>(other.x)) < gap &&
            std::abs(y - static_cast<int>(other.y)) < gap) {
          clear = false;
          break;
        }
      }
      if (clear) {
        obj.x = x;
        obj.y = y;
        placed = true;
      }
    }
    if (!placed) return false;
    scene.objects.push_back(obj);
  }
  return true;
}

ScenePlan build_scene(const DatasetParams& params, const AttributeVocabulary& vocab,
                      int scene_index, Rng& scene_rng) {
  ShapeGeometry geo;
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::uint64_t place_seed = scene_rng.next_u64();
    std::uint64_t simple_seed = scene_rng.next_u64();
    std::uint64_t complex_seed = scene_rng.next_u64();
    ScenePlan plan;
    Rng place_rng(place_seed);
    if (!place_objects(plan.scene, params, geo, vocab, place_rng)) continue;
    for (int i = 0; i < plan.scene.size(); ++i) {
      plan.scene.objects[i].mask_ref =
          "scene" + std::to_string(scene_index) + "_obj" + std::to_string(i);
    }
    plan.scene.validate(vocab);
    try {
      plan.render = rasterize_scene(plan.scene, geo);
      plan.simple = instantiate_questions(plan.scene, vocab, QuestionKind::Simple,
                                          params.simple_per_scene, simple_seed);
      plan.complex = instantiate_questions(plan.scene, vocab, QuestionKind::Complex,
                                           params.complex_per_scene, complex_seed);
    } catch (const DegenerateObject&) {
      continue;
    } catch (const GenerationExhausted&) {
      continue;
    }
    return plan;
  }
  throw GenerationExhausted("scene " + std::to_string(scene_index) +
                            " failed after 100 attempts");
}

GroundTruthMasks derive_masks(const FunctionalProgram& program, const SceneGraph& scene,
                              const ObjectMaskStore& store, const AttributeVocabulary& vocab,
                              int out_h, int out_w) {
  EvalTrace trace = evaluate(program, scene, vocab);
  auto to_mask = [&](const ObjectSet& ids) {
    BitMask native = union_mask(ids, store, scene.height, scene.width);
    return resize_mask(native, out_h, out_w);
  };
  GroundTruthMasks gt;
  gt.all = to_mask(derive_gt_all_objects(scene));
  if (auto u = derive_gt_unique(program, trace)) gt.unique = to_mask(*u);
  try {
    gt.unique_first_nonempty = to_mask(derive_gt_unique_first_nonempty(program, trace));
  } catch (const EmptyGT&) {
  }
  try {
    gt.set_union = to_mask(derive_gt_union(program, trace));
  } catch (const EmptyGT&) {
  }
  return gt;
}

nlohmann::ordered_json question_to_json(const DatasetQuestion& q) {
  nlohmann::ordered_json j;
  j["image_index"] = q.image_index;
  j["question_text"] = q.question_text;
  j["family"] = std::string(family_name(q.family));
  j["program"] = program_to_json(q.raw);
  j["answer"] = q.answer;
  return j;
}

nlohmann::ordered_json optional_mask_json(const std::optional<BitMask>& m) {
  if (!m) return nullptr;
  return mask_to_json(*m);
}

nlohmann::ordered_json gt_to_json(const GroundTruthMasks& gt) {
  nlohmann::ordered_json j;
  j["unique"] = optional_mask_json(gt.unique);
  j["unique_first_nonempty"] = optional_mask_json(gt.unique_first_nonempty);
  j["union"] = optional_mask_json(gt.set_union);
  j["all"] = mask_to_json(gt.all);
  return j;
}

std::optional<BitMask> optional_mask_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return mask_from_json(j);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoFailure("short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

DatasetQuestion make_dataset_question(const GeneratedQuestion& g, int image_index,
                                      const SceneGraph& scene, const ObjectMaskStore& store,
                                      const AttributeVocabulary& vocab,
                                      const DatasetParams& params) {
  DatasetQuestion q;
  q.image_index = image_index;
  q.question_text = g.raw.question_text;
  q.family = g.program.family;
  q.raw = g.raw;
  q.program = g.program;
  q.answer = g.answer;
  q.answer_class = g.answer_class;
  q.gt = derive_masks(g.program, scene, store, vocab, params.image_height,
                      params.image_width);
  return q;
}

}  // namespace

Dataset generate_dataset(const DatasetParams& params, const std::string& out_dir) {
  if (params.scene_count <= 0 || params.image_height <= 0 || params.image_width <= 0 ||
      params.native_size <= 0 || params.simple_per_scene < 0 || params.complex_per_scene < 0 ||
      params.simple_per_scene + params.complex_per_scene <= 0 || params.min_objects < 1 ||
      params.max_objects < params.min_objects) {
    throw std::invalid_argument("dataset parameters must be positive");
  }
  const AttributeVocabulary& vocab = AttributeVocabulary::standard();
  Rng root(params.seed);

  Dataset ds;
  ds.params = params;
  for (int s = 0; s < params.scene_count; ++s) {
    Rng scene_rng = root.fork(static_cast<std::uint64_t>(s));
    ScenePlan plan = build_scene(params, vocab, s, scene_rng);
    Tensor resized = resize_image(plan.render.image, params.image_height, params.image_width);
    quantize_to_f32(resized);
    for (const GeneratedQuestion& g : plan.simple) {
      ds.simple_questions.push_back(
          make_dataset_question(g, s, plan.scene, plan.render.masks, vocab, params));
    }
    for (const GeneratedQuestion& g : plan.complex) {
      ds.complex_questions.push_back(
          make_dataset_question(g, s, plan.scene, plan.render.masks, vocab, params));
    }
    ds.scenes.push_back(std::move(plan.scene));
    ds.images.push_back(std::move(resized));
    ds.masks.push_back(std::move(plan.render.masks));
  }

  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoFailure("cannot create " + (dir / "images").string());

  nlohmann::ordered_json scenes = nlohmann::ordered_json::array();
  for (const SceneGraph& scene : ds.scenes) {
    scenes.push_back(nlohmann::ordered_json::parse(scene_to_json(scene)));
  }
  write_text(dir / "scenes.json", scenes.dump(2) + "\n");

  nlohmann::ordered_json masks;
  for (std::size_t s = 0; s < ds.masks.size(); ++s) {
    for (const auto& [id, mask] : ds.masks[s].masks) {
      masks[ds.scenes[s].objects[id].mask_ref] = mask_to_json(mask);
    }
  }
  write_text(dir / "masks.json", masks.dump(2) + "\n");

  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    write_image_file(dir / "images" / image_filename(static_cast<int>(i)), ds.images[i]);
  }

  auto write_questions = [&](const std::vector<DatasetQuestion>& qs, const char* q_file,
                             const char* gt_file) {
    nlohmann::ordered_json qj = nlohmann::ordered_json::array();
    nlohmann::ordered_json gj = nlohmann::ordered_json::array();
    for (const DatasetQuestion& q : qs) {
      qj.push_back(question_to_json(q));
      gj.push_back(gt_to_json(q.gt));
    }
    write_text(dir / q_file, qj.dump(2) + "\n");
    write_text(dir / gt_file, gj.dump(2) + "\n");
  };
  write_questions(ds.simple_questions, "simple_questions.json", "gt_masks_simple.json");
  write_questions(ds.complex_questions, "complex_questions.json", "gt_masks_complex.json");

  std::vector<BitMask> single_masks;
  std::vector<int> single_counts;
  for (const DatasetQuestion& q : ds.simple_questions) {
    if (q.gt.unique) {
      single_masks.push_back(*q.gt.unique);
      single_counts.push_back(1);
    }
  }
  MaskStats stats = mask_stats(single_masks, single_counts);

  nlohmann::ordered_json manifest;
  manifest["seed"] = params.seed;
  manifest["image_size"] = {params.image_height, params.image_width};
  manifest["native_size"] = params.native_size;
  manifest["counts"] = {{"scenes", ds.scenes.size()},
                        {"simple_questions", ds.simple_questions.size()},
                        {"complex_questions", ds.complex_questions.size()}};
  manifest["paths"] = {{"scenes", "scenes.json"},
                       {"masks", "masks.json"},
                       {"images", "images"},
                       {"simple_questions", "simple_questions.json"},
                       {"complex_questions", "complex_questions.json"},
                       {"gt_masks_simple", "gt_masks_simple.json"},
                       {"gt_masks_complex", "gt_masks_complex.json"}};
  manifest["params"] = {{"simple_per_scene", params.simple_per_scene},
                        {"complex_per_scene", params.complex_per_scene},
                        {"min_objects", params.min_objects},
                        {"max_objects", params.max_objects}};
  manifest["stats"] = {{"single_object_pixels",
                        {{"min", stats.pixels.min},
                         {"max", stats.pixels.max},
                         {"mean", stats.pixels.mean},
                         {"std", stats.pixels.std}}}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return ds;
}

Dataset load_dataset(const std::string& dir_str) {
  const AttributeVocabulary& vocab = AttributeVocabulary::standard();
  fs::path dir(dir_str);
  nlohmann::json manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));

  Dataset ds;
  ds.params.seed = manifest.at("seed").get<std::uint64_t>();
  ds.params.image_height = manifest.at("image_size")[0].get<int>();
  ds.params.image_width = manifest.at("image_size")[1].get<int>();
  ds.params.native_size = manifest.at("native_size").get<int>();
  ds.params.simple_per_scene = manifest.at("params").at("simple_per_scene").get<int>();
  ds.params.complex_per_scene = manifest.at("params").at("complex_per_scene").get<int>();
  ds.params.min_objects = manifest.at("params").at("min_objects").get<int>();
  ds.params.max_objects = manifest.at("params").at("max_objects").get<int>();

  nlohmann::json scenes = nlohmann::json::parse(read_text(dir / "scenes.json"));
  for (const auto& sj : scenes) {
    ds.scenes.push_back(scene_from_json(sj.dump()));
  }
  ds.params.scene_count = static_cast<int>(ds.scenes.size());

  nlohmann::json masks = nlohmann::json::parse(read_text(dir / "masks.json"));
  ds.masks.resize(ds.scenes.size());
  for (std::size_t s = 0; s < ds.scenes.size(); ++s) {
    for (const SceneObject& obj : ds.scenes[s].objects) {
      ds.masks[s].masks[obj.id] = mask_from_json(masks.at(obj.mask_ref));
    }
  }

  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    ds.images.push_back(read_image_file(dir / "images" / image_filename(static_cast<int>(i))));
  }

  auto load_questions = [&](const char* q_file, const char* gt_file,
                            std::vector<DatasetQuestion>& out) {
    nlohmann::json qj = nlohmann::json::parse(read_text(dir / q_file));
    nlohmann::json gj = nlohmann::json::parse(read_text(dir / gt_file));
    if (qj.size() != gj.size()) {
      throw IoFailure(std::string(q_file) + " and " + gt_file + " disagree on length");
    }
    for (std::size_t i = 0; i < qj.size(); ++i) {
      DatasetQuestion q;
      q.image_index = qj[i].at("image_index").get<int>();
      q.question_text = qj[i].at("question_text").get<std::string>();
      q.raw = program_from_json(qj[i].at("program"));
      q.raw.question_text = q.question_text;
      q.program = parse_program(q.raw, vocab);
      q.family = q.program.family;
      std::string family_field = qj[i].at("family").get<std::string>();
      QuestionFamily parsed;
      if (!family_from_name(family_field, parsed) || parsed != q.family) {
        throw IoFailure("family field does not match the program in " + std::string(q_file));
      }
      q.answer = qj[i].at("answer").get<std::string>();
      q.answer_class = AnswerVocabulary::standard().index_of(q.answer);
      if (q.answer_class < 0) throw IoFailure("unknown answer " + q.answer);
      if (q.image_index < 0 || q.image_index >= static_cast<int>(ds.scenes.size())) {
        throw IoFailure("question references missing scene");
      }
      q.gt.unique = optional_mask_from_json(gj[i].at("unique"));
      q.gt.unique_first_nonempty = optional_mask_from_json(gj[i].at("unique_first_nonempty"));
      q.gt.set_union = optional_mask_from_json(gj[i].at("union"));
      q.gt.all = mask_from_json(gj[i].at("all"));
      out.push_back(std::move(q));
    }
  };
  load_questions("simple_questions.json", "gt_masks_simple.json", ds.simple_questions);
  load_questions("complex_questions.json", "gt_masks_complex.json", ds.complex_questions);
  return ds;
}

}  // namespace xaibench
