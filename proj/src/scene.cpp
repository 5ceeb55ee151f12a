#include "xaibench/scene.hpp"

#include <stdexcept>

#include <json.hpp>

namespace xaibench {

void SceneGraph::validate(const AttributeVocabulary& vocab) const {
  if (objects.empty()) throw std::invalid_argument("scene has no objects");
  if (height <= 0 || width <= 0) throw std::invalid_argument("scene image size must be positive");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const SceneObject& o = objects[i];
    if (o.id != static_cast<int>(i)) throw std::invalid_argument("object ids must be 0..n-1");
    if (o.shape < 0 || o.shape >= static_cast<int>(vocab.shapes.size()) ||
        o.color < 0 || o.color >= static_cast<int>(vocab.colors.size()) ||
        o.material < 0 || o.material >= static_cast<int>(vocab.materials.size()) ||
        o.size < 0 || o.size >= static_cast<int>(vocab.sizes.size())) {
      throw std::invalid_argument("attribute index outside vocabulary");
    }
    if (o.x < 0.0 || o.x >= width || o.y < 0.0 || o.y >= height) {
      throw std::invalid_argument("object position outside image bounds");
    }
  }
}

namespace {

nlohmann::ordered_json object_to_json(const SceneObject& o) {
  const auto& vocab = AttributeVocabulary::standard();
  nlohmann::ordered_json j;
  j["id"] = o.id;
  j["shape"] = vocab.shapes[o.shape];
  j["color"] = vocab.colors[o.color];
  j["material"] = vocab.materials[o.material];
  j["size"] = vocab.sizes[o.size];
  j["position"] = {o.x, o.y};
  j["mask_ref"] = o.mask_ref;
  return j;
}

SceneObject object_from_json(const nlohmann::json& j) {
  const auto& vocab = AttributeVocabulary::standard();
  SceneObject o;
  o.id = j.at("id").get<int>();
  o.shape = vocab.index_of(AttrKind::Shape, j.at("shape").get<std::string>());
  o.color = vocab.index_of(AttrKind::Color, j.at("color").get<std::string>());
  o.material = vocab.index_of(AttrKind::Material, j.at("material").get<std::string>());
  o.size = vocab.index_of(AttrKind::Size, j.at("size").get<std::string>());
  if (o.shape < 0 || o.color < 0 || o.material < 0 || o.size < 0) {
    throw std::invalid_argument("unknown attribute value in scene record");
  }
  o.x = j.at("position").at(0).get<double>();
  o.y = j.at("position").at(1).get<double>();
  o.mask_ref = j.value("mask_ref", std::string{});
  return o;
}

}  // namespace

std::string scene_to_json(const SceneGraph& scene) {
  nlohmann::ordered_json j;
  j["image_size"] = {scene.height, scene.width};
  auto objs = nlohmann::ordered_json::array();
  for (const auto& o : scene.objects) objs.push_back(object_to_json(o));
  j["objects"] = std::move(objs);
  return j.dump();
}

SceneGraph scene_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  SceneGraph scene;
  scene.height = j.at("image_size").at(0).get<int>();
  scene.width = j.at("image_size").at(1).get<int>();
  for (const auto& oj : j.at("objects")) scene.objects.push_back(object_from_json(oj));
  return scene;
}

}  // namespace xaibench
