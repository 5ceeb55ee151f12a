#include "xaibench/evaluate.hpp"

#include <algorithm>
#include <functional>

namespace xaibench {

namespace {

const ObjectSet& as_set(const EvalValue& v, const char* ctx) {
  if (const auto* s = std::get_if<ObjectSet>(&v)) return *s;
  throw EvalError(EvalError::Code::IllPosed, std::string(ctx) + ": expected an object set");
}

int as_ref(const EvalValue& v, const char* ctx) {
  if (const auto* r = std::get_if<ObjectRef>(&v)) return r->id;
  throw EvalError(EvalError::Code::IllPosed, std::string(ctx) + ": expected a single object");
}

int as_int(const EvalValue& v, const char* ctx) {
  if (const auto* n = std::get_if<int>(&v)) return *n;
  throw EvalError(EvalError::Code::IllPosed, std::string(ctx) + ": expected an integer");
}

AttributeValue as_attr(const EvalValue& v, const char* ctx) {
  if (const auto* a = std::get_if<AttributeValue>(&v)) return *a;
  throw EvalError(EvalError::Code::IllPosed, std::string(ctx) + ": expected an attribute");
}

AttrKind kind_of(Fn fn) {
  switch (fn) {
    case Fn::FilterShape:
    case Fn::SameShape:
    case Fn::QueryShape:
    case Fn::EqualShape:
      return AttrKind::Shape;
    case Fn::FilterColor:
    case Fn::SameColor:
    case Fn::QueryColor:
    case Fn::EqualColor:
      return AttrKind::Color;
    case Fn::FilterMaterial:
    case Fn::SameMaterial:
    case Fn::QueryMaterial:
    case Fn::EqualMaterial:
      return AttrKind::Material;
    default:
      return AttrKind::Size;
  }
}

ObjectSet filter(const ObjectSet& in, const SceneGraph& scene, AttrKind kind, int want) {
  ObjectSet out;
  for (int id : in) {
    if (scene.objects[id].attribute(kind) == want) out.insert(id);
  }
  return out;
}

ObjectSet relate(int ref, const SceneGraph& scene, const std::string& relation) {
  const SceneObject& r = scene.objects[ref];
  ObjectSet out;
  for (const SceneObject& o : scene.objects) {
    if (o.id == ref) continue;
    bool hit = false;
    if (relation == "left") hit = o.x < r.x;
    else if (relation == "right") hit = o.x > r.x;
    else if (relation == "behind") hit = o.y < r.y;
    else hit = o.y > r.y;  // front
    if (hit) out.insert(o.id);
  }
  return out;
}

ObjectSet same_attr(int ref, const SceneGraph& scene, AttrKind kind) {
  int want = scene.objects[ref].attribute(kind);
  ObjectSet out;
  for (const SceneObject& o : scene.objects) {
    if (o.id != ref && o.attribute(kind) == want) out.insert(o.id);
  }
  return out;
}

}  // namespace

EvalTrace evaluate(const FunctionalProgram& program, const SceneGraph& scene,
                   const AttributeVocabulary& vocab) {
  EvalTrace trace;
  trace.values.reserve(program.nodes.size());
  for (const ProgramNode& node : program.nodes) {
    auto in = [&](int slot) -> const EvalValue& { return trace.values[node.inputs[slot]]; };
    EvalValue value;
    switch (node.function) {
      case Fn::Scene: {
        ObjectSet all;
        for (const SceneObject& o : scene.objects) all.insert(o.id);
        value = std::move(all);
        break;
      }
      case Fn::FilterShape:
      case Fn::FilterColor:
      case Fn::FilterMaterial:
      case Fn::FilterSize: {
        AttrKind kind = kind_of(node.function);
        int want = vocab.index_of(kind, node.value_inputs[0]);
        value = filter(as_set(in(0), "filter"), scene, kind, want);
        break;
      }
      case Fn::Unique: {
        const ObjectSet& s = as_set(in(0), "unique");
        if (s.size() != 1) {
          throw EvalError(EvalError::Code::IllPosed,
                          "unique: input has " + std::to_string(s.size()) + " objects");
        }
        value = ObjectRef{*s.begin()};
        break;
      }
      case Fn::Relate:
        value = relate(as_ref(in(0), "relate"), scene, node.value_inputs[0]);
        break;
      case Fn::SameShape:
      case Fn::SameColor:
      case Fn::SameMaterial:
      case Fn::SameSize:
        value = same_attr(as_ref(in(0), "same"), scene, kind_of(node.function));
        break;
      case Fn::Union: {
        ObjectSet out = as_set(in(0), "union");
        const ObjectSet& b = as_set(in(1), "union");
        out.insert(b.begin(), b.end());
        value = std::move(out);
        break;
      }
      case Fn::Intersect: {
        const ObjectSet& a = as_set(in(0), "intersect");
        const ObjectSet& b = as_set(in(1), "intersect");
        ObjectSet out;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                              std::inserter(out, out.begin()));
        value = std::move(out);
        break;
      }
      case Fn::Count:
        value = static_cast<int>(as_set(in(0), "count").size());
        break;
      case Fn::Exist:
        value = !as_set(in(0), "exist").empty();
        break;
      case Fn::QueryShape:
      case Fn::QueryColor:
      case Fn::QueryMaterial:
      case Fn::QuerySize: {
        int ref = as_ref(in(0), "query");
        if (ref < 0 || ref >= static_cast<int>(scene.objects.size())) {
          throw EvalError(EvalError::Code::EmptyQuery, "query: object missing from scene");
        }
        AttrKind kind = kind_of(node.function);
        value = AttributeValue{kind, scene.objects[ref].attribute(kind)};
        break;
      }
      case Fn::EqualShape:
      case Fn::EqualColor:
      case Fn::EqualMaterial:
      case Fn::EqualSize: {
        AttributeValue a = as_attr(in(0), "equal");
        AttributeValue b = as_attr(in(1), "equal");
        value = a.index == b.index;
        break;
      }
      case Fn::EqualInteger:
        value = as_int(in(0), "equal_integer") == as_int(in(1), "equal_integer");
        break;
      case Fn::GreaterThan:
        value = as_int(in(0), "greater_than") > as_int(in(1), "greater_than");
        break;
      case Fn::LessThan:
        value = as_int(in(0), "less_than") < as_int(in(1), "less_than");
        break;
    }
    trace.values.push_back(std::move(value));
  }

  const EvalValue& out = trace.values.back();
  if (const auto* n = std::get_if<int>(&out)) {
    if (*n < 0 || *n > 10) {
      throw EvalError(EvalError::Code::IllPosed, "count outside the answer range");
    }
    trace.answer_class = AnswerVocabulary::standard().integer_class(*n);
  } else if (const auto* b = std::get_if<bool>(&out)) {
    trace.answer_class = AnswerVocabulary::standard().boolean_class(*b);
  } else if (const auto* a = std::get_if<AttributeValue>(&out)) {
    trace.answer_class = AnswerVocabulary::standard().attribute_class(a->kind, a->index);
  } else {
    throw EvalError(EvalError::Code::IllPosed, "program does not end in an answer node");
  }
  return trace;
}

std::optional<ObjectSet> derive_gt_unique(const FunctionalProgram& program,
                                          const EvalTrace& trace) {
  bool any = false;
  ObjectSet out;
  for (std::size_t i = 0; i < program.nodes.size(); ++i) {
    if (program.nodes[i].function == Fn::Unique) {
      any = true;
      out.insert(std::get<ObjectRef>(trace.values[i]).id);
    }
  }
  if (!any) return std::nullopt;
  return out;
}

ObjectSet derive_gt_unique_first_nonempty(const FunctionalProgram& program,
                                          const EvalTrace& trace) {
  ObjectSet out;
  // Depth-first from the answer node toward scene; each branch contributes the
  // first non-empty object set it reaches.
  std::function<void(int)> walk = [&](int idx) {
    const ProgramNode& node = program.nodes[idx];
    if (node.function == Fn::Scene) return;
    if (const auto* s = std::get_if<ObjectSet>(&trace.values[idx]); s && !s->empty()) {
      out.insert(s->begin(), s->end());
      return;
    }
    for (int in : node.inputs) walk(in);
  };
  walk(static_cast<int>(program.nodes.size()) - 1);
  for (std::size_t i = 0; i < program.nodes.size(); ++i) {
    if (program.nodes[i].function == Fn::Unique) {
      out.insert(std::get<ObjectRef>(trace.values[i]).id);
    }
  }
  if (out.empty()) throw EmptyGT("no non-empty object set in the program");
  return out;
}

ObjectSet derive_gt_union(const FunctionalProgram& program, const EvalTrace& trace) {
  ObjectSet out;
  for (std::size_t i = 0; i < program.nodes.size(); ++i) {
    if (program.nodes[i].function == Fn::Scene) continue;
    if (const auto* s = std::get_if<ObjectSet>(&trace.values[i])) {
      out.insert(s->begin(), s->end());
    } else if (const auto* r = std::get_if<ObjectRef>(&trace.values[i])) {
      out.insert(r->id);
    }
  }
  if (out.empty()) throw EmptyGT("all intermediate object sets are empty");
  return out;
}

ObjectSet derive_gt_all_objects(const SceneGraph& scene) {
  ObjectSet out;
  for (const SceneObject& o : scene.objects) out.insert(o.id);
  return out;
}

}  // namespace xaibench
