#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "xaibench/bitmask.hpp"
#include "xaibench/program.hpp"
#include "xaibench/scene.hpp"
#include "xaibench/vocab.hpp"

namespace xaibench {

using ObjectSet = std::set<int>;

struct ObjectRef {
  int id = -1;
};

struct AttributeValue {
  AttrKind kind;
  int index = -1;
};

using EvalValue = std::variant<ObjectSet, ObjectRef, AttributeValue, int, bool>;

struct EvalError : std::runtime_error {
  enum class Code { IllPosed, EmptyQuery };
  Code code;
  EvalError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
};

struct EvalTrace {
  std::vector<EvalValue> values;
  int answer_class = -1;
};

// Evaluates node by node; throws EvalError when the question is ill-posed on
// this scene (unique over a non-singleton set).
EvalTrace evaluate(const FunctionalProgram& program, const SceneGraph& scene,
                   const AttributeVocabulary& vocab);

// Union of all unique-node outputs; nullopt when the program has no unique node.
std::optional<ObjectSet> derive_gt_unique(const FunctionalProgram& program,
                                          const EvalTrace& trace);

// Reverse walk per branch: the first non-empty object set on each path to the
// scene node, excluding scene itself, unioned with every unique output.
ObjectSet derive_gt_unique_first_nonempty(const FunctionalProgram& program,
                                          const EvalTrace& trace);

// Every object that appears in any node value except the scene node.
ObjectSet derive_gt_union(const FunctionalProgram& program, const EvalTrace& trace);

ObjectSet derive_gt_all_objects(const SceneGraph& scene);

}  // namespace xaibench
