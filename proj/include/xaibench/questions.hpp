#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xaibench/evaluate.hpp"
#include "xaibench/program.hpp"
#include "xaibench/scene.hpp"
#include "xaibench/vocab.hpp"

namespace xaibench {

enum class QuestionKind { Simple, Complex };

struct GeneratedQuestion {
  RawProgram raw;
  FunctionalProgram program;
  std::string answer;
  int answer_class = -1;
};

struct GenerationExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic under seed. Simple questions are single-target attribute
// queries; complex ones draw from a weighted template set covering relate,
// same, count, exist, comparison, and set logic. Every emitted program
// evaluates cleanly on the scene.
std::vector<GeneratedQuestion> instantiate_questions(const SceneGraph& scene,
                                                     const AttributeVocabulary& vocab,
                                                     QuestionKind kind, int count,
                                                     std::uint64_t seed);

// Canonical signature, also used as the question-embedding key.
std::string program_key(const RawProgram& raw);

nlohmann::ordered_json program_to_json(const RawProgram& raw);
RawProgram program_from_json(const nlohmann::json& j);

}  // namespace xaibench
