#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xaibench/vocab.hpp"

namespace xaibench {

enum class Fn {
  Scene,
  FilterShape,
  FilterColor,
  FilterMaterial,
  FilterSize,
  Unique,
  Relate,
  SameShape,
  SameColor,
  SameMaterial,
  SameSize,
  Union,
  Intersect,
  Count,
  Exist,
  QueryShape,
  QueryColor,
  QueryMaterial,
  QuerySize,
  EqualShape,
  EqualColor,
  EqualMaterial,
  EqualSize,
  EqualInteger,
  GreaterThan,
  LessThan,
};

std::string_view fn_name(Fn fn);
// Returns false when the name is unknown.
bool fn_from_name(std::string_view name, Fn& out);

int fn_arity(Fn fn);        // number of node inputs
int fn_value_arity(Fn fn);  // number of literal arguments

enum class QuestionFamily { Query, CompareAttribute, CompareInteger, Count, Exist };

std::string_view family_name(QuestionFamily family);
bool family_from_name(std::string_view name, QuestionFamily& out);

struct ProgramNode {
  Fn function = Fn::Scene;
  std::vector<int> inputs;
  std::vector<std::string> value_inputs;
};

struct FunctionalProgram {
  std::vector<ProgramNode> nodes;
  std::string question_text;
  QuestionFamily family = QuestionFamily::Query;
};

struct ParseError : std::runtime_error {
  enum class Code { UnknownFunction, ArityMismatch, CycleDetected, BadLiteral };
  ParseError(Code c, const std::string& what) : std::runtime_error(what), code(c) {}
  Code code;
};

// Raw node record as found in question files.
struct RawProgramNode {
  std::string function;
  std::vector<int> inputs;
  std::vector<std::string> value_inputs;
};

struct RawProgram {
  std::vector<RawProgramNode> nodes;
  std::string question_text;
};

// Validates names, arities, topological order, and literals, and derives the
// question family from the output node.
FunctionalProgram parse_program(const RawProgram& raw,
                                const AttributeVocabulary& vocab = AttributeVocabulary::standard());

// Relation literals accepted by `relate`.
inline constexpr std::string_view kRelations[] = {"left", "right", "front", "behind"};

QuestionFamily family_of_output(Fn fn);

}  // namespace xaibench
