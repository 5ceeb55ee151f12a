#include "xaibench/program.hpp"

#include <algorithm>

namespace xaibench {

namespace {

struct FnInfo {
  Fn fn;
  std::string_view name;
  int arity;
  int value_arity;
};

constexpr FnInfo kFnTable[] = {
    {Fn::Scene, "scene", 0, 0},
    {Fn::FilterShape, "filter_shape", 1, 1},
    {Fn::FilterColor, "filter_color", 1, 1},
    {Fn::FilterMaterial, "filter_material", 1, 1},
    {Fn::FilterSize, "filter_size", 1, 1},
    {Fn::Unique, "unique", 1, 0},
    {Fn::Relate, "relate", 1, 1},
    {Fn::SameShape, "same_shape", 1, 0},
    {Fn::SameColor, "same_color", 1, 0},
    {Fn::SameMaterial, "same_material", 1, 0},
    {Fn::SameSize, "same_size", 1, 0},
    {Fn::Union, "union", 2, 0},
    {Fn::Intersect, "intersect", 2, 0},
    {Fn::Count, "count", 1, 0},
    {Fn::Exist, "exist", 1, 0},
    {Fn::QueryShape, "query_shape", 1, 0},
    {Fn::QueryColor, "query_color", 1, 0},
    {Fn::QueryMaterial, "query_material", 1, 0},
    {Fn::QuerySize, "query_size", 1, 0},
    {Fn::EqualShape, "equal_shape", 2, 0},
    {Fn::EqualColor, "equal_color", 2, 0},
    {Fn::EqualMaterial, "equal_material", 2, 0},
    {Fn::EqualSize, "equal_size", 2, 0},
    {Fn::EqualInteger, "equal_integer", 2, 0},
    {Fn::GreaterThan, "greater_than", 2, 0},
    {Fn::LessThan, "less_than", 2, 0},
};

const FnInfo& info(Fn fn) { return kFnTable[static_cast<int>(fn)]; }

}  // namespace

std::string_view fn_name(Fn fn) { return info(fn).name; }

bool fn_from_name(std::string_view name, Fn& out) {
  for (const auto& e : kFnTable) {
    if (e.name == name) {
      out = e.fn;
      return true;
    }
  }
  return false;
}

int fn_arity(Fn fn) { return info(fn).arity; }
int fn_value_arity(Fn fn) { return info(fn).value_arity; }

std::string_view family_name(QuestionFamily family) {
  switch (family) {
    case QuestionFamily::Query: return "query";
    case QuestionFamily::CompareAttribute: return "compare_attribute";
    case QuestionFamily::CompareInteger: return "compare_integer";
    case QuestionFamily::Count: return "count";
    case QuestionFamily::Exist: return "exist";
  }
  return "?";
}

bool family_from_name(std::string_view name, QuestionFamily& out) {
  for (auto f : {QuestionFamily::Query, QuestionFamily::CompareAttribute,
                 QuestionFamily::CompareInteger, QuestionFamily::Count, QuestionFamily::Exist}) {
    if (family_name(f) == name) {
      out = f;
      return true;
    }
  }
  return false;
}

QuestionFamily family_of_output(Fn fn) {
  switch (fn) {
    case Fn::QueryShape:
    case Fn::QueryColor:
    case Fn::QueryMaterial:
    case Fn::QuerySize:
      return QuestionFamily::Query;
    case Fn::EqualShape:
    case Fn::EqualColor:
    case Fn::EqualMaterial:
    case Fn::EqualSize:
      return QuestionFamily::CompareAttribute;
    case Fn::EqualInteger:
    case Fn::GreaterThan:
    case Fn::LessThan:
      return QuestionFamily::CompareInteger;
    case Fn::Count:
      return QuestionFamily::Count;
    case Fn::Exist:
      return QuestionFamily::Exist;
    default:
      return QuestionFamily::Query;
  }
}

namespace {

AttrKind filter_kind(Fn fn) {
  switch (fn) {
    case Fn::FilterShape: return AttrKind::Shape;
    case Fn::FilterColor: return AttrKind::Color;
    case Fn::FilterMaterial: return AttrKind::Material;
    default: return AttrKind::Size;
  }
}

void check_literal(Fn fn, const std::string& literal, const AttributeVocabulary& vocab) {
  if (fn == Fn::Relate) {
    for (auto rel : kRelations) {
      if (rel == literal) return;
    }
    throw ParseError(ParseError::Code::BadLiteral, "unknown relation: " + literal);
  }
  if (vocab.index_of(filter_kind(fn), literal) < 0) {
    throw ParseError(ParseError::Code::BadLiteral,
                     std::string(fn_name(fn)) + ": unknown attribute value: " + literal);
  }
}

}  // namespace

FunctionalProgram parse_program(const RawProgram& raw, const AttributeVocabulary& vocab) {
  if (raw.nodes.size() < 2 || raw.nodes.size() > 24) {
    throw ParseError(ParseError::Code::ArityMismatch,
                     "program length must be between 2 and 24");
  }
  FunctionalProgram program;
  program.question_text = raw.question_text;
  program.nodes.reserve(raw.nodes.size());
  for (std::size_t i = 0; i < raw.nodes.size(); ++i) {
    const RawProgramNode& rn = raw.nodes[i];
    ProgramNode node;
    if (!fn_from_name(rn.function, node.function)) {
      throw ParseError(ParseError::Code::UnknownFunction, "unknown function: " + rn.function);
    }
    if (static_cast<int>(rn.inputs.size()) != fn_arity(node.function) ||
        static_cast<int>(rn.value_inputs.size()) != fn_value_arity(node.function)) {
      throw ParseError(ParseError::Code::ArityMismatch,
                       rn.function + ": wrong number of inputs or literals");
    }
    for (int in : rn.inputs) {
      if (in < 0 || in >= static_cast<int>(i)) {
        throw ParseError(ParseError::Code::CycleDetected,
                         rn.function + ": input must reference an earlier node");
      }
    }
    for (const auto& lit : rn.value_inputs) check_literal(node.function, lit, vocab);
    node.inputs = rn.inputs;
    node.value_inputs = rn.value_inputs;
    program.nodes.push_back(std::move(node));
  }
  if (program.nodes.front().function != Fn::Scene) {
    throw ParseError(ParseError::Code::ArityMismatch, "first node must be scene");
  }
  program.family = family_of_output(program.nodes.back().function);
  return program;
}

}  // namespace xaibench
