#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace xaibench {

enum class AttrKind { Shape, Color, Material, Size };

// Attribute vocabulary: 8 colors, 2 materials, 2 sizes, 3 shapes.
struct AttributeVocabulary {
  std::vector<std::string> colors;
  std::vector<std::string> materials;
  std::vector<std::string> sizes;
  std::vector<std::string> shapes;

  static const AttributeVocabulary& standard();

  const std::vector<std::string>& list(AttrKind kind) const;
  // Returns -1 when the name is not in the list.
  int index_of(AttrKind kind, std::string_view name) const;
  bool valid() const;
};

// 28 answer classes: "0".."10", yes/no, and the 15 attribute values.
class AnswerVocabulary {
 public:
  static constexpr int kSize = 28;

  static const AnswerVocabulary& standard();

  const std::string& name(int cls) const { return names_[cls]; }
  int index_of(std::string_view name) const;  // -1 when unknown

  int integer_class(int n) const;             // n in [0, 10]
  int boolean_class(bool b) const;
  int attribute_class(AttrKind kind, int attr_index) const;

 private:
  AnswerVocabulary();
  std::array<std::string, kSize> names_;
};

}  // namespace xaibench
