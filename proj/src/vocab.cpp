#include "xaibench/vocab.hpp"

#include <set>
#include <stdexcept>

namespace xaibench {

const AttributeVocabulary& AttributeVocabulary::standard() {
  static const AttributeVocabulary vocab{
      {"gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"},
      {"rubber", "metal"},
      {"small", "large"},
      {"cube", "sphere", "cylinder"},
  };
  return vocab;
}

const std::vector<std::string>& AttributeVocabulary::list(AttrKind kind) const {
  switch (kind) {
    case AttrKind::Shape: return shapes;
    case AttrKind::Color: return colors;
    case AttrKind::Material: return materials;
    case AttrKind::Size: return sizes;
  }
  throw std::logic_error("bad AttrKind");
}

int AttributeVocabulary::index_of(AttrKind kind, std::string_view name) const {
  const auto& names = list(kind);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

bool AttributeVocabulary::valid() const {
  if (colors.size() != 8 || materials.size() != 2 || sizes.size() != 2 || shapes.size() != 3) {
    return false;
  }
  for (const auto* names : {&colors, &materials, &sizes, &shapes}) {
    std::set<std::string> seen(names->begin(), names->end());
    if (seen.size() != names->size()) return false;
  }
  return true;
}

AnswerVocabulary::AnswerVocabulary() {
  int k = 0;
  for (int n = 0; n <= 10; ++n) names_[k++] = std::to_string(n);
  names_[k++] = "yes";
  names_[k++] = "no";
  const auto& vocab = AttributeVocabulary::standard();
  for (const auto& c : vocab.colors) names_[k++] = c;
  for (const auto& m : vocab.materials) names_[k++] = m;
  for (const auto& s : vocab.sizes) names_[k++] = s;
  for (const auto& s : vocab.shapes) names_[k++] = s;
}

const AnswerVocabulary& AnswerVocabulary::standard() {
  static const AnswerVocabulary vocab;
  return vocab;
}

int AnswerVocabulary::index_of(std::string_view name) const {
  for (int i = 0; i < kSize; ++i) {
    if (names_[i] == name) return i;
  }
  return -1;
}

int AnswerVocabulary::integer_class(int n) const {
  if (n < 0 || n > 10) throw std::out_of_range("answer integer outside [0, 10]");
  return n;
}

int AnswerVocabulary::boolean_class(bool b) const { return b ? 11 : 12; }

int AnswerVocabulary::attribute_class(AttrKind kind, int attr_index) const {
  int base = 13;
  switch (kind) {
    case AttrKind::Color: break;
    case AttrKind::Material: base += 8; break;
    case AttrKind::Size: base += 10; break;
    case AttrKind::Shape: base += 12; break;
  }
  return base + attr_index;
}

}  // namespace xaibench
