#include "xaibench/questions.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>

#include "xaibench/rng.hpp"

namespace xaibench {

std::string program_key(const RawProgram& raw) {
  std::string key;
  for (const RawProgramNode& node : raw.nodes) {
    if (!key.empty()) key += '|';
    key += node.function;
    if (!node.value_inputs.empty()) {
      key += '[';
      for (std::size_t i = 0; i < node.value_inputs.size(); ++i) {
        if (i) key += ',';
        key += node.value_inputs[i];
      }
      key += ']';
    }
    key += '(';
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (i) key += ',';
      key += std::to_string(node.inputs[i]);
    }
    key += ')';
  }
  return key;
}

nlohmann::ordered_json program_to_json(const RawProgram& raw) {
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const RawProgramNode& node : raw.nodes) {
    nlohmann::ordered_json j;
    j["function"] = node.function;
    j["inputs"] = node.inputs;
    j["value_inputs"] = node.value_inputs;
    nodes.push_back(std::move(j));
  }
  return nodes;
}

RawProgram program_from_json(const nlohmann::json& j) {
  RawProgram raw;
  for (const auto& n : j) {
    RawProgramNode node;
    node.function = n.at("function").get<std::string>();
    node.inputs = n.at("inputs").get<std::vector<int>>();
    node.value_inputs = n.at("value_inputs").get<std::vector<std::string>>();
    raw.nodes.push_back(std::move(node));
  }
  return raw;
}

namespace {

constexpr AttrKind kCanonicalOrder[] = {AttrKind::Size, AttrKind::Color, AttrKind::Material,
                                        AttrKind::Shape};

const char* filter_fn(AttrKind kind) {
  switch (kind) {
    case AttrKind::Shape: return "filter_shape";
    case AttrKind::Color: return "filter_color";
    case AttrKind::Material: return "filter_material";
    case AttrKind::Size: return "filter_size";
  }
  return "";
}

const char* query_fn(AttrKind kind) {
  switch (kind) {
    case AttrKind::Shape: return "query_shape";
    case AttrKind::Color: return "query_color";
    case AttrKind::Material: return "query_material";
    case AttrKind::Size: return "query_size";
  }
  return "";
}

const char* same_fn(AttrKind kind) {
  switch (kind) {
    case AttrKind::Shape: return "same_shape";
    case AttrKind::Color: return "same_color";
    case AttrKind::Material: return "same_material";
    case AttrKind::Size: return "same_size";
  }
  return "";
}

const char* equal_fn(AttrKind kind) {
  switch (kind) {
    case AttrKind::Shape: return "equal_shape";
    case AttrKind::Color: return "equal_color";
    case AttrKind::Material: return "equal_material";
    case AttrKind::Size: return "equal_size";
  }
  return "";
}

const char* kind_word(AttrKind kind) {
  switch (kind) {
    case AttrKind::Shape: return "shape";
    case AttrKind::Color: return "color";
    case AttrKind::Material: return "material";
    case AttrKind::Size: return "size";
  }
  return "";
}

const char* relation_phrase(const std::string& rel) {
  if (rel == "left") return "left of";
  if (rel == "right") return "right of";
  if (rel == "front") return "in front of";
  return "behind";
}

using Filters = std::vector<std::pair<AttrKind, int>>;  // (kind, value index)

void sort_canonical(Filters& filters) {
  auto rank = [](AttrKind k) {
    for (int i = 0; i < 4; ++i) {
      if (kCanonicalOrder[i] == k) return i;
    }
    return 4;
  };
  std::sort(filters.begin(), filters.end(),
            [&](const auto& a, const auto& b) { return rank(a.first) < rank(b.first); });
}

struct Builder {
  const SceneGraph& scene;
  const AttributeVocabulary& vocab;
  RawProgram raw;
  std::string text;

  Builder(const SceneGraph& s, const AttributeVocabulary& v) : scene(s), vocab(v) {
    raw.nodes.push_back({"scene", {}, {}});
  }

  int last() const { return static_cast<int>(raw.nodes.size()) - 1; }

  int add(const std::string& fn, std::vector<int> inputs, std::vector<std::string> values = {}) {
    raw.nodes.push_back({fn, std::move(inputs), std::move(values)});
    return last();
  }

  int add_filters(int input, const Filters& filters) {
    int node = input;
    for (const auto& [kind, value] : filters) {
      node = add(filter_fn(kind), {node}, {std::string(vocab.list(kind)[value])});
    }
    return node;
  }

  // "small red thing" from the filter list, or "thing" when unfiltered.
  std::string noun(const Filters& filters) const {
    std::string out;
    for (const auto& [kind, value] : filters) {
      out += vocab.list(kind)[value];
      out += ' ';
    }
    out += "thing";
    return out;
  }
};

struct Selector {
  int target = -1;
  Filters filters;
};

// All scene objects matching every filter.
std::set<int> match_all(const SceneGraph& scene, const Filters& filters) {
  std::set<int> out;
  for (const SceneObject& o : scene.objects) {
    bool ok = true;
    for (const auto& [kind, value] : filters) {
      if (o.attribute(kind) != value) {
        ok = false;
        break;
      }
    }
    if (ok) out.insert(o.id);
  }
  return out;
}

std::vector<AttrKind> shuffled_kinds(Rng& rng, std::optional<AttrKind> exclude) {
  std::vector<AttrKind> kinds;
  for (AttrKind k : kCanonicalOrder) {
    if (!exclude || *exclude != k) kinds.push_back(k);
  }
  for (std::size_t i = kinds.size(); i > 1; --i) {
    std::swap(kinds[i - 1], kinds[rng.next_below(i)]);
  }
  return kinds;
}

// A filter chain that pins down exactly one object of `pool`.
std::optional<Selector> select_in(const SceneGraph& scene, const std::set<int>& pool, Rng& rng,
                                  std::optional<AttrKind> exclude) {
  if (pool.empty()) return std::nullopt;
  std::vector<int> ids(pool.begin(), pool.end());
  for (int attempt = 0; attempt < 20; ++attempt) {
    int target = ids[rng.next_below(ids.size())];
    const SceneObject& obj = scene.objects[target];
    std::vector<AttrKind> kinds = shuffled_kinds(rng, exclude);
    Filters filters;
    for (AttrKind kind : kinds) {
      if (filters.size() == 3) break;
      filters.emplace_back(kind, obj.attribute(kind));
      std::set<int> matched = match_all(scene, filters);
      std::set<int> within;
      std::set_intersection(matched.begin(), matched.end(), pool.begin(), pool.end(),
                            std::inserter(within, within.begin()));
      if (within.size() == 1 && *within.begin() == target) {
        sort_canonical(filters);
        return Selector{target, filters};
      }
    }
  }
  return std::nullopt;
}

std::optional<Selector> select_object(const SceneGraph& scene, Rng& rng,
                                      std::optional<AttrKind> exclude) {
  std::set<int> all;
  for (const SceneObject& o : scene.objects) all.insert(o.id);
  return select_in(scene, all, rng, exclude);
}

std::set<int> related_objects(const SceneGraph& scene, int ref, const std::string& rel) {
  const SceneObject& r = scene.objects[ref];
  std::set<int> out;
  for (const SceneObject& o : scene.objects) {
    if (o.id == ref) continue;
    bool hit = false;
    if (rel == "left") hit = o.x < r.x;
    else if (rel == "right") hit = o.x > r.x;
    else if (rel == "behind") hit = o.y < r.y;
    else hit = o.y > r.y;
    if (hit) out.insert(o.id);
  }
  return out;
}

std::set<int> same_objects(const SceneGraph& scene, int ref, AttrKind kind) {
  int want = scene.objects[ref].attribute(kind);
  std::set<int> out;
  for (const SceneObject& o : scene.objects) {
    if (o.id != ref && o.attribute(kind) == want) out.insert(o.id);
  }
  return out;
}

AttrKind random_kind(Rng& rng) { return kCanonicalOrder[rng.next_below(4)]; }

Filters random_filters(const AttributeVocabulary& vocab, Rng& rng, int min_count,
                       int max_count) {
  int n = rng.next_int(min_count, max_count);
  std::vector<AttrKind> kinds = shuffled_kinds(rng, std::nullopt);
  Filters filters;
  for (int i = 0; i < n; ++i) {
    AttrKind kind = kinds[i];
    filters.emplace_back(kind, static_cast<int>(rng.next_below(vocab.list(kind).size())));
  }
  sort_canonical(filters);
  return filters;
}

std::string pick_relation(Rng& rng) {
  return std::string(kRelations[rng.next_below(4)]);
}

using Template = std::optional<RawProgram> (*)(const SceneGraph&, const AttributeVocabulary&,
                                               Rng&);

std::optional<RawProgram> t_relate_query(const SceneGraph& scene,
                                         const AttributeVocabulary& vocab, Rng& rng) {
  AttrKind x = random_kind(rng);
  auto sel_a = select_object(scene, rng, std::nullopt);
  if (!sel_a) return std::nullopt;
  std::string rel = pick_relation(rng);
  auto pool = related_objects(scene, sel_a->target, rel);
  auto sel_b = select_in(scene, pool, rng, x);
  if (!sel_b) return std::nullopt;
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel_a->filters);
  node = b.add("unique", {node});
  node = b.add("relate", {node}, {rel});
  node = b.add_filters(node, sel_b->filters);
  node = b.add("unique", {node});
  b.add(query_fn(x), {node});
  b.raw.question_text = "what is the " + std::string(kind_word(x)) + " of the " +
                        b.noun(sel_b->filters) + " " + relation_phrase(rel) + " the " +
                        b.noun(sel_a->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> t_same_query(const SceneGraph& scene,
                                       const AttributeVocabulary& vocab, Rng& rng) {
  AttrKind same = random_kind(rng);
  AttrKind x = random_kind(rng);
  if (x == same) return std::nullopt;
  auto sel_a = select_object(scene, rng, std::nullopt);
  if (!sel_a) return std::nullopt;
  auto pool = same_objects(scene, sel_a->target, same);
  auto sel_b = select_in(scene, pool, rng, x);
  if (!sel_b) return std::nullopt;
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel_a->filters);
  node = b.add("unique", {node});
  node = b.add(same_fn(same), {node});
  node = b.add_filters(node, sel_b->filters);
  node = b.add("unique", {node});
  b.add(query_fn(x), {node});
  b.raw.question_text = "what is the " + std::string(kind_word(x)) + " of the " +
                        b.noun(sel_b->filters) + " with the same " + kind_word(same) +
                        " as the " + b.noun(sel_a->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> t_equal_attribute(const SceneGraph& scene,
                                            const AttributeVocabulary& vocab, Rng& rng) {
  AttrKind x = random_kind(rng);
  auto sel_a = select_object(scene, rng, x);
  auto sel_b = select_object(scene, rng, x);
  if (!sel_a || !sel_b || sel_a->target == sel_b->target) return std::nullopt;
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel_a->filters);
  node = b.add("unique", {node});
  int qa = b.add(query_fn(x), {node});
  node = b.add_filters(0, sel_b->filters);
  node = b.add("unique", {node});
  int qb = b.add(query_fn(x), {node});
  b.add(equal_fn(x), {qa, qb});
  b.raw.question_text = "does the " + b.noun(sel_a->filters) + " have the same " +
                        kind_word(x) + " as the " + b.noun(sel_b->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> count_compare(const SceneGraph& scene,
                                        const AttributeVocabulary& vocab, Rng& rng,
                                        const std::string& cmp) {
  Filters fa = random_filters(vocab, rng, 1, 2);
  Filters fb = random_filters(vocab, rng, 1, 2);
  Builder b(scene, vocab);
  int na = b.add_filters(0, fa);
  int ca = b.add("count", {na});
  int nb = b.add_filters(0, fb);
  int cb = b.add("count", {nb});
  b.add(cmp, {ca, cb});
  std::string lhs = b.noun(fa) + "s";
  std::string rhs = b.noun(fb) + "s";
  if (cmp == "equal_integer") {
    b.raw.question_text = "are there as many " + lhs + " as " + rhs + "?";
  } else if (cmp == "greater_than") {
    b.raw.question_text = "are there more " + lhs + " than " + rhs + "?";
  } else {
    b.raw.question_text = "are there fewer " + lhs + " than " + rhs + "?";
  }
  return b.raw;
}

std::optional<RawProgram> t_equal_integer(const SceneGraph& scene,
                                          const AttributeVocabulary& vocab, Rng& rng) {
  return count_compare(scene, vocab, rng, "equal_integer");
}

std::optional<RawProgram> t_greater_than(const SceneGraph& scene,
                                         const AttributeVocabulary& vocab, Rng& rng) {
  return count_compare(scene, vocab, rng, "greater_than");
}

std::optional<RawProgram> t_less_than(const SceneGraph& scene,
                                      const AttributeVocabulary& vocab, Rng& rng) {
  return count_compare(scene, vocab, rng, "less_than");
}

std::optional<RawProgram> t_filter_count(const SceneGraph& scene,
                                         const AttributeVocabulary& vocab, Rng& rng) {
  Filters f = random_filters(vocab, rng, 1, 2);
  Builder b(scene, vocab);
  int node = b.add_filters(0, f);
  b.add("count", {node});
  b.raw.question_text = "how many " + b.noun(f) + "s are there?";
  return b.raw;
}

std::optional<RawProgram> t_relate_count(const SceneGraph& scene,
                                         const AttributeVocabulary& vocab, Rng& rng) {
  auto sel = select_object(scene, rng, std::nullopt);
  if (!sel) return std::nullopt;
  std::string rel = pick_relation(rng);
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel->filters);
  node = b.add("unique", {node});
  node = b.add("relate", {node}, {rel});
  b.add("count", {node});
  b.raw.question_text = "how many things are " + std::string(relation_phrase(rel)) + " the " +
                        b.noun(sel->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> t_union_count(const SceneGraph& scene,
                                        const AttributeVocabulary& vocab, Rng& rng) {
  Filters fa = random_filters(vocab, rng, 1, 3);
  Filters fb = random_filters(vocab, rng, 1, 3);
  Builder b(scene, vocab);
  int na = b.add_filters(0, fa);
  int nb = b.add_filters(0, fb);
  int u = b.add("union", {na, nb});
  b.add("count", {u});
  b.raw.question_text = "how many things are " + b.noun(fa) + "s or " + b.noun(fb) + "s?";
  return b.raw;
}

std::optional<RawProgram> t_same_count(const SceneGraph& scene,
                                       const AttributeVocabulary& vocab, Rng& rng) {
  auto sel = select_object(scene, rng, std::nullopt);
  if (!sel) return std::nullopt;
  AttrKind same = random_kind(rng);
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel->filters);
  node = b.add("unique", {node});
  node = b.add(same_fn(same), {node});
  b.add("count", {node});
  b.raw.question_text = "how many other things have the same " +
                        std::string(kind_word(same)) + " as the " + b.noun(sel->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> t_filter_exist(const SceneGraph& scene,
                                         const AttributeVocabulary& vocab, Rng& rng) {
  Filters f = random_filters(vocab, rng, 1, 2);
  Builder b(scene, vocab);
  int node = b.add_filters(0, f);
  b.add("exist", {node});
  b.raw.question_text = "is there a " + b.noun(f) + "?";
  return b.raw;
}

std::optional<RawProgram> t_same_exist(const SceneGraph& scene,
                                       const AttributeVocabulary& vocab, Rng& rng) {
  auto sel = select_object(scene, rng, std::nullopt);
  if (!sel) return std::nullopt;
  AttrKind same = random_kind(rng);
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel->filters);
  node = b.add("unique", {node});
  node = b.add(same_fn(same), {node});
  b.add("exist", {node});
  b.raw.question_text = "is there another thing with the same " +
                        std::string(kind_word(same)) + " as the " + b.noun(sel->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> t_relate_exist(const SceneGraph& scene,
                                         const AttributeVocabulary& vocab, Rng& rng) {
  auto sel = select_object(scene, rng, std::nullopt);
  if (!sel) return std::nullopt;
  std::string rel = pick_relation(rng);
  Filters extra = random_filters(vocab, rng, 1, 1);
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel->filters);
  node = b.add("unique", {node});
  node = b.add("relate", {node}, {rel});
  node = b.add_filters(node, extra);
  b.add("exist", {node});
  b.raw.question_text = "is there a " + b.noun(extra) + " " + relation_phrase(rel) + " the " +
                        b.noun(sel->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> t_intersect_exist(const SceneGraph& scene,
                                            const AttributeVocabulary& vocab, Rng& rng) {
  auto sel_a = select_object(scene, rng, std::nullopt);
  auto sel_b = select_object(scene, rng, std::nullopt);
  if (!sel_a || !sel_b) return std::nullopt;
  std::string rel_a = pick_relation(rng);
  std::string rel_b = pick_relation(rng);
  Builder b(scene, vocab);
  int na = b.add_filters(0, sel_a->filters);
  na = b.add("unique", {na});
  na = b.add("relate", {na}, {rel_a});
  int nb = b.add_filters(0, sel_b->filters);
  nb = b.add("unique", {nb});
  nb = b.add("relate", {nb}, {rel_b});
  int x = b.add("intersect", {na, nb});
  b.add("exist", {x});
  b.raw.question_text = "is there a thing " + std::string(relation_phrase(rel_a)) + " the " +
                        b.noun(sel_a->filters) + " and " + relation_phrase(rel_b) + " the " +
                        b.noun(sel_b->filters) + "?";
  return b.raw;
}

struct WeightedTemplate {
  Template fn;
  int weight;
};

constexpr int kTemplateCount = 14;

const WeightedTemplate kComplexTemplates[kTemplateCount] = {
    {t_relate_query, 18}, {t_same_query, 18},   {t_equal_attribute, 18},
    {t_equal_integer, 3}, {t_greater_than, 3},  {t_less_than, 3},
    {t_filter_count, 8},  {t_relate_count, 6},  {t_union_count, 6},
    {t_same_count, 4},    {t_filter_exist, 4},  {t_same_exist, 4},
    {t_relate_exist, 3},  {t_intersect_exist, 2},
};

std::optional<RawProgram> draw_simple(const SceneGraph& scene,
                                      const AttributeVocabulary& vocab, Rng& rng) {
  AttrKind x = random_kind(rng);
  auto sel = select_object(scene, rng, x);
  if (!sel) return std::nullopt;
  Builder b(scene, vocab);
  int node = b.add_filters(0, sel->filters);
  node = b.add("unique", {node});
  b.add(query_fn(x), {node});
  b.raw.question_text =
      "what is the " + std::string(kind_word(x)) + " of the " + b.noun(sel->filters) + "?";
  return b.raw;
}

std::optional<RawProgram> draw_complex(const SceneGraph& scene,
                                       const AttributeVocabulary& vocab, Rng& rng) {
  int total = 0;
  for (const auto& t : kComplexTemplates) total += t.weight;
  int pick = rng.next_int(1, total);
  for (const auto& t : kComplexTemplates) {
    pick -= t.weight;
    if (pick <= 0) return t.fn(scene, vocab, rng);
  }
  return std::nullopt;
}

}  // namespace

std::vector<GeneratedQuestion> instantiate_questions(const SceneGraph& scene,
                                                     const AttributeVocabulary& vocab,
                                                     QuestionKind kind, int count,
                                                     std::uint64_t seed) {
  constexpr int kMaxDraws = 400;
  Rng rng(seed);
  std::vector<GeneratedQuestion> out;
  std::set<std::string> seen;
  for (int slot = 0; slot < count; ++slot) {
    std::optional<GeneratedQuestion> fallback;  // valid but already emitted once
    bool emitted = false;
    for (int attempt = 0; attempt < kMaxDraws && !emitted; ++attempt) {
      std::optional<RawProgram> raw =
          kind == QuestionKind::Simple ? draw_simple(scene, vocab, rng)
                                       : draw_complex(scene, vocab, rng);
      if (!raw) continue;
      GeneratedQuestion q;
      q.raw = std::move(*raw);
      try {
        q.program = parse_program(q.raw, vocab);
        EvalTrace trace = evaluate(q.program, scene, vocab);
        q.answer_class = trace.answer_class;
        q.answer = AnswerVocabulary::standard().name(trace.answer_class);
      } catch (const EvalError&) {
        continue;  // ill-posed on this scene, redraw
      }
      std::string key = program_key(q.raw);
      if (seen.contains(key)) {
        if (!fallback) fallback = std::move(q);
        continue;
      }
      seen.insert(key);
      out.push_back(std::move(q));
      emitted = true;
    }
    if (!emitted) {
      // Simple questions must be distinct; complex slots may repeat when the
      // scene is too uniform to offer anything new.
      if (kind == QuestionKind::Complex && fallback) {
        out.push_back(std::move(*fallback));
      } else {
        throw GenerationExhausted("no valid question after " + std::to_string(kMaxDraws) +
                                  " draws");
      }
    }
  }
  return out;
}

}  // namespace xaibench
