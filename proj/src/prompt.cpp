#include "vltaboo/prompt.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vltaboo/error.hpp"

namespace vltaboo {

const char* to_string(GrammarKind k) {
  switch (k) {
    case GrammarKind::cub_style: return "cub_style";
    case GrammarKind::awa2_comma_list: return "awa2_comma_list";
    case GrammarKind::content_based: return "content_based";
    case GrammarKind::class_only: return "class_only";
    case GrammarKind::no_class_base: return "no_class_base";
  }
  return "?";
}

GrammarKind grammar_kind_from_string(const std::string& s) {
  for (auto k : {GrammarKind::cub_style, GrammarKind::awa2_comma_list,
                 GrammarKind::content_based, GrammarKind::class_only,
                 GrammarKind::no_class_base}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidArgument("unknown prompt grammar '" + s + "'");
}

const char* to_string(Slot s) {
  switch (s) {
    case Slot::quantifier: return "quantifier";
    case Slot::adjective: return "adjective";
    case Slot::verb_clause: return "verb_clause";
    case Slot::body_part: return "body_part";
    case Slot::habitat: return "habitat";
  }
  return "?";
}

Slot slot_from_string(const std::string& s) {
  for (auto k : {Slot::quantifier, Slot::adjective, Slot::verb_clause, Slot::body_part,
                 Slot::habitat}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidArgument("unknown slot '" + s + "'");
}

std::optional<Slot> SlotTable::find(const std::string& attribute) const {
  const auto it = slots_.find(attribute);
  if (it == slots_.end()) return std::nullopt;
  return it->second;
}

SlotTable SlotTable::parse(std::istream& in) {
  SlotTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw InvalidArgument("slot table line " + std::to_string(line_no) +
                            ": expected 'attribute<TAB>slot'");
    }
    table.assign(line.substr(0, tab), slot_from_string(line.substr(tab + 1)));
  }
  return table;
}

SlotTable SlotTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open slot table " + path.string());
  return parse(in);
}

void SlotTable::write(std::ostream& out) const {
  for (const auto& [name, slot] : slots_) out << name << '\t' << to_string(slot) << '\n';
}

SlotTable SlotTable::awa2_default() {
  SlotTable t;
  auto put = [&t](Slot s, std::initializer_list<const char*> names) {
    for (const char* n : names) t.assign(n, s);
  };
  put(Slot::quantifier, {"group", "solitary"});
  put(Slot::adjective,
      {"black", "white", "blue", "brown", "gray", "orange", "red", "yellow", "furry",
       "hairless", "toughskin", "big", "small", "bulbous", "lean", "smelly", "fast", "slow",
       "strong", "weak", "bipedal", "quadrapedal", "active", "inactive", "nocturnal",
       "forager", "grazer", "hunter", "scavenger", "skimmer", "stalker", "newworld",
       "oldworld", "fierce", "timid", "smart", "domestic"});
  put(Slot::verb_clause, {"flys", "hops", "swims", "tunnels", "walks", "hibernate", "fish",
                          "meat", "plankton", "vegetation", "insects"});
  put(Slot::body_part,
      {"patches", "spots", "stripes", "flippers", "hands", "hooves", "pads", "paws", "longleg",
       "longneck", "tail", "chewteeth", "meatteeth", "buckteeth", "strainteeth", "horns",
       "claws", "tusks", "muscle", "agility", "nestspot"});
  put(Slot::habitat, {"arctic", "coastal", "desert", "bush", "plains", "forest", "fields",
                      "jungle", "mountains", "ocean", "ground", "water", "tree", "cave"});
  return t;
}

namespace {

bool starts_with_vowel(const std::string& word) {
  if (word.empty()) return false;
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(word.front())));
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

/// "a photo of a" / "a photo of an", decided by the word that follows.
std::string head(const std::string& next_word, bool correct_article) {
  return (correct_article && starts_with_vowel(next_word)) ? "a photo of an" : "a photo of a";
}

std::string first_word(const std::string& s) {
  const auto sp = s.find(' ');
  return sp == std::string::npos ? s : s.substr(0, sp);
}

std::string render_content_based(const PromptGrammar& g, const std::string& noun,
                                 bool noun_is_base, std::span<const Attribute> attrs) {
  if (!g.slots) throw InvalidArgument("content_based grammar requires a slot table");
  std::vector<std::string> quantifiers, adjectives, verbs, parts, habitats;
  for (const auto& a : attrs) {
    auto slot = g.slots->find(a.raw_name);
    if (!slot) slot = g.slots->find(a.phrase());
    if (!slot) throw InvalidArgument("slot table has no entry for attribute '" + a.phrase() + "'");
    switch (*slot) {
      case Slot::quantifier: quantifiers.push_back(a.phrase()); break;
      case Slot::adjective: adjectives.push_back(a.phrase()); break;
      case Slot::verb_clause: verbs.push_back(a.phrase()); break;
      case Slot::body_part: parts.push_back(a.phrase()); break;
      case Slot::habitat: habitats.push_back(a.phrase()); break;
    }
  }
  std::string middle;
  for (std::size_t i = 0; i < quantifiers.size(); ++i) {
    middle += (i ? " " : "") + quantifiers[i];
  }
  if (!quantifiers.empty()) middle += " of";
  for (const auto& adj : adjectives) middle += (middle.empty() ? "" : " ") + adj;

  const std::string after_article = middle.empty() ? noun : first_word(middle);
  const bool correct = g.fix_articles || (noun_is_base && middle.empty());
  std::string text = head(after_article, correct);
  if (!middle.empty()) text += " " + middle;
  text += " " + noun;
  for (const auto& v : verbs) text += " that " + v;
  for (const auto& p : parts) text += " that has " + p;
  if (!habitats.empty()) {
    text += " and is in ";
    for (std::size_t i = 0; i < habitats.size(); ++i) text += (i ? " or " : "") + habitats[i];
  }
  return text;
}

}  // namespace

Prompt render(const PromptGrammar& g, const std::optional<ClassLabel>& label,
              std::span<const Attribute> attrs) {
  Prompt p;
  p.grammar = g.kind;
  if (label) p.class_id = label->id;
  for (const auto& a : attrs) p.attributes.push_back(a.id);

  if (g.kind == GrammarKind::no_class_base && label) {
    throw InvalidArgument("no_class_base grammar forbids a class label");
  }
  if (g.kind == GrammarKind::class_only && !label) {
    throw InvalidArgument("class_only grammar requires a class label");
  }
  if ((g.kind == GrammarKind::class_only || g.kind == GrammarKind::no_class_base) &&
      !attrs.empty()) {
    throw InvalidArgument(std::string(to_string(g.kind)) + " grammar takes no attributes");
  }
  if (label && label->label.empty()) throw InvalidArgument("empty class label");

  const bool has_label = label.has_value();
  const std::string noun = has_label ? label->label : g.base_noun;

  if (g.kind == GrammarKind::content_based && !attrs.empty()) {
    p.text = render_content_based(g, noun, !has_label, attrs);
    return p;
  }

  // The withheld-label head always uses the grammatical article
  // ("a photo of an animal").
  p.text = head(noun, g.fix_articles || !has_label) + " " + noun;
  if (attrs.empty()) return p;

  if (g.kind == GrammarKind::cub_style) {
    for (const auto& a : attrs) {
      p.text += " that " + a.description;
      if (!a.expression.empty()) p.text += " " + a.expression;
    }
  } else {
    p.text += " with attributes ";
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      if (i) p.text += ", ";
      p.text += attrs[i].phrase();
    }
  }
  return p;
}

Prompt render(const PromptGrammar& g, const AttributeDataset& ds, std::optional<ClassId> class_id,
              std::span<const AttributeId> attrs) {
  std::vector<Attribute> resolved;
  resolved.reserve(attrs.size());
  for (AttributeId a : attrs) resolved.push_back(ds.attributes.at(a));
  std::optional<ClassLabel> label;
  if (class_id) label = ds.classes.at(*class_id);
  return render(g, label, resolved);
}

std::vector<Prompt> render_detection_prompts(const Attribute& attr) {
  const std::string z = attr.phrase();
  if (z.empty()) throw InvalidArgument("detection prompt needs non-empty attribute text");
  std::vector<Prompt> out;
  for (const char* lead : {"a photo of a ", "a picture of a ", "a photograph of a "}) {
    Prompt p;
    p.text = std::string(lead) + z + " animal";
    p.attributes = {attr.id};
    p.grammar = GrammarKind::no_class_base;
    out.push_back(std::move(p));
  }
  return out;
}

std::string prompt_to_ndjson(const Prompt& p) {
  nlohmann::json j{{"text", p.text},
                   {"class", p.class_id ? nlohmann::json(*p.class_id) : nlohmann::json(nullptr)},
                   {"attribute_ids", p.attributes},
                   {"grammar", to_string(p.grammar)}};
  return j.dump();
}

}  // namespace vltaboo
