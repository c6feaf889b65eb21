#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vltaboo/dataset.hpp"

namespace vltaboo {

enum class GrammarKind { cub_style, awa2_comma_list, content_based, class_only, no_class_base };

const char* to_string(GrammarKind k);
GrammarKind grammar_kind_from_string(const std::string& s);

enum class Slot { quantifier, adjective, verb_clause, body_part, habitat };

const char* to_string(Slot s);
Slot slot_from_string(const std::string& s);

/// Part-of-speech slot per attribute name, used by content-based prompts.
class SlotTable {
 public:
  SlotTable() = default;
  explicit SlotTable(std::map<std::string, Slot> slots) : slots_(std::move(slots)) {}

  void assign(const std::string& attribute, Slot slot) { slots_[attribute] = slot; }
  std::optional<Slot> find(const std::string& attribute) const;
  std::size_t size() const { return slots_.size(); }

  /// Reads "attribute<TAB>slot" lines; '#' starts a comment line.
  static SlotTable parse(std::istream& in);
  static SlotTable load(const std::filesystem::path& path);
  void write(std::ostream& out) const;

  /// Editable best-effort assignment for the 85 AWA2 predicates.
  static SlotTable awa2_default();

 private:
  std::map<std::string, Slot> slots_;
};

struct PromptGrammar {
  GrammarKind kind = GrammarKind::cub_style;
  std::string base_noun = "animal";
  /// Opt-in "a" -> "an" before vowel-initial labels. Off by default so the
  /// output matches published prompts such as "a photo of a antelope".
  bool fix_articles = false;
  /// Required by content_based.
  std::optional<SlotTable> slots;
};

struct Prompt {
  std::string text;
  std::optional<ClassId> class_id;
  std::vector<AttributeId> attributes;
  GrammarKind grammar = GrammarKind::cub_style;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

/// Renders a prompt. With no class label the head becomes
/// "a photo of a(n) <base noun>". Attribute order is preserved verbatim.
Prompt render(const PromptGrammar& grammar, const std::optional<ClassLabel>& label,
              std::span<const Attribute> attrs);

/// Convenience overload resolving attribute ids against a dataset.
Prompt render(const PromptGrammar& grammar, const AttributeDataset& ds,
              std::optional<ClassId> class_id, std::span<const AttributeId> attrs);

/// The three prompts averaged by attribute detection.
std::vector<Prompt> render_detection_prompts(const Attribute& attr);

/// One ndjson line {text, class, attribute_ids, grammar}.
std::string prompt_to_ndjson(const Prompt& p);

}  // namespace vltaboo
