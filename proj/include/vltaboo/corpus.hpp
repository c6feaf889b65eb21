#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace vltaboo {

/// Boundary suffixes appended after each label form.
inline constexpr std::array<std::string_view, 8> kTermSuffixes = {".", "!", "?", ":",
                                                                  " ", ",", ";", "-"};
/// Plural forms appended to the whole label before the suffix.
inline constexpr std::array<std::string_view, 3> kPluralForms = {"", "s", "es"};
inline constexpr std::size_t kTermsPerSynonym = kTermSuffixes.size() * kPluralForms.size();

struct SearchTermSet {
  std::string label;
  std::vector<std::string> synonyms;
  /// " " + synonym + plural + suffix; kTermsPerSynonym per synonym.
  std::vector<std::string> terms;
};

struct TermOptions {
  bool case_sensitive = false;
  /// Split "tub, vat" style labels into synonyms.
  bool split_synonyms = true;
};

SearchTermSet generate_terms(const std::string& label, const TermOptions& options = {});

/// ASCII lower-casing; bytes >= 0x80 pass through.
std::string ascii_lower(std::string_view s);

/// Multi-pattern matcher over the terms of every label (Aho-Corasick). The
/// goto function is completed into a dense DFA over a compact alphabet of
/// the bytes that occur in any term, so scanning is one table lookup per
/// byte. Immutable after construction.
class Matcher {
 public:
  explicit Matcher(const std::vector<SearchTermSet>& term_sets);

  std::size_t num_labels() const { return num_labels_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_terms() const { return term_owners_.size(); }

  /// Calls on_match(label) once per (term occurrence, owning label). A term
  /// shared by several labels credits each of them.
  template <typename OnMatch>
  void scan(std::string_view text, OnMatch&& on_match) const {
    std::uint32_t state = 0;
    for (unsigned char byte : text) {
      state = delta_[static_cast<std::size_t>(state) * alphabet_size_ + symbol_of_[byte]];
      for (std::uint32_t t = first_output_[state]; t != kNone; t = output_link_[t]) {
        for (std::uint32_t o = owner_begin_[t]; o < owner_begin_[t + 1]; ++o) {
          on_match(owners_[o]);
        }
      }
    }
  }

 private:
  static constexpr std::uint32_t kNone = 0xffffffffu;

  std::size_t num_labels_ = 0;
  std::size_t num_states_ = 0;
  std::size_t alphabet_size_ = 0;
  std::array<std::uint32_t, 256> symbol_of_{};
  std::vector<std::uint32_t> delta_;         // state * alphabet + symbol -> state
  std::vector<std::uint32_t> first_output_;  // state -> first term ending here (or via suffix)
  std::vector<std::uint32_t> output_link_;   // term -> next term in the output chain
  std::vector<std::uint32_t> owner_begin_;   // term -> range in owners_
  std::vector<std::uint32_t> owners_;
  std::vector<std::vector<std::uint32_t>> term_owners_;
};

struct LabelCount {
  std::uint64_t samples_matched = 0;
  std::uint64_t term_hits = 0;

  friend bool operator==(const LabelCount&, const LabelCount&) = default;
};

struct OccurrenceTable {
  std::vector<std::string> labels;
  std::vector<LabelCount> counts;
  std::uint64_t corpus_size = 0;
  /// Samples counted in corpus_size but not matched (invalid UTF-8 or a
  /// missing TSV column).
  std::uint64_t skipped = 0;

  void merge(const OccurrenceTable& other);

  friend bool operator==(const OccurrenceTable&, const OccurrenceTable&) = default;
};

struct CorpusOptions {
  bool case_sensitive = false;
  /// 0 = newline-delimited captions; otherwise tab-separated with the caption
  /// in this 1-based column.
  std::size_t tsv_text_column = 0;
  std::size_t shards = 1;
};

/// Strict UTF-8 validation (rejects overlongs, surrogates, > U+10FFFF).
bool is_valid_utf8(std::string_view s);

/// Counts one caption into `table` (which must be sized for the matcher).
/// `stamp` is per-label scratch for once-per-sample crediting.
void count_caption(const Matcher& matcher, std::string_view caption, bool case_sensitive,
                   OccurrenceTable& table, std::vector<std::uint64_t>& stamp);

/// Counts an in-memory corpus. The buffer is split into `shards` byte ranges
/// aligned to line boundaries, counted concurrently and merged by addition.
OccurrenceTable count_corpus(const Matcher& matcher, const std::vector<std::string>& labels,
                             std::string_view corpus, const CorpusOptions& options = {});

OccurrenceTable count_corpus_file(const Matcher& matcher, const std::vector<std::string>& labels,
                                  const std::filesystem::path& path,
                                  const CorpusOptions& options = {});

/// One label per line; blank lines and '#' comments skipped.
std::vector<std::string> read_labels(std::istream& in);
std::vector<std::string> load_labels(const std::filesystem::path& path);

/// "label,samples_matched,term_hits,corpus_size"
void write_counts_csv(const OccurrenceTable& table, std::ostream& out);
OccurrenceTable read_counts_csv(std::istream& in);

}  // namespace vltaboo
