#include "vltaboo/corpus.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <thread>

#include "vltaboo/csv.hpp"
#include "vltaboo/error.hpp"

namespace vltaboo {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

SearchTermSet generate_terms(const std::string& label, const TermOptions& opts) {
  if (label.empty()) throw InvalidArgument("generate_terms: empty label");
  SearchTermSet set;
  set.label = label;
  const std::string folded = opts.case_sensitive ? label : ascii_lower(label);
  if (opts.split_synonyms) {
    std::size_t start = 0;
    for (;;) {
      const auto sep = folded.find(", ", start);
      set.synonyms.push_back(folded.substr(start, sep == std::string::npos ? sep : sep - start));
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
  } else {
    set.synonyms.push_back(folded);
  }
  for (const auto& syn : set.synonyms) {
    if (syn.empty()) throw InvalidArgument("label '" + label + "' has an empty synonym");
    for (auto plural : kPluralForms) {
      for (auto suffix : kTermSuffixes) {
        std::string term = " ";
        term += syn;
        term += plural;
        term += suffix;
        set.terms.push_back(std::move(term));
      }
    }
  }
  return set;
}

Matcher::Matcher(const std::vector<SearchTermSet>& term_sets) : num_labels_(term_sets.size()) {
  // Unique terms with their owning labels.
  std::map<std::string, std::vector<std::uint32_t>> owners_by_term;
  for (std::size_t label = 0; label < term_sets.size(); ++label) {
    for (const auto& t : term_sets[label].terms) {
      auto& owners = owners_by_term[t];
      if (owners.empty() || owners.back() != label) owners.push_back(static_cast<std::uint32_t>(label));
    }
  }
  if (owners_by_term.empty()) throw InvalidArgument("Matcher needs at least one term");

  // Compact alphabet: symbol 0 stands for every byte no term uses.
  std::array<bool, 256> used{};
  for (const auto& [term, owners] : owners_by_term) {
    if (term.empty()) throw InvalidArgument("Matcher: empty term");
    for (unsigned char c : term) used[c] = true;
  }
  alphabet_size_ = 1;
  for (std::size_t b = 0; b < 256; ++b) {
    symbol_of_[b] = used[b] ? static_cast<std::uint32_t>(alphabet_size_++) : 0;
  }

  // Trie.
  std::vector<std::uint32_t> term_at;  // state -> term index
  delta_.assign(alphabet_size_, kNone);
  term_at.push_back(kNone);
  std::size_t states = 1;
  term_owners_.reserve(owners_by_term.size());
  for (const auto& [term, owners] : owners_by_term) {
    std::uint32_t s = 0;
    for (unsigned char c : term) {
      const std::size_t slot = s * alphabet_size_ + symbol_of_[c];
      if (delta_[slot] == kNone) {
        delta_[slot] = static_cast<std::uint32_t>(states++);
        delta_.resize(states * alphabet_size_, kNone);
        term_at.push_back(kNone);
      }
      s = delta_[s * alphabet_size_ + symbol_of_[c]];
    }
    term_at[s] = static_cast<std::uint32_t>(term_owners_.size());
    term_owners_.push_back(owners);
  }
  num_states_ = states;

  // Breadth-first failure links, completing delta into a DFA.
  std::vector<std::uint32_t> fail(states, 0);
  first_output_.assign(states, kNone);
  output_link_.assign(term_owners_.size(), kNone);
  std::deque<std::uint32_t> queue;
  for (std::size_t a = 0; a < alphabet_size_; ++a) {
    auto& next = delta_[a];
    if (next == kNone) {
      next = 0;
    } else {
      fail[next] = 0;
      queue.push_back(next);
    }
  }
  first_output_[0] = kNone;
  while (!queue.empty()) {
    const std::uint32_t s = queue.front();
    queue.pop_front();
    // Output chain: own term first, then whatever the failure state emits.
    const std::uint32_t inherited = first_output_[fail[s]];
    if (term_at[s] != kNone) {
      first_output_[s] = term_at[s];
      output_link_[term_at[s]] = inherited;
    } else {
      first_output_[s] = inherited;
    }
    for (std::size_t a = 0; a < alphabet_size_; ++a) {
      auto& next = delta_[s * alphabet_size_ + a];
      const std::uint32_t via_fail = delta_[fail[s] * alphabet_size_ + a];
      if (next == kNone) {
        next = via_fail;
      } else {
        fail[next] = via_fail;
        queue.push_back(next);
      }
    }
  }

  owner_begin_.reserve(term_owners_.size() + 1);
  for (const auto& o : term_owners_) {
    owner_begin_.push_back(static_cast<std::uint32_t>(owners_.size()));
    owners_.insert(owners_.end(), o.begin(), o.end());
  }
  owner_begin_.push_back(static_cast<std::uint32_t>(owners_.size()));
}

void OccurrenceTable::merge(const OccurrenceTable& other) {
  if (counts.empty()) {
    counts.resize(other.counts.size());
    if (labels.empty()) labels = other.labels;
  }
  if (other.counts.size() != counts.size()) {
    throw InvalidArgument("OccurrenceTable::merge: label count mismatch");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    counts[i].samples_matched += other.counts[i].samples_matched;
    counts[i].term_hits += other.counts[i].term_hits;
  }
  corpus_size += other.corpus_size;
  skipped += other.skipped;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
      return false;
    }
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += len;
  }
  return true;
}

void count_caption(const Matcher& matcher, std::string_view caption, bool case_sensitive,
                   OccurrenceTable& table, std::vector<std::uint64_t>& stamp) {
  const std::uint64_t sample = ++table.corpus_size;
  if (!is_valid_utf8(caption)) {
    ++table.skipped;
    return;
  }
  std::string wrapped;
  wrapped.reserve(caption.size() + 2);
  wrapped += ' ';
  if (case_sensitive) {
    wrapped += caption;
  } else {
    wrapped += ascii_lower(caption);
  }
  wrapped += ' ';
  matcher.scan(wrapped, [&](std::uint32_t label) {
    auto& c = table.counts[label];
    ++c.term_hits;
    if (stamp[label] != sample) {
      stamp[label] = sample;
      ++c.samples_matched;
    }
  });
}

namespace {

/// Counts every line of `chunk` (a whole number of lines).
void count_lines(const Matcher& matcher, std::string_view chunk, const CorpusOptions& opts,
                 OccurrenceTable& table) {
  std::vector<std::uint64_t> stamp(matcher.num_labels(), 0);
  std::size_t pos = 0;
  while (pos < chunk.size()) {
    const auto nl = chunk.find('\n', pos);
    std::string_view line = chunk.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? chunk.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (opts.tsv_text_column > 0) {
      std::size_t col = 1;
      std::size_t start = 0;
      while (col < opts.tsv_text_column) {
        const auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) break;
        start = tab + 1;
        ++col;
      }
      if (col < opts.tsv_text_column) {
        ++table.corpus_size;
        ++table.skipped;
        continue;
      }
      const auto end = line.find('\t', start);
      line = line.substr(start, end == std::string_view::npos ? end : end - start);
    }
    count_caption(matcher, line, opts.case_sensitive, table, stamp);
  }
}

OccurrenceTable empty_table(const Matcher& matcher, const std::vector<std::string>& labels) {
  if (labels.size() != matcher.num_labels()) {
    throw InvalidArgument("label list does not match the matcher");
  }
  OccurrenceTable t;
  t.labels = labels;
  t.counts.resize(labels.size());
  return t;
}

}  // namespace

OccurrenceTable count_corpus(const Matcher& matcher, const std::vector<std::string>& labels,
                             std::string_view corpus, const CorpusOptions& opts) {
  OccurrenceTable total = empty_table(matcher, labels);
  const std::size_t shards = std::max<std::size_t>(1, opts.shards);

  // Shard boundaries snap forward to the byte after a newline.
  std::vector<std::size_t> bounds{0};
  for (std::size_t k = 1; k < shards; ++k) {
    std::size_t b = std::max(bounds.back(), corpus.size() * k / shards);
    if (b > 0 && b < corpus.size() && corpus[b - 1] != '\n') {
      const auto nl = corpus.find('\n', b);
      b = nl == std::string_view::npos ? corpus.size() : nl + 1;
    }
    bounds.push_back(std::min(b, corpus.size()));
  }
  bounds.push_back(corpus.size());

  std::vector<OccurrenceTable> partial(shards, empty_table(matcher, labels));
  std::vector<std::thread> workers;
  for (std::size_t k = 0; k < shards; ++k) {
    auto chunk = corpus.substr(bounds[k], bounds[k + 1] - bounds[k]);
    if (shards == 1) {
      count_lines(matcher, chunk, opts, partial[k]);
    } else {
      workers.emplace_back([&, k, chunk] { count_lines(matcher, chunk, opts, partial[k]); });
    }
  }
  for (auto& w : workers) w.join();
  for (const auto& p : partial) total.merge(p);
  return total;
}

OccurrenceTable count_corpus_file(const Matcher& matcher, const std::vector<std::string>& labels,
                                  const std::filesystem::path& path, const CorpusOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open corpus " + path.string());
  OccurrenceTable total = empty_table(matcher, labels);
  constexpr std::size_t kChunk = 64u << 20;
  std::string carry;
  std::string buf(kChunk, '\0');
  for (;;) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    carry.append(buf.data(), got);
    const auto last_nl = carry.rfind('\n');
    if (last_nl == std::string::npos) continue;
    total.merge(count_corpus(matcher, labels, std::string_view(carry).substr(0, last_nl + 1), opts));
    carry.erase(0, last_nl + 1);
  }
  if (!carry.empty()) total.merge(count_corpus(matcher, labels, carry, opts));
  return total;
}

std::vector<std::string> read_labels(std::istream& in) {
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t");
    labels.push_back(line.substr(first, last - first + 1));
  }
  return labels;
}

std::vector<std::string> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open label file " + path.string());
  return read_labels(in);
}

void write_counts_csv(const OccurrenceTable& t, std::ostream& out) {
  out << "label,samples_matched,term_hits,corpus_size\n";
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    out << csv::escape(t.labels[i]) << ',' << t.counts[i].samples_matched << ','
        << t.counts[i].term_hits << ',' << t.corpus_size << '\n';
  }
}

OccurrenceTable read_counts_csv(std::istream& in) {
  OccurrenceTable t;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = csv::split(line);
    if (f.size() != 4) throw InvalidArgument("counts CSV: expected 4 columns in '" + line + "'");
    t.labels.push_back(f[0]);
    t.counts.push_back({std::stoull(f[1]), std::stoull(f[2])});
    t.corpus_size = std::stoull(f[3]);
  }
  return t;
}

}  // namespace vltaboo
