#include <doctest.h>

#include <set>
#include <sstream>

#include "support.hpp"
#include "vltaboo/corpus.hpp"
#include "vltaboo/error.hpp"
#include "vltaboo/rng.hpp"

using namespace vltaboo;

namespace {

Matcher matcher_for(const std::vector<std::string>& labels, const TermOptions& o = {}) {
  std::vector<SearchTermSet> sets;
  for (const auto& l : labels) sets.push_back(generate_terms(l, o));
  return Matcher(sets);
}

/// Independent oracle: substring search of every term in every wrapped,
/// lower-cased caption.
OccurrenceTable naive_count(const std::vector<std::string>& labels, const std::string& corpus) {
  OccurrenceTable t;
  t.labels = labels;
  t.counts.resize(labels.size());
  std::vector<std::vector<std::string>> terms;
  for (const auto& l : labels) {
    std::vector<std::string> ts;
    std::string rest = l;
    std::vector<std::string> syns;
    for (std::size_t pos; (pos = rest.find(", ")) != std::string::npos;) {
      syns.push_back(rest.substr(0, pos));
      rest = rest.substr(pos + 2);
    }
    syns.push_back(rest);
    for (const auto& s : syns) {
      for (const char* plural : {"", "s", "es"}) {
        for (const char* suffix : {".", "!", "?", ":", " ", ",", ";", "-"}) {
          std::string term = " " + s + plural + suffix;
          for (auto& c : term) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
          ts.push_back(term);
        }
      }
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    terms.push_back(ts);
  }
  std::istringstream in(corpus);
  std::string line;
  while (std::getline(in, line)) {
    ++t.corpus_size;
    std::string text = " " + line + " ";
    for (auto& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::uint64_t hits = 0;
      for (const auto& term : terms[i]) {
        for (auto pos = text.find(term); pos != std::string::npos; pos = text.find(term, pos + 1)) {
          ++hits;
        }
      }
      t.counts[i].term_hits += hits;
      t.counts[i].samples_matched += hits > 0 ? 1 : 0;
    }
  }
  return t;
}

std::string random_word(SplitMix& rng, std::size_t min_len, std::size_t max_len) {
  static const std::string letters = "abcdeefgilmnorssttu";
  std::string w;
  const auto n = min_len + rng.below(max_len - min_len + 1);
  for (std::size_t i = 0; i < n; ++i) w.push_back(letters[rng.below(letters.size())]);
  return w;
}

}  // namespace

TEST_CASE("term generation") {
  const auto cat = generate_terms("cat");
  CHECK(cat.terms.size() == 24);
  const std::set<std::string> terms(cat.terms.begin(), cat.terms.end());
  CHECK(terms.size() == 24);
  for (const char* t : {" cat ", " cat.", " cats,", " cates;"}) CHECK(terms.count(t) == 1);
  for (const auto& t : cat.terms) {
    CHECK(t.front() == ' ');
    CHECK(t[1] != ' ');
  }

  const auto tub = generate_terms("tub, vat");
  CHECK(tub.synonyms == std::vector<std::string>{"tub", "vat"});
  CHECK(tub.terms.size() == 48);

  const auto a = generate_terms("a");
  CHECK(a.terms.size() == 24);
  std::size_t shortest = 100;
  for (const auto& t : a.terms) shortest = std::min(shortest, t.size());
  CHECK(shortest == 3);
  CHECK(std::find(a.terms.begin(), a.terms.end(), " a.") != a.terms.end());

  CHECK(generate_terms("Great White Shark").terms[0].find("great white shark") == 1);
  TermOptions cs;
  cs.case_sensitive = true;
  CHECK(generate_terms("Great White Shark", cs).terms[0].find("Great White Shark") == 1);
  TermOptions no_split;
  no_split.split_synonyms = false;
  CHECK(generate_terms("tub, vat", no_split).terms.size() == 24);

  CHECK_THROWS_AS(generate_terms(""), InvalidArgument);
  CHECK_THROWS_AS(generate_terms("tub, "), InvalidArgument);
}

TEST_CASE("subword labels are not credited") {
  const auto m = matcher_for({"cat", "catbird"});
  OccurrenceTable t = count_corpus(m, {"cat", "catbird"}, " catbird \n");
  CHECK(t.counts[0].samples_matched == 0);
  CHECK(t.counts[1].samples_matched == 1);
  t = count_corpus(m, {"cat", "catbird"}, "the cat. \n");
  CHECK(t.counts[0].term_hits == 1);
}

TEST_CASE("worked caption example") {
  const std::vector<std::string> labels = {"cat", "dog"};
  const auto m = matcher_for(labels);
  const auto t = count_corpus(m, labels, " the cat sat; cats sleep.\n");
  CHECK(t.corpus_size == 1);
  CHECK(t.counts[0] == LabelCount{1, 2});
  CHECK(t.counts[1] == LabelCount{0, 0});
}

TEST_CASE("boundary whitespace is added around each caption") {
  const std::vector<std::string> labels = {"cat"};
  const auto m = matcher_for(labels);
  CHECK(count_corpus(m, labels, "cat\n").counts[0].samples_matched == 1);
  CHECK(count_corpus(m, labels, "Cat\ncat\ndog\n").counts[0].samples_matched == 2);
  CorpusOptions cs;
  cs.case_sensitive = true;
  const auto mc = matcher_for(labels, TermOptions{true, true});
  CHECK(count_corpus(mc, labels, "Cat\ncat\n", cs).counts[0].samples_matched == 1);
}

TEST_CASE("empty corpus") {
  const std::vector<std::string> labels = {"cat", "dog"};
  const auto m = matcher_for(labels);
  const auto t = count_corpus(m, labels, "");
  CHECK(t.corpus_size == 0);
  CHECK(t.skipped == 0);
  for (const auto& c : t.counts) CHECK(c == LabelCount{});
}

TEST_CASE("invalid UTF-8 captions are counted but skipped") {
  const std::vector<std::string> labels = {"cat"};
  const auto m = matcher_for(labels);
  const std::string corpus = "a cat\n\xff\xfe cat\ncaf\xc3\xa9 cat\n";
  const auto t = count_corpus(m, labels, corpus);
  CHECK(t.corpus_size == 3);
  CHECK(t.skipped == 1);
  CHECK(t.counts[0].samples_matched == 2);
  CHECK(is_valid_utf8("caf\xc3\xa9"));
  CHECK_FALSE(is_valid_utf8("\xc0\xaf"));
  CHECK_FALSE(is_valid_utf8("\xed\xa0\x80"));
}

TEST_CASE("tsv captions") {
  const std::vector<std::string> labels = {"cat"};
  const auto m = matcher_for(labels);
  CorpusOptions o;
  o.tsv_text_column = 2;
  const auto t = count_corpus(m, labels, "http://x\ta cat\t300\nhttp://y\tno\nhttp://z\n", o);
  CHECK(t.corpus_size == 3);
  CHECK(t.skipped == 1);
  CHECK(t.counts[0].samples_matched == 1);
}

TEST_CASE("duplicate terms across labels credit both") {
  const std::vector<std::string> labels = {"crane", "crane, bird"};
  const auto m = matcher_for(labels);
  const auto t = count_corpus(m, labels, "a crane flew\n");
  CHECK(t.counts[0].samples_matched == 1);
  CHECK(t.counts[1].samples_matched == 1);
}

TEST_CASE("automaton agrees with the naive scan and is shard invariant") {
  SplitMix rng(12345);
  std::vector<std::string> labels;
  std::set<std::string> used;
  while (labels.size() < 100) {
    std::string l = random_word(rng, 1, 6);
    if (rng.below(5) == 0) l += " " + random_word(rng, 2, 5);
    if (rng.below(10) == 0) l += ", " + random_word(rng, 2, 5);
    if (used.insert(l).second) labels.push_back(l);
  }
  static const std::string punct = ".!?:,;- ";
  std::string corpus;
  for (int line = 0; line < 10000; ++line) {
    const auto words = rng.below(12);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) corpus.push_back(' ');
      if (rng.below(4) == 0) {
        std::string l = labels[rng.below(labels.size())];
        if (rng.below(3) == 0) l[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(l[0])));
        corpus += l;
        const auto form = rng.below(4);
        if (form == 1) corpus += "s";
        if (form == 2) corpus += "es";
      } else {
        corpus += random_word(rng, 1, 7);
      }
      if (rng.below(3) == 0) corpus.push_back(punct[rng.below(punct.size())]);
    }
    corpus.push_back('\n');
  }

  const auto m = matcher_for(labels);
  const auto expected = naive_count(labels, corpus);
  std::uint64_t matched = 0;
  for (const auto& c : expected.counts) matched += c.samples_matched;
  CHECK(matched > 1000);
  for (std::size_t shards : {1, 3, 8, 64}) {
    CorpusOptions o;
    o.shards = shards;
    const auto t = count_corpus(m, labels, corpus, o);
    CHECK(t == expected);
  }
}

TEST_CASE("extra leading spaces never change sample counts") {
  SplitMix rng(9);
  std::vector<std::string> labels = {"owl", "sea lion", "tub, vat"};
  const auto m = matcher_for(labels);
  for (int t = 0; t < 200; ++t) {
    std::string caption;
    for (int w = 0; w < 6; ++w) {
      caption += (rng.below(2) ? labels[rng.below(2)] : random_word(rng, 1, 4));
      caption += rng.below(2) ? " " : ". ";
    }
    const auto a = count_corpus(m, labels, caption + "\n");
    const auto b = count_corpus(m, labels, "   " + caption + "\n");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      CHECK(a.counts[i].samples_matched == b.counts[i].samples_matched);
    }
  }
}

TEST_CASE("counts csv round trip and file counting") {
  testing::TempDir dir;
  const std::vector<std::string> labels = {"cat", "tub, vat", "sea lion"};
  testing::write_file(dir / "labels.txt", "# labels\ncat\n\ntub, vat\nsea lion\n");
  CHECK(load_labels(dir / "labels.txt") == labels);
  testing::write_file(dir / "corpus.txt", "a cat\nthe vat.\nsea lions!\nnothing\n");
  const auto m = matcher_for(labels);
  const auto t = count_corpus_file(m, labels, dir / "corpus.txt", CorpusOptions{false, 0, 2});
  CHECK(t.corpus_size == 4);
  CHECK(t.counts[1].samples_matched == 1);
  CHECK(t.counts[2].samples_matched == 1);
  std::stringstream ss;
  write_counts_csv(t, ss);
  CHECK(ss.str().rfind("label,samples_matched,term_hits,corpus_size\n", 0) == 0);
  CHECK(ss.str().find("\"tub, vat\",1,1,4") != std::string::npos);
  const auto back = read_counts_csv(ss);
  CHECK(back.labels == t.labels);
  CHECK(back.counts == t.counts);
  CHECK(back.corpus_size == t.corpus_size);
}
