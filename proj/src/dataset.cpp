#include "vltaboo/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "vltaboo/error.hpp"
#include "vltaboo/rng.hpp"

namespace fs = std::filesystem;

namespace vltaboo {

std::string Attribute::phrase() const {
  if (expression.empty()) return description;
  return description + " " + expression;
}

const char* to_string(Flavor f) {
  return f == Flavor::per_image_attributes ? "per_image_attributes" : "per_class_attributes";
}

Flavor flavor_from_string(const std::string& s) {
  if (s == "per_image_attributes") return Flavor::per_image_attributes;
  if (s == "per_class_attributes") return Flavor::per_class_attributes;
  throw InvalidArgument("unknown dataset flavor '" + s + "'");
}

double AttributeDataset::mean_profile_size() const {
  if (class_profiles.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto& p : class_profiles) total += p.attributes.size();
  return static_cast<double>(total) / static_cast<double>(class_profiles.size());
}

std::string AttributeDataset::base_noun() const {
  return name == "cub" ? "bird" : "animal";
}

namespace {

std::string underscores_to_spaces(std::string s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const char mapped = (c == '_' || c == '+') ? ' ' : c;
    if (mapped == ' ' && !out.empty() && out.back() == ' ') continue;
    out.push_back(mapped);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  while (!out.empty() && out.front() == ' ') out.erase(out.begin());
  return out;
}

/// Reads a whitespace-separated text table, reporting the file and line on
/// malformed input.
class TableReader {
 public:
  explicit TableReader(fs::path path) : path_(std::move(path)), in_(path_) {
    if (!in_) throw IngestError("cannot open " + path_.string());
  }

  /// Next non-blank line split into fields; false at end of file.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      fields.clear();
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) fields.push_back(tok);
      if (!fields.empty()) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw IngestError(path_.string() + ":" + std::to_string(line_no_) + ": " + msg);
  }

  long long integer(const std::string& tok) const {
    long long v = 0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || ptr != end) fail("expected integer, got '" + tok + "'");
    return v;
  }

  double real(const std::string& tok) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) fail("expected number, got '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("expected number, got '" + tok + "'");
    }
  }

  /// Parses a 1-based id and checks it against [1, limit].
  std::size_t id(const std::string& tok, std::size_t limit, const char* what) const {
    const long long v = integer(tok);
    if (v < 1 || static_cast<unsigned long long>(v) > limit) {
      fail(std::string(what) + " id " + tok + " out of range [1, " + std::to_string(limit) + "]");
    }
    return static_cast<std::size_t>(v - 1);
  }

  /// Requires the leading id to equal the running 1-based row number.
  void expect_sequential(const std::string& tok, std::size_t expected) const {
    if (integer(tok) != static_cast<long long>(expected)) {
      fail("ids must be contiguous and 1-based; expected " + std::to_string(expected) +
           ", got " + tok);
    }
  }

  std::size_t line() const { return line_no_; }

 private:
  fs::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

fs::path locate(const fs::path& root, const std::string& file) {
  for (const fs::path& dir : {root, root / "attributes", root.parent_path()}) {
    const fs::path candidate = dir / file;
    if (fs::is_regular_file(candidate)) return candidate;
  }
  throw IngestError("missing dataset file '" + file + "' under " + root.string());
}

/// "<id> <name...>" files; names may contain spaces in AWA2 exports.
std::vector<std::string> read_id_name_file(const fs::path& path) {
  TableReader reader(path);
  std::vector<std::string> names;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() < 2) reader.fail("expected '<id> <name>'");
    reader.expect_sequential(f[0], names.size() + 1);
    std::string name = f[1];
    for (std::size_t i = 2; i < f.size(); ++i) name += "_" + f[i];
    names.push_back(std::move(name));
  }
  return names;
}

std::vector<ClassLabel> make_classes(const std::vector<std::string>& raw) {
  std::vector<ClassLabel> classes;
  classes.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    classes.push_back({static_cast<ClassId>(i), normalize_class_label(raw[i])});
  }
  return classes;
}

/// Per-description argmax over strictly positive scores; ties keep the
/// lowest attribute id.
std::vector<AttributeId> select_profile(const std::vector<Attribute>& attrs,
                                        const std::vector<double>& scores) {
  std::map<std::string, AttributeId> best;
  for (const auto& a : attrs) {
    const double s = scores[a.id];
    if (!(s > 0.0)) continue;
    auto it = best.find(a.description);
    if (it == best.end() || s > scores[it->second]) best[a.description] = a.id;
  }
  std::vector<AttributeId> out;
  out.reserve(best.size());
  for (const auto& [desc, id] : best) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Attribute parse_attribute_name(AttributeId id, const std::string& raw) {
  Attribute a;
  a.id = id;
  a.raw_name = raw;
  const auto sep = raw.find("::");
  if (sep == std::string::npos) {
    a.description = underscores_to_spaces(raw);
  } else {
    a.description = underscores_to_spaces(raw.substr(0, sep));
    a.expression = underscores_to_spaces(raw.substr(sep + 2));
  }
  return a;
}

std::string normalize_class_label(const std::string& raw) {
  std::string s = raw;
  const auto dot = s.find('.');
  if (dot != std::string::npos && dot > 0 &&
      std::all_of(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(dot),
                  [](unsigned char c) { return std::isdigit(c) != 0; })) {
    s = s.substr(dot + 1);
  }
  return underscores_to_spaces(s);
}

AttributeDataset load_cub(const fs::path& root, const CubOptions& opts) {
  if (opts.min_certainty < 1 || opts.min_certainty > 4) {
    throw InvalidArgument("CUB min_certainty must be in [1, 4]");
  }
  const fs::path attributes_file = locate(root, "attributes.txt");
  const fs::path classes_file = locate(root, "classes.txt");
  const fs::path image_class_file = locate(root, "image_class_labels.txt");
  const fs::path image_attr_file = locate(root, "image_attribute_labels.txt");
  const fs::path class_attr_file = locate(root, "class_attribute_labels_continuous.txt");

  AttributeDataset ds;
  ds.name = "cub";
  ds.flavor = Flavor::per_image_attributes;

  const auto raw_attrs = read_id_name_file(attributes_file);
  for (std::size_t i = 0; i < raw_attrs.size(); ++i) {
    ds.attributes.push_back(parse_attribute_name(static_cast<AttributeId>(i), raw_attrs[i]));
  }
  ds.classes = make_classes(read_id_name_file(classes_file));
  const std::size_t n_attrs = ds.attributes.size();
  const std::size_t n_classes = ds.classes.size();

  {
    TableReader reader(image_class_file);
    std::vector<std::string> f;
    while (reader.next(f)) {
      if (f.size() < 2) reader.fail("expected '<image id> <class id>'");
      reader.expect_sequential(f[0], ds.images.size() + 1);
      ImageAnnotation img;
      img.id = static_cast<ImageId>(ds.images.size());
      img.key = f[0];
      img.class_id = static_cast<ClassId>(reader.id(f[1], n_classes, "class"));
      ds.images.push_back(std::move(img));
    }
  }

  {
    TableReader reader(image_attr_file);
    std::vector<std::string> f;
    // Some published copies carry a stray extra column; only the first four
    // fields matter.
    while (reader.next(f)) {
      if (f.size() < 4) reader.fail("expected '<image> <attribute> <present> <certainty> ...'");
      const auto image = reader.id(f[0], ds.images.size(), "image");
      const auto attr = reader.id(f[1], n_attrs, "attribute");
      const long long present = reader.integer(f[2]);
      const long long certainty = reader.integer(f[3]);
      if (present != 0 && present != 1) reader.fail("present flag must be 0 or 1");
      if (certainty < 1 || certainty > 4) reader.fail("certainty id must be in [1, 4]");
      if (present == 1 && certainty >= opts.min_certainty) {
        ds.images[image].attributes.push_back(static_cast<AttributeId>(attr));
      }
    }
    for (auto& img : ds.images) {
      auto& a = img.attributes;
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
  }

  {
    TableReader reader(class_attr_file);
    std::vector<std::string> f;
    while (reader.next(f)) {
      if (ds.class_profiles.size() >= n_classes) reader.fail("more rows than classes");
      if (f.size() != n_attrs) {
        reader.fail("expected " + std::to_string(n_attrs) + " columns, got " +
                    std::to_string(f.size()));
      }
      ClassAttributeProfile p;
      p.class_id = static_cast<ClassId>(ds.class_profiles.size());
      p.source_scores.reserve(n_attrs);
      for (const auto& tok : f) p.source_scores.push_back(reader.real(tok));
      p.attributes = select_profile(ds.attributes, p.source_scores);
      ds.class_profiles.push_back(std::move(p));
    }
    if (ds.class_profiles.size() != n_classes) {
      throw IngestError(class_attr_file.string() + ": expected " + std::to_string(n_classes) +
                        " rows, got " + std::to_string(ds.class_profiles.size()));
    }
  }
  return ds;
}

AttributeDataset load_awa2(const fs::path& root, const Awa2Options& opts,
                           std::vector<std::string>* warnings) {
  const fs::path classes_file = locate(root, "classes.txt");
  const fs::path predicates_file = locate(root, "predicates.txt");
  const fs::path matrix_file = locate(root, "predicate-matrix-binary.txt");
  const fs::path index_file =
      opts.image_index.is_absolute() ? opts.image_index : root / opts.image_index;
  if (!fs::is_regular_file(index_file)) {
    throw IngestError("missing dataset file '" + index_file.string() + "'");
  }

  AttributeDataset ds;
  ds.name = "awa2";
  ds.flavor = Flavor::per_class_attributes;
  ds.classes = make_classes(read_id_name_file(classes_file));
  const auto raw_preds = read_id_name_file(predicates_file);
  for (std::size_t i = 0; i < raw_preds.size(); ++i) {
    Attribute a;
    a.id = static_cast<AttributeId>(i);
    a.raw_name = raw_preds[i];
    a.description = underscores_to_spaces(raw_preds[i]);
    ds.attributes.push_back(std::move(a));
  }
  const std::size_t n_attrs = ds.attributes.size();
  const std::size_t n_classes = ds.classes.size();

  {
    TableReader reader(matrix_file);
    std::vector<std::string> f;
    while (reader.next(f)) {
      if (ds.class_profiles.size() >= n_classes) reader.fail("more matrix rows than classes");
      if (f.size() != n_attrs) {
        reader.fail("expected " + std::to_string(n_attrs) + " columns, got " +
                    std::to_string(f.size()));
      }
      ClassAttributeProfile p;
      p.class_id = static_cast<ClassId>(ds.class_profiles.size());
      for (std::size_t j = 0; j < f.size(); ++j) {
        const long long v = reader.integer(f[j]);
        if (v != 0 && v != 1) reader.fail("non-binary matrix entry '" + f[j] + "'");
        p.source_scores.push_back(static_cast<double>(v));
        if (v == 1) p.attributes.push_back(static_cast<AttributeId>(j));
      }
      if (p.attributes.empty() && warnings) {
        warnings->push_back("class '" + ds.classes[p.class_id].label +
                            "' has an all-zero predicate row");
      }
      ds.class_profiles.push_back(std::move(p));
    }
    if (ds.class_profiles.size() != n_classes) {
      throw IngestError(matrix_file.string() + ": expected " + std::to_string(n_classes) +
                        " rows, got " + std::to_string(ds.class_profiles.size()));
    }
  }

  {
    TableReader reader(index_file);
    std::vector<std::string> f;
    while (reader.next(f)) {
      if (f.size() < 2) reader.fail("expected '<image key> <class id>'");
      ImageAnnotation img;
      img.id = static_cast<ImageId>(ds.images.size());
      img.key = f[0];
      img.class_id = static_cast<ClassId>(reader.id(f[1], n_classes, "class"));
      ds.images.push_back(std::move(img));
    }
  }
  return ds;
}

std::vector<Violation> validate(const AttributeDataset& ds) {
  std::vector<Violation> out;
  auto add = [&out](std::string s) { out.push_back({std::move(s)}); };
  const std::size_t nc = ds.num_classes();
  const std::size_t na = ds.num_attributes();

  for (std::size_t i = 0; i < nc; ++i) {
    if (ds.classes[i].id != i) add("class at position " + std::to_string(i) + " has id " +
                                   std::to_string(ds.classes[i].id));
  }
  std::set<std::pair<std::string, std::string>> seen_pairs;
  for (std::size_t i = 0; i < na; ++i) {
    const auto& a = ds.attributes[i];
    if (a.id != i) add("attribute at position " + std::to_string(i) + " has id " +
                       std::to_string(a.id));
    if (!seen_pairs.insert({a.description, a.expression}).second) {
      add("duplicate attribute (" + a.description + ", " + a.expression + ")");
    }
    if (ds.name == "cub" && a.expression.empty()) {
      add("CUB attribute " + std::to_string(i) + " has an empty expression");
    }
    if (ds.name == "awa2" && !a.expression.empty()) {
      add("AWA2 attribute " + std::to_string(i) + " has a non-empty expression");
    }
  }

  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& img = ds.images[i];
    const std::string tag = "image " + std::to_string(i);
    if (img.id != i) add(tag + " has id " + std::to_string(img.id));
    if (img.class_id >= nc) add(tag + " references undeclared class " +
                                std::to_string(img.class_id));
    std::set<AttributeId> uniq;
    for (AttributeId a : img.attributes) {
      if (a >= na) add(tag + " references undeclared attribute " + std::to_string(a));
      if (!uniq.insert(a).second) add(tag + " repeats attribute " + std::to_string(a));
    }
    if (ds.flavor == Flavor::per_class_attributes && !ds.images_detected &&
        !img.attributes.empty()) {
      add(tag + " carries attributes before detection");
    }
  }

  if (ds.class_profiles.size() != nc) {
    add("expected " + std::to_string(nc) + " class profiles, got " +
        std::to_string(ds.class_profiles.size()));
  }
  for (std::size_t c = 0; c < ds.class_profiles.size(); ++c) {
    const auto& p = ds.class_profiles[c];
    const std::string tag = "class profile " + std::to_string(c);
    if (p.class_id != c) add(tag + " has class id " + std::to_string(p.class_id));
    if (!p.source_scores.empty() && p.source_scores.size() != na) {
      add(tag + " has " + std::to_string(p.source_scores.size()) + " scores for " +
          std::to_string(na) + " attributes");
    }
    std::map<std::string, std::size_t> per_desc;
    for (AttributeId a : p.attributes) {
      if (a >= na) {
        add(tag + " references undeclared attribute " + std::to_string(a));
        continue;
      }
      if (!p.source_scores.empty() && !(p.source_scores[a] > 0.0)) {
        add(tag + " keeps attribute " + std::to_string(a) + " with non-positive score");
      }
      if (!ds.attributes[a].expression.empty()) ++per_desc[ds.attributes[a].description];
    }
    for (const auto& [desc, n] : per_desc) {
      if (n > 1) add(tag + " keeps " + std::to_string(n) + " expressions of '" + desc + "'");
    }
  }
  return out;
}

AttributeDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.classes == 0 || spec.attributes == 0 || spec.expressions_per_description == 0) {
    throw InvalidArgument("synthetic dataset needs classes, attributes and expressions > 0");
  }
  if (spec.profile_size > spec.attributes ||
      (spec.disjoint_profiles && spec.classes * spec.profile_size > spec.attributes)) {
    throw InvalidArgument("synthetic dataset: profile_size too large for attribute count");
  }
  if (spec.min_image_attributes > spec.max_image_attributes) {
    throw InvalidArgument("synthetic dataset: min_image_attributes > max_image_attributes");
  }
  SplitMix rng(mix_seed(spec.seed, 0x5eed));
  AttributeDataset ds;
  ds.name = "synthetic";
  const bool grouped = spec.expressions_per_description > 1;

  for (std::size_t c = 0; c < spec.classes; ++c) {
    ds.classes.push_back({static_cast<ClassId>(c), "class" + std::to_string(c)});
  }
  for (std::size_t a = 0; a < spec.attributes; ++a) {
    Attribute attr;
    attr.id = static_cast<AttributeId>(a);
    if (grouped) {
      attr.description = "has part" + std::to_string(a / spec.expressions_per_description);
      attr.expression = "tone" + std::to_string(a % spec.expressions_per_description);
      attr.raw_name = "has_part" + std::to_string(a / spec.expressions_per_description) +
                      "::tone" + std::to_string(a % spec.expressions_per_description);
    } else {
      attr.description = "trait" + std::to_string(a);
      attr.raw_name = attr.description;
    }
    ds.attributes.push_back(std::move(attr));
  }

  for (std::size_t c = 0; c < spec.classes; ++c) {
    ClassAttributeProfile p;
    p.class_id = static_cast<ClassId>(c);
    p.source_scores.assign(spec.attributes, 0.0);
    std::vector<AttributeId> chosen;
    if (spec.disjoint_profiles) {
      for (std::size_t k = 0; k < spec.profile_size; ++k) {
        chosen.push_back(static_cast<AttributeId>(c * spec.profile_size + k));
      }
    } else {
      std::vector<AttributeId> all(spec.attributes);
      std::iota(all.begin(), all.end(), AttributeId{0});
      rng.shuffle(std::span(all));
      chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec.profile_size));
    }
    for (AttributeId a : chosen) p.source_scores[a] = 1.0 + static_cast<double>(rng.below(99));
    p.attributes = grouped ? select_profile(ds.attributes, p.source_scores) : chosen;
    std::sort(p.attributes.begin(), p.attributes.end());
    ds.class_profiles.push_back(std::move(p));
  }

  for (std::size_t c = 0; c < spec.classes; ++c) {
    const auto& profile = ds.class_profiles[c].attributes;
    for (std::size_t k = 0; k < spec.images_per_class; ++k) {
      ImageAnnotation img;
      img.id = static_cast<ImageId>(ds.images.size());
      img.key = "img" + std::to_string(img.id);
      img.class_id = static_cast<ClassId>(c);
      const std::size_t span = spec.max_image_attributes - spec.min_image_attributes + 1;
      std::size_t count = spec.min_image_attributes + static_cast<std::size_t>(rng.below(span));
      std::vector<AttributeId> pool = profile;
      if (grouped) {
        // CUB-like images may carry several expressions of one description.
        pool.resize(spec.attributes);
        std::iota(pool.begin(), pool.end(), AttributeId{0});
      }
      count = std::min(count, pool.size());
      rng.shuffle(std::span(pool));
      img.attributes.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
      std::sort(img.attributes.begin(), img.attributes.end());
      ds.images.push_back(std::move(img));
    }
  }
  return ds;
}

}  // namespace vltaboo
