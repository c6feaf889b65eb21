#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vltaboo {

using ClassId = std::uint32_t;
using AttributeId = std::uint32_t;
using ImageId = std::uint32_t;

struct Attribute {
  AttributeId id = 0;
  std::string description;  // "has head pattern"
  std::string expression;   // "crested"; empty for single-token predicates
  std::string raw_name;     // as found in the source file

  /// Text used when the attribute is substituted into a prompt.
  std::string phrase() const;

  friend bool operator==(const Attribute&, const Attribute&) = default;
};

struct ClassLabel {
  ClassId id = 0;
  std::string label;

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

struct ImageAnnotation {
  ImageId id = 0;
  std::string key;  // external identifier handed to embedding backends
  ClassId class_id = 0;
  std::vector<AttributeId> attributes;

  friend bool operator==(const ImageAnnotation&, const ImageAnnotation&) = default;
};

struct ClassAttributeProfile {
  ClassId class_id = 0;
  std::vector<AttributeId> attributes;  // ascending id
  std::vector<double> source_scores;    // one entry per dataset attribute

  friend bool operator==(const ClassAttributeProfile&, const ClassAttributeProfile&) = default;
};

enum class Flavor { per_image_attributes, per_class_attributes };

const char* to_string(Flavor f);
Flavor flavor_from_string(const std::string& s);

/// Canonical attribute dataset. Immutable once loaded; safe to share across
/// threads.
struct AttributeDataset {
  std::string name;
  Flavor flavor = Flavor::per_image_attributes;
  /// True once per-image sets of a per-class dataset were filled by detection.
  bool images_detected = false;
  std::vector<ClassLabel> classes;
  std::vector<Attribute> attributes;
  std::vector<ImageAnnotation> images;
  std::vector<ClassAttributeProfile> class_profiles;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t num_attributes() const { return attributes.size(); }
  std::size_t num_images() const { return images.size(); }

  const ClassAttributeProfile& profile(ClassId c) const { return class_profiles.at(c); }

  /// Whether per-image attribute sets are usable (native or detected).
  bool has_image_attributes() const {
    return flavor == Flavor::per_image_attributes || images_detected;
  }

  /// Mean number of attributes per class profile.
  double mean_profile_size() const;

  /// Noun used when the class label is withheld ("bird" for CUB, "animal"
  /// otherwise).
  std::string base_noun() const;

  friend bool operator==(const AttributeDataset&, const AttributeDataset&) = default;
};

// ---------------------------------------------------------------------------
// Source-format loaders

/// CUB certainty ids: 1 not visible, 2 guessing, 3 probably, 4 definitely.
struct CubOptions {
  int min_certainty = 3;
};

/// Loads the CUB-200-2011 text layout. Each required file is looked up in
/// `root`, `root/attributes` and the parent of `root`.
AttributeDataset load_cub(const std::filesystem::path& root, const CubOptions& opts = {});

struct Awa2Options {
  /// Image index file, one "<image key> <1-based class id>" pair per line.
  /// Relative paths resolve against the dataset root.
  std::filesystem::path image_index = "image-index.txt";
};

/// Loads the AWA2 class/predicate layout plus an explicit image index.
/// Warnings (e.g. empty class profiles) are appended to `warnings` if given.
AttributeDataset load_awa2(const std::filesystem::path& root, const Awa2Options& opts = {},
                           std::vector<std::string>* warnings = nullptr);

/// Splits "has_bill_shape::curved_(up_or_down)" into description/expression,
/// mapping underscores to single spaces.
Attribute parse_attribute_name(AttributeId id, const std::string& raw);

/// "001.Black_footed_Albatross" -> "Black footed Albatross".
std::string normalize_class_label(const std::string& raw);

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string what;
};

/// Every invariant violation in `dataset`; empty means valid.
std::vector<Violation> validate(const AttributeDataset& dataset);

// ---------------------------------------------------------------------------
// Canonical newline-delimited JSON format

void write_ndjson(const AttributeDataset& dataset, std::ostream& out);
void save_ndjson(const AttributeDataset& dataset, const std::filesystem::path& path);
AttributeDataset read_ndjson(std::istream& in);
AttributeDataset load_ndjson(const std::filesystem::path& path);

/// FNV-1a of the canonical serialization; recorded in run manifests.
std::uint64_t content_hash(const AttributeDataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t classes = 5;
  std::size_t attributes = 12;
  std::size_t images_per_class = 20;
  std::size_t profile_size = 5;
  /// Per-image attribute count is uniform in [min, max], drawn from the
  /// image's class profile.
  std::size_t min_image_attributes = 0;
  std::size_t max_image_attributes = 5;
  /// Group attributes into descriptions of this many expressions (CUB-like).
  /// 1 yields single-token predicates with empty expressions.
  std::size_t expressions_per_description = 1;
  /// Give every class its own block of attributes (requires
  /// attributes >= classes * profile_size).
  bool disjoint_profiles = false;
  std::uint64_t seed = 1;
};

/// Deterministic per-image-attribute dataset for tests and demos.
AttributeDataset make_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace vltaboo
