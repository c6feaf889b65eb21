#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vltaboo/dataset.hpp"
#include "vltaboo/prompt.hpp"

namespace vltaboo {

/// The five gallery-construction protocols.
///   S1  class + instance attributes      negatives: label only
///   S2  class + adversarial attributes   negatives: label + the same image attributes
///   S3  class + class attributes         negatives: label + own class attributes
///   S4  attributes only                  no labels; negatives: class attributes
///   S5  adversarial class vs attributes  two prompts: true label + absent
///       attributes vs wrong label + image attributes
enum class Setup { S1 = 1, S2, S3, S4, S5 };

const char* to_string(Setup s);
Setup setup_from_string(const std::string& s);

enum class AttributeOrder {
  seeded_random,  // fresh seeded sample per x
  ranked,         // first x in stored order (detection similarity for AWA2)
  prefix_nested,  // one seeded permutation per role; the x-sample prefixes the (x+1)-sample
};

const char* to_string(AttributeOrder o);
AttributeOrder attribute_order_from_string(const std::string& s);

struct SetupSpec {
  Setup setup = Setup::S1;
  std::size_t x = 0;
  PromptGrammar grammar;
  std::uint64_t seed = 0;
  AttributeOrder attribute_order = AttributeOrder::seeded_random;
};

/// Throws InvalidArgument if the spec is unusable (e.g. x = 0 for S4/S5).
void check_spec(const SetupSpec& spec);

struct GallerySet {
  ImageId image = 0;
  /// Full gallery in scoring order. S1-S4: one prompt per class, ordered by
  /// class id, the instance prompt at the image's class position. S5: two
  /// prompts in seeded order.
  std::vector<Prompt> prompts;
  /// Class each gallery position stands for (prompts may carry no label).
  std::vector<ClassId> classes;
  std::size_t correct_index = 0;
  /// Negatives rendered with fewer than x attributes because their class
  /// profile was too small.
  std::size_t short_prompts = 0;

  const Prompt& instance_prompt() const { return prompts.at(correct_index); }
};

/// Why an image produced no gallery.
enum class SkipReason { too_few_attributes, too_few_absent_attributes };

struct GalleryOutcome {
  std::optional<GallerySet> gallery;
  std::optional<SkipReason> skip;
};

/// Builds the gallery for one image. Pure in (dataset, image, spec).
GalleryOutcome build_gallery(const AttributeDataset& dataset, ImageId image,
                             const SetupSpec& spec);

/// Fraction of images carrying fewer than x attributes.
double skip_rate(const AttributeDataset& dataset, std::size_t x);

struct SkipLedger {
  std::vector<std::size_t> skipped;  // indexed by x
  std::size_t total = 0;

  double rate(std::size_t x) const;
};

SkipLedger skip_ledger(const AttributeDataset& dataset, std::size_t x_max);

enum class OracleScoring {
  strict,      // any contained negative counts as failure
  fractional,  // credit 1 / (1 + number of contained negatives)
};

struct OracleOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 1;
  OracleScoring scoring = OracleScoring::strict;
  AttributeOrder attribute_order = AttributeOrder::seeded_random;
};

/// Monte-Carlo oracle for attributes-only classification: a gallery is
/// solved iff no negative's attribute set is contained in the image's
/// ground-truth set. Averaged over non-skipped images.
double oracle_accuracy(const AttributeDataset& dataset, std::size_t x,
                       const OracleOptions& options = {});

/// Oracle outcome of a single S4 gallery against its image.
double oracle_score(const AttributeDataset& dataset, const GallerySet& gallery,
                    OracleScoring scoring = OracleScoring::strict);

/// Sampling helpers exposed for tests.
namespace sampling {

/// Stream seed for (spec seed, image, role, x). Roles distinguish the
/// instance draw, each negative class, and S5's extra draws. prefix_nested
/// and ranked ignore x.
std::uint64_t stream_seed(std::uint64_t seed, ImageId image, std::uint64_t role, std::size_t x,
                          AttributeOrder order);

/// Orders `pool` for prefix-taking: seeded shuffle (unless ranked), then
/// attributes whose description was not seen earlier are moved ahead of
/// repeats, preserving relative order.
std::vector<AttributeId> arrange(const AttributeDataset& dataset,
                                 std::vector<AttributeId> pool, std::uint64_t stream,
                                 AttributeOrder order);

}  // namespace sampling

void write_gallery_ndjson(const GallerySet& gallery, Setup setup, std::size_t x,
                          std::ostream& out);

}  // namespace vltaboo
