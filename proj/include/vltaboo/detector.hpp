#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vltaboo/dataset.hpp"
#include "vltaboo/embedding.hpp"

namespace vltaboo {

/// Exactly one of `cutoff` / `target_mean_attrs` drives a detection run.
struct DetectionConfig {
  std::optional<double> cutoff;
  std::optional<double> target_mean_attrs;
};

struct ScoredAttribute {
  AttributeId attribute = 0;
  double similarity = 0.0;

  friend bool operator==(const ScoredAttribute&, const ScoredAttribute&) = default;
};

/// Cosine similarity of every image against every attribute of its class
/// profile. Computed once, thresholded many times.
struct SimilarityPool {
  /// per_image[i] is ordered by descending similarity, ties by attribute id.
  std::vector<std::vector<ScoredAttribute>> per_image;

  std::size_t num_images() const { return per_image.size(); }
  std::size_t total() const;

  /// Mean number of similarities strictly above `cutoff` per image.
  double mean_kept(double cutoff) const;
};

struct DetectionResult {
  std::vector<std::vector<ScoredAttribute>> per_image;
  double mean_attrs_per_image = 0.0;
  double cutoff_used = 0.0;
  std::vector<std::string> warnings;
};

/// Embeds the three detection prompts for each profiled attribute, averages
/// and re-normalizes them, and scores each image against its class profile.
SimilarityPool similarity_pool(const AttributeDataset& dataset, const EmbeddingBackend& backend,
                               std::vector<std::string>* warnings = nullptr);

/// Keeps similarities strictly above `cutoff`.
DetectionResult threshold(const SimilarityPool& pool, double cutoff);

/// Largest cutoff (1e-4 resolution below the boundary similarity) whose mean
/// kept attributes per image is >= target. Throws if the target lies outside
/// (0, pooled mean].
double calibrate_cutoff(const SimilarityPool& pool, double target_mean_attrs);
double calibrate_cutoff(const AttributeDataset& dataset, const EmbeddingBackend& backend,
                        double target_mean_attrs);

DetectionResult detect(const AttributeDataset& dataset, const DetectionConfig& cfg,
                       const EmbeddingBackend& backend);

/// Copy of `dataset` whose per-image attribute sets come from `result`.
AttributeDataset apply_detection(const AttributeDataset& dataset, const DetectionResult& result);

/// ndjson: one {"image_id", "key", "attributes": [[id, similarity], ...]}
/// line per image, then {"summary": {...}}.
void write_detection_ndjson(const AttributeDataset& dataset, const DetectionResult& result,
                            std::ostream& out);
DetectionResult read_detection_ndjson(std::istream& in);

}  // namespace vltaboo
