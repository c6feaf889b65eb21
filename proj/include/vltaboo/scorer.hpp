#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vltaboo/dataset.hpp"
#include "vltaboo/embedding.hpp"
#include "vltaboo/setup.hpp"

namespace vltaboo {

struct ScoredGallery {
  ImageId image = 0;
  Eigen::VectorXd similarities;   // cosine, pre-softmax
  Eigen::VectorXd probabilities;  // softmax of similarities
  std::vector<ClassId> classes;   // gallery class per position
  std::size_t predicted_index = 0;
  std::size_t correct_index = 0;
  bool correct = false;
  bool tied = false;  // more than one position shares the top similarity
};

/// Scores precomputed embeddings: cosine (dot of unit vectors), softmax,
/// argmax with ties to the lowest index.
ScoredGallery score_embeddings(const Embedding& image, const EmbeddingMatrix& prompts,
                               std::size_t correct_index);

/// Embeds the image and every gallery prompt, then scores them.
ScoredGallery score_gallery(const EmbeddingBackend& backend, const ImageAnnotation& image,
                            const GallerySet& gallery);

struct ClassRecall {
  ClassId class_id = 0;
  std::size_t correct = 0;
  std::size_t evaluated = 0;

  double recall() const {
    return evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0;
  }

  friend bool operator==(const ClassRecall&, const ClassRecall&) = default;
};

struct ReportKey {
  std::string model;
  std::string dataset;
  Setup setup = Setup::S1;
  GrammarKind grammar = GrammarKind::cub_style;
  std::size_t x = 0;

  friend bool operator==(const ReportKey&, const ReportKey&) = default;
};

struct EvalReport {
  ReportKey key;
  double accuracy = 0.0;  // over evaluated (non-skipped) images
  double skip_rate = 0.0;
  std::size_t n_images = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_correct = 0;
  std::size_t ties = 0;
  std::size_t short_prompts = 0;
  std::vector<ClassRecall> per_class;  // indexed by class id

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct RunSetupOptions {
  /// Optional sinks for audit output; null to skip.
  std::ostream* galleries = nullptr;
  std::ostream* topk = nullptr;
  std::size_t topk_k = 5;
  /// Images are processed in this order when non-empty (results must not
  /// depend on it).
  std::vector<ImageId> order;
};

/// Builds, skips, scores and aggregates every image for one spec. Throws if
/// every image is skipped.
EvalReport run_setup(const AttributeDataset& dataset, const EmbeddingBackend& backend,
                     const SetupSpec& spec, const RunSetupOptions& options = {});

/// Top-k gallery positions by descending probability, ties by lowest index.
std::vector<std::pair<ClassId, double>> topk(const ScoredGallery& scored, std::size_t k);

struct DistanceProfile {
  ImageId image = 0;
  std::vector<ClassId> classes;
  /// distances(c, x) = 1 - cosine(prompt(class c, first x image attributes), image)
  Eigen::MatrixXd distances;
};

/// Class label plus the first x (of one nested sample of) image attributes
/// for every class in `class_set` and x in [0, x_max]. Returns nothing when
/// the image carries fewer than x_max attributes.
std::optional<DistanceProfile> distance_profile(const EmbeddingBackend& backend,
                                                const AttributeDataset& dataset, ImageId image,
                                                const std::vector<ClassId>& class_set,
                                                std::size_t x_max, const SetupSpec& spec_base);

// ---------------------------------------------------------------------------
// Output formats

/// "model,dataset,setup,grammar,x,accuracy,skip_rate,n_evaluated"
void write_report_csv_header(std::ostream& out);
void write_report_csv_row(const EvalReport& report, std::ostream& out);

/// "class,label,recall,n"
void write_recall_csv(const EvalReport& report, const AttributeDataset& dataset,
                      std::ostream& out);

void write_topk_ndjson(const ScoredGallery& scored, const AttributeDataset& dataset,
                       std::size_t k, std::ostream& out);
void write_distance_profile_ndjson(const DistanceProfile& profile, std::ostream& out);

/// Fixed-precision decimal used by every CSV writer so reruns are
/// byte-identical.
std::string format_real(double v, int digits = 6);

}  // namespace vltaboo
