#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vltaboo/corpus.hpp"
#include "vltaboo/dataset.hpp"
#include "vltaboo/embedding.hpp"
#include "vltaboo/scorer.hpp"
#include "vltaboo/setup.hpp"

namespace vltaboo {

// ---------------------------------------------------------------------------
// Run configuration
//
// Flat key-value file with [sections]:
//
//   [dataset]   kind = cub | awa2 | ndjson | synthetic
//               path = <dir or file>          image_index = <awa2 index file>
//               synthetic.classes, synthetic.attributes, synthetic.images_per_class,
//               synthetic.profile_size, synthetic.min_image_attributes,
//               synthetic.max_image_attributes, synthetic.disjoint_profiles,
//               synthetic.seed
//   [backend]   kind = mock | store | service  model = <name>
//               location = <store path | service url>
//               class_weight, attribute_weight, noise_weight, seed   (mock)
//   [detection] cutoff = <real>  |  target_mean_attrs = <real>
//   [setups]    setups = S1,S2,...   x_min, x_max   grammars = cub_style,...
//               seed   attribute_order   slot_table = <path>   fix_articles
//   [oracle]    enabled = true|false   trials   scoring = strict|fractional
//   [correlate] counts = <counts.csv>
//   [output]    dir = <path>   galleries = true|false   topk = <k>
//
// Relative paths resolve against the config file's directory.

struct RunConfig {
  std::string dataset_kind = "synthetic";
  std::filesystem::path dataset_path;
  std::filesystem::path image_index;
  SyntheticSpec synthetic;

  BackendKind backend_kind = BackendKind::mock;
  std::string model_name;
  std::string backend_location;
  MockStructure mock;

  std::optional<double> detection_cutoff;
  std::optional<double> detection_target;

  std::vector<Setup> setups = {Setup::S1, Setup::S2, Setup::S3, Setup::S4, Setup::S5};
  std::size_t x_min = 0;
  std::size_t x_max = 3;
  std::vector<GrammarKind> grammars;  // empty: dataset default
  std::uint64_t seed = 0;
  AttributeOrder attribute_order = AttributeOrder::seeded_random;
  std::filesystem::path slot_table;
  bool fix_articles = false;

  bool oracle = true;
  std::size_t oracle_trials = 1;
  OracleScoring oracle_scoring = OracleScoring::strict;

  std::filesystem::path counts;

  std::filesystem::path output_dir = "vltaboo-out";
  bool write_galleries = false;
  std::size_t topk = 0;
};

/// Parsed key-value pairs, "section.key" -> value.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(std::istream& in);

/// Applies `values` on top of `cfg`; relative paths resolve against `base`.
/// Unknown keys throw.
void apply_config(RunConfig& cfg, const ConfigMap& values, const std::filesystem::path& base);

RunConfig load_run_config(const std::filesystem::path& path);

/// Precondition checks that need no I/O beyond path existence.
void validate_config(const RunConfig& cfg);

/// Dataset described by the config (loads or generates).
AttributeDataset load_config_dataset(const RunConfig& cfg);

/// Backend described by the config. The mock needs the dataset for its
/// coordinate layout.
std::unique_ptr<EmbeddingBackend> make_backend(const RunConfig& cfg, const AttributeDataset& ds);

struct RunSummary {
  std::vector<EvalReport> reports;
  std::vector<std::filesystem::path> files;
};

/// ingestion -> (detection) -> setups -> scoring -> reports. Writes the
/// bundle into cfg.output_dir. A failing stage throws StageError naming the
/// stage; files already written stay in place.
RunSummary run(const RunConfig& cfg);

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Occurrence / recall correlation

struct CorrelationRow {
  std::string label;
  std::uint64_t occurrence = 0;
  double recall = 0.0;

  friend bool operator==(const CorrelationRow&, const CorrelationRow&) = default;
};

struct RecallEntry {
  std::string label;
  double recall = 0.0;
  std::size_t n = 0;
};

struct Correlation {
  std::vector<CorrelationRow> rows;
  std::vector<std::string> unjoined_counts;
  std::vector<std::string> unjoined_recalls;
  double spearman = 0.0;
  /// Pearson over (log10(1 + occurrence), recall).
  double pearson_log = 0.0;
};

/// Joins by exact label text. Throws if nothing joins.
Correlation correlate(const OccurrenceTable& counts, const std::vector<RecallEntry>& recalls);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(const std::vector<double>& v);

struct ExtremeCases {
  std::vector<CorrelationRow> low_occurrence_high_recall;   // occ < 100, recall > 0.75
  std::vector<CorrelationRow> high_occurrence_low_recall;   // occ > 1e5, recall < 0.05
};

ExtremeCases extreme_cases(const std::vector<CorrelationRow>& rows);

std::vector<RecallEntry> read_recall_csv(std::istream& in);
void write_correlation_csv(const Correlation& c, std::ostream& out);
void write_extremes_csv(const ExtremeCases& e, std::ostream& out);

// ---------------------------------------------------------------------------
// Wide tables from long-format reports

/// Reads rows written by write_report_csv_row (after the header).
std::vector<EvalReport> read_reports_csv(std::istream& in);

/// One row per (setup, model, grammar), one accuracy column per x.
void write_accuracy_table(const std::vector<EvalReport>& reports, std::ostream& out);

/// One row per model, one skip-rate column per x >= 1.
void write_skip_table(const std::vector<EvalReport>& reports, std::ostream& out);

}  // namespace vltaboo
