// vltaboo command line: ingest, detect, calibrate, run, oracle, count,
// correlate, report.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "vltaboo/corpus.hpp"
#include "vltaboo/detector.hpp"
#include "vltaboo/report.hpp"
#include "vltaboo/version.hpp"

namespace fs = std::filesystem;
using namespace vltaboo;

namespace {

struct DatasetFlags {
  std::string kind = "synthetic";
  std::string path;
  std::string image_index;
  int min_certainty = 3;
};

struct BackendFlags {
  std::string kind = "mock";
  std::string store;
  std::string url;
  MockStructure mock;
};

void add_dataset_flags(CLI::App* app, DatasetFlags& f) {
  app->add_option("--dataset", f.kind, "cub | awa2 | ndjson | synthetic")
      ->check(CLI::IsMember({"cub", "awa2", "ndjson", "synthetic"}));
  app->add_option("--path", f.path, "dataset root (cub, awa2) or file (ndjson)");
  app->add_option("--image-index", f.image_index, "awa2 image index file");
  app->add_option("--min-certainty", f.min_certainty, "cub certainty threshold")
      ->check(CLI::Range(1, 4));
}

void add_backend_flags(CLI::App* app, BackendFlags& f) {
  app->add_option("--backend", f.kind, "mock | store | service")
      ->check(CLI::IsMember({"mock", "store", "service"}));
  app->add_option("--store", f.store, "embedding store file");
  app->add_option("--url", f.url, "embedding service base url");
  app->add_option("--class-weight", f.mock.class_weight, "mock class weight");
  app->add_option("--attribute-weight", f.mock.attribute_weight, "mock attribute weight");
  app->add_option("--noise-weight", f.mock.noise_weight, "mock noise weight");
  app->add_option("--mock-seed", f.mock.seed, "mock noise seed");
}

AttributeDataset load_dataset(const DatasetFlags& f) {
  if (f.kind == "cub") return load_cub(f.path, CubOptions{f.min_certainty});
  if (f.kind == "awa2") {
    Awa2Options opts;
    if (!f.image_index.empty()) opts.image_index = f.image_index;
    std::vector<std::string> warnings;
    auto ds = load_awa2(f.path, opts, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    return ds;
  }
  if (f.kind == "ndjson") return load_ndjson(f.path);
  return make_synthetic_dataset(SyntheticSpec{});
}

std::unique_ptr<EmbeddingBackend> open_backend(const BackendFlags& f, const AttributeDataset& ds) {
  RunConfig cfg;
  cfg.backend_kind = backend_kind_from_string(f.kind);
  cfg.backend_location = cfg.backend_kind == BackendKind::store ? f.store : f.url;
  cfg.mock = f.mock;
  return make_backend(cfg, ds);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute-based zero-shot benchmark harness"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // ingest
  DatasetFlags ingest_ds;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "load a dataset, validate it, write canonical ndjson");
  add_dataset_flags(ingest, ingest_ds);
  ingest->add_option("--out", ingest_out, "canonical ndjson output");

  // detect / calibrate
  DatasetFlags detect_ds;
  BackendFlags detect_be;
  std::optional<double> detect_cutoff, detect_target;
  std::string detect_out, detect_dataset_out;
  auto* detect_cmd = app.add_subcommand("detect", "per-image attributes for per-class datasets");
  add_dataset_flags(detect_cmd, detect_ds);
  add_backend_flags(detect_cmd, detect_be);
  auto* cutoff_opt = detect_cmd->add_option("--cutoff", detect_cutoff, "fixed cosine cutoff");
  auto* target_opt =
      detect_cmd->add_option("--target", detect_target, "target mean attributes per image");
  cutoff_opt->excludes(target_opt);
  detect_cmd->add_option("--out", detect_out, "detection ndjson")->required();
  detect_cmd->add_option("--dataset-out", detect_dataset_out, "dataset ndjson with detected sets");

  DatasetFlags calib_ds;
  BackendFlags calib_be;
  double calib_target = 0.0;
  auto* calibrate = app.add_subcommand("calibrate", "cutoff that hits a mean attribute count");
  add_dataset_flags(calibrate, calib_ds);
  add_backend_flags(calibrate, calib_be);
  calibrate->add_option("--target", calib_target, "target mean attributes per image")->required();

  // run
  std::string run_config;
  std::string run_out;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::size_t> run_x_min, run_x_max;
  std::vector<std::string> run_setups, run_grammars;
  auto* run_cmd = app.add_subcommand("run", "full pipeline from a config file");
  run_cmd->add_option("--config", run_config, "run config")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run_out, "output directory (overrides config)");
  run_cmd->add_option("--seed", run_seed, "setup seed (overrides config)");
  run_cmd->add_option("--x-min", run_x_min);
  run_cmd->add_option("--x-max", run_x_max);
  run_cmd->add_option("--setups", run_setups, "e.g. S1 S4")->delimiter(',');
  run_cmd->add_option("--grammars", run_grammars)->delimiter(',');

  // oracle
  DatasetFlags oracle_ds;
  std::size_t oracle_x_max = 5, oracle_trials = 1;
  std::uint64_t oracle_seed = 0;
  std::string oracle_scoring = "strict";
  auto* oracle = app.add_subcommand("oracle", "attributes-only oracle accuracy per x");
  add_dataset_flags(oracle, oracle_ds);
  oracle->add_option("--x-max", oracle_x_max);
  oracle->add_option("--trials", oracle_trials)->check(CLI::PositiveNumber);
  oracle->add_option("--seed", oracle_seed);
  oracle->add_option("--scoring", oracle_scoring)->check(CLI::IsMember({"strict", "fractional"}));

  // count
  std::string count_labels, count_corpus, count_out;
  std::size_t count_column = 0, count_shards = 1;
  bool count_tsv = false, count_case = false;
  auto* count = app.add_subcommand("count", "label occurrence counts over a caption corpus");
  count->add_option("--labels", count_labels, "one label per line")->required()
      ->check(CLI::ExistingFile);
  count->add_option("--corpus", count_corpus, "caption file")->required()->check(CLI::ExistingFile);
  count->add_flag("--tsv", count_tsv, "tab-separated corpus");
  count->add_option("--text-column", count_column, "1-based caption column for --tsv");
  count->add_option("--shards", count_shards)->check(CLI::PositiveNumber);
  count->add_flag("--case-sensitive", count_case);
  count->add_option("--out", count_out, "counts csv")->required();

  // correlate
  std::string corr_counts, corr_recall, corr_out, corr_extremes;
  auto* correlate_cmd = app.add_subcommand("correlate", "occurrence vs per-class recall");
  correlate_cmd->add_option("--counts", corr_counts)->required()->check(CLI::ExistingFile);
  correlate_cmd->add_option("--recall", corr_recall)->required()->check(CLI::ExistingFile);
  correlate_cmd->add_option("--out", corr_out, "joined csv")->required();
  correlate_cmd->add_option("--extremes", corr_extremes, "extreme-case csv");

  // report
  std::string report_in, report_out;
  bool report_skip = false;
  auto* report = app.add_subcommand("report", "accuracy or skip-rate table from reports.csv");
  report->add_option("--reports", report_in)->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_out)->required();
  report->add_flag("--skip", report_skip, "skip-rate table instead of accuracy");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      const auto ds = load_dataset(ingest_ds);
      const auto violations = validate(ds);
      std::cout << ds.name << ": " << ds.num_classes() << " classes, " << ds.num_attributes()
                << " attributes, " << ds.num_images() << " images, flavor "
                << to_string(ds.flavor) << '\n';
      for (const auto& v : violations) std::cerr << "violation: " << v.what << '\n';
      if (!violations.empty()) return 1;
      if (!ingest_out.empty()) save_ndjson(ds, ingest_out);
    } else if (detect_cmd->parsed()) {
      const auto ds = load_dataset(detect_ds);
      const auto backend = open_backend(detect_be, ds);
      const auto result = detect(ds, DetectionConfig{detect_cutoff, detect_target}, *backend);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      auto out = open_out(detect_out);
      write_detection_ndjson(ds, result, out);
      if (!detect_dataset_out.empty()) save_ndjson(apply_detection(ds, result), detect_dataset_out);
      std::cout << "cutoff " << format_real(result.cutoff_used) << ", mean attributes per image "
                << format_real(result.mean_attrs_per_image) << '\n';
    } else if (calibrate->parsed()) {
      const auto ds = load_dataset(calib_ds);
      const auto backend = open_backend(calib_be, ds);
      std::cout << format_real(calibrate_cutoff(ds, *backend, calib_target)) << '\n';
    } else if (run_cmd->parsed()) {
      RunConfig cfg = load_run_config(run_config);
      if (!run_out.empty()) cfg.output_dir = run_out;
      if (run_seed) cfg.seed = *run_seed;
      if (run_x_min) cfg.x_min = *run_x_min;
      if (run_x_max) cfg.x_max = *run_x_max;
      if (!run_setups.empty()) {
        cfg.setups.clear();
        for (const auto& s : run_setups) cfg.setups.push_back(setup_from_string(s));
      }
      if (!run_grammars.empty()) {
        cfg.grammars.clear();
        for (const auto& g : run_grammars) cfg.grammars.push_back(grammar_kind_from_string(g));
      }
      const auto summary = run(cfg);
      for (const auto& r : summary.reports) {
        std::cout << to_string(r.key.setup) << ' ' << to_string(r.key.grammar) << " x=" << r.key.x
                  << " accuracy " << format_real(r.accuracy, 4) << " skip "
                  << format_real(r.skip_rate, 4) << '\n';
      }
      std::cout << summary.files.size() << " files in " << cfg.output_dir.string() << '\n';
    } else if (oracle->parsed()) {
      const auto ds = load_dataset(oracle_ds);
      OracleOptions o;
      o.seed = oracle_seed;
      o.trials = oracle_trials;
      o.scoring = oracle_scoring == "strict" ? OracleScoring::strict : OracleScoring::fractional;
      std::cout << "x,oracle_accuracy,skip_rate\n";
      for (std::size_t x = 1; x <= oracle_x_max; ++x) {
        if (skip_rate(ds, x) >= 1.0) break;
        std::cout << x << ',' << format_real(oracle_accuracy(ds, x, o)) << ','
                  << format_real(skip_rate(ds, x)) << '\n';
      }
    } else if (count->parsed()) {
      if (count_tsv && count_column == 0) throw InvalidArgument("--tsv needs --text-column");
      const auto labels = load_labels(count_labels);
      TermOptions topts;
      topts.case_sensitive = count_case;
      std::vector<SearchTermSet> sets;
      for (const auto& l : labels) sets.push_back(generate_terms(l, topts));
      const Matcher matcher(sets);
      CorpusOptions copts;
      copts.case_sensitive = count_case;
      copts.tsv_text_column = count_tsv ? count_column : 0;
      copts.shards = count_shards;
      const auto table = count_corpus_file(matcher, labels, count_corpus, copts);
      auto out = open_out(count_out);
      write_counts_csv(table, out);
      std::cout << table.corpus_size << " samples, " << table.skipped << " skipped\n";
    } else if (correlate_cmd->parsed()) {
      auto counts_in = open_in(corr_counts);
      auto recall_in = open_in(corr_recall);
      const auto c = correlate(read_counts_csv(counts_in), read_recall_csv(recall_in));
      auto out = open_out(corr_out);
      write_correlation_csv(c, out);
      if (!corr_extremes.empty()) {
        auto ext = open_out(corr_extremes);
        write_extremes_csv(extreme_cases(c.rows), ext);
      }
      std::cout << "joined " << c.rows.size() << ", spearman " << format_real(c.spearman, 4)
                << '\n';
    } else if (report->parsed()) {
      auto in = open_in(report_in);
      const auto reports = read_reports_csv(in);
      auto out = open_out(report_out);
      if (report_skip) write_skip_table(reports, out);
      else write_accuracy_table(reports, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
