#include "vltaboo/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vltaboo/csv.hpp"
#include "vltaboo/detector.hpp"
#include "vltaboo/error.hpp"
#include "vltaboo/version.hpp"

namespace fs = std::filesystem;

namespace vltaboo {

// ---------------------------------------------------------------------------
// Config

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  throw InvalidArgument("config key '" + key + "': expected a number, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto u = std::stoull(v, &used, 0);
    if (used == v.size() && v.front() != '-') return u;
  } catch (const std::logic_error&) {
  }
  throw InvalidArgument("config key '" + key + "': expected a non-negative integer, got '" + v +
                        "'");
}

fs::path resolve(const fs::path& base, const std::string& v) {
  fs::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

ConfigMap parse_config(std::istream& in) {
  ConfigMap values;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw InvalidArgument("config line " + std::to_string(line_no) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    values[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return values;
}

void apply_config(RunConfig& cfg, const ConfigMap& values, const fs::path& base) {
  for (const auto& [key, v] : values) {
    if (key == "dataset.kind") cfg.dataset_kind = v;
    else if (key == "dataset.path") cfg.dataset_path = resolve(base, v);
    else if (key == "dataset.image_index") cfg.image_index = resolve(base, v);
    else if (key == "dataset.synthetic.classes") cfg.synthetic.classes = parse_uint(key, v);
    else if (key == "dataset.synthetic.attributes") cfg.synthetic.attributes = parse_uint(key, v);
    else if (key == "dataset.synthetic.images_per_class") cfg.synthetic.images_per_class = parse_uint(key, v);
    else if (key == "dataset.synthetic.profile_size") cfg.synthetic.profile_size = parse_uint(key, v);
    else if (key == "dataset.synthetic.min_image_attributes") cfg.synthetic.min_image_attributes = parse_uint(key, v);
    else if (key == "dataset.synthetic.max_image_attributes") cfg.synthetic.max_image_attributes = parse_uint(key, v);
    else if (key == "dataset.synthetic.expressions_per_description") cfg.synthetic.expressions_per_description = parse_uint(key, v);
    else if (key == "dataset.synthetic.disjoint_profiles") cfg.synthetic.disjoint_profiles = parse_bool(key, v);
    else if (key == "dataset.synthetic.seed") cfg.synthetic.seed = parse_uint(key, v);
    else if (key == "backend.kind") cfg.backend_kind = backend_kind_from_string(v);
    else if (key == "backend.model") cfg.model_name = v;
    else if (key == "backend.location") {
      cfg.backend_location = v.rfind("http://", 0) == 0 ? v : resolve(base, v).string();
    }
    else if (key == "backend.class_weight") cfg.mock.class_weight = parse_real(key, v);
    else if (key == "backend.attribute_weight") cfg.mock.attribute_weight = parse_real(key, v);
    else if (key == "backend.noise_weight") cfg.mock.noise_weight = parse_real(key, v);
    else if (key == "backend.seed") cfg.mock.seed = parse_uint(key, v);
    else if (key == "detection.cutoff") cfg.detection_cutoff = parse_real(key, v);
    else if (key == "detection.target_mean_attrs") cfg.detection_target = parse_real(key, v);
    else if (key == "setups.setups") {
      cfg.setups.clear();
      for (const auto& s : split_list(v)) cfg.setups.push_back(setup_from_string(s));
    }
    else if (key == "setups.x_min") cfg.x_min = parse_uint(key, v);
    else if (key == "setups.x_max") cfg.x_max = parse_uint(key, v);
    else if (key == "setups.grammars") {
      cfg.grammars.clear();
      for (const auto& g : split_list(v)) cfg.grammars.push_back(grammar_kind_from_string(g));
    }
    else if (key == "setups.seed") cfg.seed = parse_uint(key, v);
    else if (key == "setups.attribute_order") cfg.attribute_order = attribute_order_from_string(v);
    else if (key == "setups.slot_table") cfg.slot_table = resolve(base, v);
    else if (key == "setups.fix_articles") cfg.fix_articles = parse_bool(key, v);
    else if (key == "oracle.enabled") cfg.oracle = parse_bool(key, v);
    else if (key == "oracle.trials") cfg.oracle_trials = parse_uint(key, v);
    else if (key == "oracle.scoring") {
      if (v == "strict") cfg.oracle_scoring = OracleScoring::strict;
      else if (v == "fractional") cfg.oracle_scoring = OracleScoring::fractional;
      else throw InvalidArgument("config key 'oracle.scoring': expected strict|fractional");
    }
    else if (key == "correlate.counts") cfg.counts = resolve(base, v);
    else if (key == "output.dir") cfg.output_dir = resolve(base, v);
    else if (key == "output.galleries") cfg.write_galleries = parse_bool(key, v);
    else if (key == "output.topk") cfg.topk = parse_uint(key, v);
    else throw InvalidArgument("unknown config key '" + key + "'");
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  RunConfig cfg;
  apply_config(cfg, parse_config(in), path.parent_path());
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  static const std::set<std::string> kinds = {"cub", "awa2", "ndjson", "synthetic"};
  if (!kinds.count(cfg.dataset_kind)) {
    throw InvalidArgument("dataset.kind must be one of cub, awa2, ndjson, synthetic");
  }
  if (cfg.dataset_kind != "synthetic" && !fs::exists(cfg.dataset_path)) {
    throw InvalidArgument("dataset path does not exist: '" + cfg.dataset_path.string() + "'");
  }
  if (cfg.backend_kind == BackendKind::store && !fs::exists(cfg.backend_location)) {
    throw InvalidArgument("embedding store does not exist: '" + cfg.backend_location + "'");
  }
  if (cfg.backend_kind == BackendKind::service && cfg.backend_location.empty()) {
    throw InvalidArgument("service backend needs backend.location = http://host:port");
  }
  if (cfg.detection_cutoff && cfg.detection_target) {
    throw InvalidArgument("set only one of detection.cutoff / detection.target_mean_attrs");
  }
  if (cfg.setups.empty()) throw InvalidArgument("no setups selected");
  if (cfg.x_min > cfg.x_max) throw InvalidArgument("setups.x_min exceeds setups.x_max");
  for (Setup s : cfg.setups) {
    if ((s == Setup::S4 || s == Setup::S5) && cfg.x_max == 0) {
      throw InvalidArgument(std::string(to_string(s)) + " requires x >= 1 but x_max = 0");
    }
  }
  if (!cfg.slot_table.empty() && !fs::exists(cfg.slot_table)) {
    throw InvalidArgument("slot table does not exist: '" + cfg.slot_table.string() + "'");
  }
  if (!cfg.counts.empty() && !fs::exists(cfg.counts)) {
    throw InvalidArgument("counts file does not exist: '" + cfg.counts.string() + "'");
  }
  if (cfg.oracle_trials == 0) throw InvalidArgument("oracle.trials must be >= 1");
}

AttributeDataset load_config_dataset(const RunConfig& cfg) {
  if (cfg.dataset_kind == "cub") return load_cub(cfg.dataset_path);
  if (cfg.dataset_kind == "awa2") {
    Awa2Options opts;
    if (!cfg.image_index.empty()) opts.image_index = cfg.image_index;
    return load_awa2(cfg.dataset_path, opts);
  }
  if (cfg.dataset_kind == "ndjson") return load_ndjson(cfg.dataset_path);
  return make_synthetic_dataset(cfg.synthetic);
}

std::unique_ptr<EmbeddingBackend> make_backend(const RunConfig& cfg, const AttributeDataset& ds) {
  switch (cfg.backend_kind) {
    case BackendKind::mock: return std::make_unique<MockBackend>(ds, cfg.mock);
    case BackendKind::store:
      return std::make_unique<StoreBackend>(StoreBackend::open(cfg.backend_location));
    case BackendKind::service: return std::make_unique<ServiceBackend>(cfg.backend_location);
  }
  throw InvalidArgument("unknown backend kind");
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class BundleWriter {
 public:
  explicit BundleWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  std::ofstream open(const fs::path& rel) {
    const fs::path full = dir_ / rel;
    fs::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + full.string());
    files_.push_back(rel);
    return out;
  }

  const std::vector<fs::path>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

PromptGrammar make_grammar(const RunConfig& cfg, const AttributeDataset& ds, GrammarKind kind) {
  PromptGrammar g;
  g.kind = kind;
  g.base_noun = ds.base_noun();
  g.fix_articles = cfg.fix_articles;
  if (kind == GrammarKind::content_based) {
    if (!cfg.slot_table.empty()) {
      g.slots = SlotTable::load(cfg.slot_table);
    } else if (ds.name == "awa2") {
      g.slots = SlotTable::awa2_default();
    } else {
      throw InvalidArgument("content_based grammar needs setups.slot_table for this dataset");
    }
  }
  return g;
}

std::string report_stem(const EvalReport& r) {
  return std::string(to_string(r.key.setup)) + "_" + to_string(r.key.grammar) + "_x" +
         std::to_string(r.key.x);
}

}  // namespace

RunSummary run(const RunConfig& cfg) {
  stage("config", [&] { validate_config(cfg); });

  AttributeDataset ds = stage("ingest", [&] {
    auto d = load_config_dataset(cfg);
    const auto violations = validate(d);
    if (!violations.empty()) {
      throw IngestError("dataset invalid: " + violations.front().what + " (" +
                        std::to_string(violations.size()) + " violations)");
    }
    return d;
  });

  BundleWriter bundle(cfg.output_dir);
  auto backend = stage("backend", [&] { return make_backend(cfg, ds); });

  std::optional<DetectionResult> detection;
  if (!ds.has_image_attributes()) {
    stage("detect", [&] {
      if (!cfg.detection_cutoff && !cfg.detection_target) {
        throw InvalidArgument(
            "per-class dataset needs detection.cutoff or detection.target_mean_attrs");
      }
      DetectionConfig dc{cfg.detection_cutoff, cfg.detection_target};
      detection = detect(ds, dc, *backend);
      auto out = bundle.open("detection.ndjson");
      write_detection_ndjson(ds, *detection, out);
      ds = apply_detection(ds, *detection);
    });
  }

  stage("validate", [&] {
    std::size_t max_attrs = 0;
    for (const auto& img : ds.images) max_attrs = std::max(max_attrs, img.attributes.size());
    if (cfg.x_max > max_attrs) {
      throw InvalidArgument("setups.x_max = " + std::to_string(cfg.x_max) +
                            " exceeds the largest per-image attribute count " +
                            std::to_string(max_attrs));
    }
  });

  std::vector<GrammarKind> grammars = cfg.grammars;
  if (grammars.empty()) {
    grammars.push_back(ds.name == "cub" ? GrammarKind::cub_style : GrammarKind::awa2_comma_list);
  }

  RunSummary summary;
  stage("setups", [&] {
    for (GrammarKind gk : grammars) {
      const PromptGrammar grammar = make_grammar(cfg, ds, gk);
      for (Setup s : cfg.setups) {
        const std::size_t first_x =
            (s == Setup::S4 || s == Setup::S5) ? std::max<std::size_t>(1, cfg.x_min) : cfg.x_min;
        for (std::size_t x = first_x; x <= cfg.x_max; ++x) {
          SetupSpec spec{s, x, grammar, cfg.seed, cfg.attribute_order};
          const std::string stem = std::string(to_string(s)) + "_" + to_string(gk) + "_x" +
                                   std::to_string(x);
          std::ofstream galleries;
          std::ofstream topk_out;
          RunSetupOptions opts;
          if (cfg.write_galleries) {
            galleries = bundle.open(fs::path("galleries") / (stem + ".ndjson"));
            opts.galleries = &galleries;
          }
          if (cfg.topk > 0) {
            topk_out = bundle.open(fs::path("topk") / (stem + ".ndjson"));
            opts.topk = &topk_out;
            opts.topk_k = cfg.topk;
          }
          summary.reports.push_back(run_setup(ds, *backend, spec, opts));
        }
      }
    }
  });

  stage("report", [&] {
    {
      auto out = bundle.open("reports.csv");
      write_report_csv_header(out);
      for (const auto& r : summary.reports) write_report_csv_row(r, out);
    }
    for (const auto& r : summary.reports) {
      auto out = bundle.open(fs::path("recall") / (report_stem(r) + ".csv"));
      write_recall_csv(r, ds, out);
    }
    {
      auto out = bundle.open("accuracy_table.csv");
      write_accuracy_table(summary.reports, out);
    }
    {
      auto out = bundle.open("skip_rates.csv");
      const auto ledger = skip_ledger(ds, cfg.x_max);
      out << "x,skipped,total,rate\n";
      for (std::size_t x = 0; x <= cfg.x_max; ++x) {
        out << x << ',' << ledger.skipped[x] << ',' << ledger.total << ','
            << format_real(ledger.rate(x)) << '\n';
      }
    }
  });

  const bool has_s4 = std::find(cfg.setups.begin(), cfg.setups.end(), Setup::S4) != cfg.setups.end();
  if (cfg.oracle && has_s4) {
    stage("oracle", [&] {
      auto out = bundle.open("oracle.csv");
      out << "x,oracle_accuracy\n";
      for (std::size_t x = std::max<std::size_t>(1, cfg.x_min); x <= cfg.x_max; ++x) {
        OracleOptions o{cfg.seed, cfg.oracle_trials, cfg.oracle_scoring, cfg.attribute_order};
        out << x << ',' << format_real(oracle_accuracy(ds, x, o)) << '\n';
      }
    });
  }

  if (!cfg.counts.empty()) {
    stage("correlate", [&] {
      const auto it = std::find_if(summary.reports.begin(), summary.reports.end(),
                                   [](const EvalReport& r) {
                                     return r.key.setup == Setup::S1 && r.key.x == 0;
                                   });
      EvalReport baseline;
      if (it != summary.reports.end()) {
        baseline = *it;
      } else {
        PromptGrammar g = make_grammar(cfg, ds, GrammarKind::class_only);
        baseline = run_setup(ds, *backend, SetupSpec{Setup::S1, 0, g, cfg.seed, cfg.attribute_order});
      }
      std::vector<RecallEntry> recalls;
      for (const auto& c : baseline.per_class) {
        recalls.push_back({ds.classes[c.class_id].label, c.recall(), c.evaluated});
      }
      std::ifstream in(cfg.counts);
      const auto corr = correlate(read_counts_csv(in), recalls);
      auto out = bundle.open("correlation.csv");
      write_correlation_csv(corr, out);
      auto ext = bundle.open("extremes.csv");
      write_extremes_csv(extreme_cases(corr.rows), ext);
    });
  }

  stage("manifest", [&] {
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : summary.reports) reports.push_back(report_stem(r));
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : bundle.files()) files.push_back(f.generic_string());
    const auto& d = backend->descriptor();
    nlohmann::json manifest{
        {"tool", "vltaboo"},
        {"version", kVersion},
        {"created_at", utc_now()},
        {"dataset", {{"name", ds.name},
                     {"kind", cfg.dataset_kind},
                     {"content_hash", hex64(content_hash(ds))},
                     {"images", ds.num_images()},
                     {"classes", ds.num_classes()},
                     {"attributes", ds.num_attributes()}}},
        {"backend", {{"kind", to_string(d.kind)},
                     {"model", d.model_name},
                     {"dim", d.dim},
                     {"location", d.location},
                     {"seed", d.seed}}},
        {"seeds", {{"setups", cfg.seed}, {"mock", cfg.mock.seed}, {"synthetic", cfg.synthetic.seed}}},
        {"attribute_order", to_string(cfg.attribute_order)},
        {"reports", reports},
        {"files", files}};
    if (cfg.backend_kind == BackendKind::mock) {
      manifest["backend"]["structure"] = {{"class_weight", cfg.mock.class_weight},
                                          {"attribute_weight", cfg.mock.attribute_weight},
                                          {"noise_weight", cfg.mock.noise_weight}};
    }
    if (detection) {
      manifest["detection"] = {{"cutoff_used", detection->cutoff_used},
                               {"mean_attrs_per_image", detection->mean_attrs_per_image}};
    }
    std::ofstream out(bundle.dir() / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
  });
  summary.files = bundle.files();
  summary.files.push_back("manifest.json");
  return summary;
}

// ---------------------------------------------------------------------------
// Correlation

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

Correlation correlate(const OccurrenceTable& counts, const std::vector<RecallEntry>& recalls) {
  std::map<std::string, std::size_t> by_label;
  for (std::size_t i = 0; i < recalls.size(); ++i) by_label.emplace(recalls[i].label, i);
  Correlation c;
  std::set<std::string> joined;
  for (std::size_t i = 0; i < counts.labels.size(); ++i) {
    const auto it = by_label.find(counts.labels[i]);
    if (it == by_label.end()) {
      c.unjoined_counts.push_back(counts.labels[i]);
      continue;
    }
    c.rows.push_back({counts.labels[i], counts.counts[i].samples_matched, recalls[it->second].recall});
    joined.insert(counts.labels[i]);
  }
  for (const auto& r : recalls) {
    if (!joined.count(r.label)) c.unjoined_recalls.push_back(r.label);
  }
  if (c.rows.empty()) throw InvalidArgument("correlate: no class label joins counts and recalls");
  std::vector<double> occ, rec, log_occ;
  for (const auto& r : c.rows) {
    occ.push_back(static_cast<double>(r.occurrence));
    log_occ.push_back(std::log10(1.0 + static_cast<double>(r.occurrence)));
    rec.push_back(r.recall);
  }
  c.spearman = spearman(occ, rec);
  c.pearson_log = pearson(log_occ, rec);
  return c;
}

ExtremeCases extreme_cases(const std::vector<CorrelationRow>& rows) {
  ExtremeCases e;
  for (const auto& r : rows) {
    if (r.occurrence < 100 && r.recall > 0.75) e.low_occurrence_high_recall.push_back(r);
    if (r.occurrence > 100000 && r.recall < 0.05) e.high_occurrence_low_recall.push_back(r);
  }
  return e;
}

std::vector<RecallEntry> read_recall_csv(std::istream& in) {
  std::vector<RecallEntry> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = csv::split(line);
    if (f.size() != 4) throw InvalidArgument("recall CSV: expected class,label,recall,n");
    out.push_back({f[1], std::stod(f[2]), static_cast<std::size_t>(std::stoull(f[3]))});
  }
  return out;
}

void write_correlation_csv(const Correlation& c, std::ostream& out) {
  out << "label,occurrence,recall\n";
  for (const auto& r : c.rows) {
    out << csv::escape(r.label) << ',' << r.occurrence << ',' << format_real(r.recall) << '\n';
  }
  out << "# spearman," << format_real(c.spearman) << '\n';
  out << "# pearson_log10," << format_real(c.pearson_log) << '\n';
  for (const auto& l : c.unjoined_counts) out << "# unjoined_count," << csv::escape(l) << '\n';
  for (const auto& l : c.unjoined_recalls) out << "# unjoined_recall," << csv::escape(l) << '\n';
}

void write_extremes_csv(const ExtremeCases& e, std::ostream& out) {
  out << "group,label,occurrence,recall\n";
  for (const auto& r : e.low_occurrence_high_recall) {
    out << "low_occurrence_high_recall," << csv::escape(r.label) << ',' << r.occurrence << ','
        << format_real(r.recall) << '\n';
  }
  for (const auto& r : e.high_occurrence_low_recall) {
    out << "high_occurrence_low_recall," << csv::escape(r.label) << ',' << r.occurrence << ','
        << format_real(r.recall) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tables

std::vector<EvalReport> read_reports_csv(std::istream& in) {
  std::vector<EvalReport> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = csv::split(line);
    if (f.size() != 8) throw InvalidArgument("reports CSV: expected 8 columns");
    EvalReport r;
    r.key = {f[0], f[1], setup_from_string(f[2]), grammar_kind_from_string(f[3]),
             static_cast<std::size_t>(std::stoull(f[4]))};
    r.accuracy = std::stod(f[5]);
    r.skip_rate = std::stod(f[6]);
    r.n_evaluated = static_cast<std::size_t>(std::stoull(f[7]));
    out.push_back(std::move(r));
  }
  return out;
}

void write_accuracy_table(const std::vector<EvalReport>& reports, std::ostream& out) {
  std::size_t x_max = 0;
  for (const auto& r : reports) x_max = std::max(x_max, r.key.x);
  using RowKey = std::tuple<int, std::string, std::string, std::string>;
  std::map<RowKey, std::map<std::size_t, double>> rows;
  for (const auto& r : reports) {
    rows[{static_cast<int>(r.key.setup), r.key.model, r.key.dataset, to_string(r.key.grammar)}]
        [r.key.x] = r.accuracy;
  }
  out << "setup,model,dataset,grammar";
  for (std::size_t x = 0; x <= x_max; ++x) out << ",x" << x;
  out << '\n';
  for (const auto& [key, cells] : rows) {
    out << to_string(static_cast<Setup>(std::get<0>(key))) << ',' << std::get<1>(key) << ','
        << std::get<2>(key) << ',' << std::get<3>(key);
    for (std::size_t x = 0; x <= x_max; ++x) {
      const auto it = cells.find(x);
      out << ',' << (it == cells.end() ? "-" : format_real(it->second, 4));
    }
    out << '\n';
  }
}

void write_skip_table(const std::vector<EvalReport>& reports, std::ostream& out) {
  std::size_t x_max = 0;
  for (const auto& r : reports) x_max = std::max(x_max, r.key.x);
  std::map<std::pair<std::string, std::string>, std::map<std::size_t, double>> rows;
  for (const auto& r : reports) {
    // S5 applies an extra absent-attribute rule; the table mirrors S1-S4.
    if (r.key.setup == Setup::S5 || r.key.x == 0) continue;
    rows[{r.key.model, r.key.dataset}][r.key.x] = r.skip_rate;
  }
  out << "model,dataset";
  for (std::size_t x = 1; x <= x_max; ++x) out << ',' << x;
  out << '\n';
  for (const auto& [key, cells] : rows) {
    out << key.first << ',' << key.second;
    for (std::size_t x = 1; x <= x_max; ++x) {
      const auto it = cells.find(x);
      out << ',' << (it == cells.end() ? "-" : format_real(it->second, 4));
    }
    out << '\n';
  }
}

}  // namespace vltaboo
