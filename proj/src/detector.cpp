#include "vltaboo/detector.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "vltaboo/error.hpp"

namespace vltaboo {

std::size_t SimilarityPool::total() const {
  std::size_t n = 0;
  for (const auto& v : per_image) n += v.size();
  return n;
}

double SimilarityPool::mean_kept(double cutoff) const {
  if (per_image.empty()) return 0.0;
  std::size_t kept = 0;
  for (const auto& v : per_image) {
    // Sorted descending, so count the prefix strictly above the cutoff.
    kept += static_cast<std::size_t>(
        std::find_if(v.begin(), v.end(), [cutoff](const auto& s) { return !(s.similarity > cutoff); }) -
        v.begin());
  }
  return static_cast<double>(kept) / static_cast<double>(per_image.size());
}

SimilarityPool similarity_pool(const AttributeDataset& ds, const EmbeddingBackend& backend,
                               std::vector<std::string>* warnings) {
  if (ds.flavor != Flavor::per_class_attributes) {
    throw InvalidArgument("attribute detection needs a per-class-attribute dataset");
  }
  // Averaged detection embedding per attribute used by any class profile.
  std::unordered_map<AttributeId, Embedding> attr_vectors;
  for (const auto& profile : ds.class_profiles) {
    for (AttributeId a : profile.attributes) {
      if (attr_vectors.count(a)) continue;
      const auto prompts = render_detection_prompts(ds.attributes.at(a));
      const auto vecs = backend.embed_prompts(prompts);
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(vecs.front().size());
      for (const auto& v : vecs) mean += v.cast<double>();
      mean /= static_cast<double>(vecs.size());
      attr_vectors.emplace(a, l2_normalized(mean).cast<float>());
    }
  }

  SimilarityPool pool;
  pool.per_image.resize(ds.images.size());
  for (const auto& img : ds.images) {
    const auto& profile = ds.class_profiles.at(img.class_id).attributes;
    if (profile.empty()) {
      if (warnings) warnings->push_back("image " + img.key + ": class profile is empty");
      continue;
    }
    const Embedding image_vec = backend.embed_image(img);
    if (static_cast<std::size_t>(image_vec.size()) != backend.dim()) {
      throw BackendError("image embedding dimension mismatch");
    }
    auto& scored = pool.per_image[img.id];
    scored.reserve(profile.size());
    for (AttributeId a : profile) scored.push_back({a, cosine(attr_vectors.at(a), image_vec)});
    std::sort(scored.begin(), scored.end(), [](const auto& l, const auto& r) {
      return l.similarity != r.similarity ? l.similarity > r.similarity : l.attribute < r.attribute;
    });
  }
  return pool;
}

DetectionResult threshold(const SimilarityPool& pool, double cutoff) {
  DetectionResult r;
  r.cutoff_used = cutoff;
  r.per_image.resize(pool.per_image.size());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < pool.per_image.size(); ++i) {
    for (const auto& s : pool.per_image[i]) {
      if (!(s.similarity > cutoff)) break;
      r.per_image[i].push_back(s);
    }
    kept += r.per_image[i].size();
  }
  if (!pool.per_image.empty()) {
    r.mean_attrs_per_image =
        static_cast<double>(kept) / static_cast<double>(pool.per_image.size());
  }
  return r;
}

double calibrate_cutoff(const SimilarityPool& pool, double target) {
  const std::size_t n_images = pool.num_images();
  if (n_images == 0) throw InvalidArgument("calibrate_cutoff: no images");
  std::vector<double> sims;
  sims.reserve(pool.total());
  for (const auto& v : pool.per_image) {
    for (const auto& s : v) sims.push_back(s.similarity);
  }
  const double achievable = static_cast<double>(sims.size()) / static_cast<double>(n_images);
  if (!(target > 0.0) || target > achievable) {
    throw InvalidArgument("calibrate_cutoff: target " + std::to_string(target) +
                          " outside achievable range (0, " + std::to_string(achievable) + "]");
  }
  std::sort(sims.begin(), sims.end(), std::greater<>());
  // Smallest kept count K with K / n_images >= target. The largest cutoff
  // keeping K similarities lies just below the K-th largest value; search
  // for it over the sorted pool.
  const auto need = static_cast<std::size_t>(
      std::ceil(target * static_cast<double>(n_images) - 1e-9));
  const double boundary = sims[need - 1];
  // First value strictly below the boundary, if any.
  const auto below = std::upper_bound(sims.begin(), sims.end(), boundary, std::greater<>());
  double cutoff = boundary - 1e-4;
  if (below != sims.end()) cutoff = std::max(cutoff, *below);
  return cutoff;
}

double calibrate_cutoff(const AttributeDataset& ds, const EmbeddingBackend& backend,
                        double target) {
  return calibrate_cutoff(similarity_pool(ds, backend), target);
}

DetectionResult detect(const AttributeDataset& ds, const DetectionConfig& cfg,
                       const EmbeddingBackend& backend) {
  if (cfg.cutoff.has_value() == cfg.target_mean_attrs.has_value()) {
    throw InvalidArgument("detection needs exactly one of cutoff / target_mean_attrs");
  }
  if (cfg.cutoff && !(*cfg.cutoff > -1.0 && *cfg.cutoff < 1.0)) {
    throw InvalidArgument("detection cutoff must lie in (-1, 1)");
  }
  std::vector<std::string> warnings;
  const auto pool = similarity_pool(ds, backend, &warnings);
  const double cutoff = cfg.cutoff ? *cfg.cutoff : calibrate_cutoff(pool, *cfg.target_mean_attrs);
  auto result = threshold(pool, cutoff);
  result.warnings = std::move(warnings);
  return result;
}

AttributeDataset apply_detection(const AttributeDataset& ds, const DetectionResult& result) {
  if (result.per_image.size() != ds.images.size()) {
    throw InvalidArgument("detection result covers " + std::to_string(result.per_image.size()) +
                          " images, dataset has " + std::to_string(ds.images.size()));
  }
  AttributeDataset out = ds;
  for (std::size_t i = 0; i < out.images.size(); ++i) {
    auto& attrs = out.images[i].attributes;
    attrs.clear();
    for (const auto& s : result.per_image[i]) attrs.push_back(s.attribute);
  }
  out.images_detected = true;
  return out;
}

void write_detection_ndjson(const AttributeDataset& ds, const DetectionResult& r,
                            std::ostream& out) {
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& s : r.per_image[i]) attrs.push_back({s.attribute, s.similarity});
    out << nlohmann::json{{"image_id", i},
                          {"key", i < ds.images.size() ? ds.images[i].key : std::to_string(i)},
                          {"attributes", attrs}}
               .dump()
        << '\n';
  }
  out << nlohmann::json{{"summary",
                         {{"mean_attrs_per_image", r.mean_attrs_per_image},
                          {"cutoff_used", r.cutoff_used},
                          {"images", r.per_image.size()}}}}
             .dump()
      << '\n';
}

DetectionResult read_detection_ndjson(std::istream& in) {
  DetectionResult r;
  std::string line;
  bool summary = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.contains("summary")) {
      r.mean_attrs_per_image = j["summary"].at("mean_attrs_per_image").get<double>();
      r.cutoff_used = j["summary"].at("cutoff_used").get<double>();
      summary = true;
      continue;
    }
    const auto id = j.at("image_id").get<std::size_t>();
    if (id != r.per_image.size()) throw IngestError("detection ndjson: image ids out of order");
    std::vector<ScoredAttribute> attrs;
    for (const auto& pair : j.at("attributes")) {
      attrs.push_back({pair.at(0).get<AttributeId>(), pair.at(1).get<double>()});
    }
    r.per_image.push_back(std::move(attrs));
  }
  if (!summary) throw IngestError("detection ndjson has no summary record");
  return r;
}

}  // namespace vltaboo
