#include "vltaboo/scorer.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "vltaboo/error.hpp"
#include "vltaboo/math.hpp"
#include "vltaboo/parallel.hpp"

namespace vltaboo {

std::string format_real(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ScoredGallery score_embeddings(const Embedding& image, const EmbeddingMatrix& prompts,
                               std::size_t correct_index) {
  if (prompts.rows() == 0) throw InvalidArgument("score_gallery: empty gallery");
  if (correct_index >= static_cast<std::size_t>(prompts.rows())) {
    throw InvalidArgument("score_gallery: correct index out of range");
  }
  ScoredGallery s;
  s.similarities = cosine_similarities(prompts, image);
  s.probabilities = softmax(s.similarities);
  s.predicted_index = static_cast<std::size_t>(argmax(s.similarities));
  s.correct_index = correct_index;
  s.correct = s.predicted_index == correct_index;
  s.tied = count_max(s.similarities) > 1;
  return s;
}

namespace {

EmbeddingMatrix stack(const std::vector<Embedding>& rows, std::size_t dim) {
  EmbeddingMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<std::size_t>(rows[i].size()) != dim) {
      throw BackendError("embedding dimension " + std::to_string(rows[i].size()) +
                         " disagrees with backend dimension " + std::to_string(dim));
    }
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

/// Memo of prompt embeddings shared across galleries. Keyed by text plus the
/// structural tags, since some backends read the tags.
class PromptCache {
 public:
  PromptCache(const EmbeddingBackend& backend, std::size_t capacity)
      : backend_(backend), capacity_(capacity) {}

  std::vector<Embedding> embed(const std::vector<Prompt>& prompts) {
    std::vector<Embedding> out(prompts.size());
    std::vector<Prompt> missing;
    std::vector<std::size_t> missing_pos;
    std::vector<std::string> keys(prompts.size());
    {
      std::lock_guard lock(mutex_);
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        keys[i] = key(prompts[i]);
        const auto it = cache_.find(keys[i]);
        if (it != cache_.end()) {
          out[i] = it->second;
        } else {
          missing.push_back(prompts[i]);
          missing_pos.push_back(i);
        }
      }
    }
    if (missing.empty()) return out;
    auto fresh = backend_.embed_prompts(missing);
    if (fresh.size() != missing.size()) throw BackendError("backend returned wrong batch size");
    std::lock_guard lock(mutex_);
    for (std::size_t j = 0; j < missing.size(); ++j) {
      out[missing_pos[j]] = fresh[j];
      if (cache_.size() < capacity_) cache_.emplace(keys[missing_pos[j]], std::move(fresh[j]));
    }
    return out;
  }

 private:
  static std::string key(const Prompt& p) {
    std::string k = p.text;
    k += '\x1f';
    k += p.class_id ? std::to_string(*p.class_id) : "-";
    for (AttributeId a : p.attributes) {
      k += ',';
      k += std::to_string(a);
    }
    return k;
  }

  const EmbeddingBackend& backend_;
  std::size_t capacity_;
  std::mutex mutex_;
  std::unordered_map<std::string, Embedding> cache_;
};

ScoredGallery score_with(const std::vector<Embedding>& prompt_vecs, const Embedding& image_vec,
                         const GallerySet& gallery, std::size_t dim) {
  if (static_cast<std::size_t>(image_vec.size()) != dim) {
    throw BackendError("image embedding dimension mismatch");
  }
  auto s = score_embeddings(image_vec, stack(prompt_vecs, dim), gallery.correct_index);
  s.image = gallery.image;
  s.classes = gallery.classes;
  return s;
}

}  // namespace

ScoredGallery score_gallery(const EmbeddingBackend& backend, const ImageAnnotation& image,
                            const GallerySet& gallery) {
  if (gallery.prompts.empty()) throw InvalidArgument("score_gallery: empty gallery");
  try {
    const auto prompt_vecs = backend.embed_prompts(gallery.prompts);
    const auto image_vec = backend.embed_image(image);
    return score_with(prompt_vecs, image_vec, gallery, backend.dim());
  } catch (const BackendError& e) {
    throw BackendError("scoring image " + image.key + ": " + e.what(), e.retryable());
  }
}

EvalReport run_setup(const AttributeDataset& ds, const EmbeddingBackend& backend,
                     const SetupSpec& spec, const RunSetupOptions& opts) {
  check_spec(spec);
  const std::size_t n = ds.images.size();
  std::vector<ImageId> order = opts.order;
  if (order.empty()) {
    order.resize(n);
    std::iota(order.begin(), order.end(), ImageId{0});
  } else if (order.size() != n) {
    throw InvalidArgument("run_setup: image order must be a permutation of all images");
  }

  struct Slot {
    std::optional<GallerySet> gallery;
    std::optional<ScoredGallery> scored;
  };
  std::vector<Slot> slots(n);
  PromptCache cache(backend, 1u << 18);

  parallel_for(n, [&](std::size_t i) {
    const ImageId id = order[i];
    auto outcome = build_gallery(ds, id, spec);
    if (!outcome.gallery) return;
    const auto& img = ds.images[id];
    try {
      const auto prompt_vecs = cache.embed(outcome.gallery->prompts);
      const auto image_vec = backend.embed_image(img);
      slots[id].scored = score_with(prompt_vecs, image_vec, *outcome.gallery, backend.dim());
    } catch (const BackendError& e) {
      throw BackendError("scoring image " + img.key + ": " + e.what(), e.retryable());
    }
    slots[id].gallery = std::move(outcome.gallery);
  });

  EvalReport r;
  r.key = {backend.descriptor().model_name, ds.name, spec.setup, spec.grammar.kind, spec.x};
  r.n_images = n;
  r.per_class.resize(ds.num_classes());
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    r.per_class[c].class_id = static_cast<ClassId>(c);
  }
  for (std::size_t id = 0; id < n; ++id) {
    const auto& slot = slots[id];
    if (!slot.scored) continue;
    ++r.n_evaluated;
    auto& rec = r.per_class.at(ds.images[id].class_id);
    ++rec.evaluated;
    if (slot.scored->correct) {
      ++r.n_correct;
      ++rec.correct;
    }
    r.ties += slot.scored->tied ? 1 : 0;
    r.short_prompts += slot.gallery->short_prompts;
    if (opts.galleries) write_gallery_ndjson(*slot.gallery, spec.setup, spec.x, *opts.galleries);
    if (opts.topk) {
      write_topk_ndjson(*slot.scored, ds, std::min(opts.topk_k, slot.gallery->prompts.size()),
                        *opts.topk);
    }
  }
  if (r.n_evaluated == 0) {
    throw InvalidArgument(std::string("all skipped: no image carries enough attributes for ") +
                          to_string(spec.setup) + " at x = " + std::to_string(spec.x));
  }
  r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n_evaluated);
  r.skip_rate = static_cast<double>(n - r.n_evaluated) / static_cast<double>(n);
  return r;
}

std::vector<std::pair<ClassId, double>> topk(const ScoredGallery& s, std::size_t k) {
  const auto n = static_cast<std::size_t>(s.probabilities.size());
  if (k > n) throw InvalidArgument("topk: k exceeds gallery size");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s.probabilities(static_cast<Eigen::Index>(a)) >
           s.probabilities(static_cast<Eigen::Index>(b));
  });
  std::vector<std::pair<ClassId, double>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const ClassId cls = s.classes.empty() ? static_cast<ClassId>(idx[i]) : s.classes.at(idx[i]);
    out.emplace_back(cls, s.probabilities(static_cast<Eigen::Index>(idx[i])));
  }
  return out;
}

std::optional<DistanceProfile> distance_profile(const EmbeddingBackend& backend,
                                                const AttributeDataset& ds, ImageId image,
                                                const std::vector<ClassId>& class_set,
                                                std::size_t x_max, const SetupSpec& spec_base) {
  const auto& img = ds.images.at(image);
  if (img.attributes.size() < x_max) return std::nullopt;
  // One nested draw so row x is a prefix of row x + 1.
  const auto order = spec_base.attribute_order == AttributeOrder::ranked
                         ? AttributeOrder::ranked
                         : AttributeOrder::prefix_nested;
  auto attrs = sampling::arrange(
      ds, img.attributes, sampling::stream_seed(spec_base.seed, image, 0, x_max, order), order);
  attrs.resize(x_max);

  std::vector<Prompt> prompts;
  prompts.reserve(class_set.size() * (x_max + 1));
  for (ClassId c : class_set) {
    for (std::size_t x = 0; x <= x_max; ++x) {
      prompts.push_back(
          render(spec_base.grammar, ds, c, std::span<const AttributeId>(attrs.data(), x)));
    }
  }
  const auto vecs = backend.embed_prompts(prompts);
  const auto image_vec = backend.embed_image(img);
  const auto sims = cosine_similarities(stack(vecs, backend.dim()), image_vec);

  DistanceProfile p;
  p.image = image;
  p.classes = class_set;
  p.distances.resize(static_cast<Eigen::Index>(class_set.size()),
                     static_cast<Eigen::Index>(x_max + 1));
  for (std::size_t c = 0; c < class_set.size(); ++c) {
    for (std::size_t x = 0; x <= x_max; ++x) {
      const double d = 1.0 - sims(static_cast<Eigen::Index>(c * (x_max + 1) + x));
      p.distances(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(x)) =
          std::clamp(d, 0.0, 2.0);
    }
  }
  return p;
}

void write_report_csv_header(std::ostream& out) {
  out << "model,dataset,setup,grammar,x,accuracy,skip_rate,n_evaluated\n";
}

void write_report_csv_row(const EvalReport& r, std::ostream& out) {
  out << r.key.model << ',' << r.key.dataset << ',' << to_string(r.key.setup) << ','
      << to_string(r.key.grammar) << ',' << r.key.x << ',' << format_real(r.accuracy) << ','
      << format_real(r.skip_rate) << ',' << r.n_evaluated << '\n';
}

namespace {
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}
}  // namespace

void write_recall_csv(const EvalReport& r, const AttributeDataset& ds, std::ostream& out) {
  out << "class,label,recall,n\n";
  for (const auto& c : r.per_class) {
    out << c.class_id << ',' << csv_field(ds.classes.at(c.class_id).label) << ','
        << format_real(c.recall()) << ',' << c.evaluated << '\n';
  }
}

void write_topk_ndjson(const ScoredGallery& s, const AttributeDataset& ds, std::size_t k,
                       std::ostream& out) {
  nlohmann::json top = nlohmann::json::array();
  for (const auto& [cls, prob] : topk(s, k)) {
    top.push_back({{"class", cls}, {"label", ds.classes.at(cls).label}, {"probability", prob}});
  }
  out << nlohmann::json{{"image_id", s.image},
                        {"key", ds.images.at(s.image).key},
                        {"true_class", ds.images.at(s.image).class_id},
                        {"correct", s.correct},
                        {"top", top}}
             .dump()
      << '\n';
}

void write_distance_profile_ndjson(const DistanceProfile& p, std::ostream& out) {
  for (std::size_t c = 0; c < p.classes.size(); ++c) {
    std::vector<double> row(static_cast<std::size_t>(p.distances.cols()));
    for (std::size_t x = 0; x < row.size(); ++x) {
      row[x] = p.distances(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(x));
    }
    out << nlohmann::json{{"image_id", p.image}, {"class", p.classes[c]}, {"distances", row}}.dump()
        << '\n';
  }
}

}  // namespace vltaboo
