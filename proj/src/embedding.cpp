#include "vltaboo/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "vltaboo/error.hpp"
#include "vltaboo/rng.hpp"

namespace vltaboo {

const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::store: return "store";
    case BackendKind::service: return "service";
    case BackendKind::mock: return "mock";
  }
  return "?";
}

BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "store") return BackendKind::store;
  if (s == "service") return BackendKind::service;
  if (s == "mock") return BackendKind::mock;
  throw InvalidArgument("unknown backend kind '" + s + "'");
}

std::vector<Embedding> EmbeddingBackend::embed_prompts(std::span<const Prompt> prompts) const {
  std::vector<std::string> texts;
  texts.reserve(prompts.size());
  for (const auto& p : prompts) texts.push_back(p.text);
  return embed_texts(texts);
}

std::vector<Embedding> EmbeddingBackend::embed_images(
    std::span<const ImageAnnotation> images) const {
  std::vector<Embedding> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed_image(img));
  return out;
}

// ---------------------------------------------------------------------------
// Mock

Eigen::VectorXd hash_noise(std::string_view key, std::uint64_t seed, std::size_t dim) {
  SplitMix rng(mix_seed(seed, fnv1a64(key)));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 2.0 * rng.uniform() - 1.0;
  double sq = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) sq += v(i) * v(i);
  return v / std::sqrt(sq);
}

MockBackend::MockBackend(const AttributeDataset& dataset, MockStructure structure,
                         std::size_t noise_dims)
    : structure_(structure),
      num_classes_(dataset.num_classes()),
      num_attributes_(dataset.num_attributes()) {
  if (structure.class_weight < 0 || structure.attribute_weight < 0 ||
      structure.noise_weight < 0) {
    throw InvalidArgument("mock weights must be >= 0");
  }
  descriptor_.kind = BackendKind::mock;
  descriptor_.model_name = "mock";
  descriptor_.dim = num_classes_ + num_attributes_ + noise_dims;
  descriptor_.seed = structure.seed;
  if (descriptor_.dim == 0) throw InvalidArgument("mock backend has zero dimension");
  for (const auto& img : dataset.images) {
    if (!img.attributes.empty()) image_truth_[img.id] = img.attributes;
  }
  // Per-class datasets without per-image sets fall back to the class profile.
  if (!dataset.has_image_attributes()) {
    for (const auto& img : dataset.images) {
      image_truth_[img.id] = dataset.class_profiles.at(img.class_id).attributes;
    }
  }
}

void MockBackend::set_image_truth(ImageId image, std::vector<AttributeId> attributes) {
  image_truth_[image] = std::move(attributes);
}

Embedding MockBackend::compose(const std::optional<ClassId>& cls,
                               std::span<const AttributeId> attrs,
                               std::string_view noise_key) const {
  const auto dim = static_cast<Eigen::Index>(descriptor_.dim);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  if (cls) {
    if (*cls >= num_classes_) throw BackendError("mock: class id out of range");
    v(static_cast<Eigen::Index>(*cls)) += structure_.class_weight;
  }
  for (AttributeId a : attrs) {
    if (a >= num_attributes_) throw BackendError("mock: attribute id out of range");
    v(static_cast<Eigen::Index>(num_classes_ + a)) += structure_.attribute_weight;
  }
  if (structure_.noise_weight > 0) {
    v += structure_.noise_weight * hash_noise(noise_key, structure_.seed, descriptor_.dim);
  }
  if (v.norm() == 0.0) v = hash_noise(noise_key, structure_.seed, descriptor_.dim);
  return l2_normalized(v).cast<float>();
}

std::vector<Embedding> MockBackend::embed_texts(std::span<const std::string> texts) const {
  if (texts.empty()) throw InvalidArgument("embed_texts: empty batch");
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(compose(std::nullopt, {}, t));
  return out;
}

std::vector<Embedding> MockBackend::embed_prompts(std::span<const Prompt> prompts) const {
  if (prompts.empty()) throw InvalidArgument("embed_prompts: empty batch");
  std::vector<Embedding> out;
  out.reserve(prompts.size());
  for (const auto& p : prompts) out.push_back(compose(p.class_id, p.attributes, p.text));
  return out;
}

Embedding MockBackend::embed_image(const ImageAnnotation& image) const {
  static const std::vector<AttributeId> none;
  const auto it = image_truth_.find(image.id);
  const auto& attrs = it == image_truth_.end() ? none : it->second;
  return compose(image.class_id, attrs, "image:" + image.key);
}

// ---------------------------------------------------------------------------
// Store file formats

namespace {

constexpr char kStoreMagic[8] = {'V', 'L', 'T', 'B', 'S', 'T', 'R', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw BackendError("store file truncated");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

std::string get_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw BackendError("store file truncated");
  }
  return s;
}

const char* kind_name(StoreKeyKind k) { return k == StoreKeyKind::text ? "text" : "image"; }

StoreKeyKind kind_from_name(const std::string& s) {
  if (s == "text") return StoreKeyKind::text;
  if (s == "image") return StoreKeyKind::image;
  throw BackendError("store record has unknown key kind '" + s + "'");
}

void check_record(const StoreContents& store, const StoreRecord& r) {
  if (r.values.size() != store.dim) {
    throw BackendError("store record '" + r.key + "' has dimension " +
                       std::to_string(r.values.size()) + ", expected " +
                       std::to_string(store.dim));
  }
}

}  // namespace

void write_store(const StoreContents& store, std::ostream& out) {
  out.write(kStoreMagic, sizeof kStoreMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.model_name.size()));
  out.write(store.model_name.data(), static_cast<std::streamsize>(store.model_name.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim));
  put_le<std::uint64_t>(out, store.records.size());
  for (const auto& r : store.records) {
    check_record(store, r);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.kind));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.key.size()));
    out.write(r.key.data(), static_cast<std::streamsize>(r.key.size()));
    for (float f : r.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
}

StoreContents read_store(std::istream& in) {
  char magic[sizeof kStoreMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kStoreMagic, sizeof magic) != 0) {
    throw BackendError("not a binary embedding store (bad magic)");
  }
  StoreContents s;
  s.model_name = get_bytes(in, get_le<std::uint32_t>(in));
  s.dim = get_le<std::uint32_t>(in);
  const auto count = get_le<std::uint64_t>(in);
  s.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    StoreRecord r;
    const auto kind = get_le<std::uint8_t>(in);
    if (kind > 1) throw BackendError("store record has unknown key kind");
    r.kind = static_cast<StoreKeyKind>(kind);
    r.key = get_bytes(in, get_le<std::uint32_t>(in));
    r.values.resize(s.dim);
    for (auto& f : r.values) f = std::bit_cast<float>(get_le<std::uint32_t>(in));
    s.records.push_back(std::move(r));
  }
  return s;
}

void write_store_ndjson(const StoreContents& store, std::ostream& out) {
  out << nlohmann::json{{"model", store.model_name},
                        {"dim", store.dim},
                        {"count", store.records.size()}}
             .dump()
      << '\n';
  for (const auto& r : store.records) {
    check_record(store, r);
    out << nlohmann::json{{"kind", kind_name(r.kind)}, {"key", r.key}, {"values", r.values}}
               .dump()
        << '\n';
  }
}

StoreContents read_store_ndjson(std::istream& in) {
  StoreContents s;
  std::string line;
  bool header = false;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!header) {
        s.model_name = j.at("model").get<std::string>();
        s.dim = j.at("dim").get<std::size_t>();
        expected = j.at("count").get<std::size_t>();
        header = true;
        continue;
      }
      StoreRecord r;
      r.kind = kind_from_name(j.at("kind").get<std::string>());
      r.key = j.at("key").get<std::string>();
      r.values = j.at("values").get<std::vector<float>>();
      check_record(s, r);
      s.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed ndjson store: ") + e.what());
    }
  }
  if (!header) throw BackendError("ndjson store has no header");
  if (s.records.size() != expected) {
    throw BackendError("ndjson store declares " + std::to_string(expected) + " records, has " +
                       std::to_string(s.records.size()));
  }
  return s;
}

StoreContents load_store_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot open embedding store " + path.string());
  const int first = in.peek();
  if (first == '{') return read_store_ndjson(in);
  return read_store(in);
}

void save_store_file(const StoreContents& store, const std::filesystem::path& path, bool ndjson) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BackendError("cannot write embedding store " + path.string());
  if (ndjson) {
    write_store_ndjson(store, out);
  } else {
    write_store(store, out);
  }
}

// ---------------------------------------------------------------------------
// Store backend

StoreBackend::StoreBackend(StoreContents contents, std::string location) {
  if (contents.dim == 0) throw BackendError("embedding store has zero dimension");
  descriptor_.kind = BackendKind::store;
  descriptor_.model_name = contents.model_name;
  descriptor_.dim = contents.dim;
  descriptor_.location = std::move(location);
  vectors_.reserve(contents.records.size());
  for (auto& r : contents.records) {
    check_record(contents, r);
    Embedding v = Eigen::Map<const Eigen::VectorXf>(r.values.data(),
                                                    static_cast<Eigen::Index>(r.values.size()));
    // Already-normalized records are returned bit-for-bit.
    if (!is_unit_norm(v)) v = l2_normalized(v);
    auto& index = r.kind == StoreKeyKind::text ? text_index_ : image_index_;
    const auto [it, inserted] = index.emplace(std::move(r.key), vectors_.size());
    if (inserted) {
      vectors_.push_back(std::move(v));
    } else {
      vectors_[it->second] = std::move(v);
    }
  }
}

StoreBackend StoreBackend::open(const std::filesystem::path& path) {
  return StoreBackend(load_store_file(path), path.string());
}

Embedding StoreBackend::lookup(StoreKeyKind kind, const std::string& key) const {
  const auto& index = kind == StoreKeyKind::text ? text_index_ : image_index_;
  const auto it = index.find(key);
  if (it == index.end()) {
    throw BackendError(std::string("embedding store has no ") + kind_name(kind) + " entry for '" +
                       key + "'");
  }
  return vectors_[it->second];
}

std::vector<Embedding> StoreBackend::embed_texts(std::span<const std::string> texts) const {
  if (texts.empty()) throw InvalidArgument("embed_texts: empty batch");
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(lookup(StoreKeyKind::text, t));
  return out;
}

Embedding StoreBackend::embed_image(const ImageAnnotation& image) const {
  return lookup(StoreKeyKind::image, image.key);
}

}  // namespace vltaboo
