#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vltaboo/dataset.hpp"
#include "vltaboo/math.hpp"
#include "vltaboo/prompt.hpp"

namespace vltaboo {

enum class BackendKind { store, service, mock };

const char* to_string(BackendKind k);
BackendKind backend_kind_from_string(const std::string& s);

struct MockStructure {
  double class_weight = 1.0;
  double attribute_weight = 0.5;
  double noise_weight = 0.0;
  std::uint64_t seed = 0;
};

struct BackendDescriptor {
  BackendKind kind = BackendKind::mock;
  std::string model_name;
  std::size_t dim = 0;
  std::string location;  // store path or service URL
  std::uint64_t seed = 0;
};

/// Abstract text/image encoder. Every returned vector is L2-normalized.
/// Implementations are safe for concurrent use through const methods.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;
  std::size_t dim() const { return descriptor().dim; }

  virtual std::vector<Embedding> embed_texts(std::span<const std::string> texts) const = 0;

  /// Prompts carry structural tags (class, attributes) that some backends
  /// use; the default just encodes the text.
  virtual std::vector<Embedding> embed_prompts(std::span<const Prompt> prompts) const;

  virtual Embedding embed_image(const ImageAnnotation& image) const = 0;

  virtual std::vector<Embedding> embed_images(std::span<const ImageAnnotation> images) const;
};

// ---------------------------------------------------------------------------
// Mock backend

/// Deterministic structured encoder for tests and dry runs. Coordinates
/// [0, C) are one-hot class directions, [C, C + A) one-hot attribute
/// directions, and the remaining `noise_dims` only ever receive hash noise.
///
///   v = class_weight * e_class + attribute_weight * sum_a e_a
///       + noise_weight * hash_noise(text)
///
/// Images use their ground-truth class and attribute set. A vector with no
/// structural component falls back to unit-weight hash noise so it can still
/// be normalized.
class MockBackend final : public EmbeddingBackend {
 public:
  MockBackend(const AttributeDataset& dataset, MockStructure structure,
              std::size_t noise_dims = 32);

  /// Overrides the ground truth used for image embeddings (e.g. the true
  /// per-image attributes of a per-class dataset before detection).
  void set_image_truth(ImageId image, std::vector<AttributeId> attributes);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  const MockStructure& structure() const { return structure_; }

  std::vector<Embedding> embed_texts(std::span<const std::string> texts) const override;
  std::vector<Embedding> embed_prompts(std::span<const Prompt> prompts) const override;
  Embedding embed_image(const ImageAnnotation& image) const override;

 private:
  Embedding compose(const std::optional<ClassId>& cls, std::span<const AttributeId> attrs,
                    std::string_view noise_key) const;

  BackendDescriptor descriptor_;
  MockStructure structure_;
  std::size_t num_classes_;
  std::size_t num_attributes_;
  std::unordered_map<ImageId, std::vector<AttributeId>> image_truth_;
};

/// Unit-norm pseudo-random vector derived from `key` and `seed` using integer
/// hashing only.
Eigen::VectorXd hash_noise(std::string_view key, std::uint64_t seed, std::size_t dim);

// ---------------------------------------------------------------------------
// Precomputed store

enum class StoreKeyKind : std::uint8_t { text = 0, image = 1 };

struct StoreRecord {
  StoreKeyKind kind = StoreKeyKind::text;
  std::string key;
  std::vector<float> values;
};

struct StoreContents {
  std::string model_name;
  std::size_t dim = 0;
  std::vector<StoreRecord> records;
};

/// Binary store layout (little-endian):
///   magic "VLTBSTR1"
///   u32 model-name length, model-name bytes, u32 dim, u64 count
///   count x { u8 key kind, u32 key length, key bytes, dim x f32 }
void write_store(const StoreContents& store, std::ostream& out);
StoreContents read_store(std::istream& in);

/// ndjson debug variant: header {"model","dim","count"} then one
/// {"kind","key","values"} object per record.
void write_store_ndjson(const StoreContents& store, std::ostream& out);
StoreContents read_store_ndjson(std::istream& in);

/// Reads either variant, chosen by file content.
StoreContents load_store_file(const std::filesystem::path& path);
void save_store_file(const StoreContents& store, const std::filesystem::path& path,
                     bool ndjson = false);

/// Lookup-only backend over a precomputed store. Keys are full texts (or
/// image keys); the hash index falls back to full comparison, so distinct
/// texts never collide.
class StoreBackend final : public EmbeddingBackend {
 public:
  explicit StoreBackend(StoreContents contents, std::string location = {});
  static StoreBackend open(const std::filesystem::path& path);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::size_t size() const { return vectors_.size(); }

  std::vector<Embedding> embed_texts(std::span<const std::string> texts) const override;
  Embedding embed_image(const ImageAnnotation& image) const override;

 private:
  Embedding lookup(StoreKeyKind kind, const std::string& key) const;

  BackendDescriptor descriptor_;
  std::unordered_map<std::string, std::size_t> text_index_;
  std::unordered_map<std::string, std::size_t> image_index_;
  std::vector<Embedding> vectors_;
};

// ---------------------------------------------------------------------------
// Remote service client

struct ServiceOptions {
  std::chrono::milliseconds timeout{30'000};
  int retries = 3;
  std::chrono::milliseconds backoff{200};
  std::size_t batch_size = 256;
  std::size_t max_in_flight = 4;
};

/// HTTP client for the embedding service wire protocol:
///   POST /v1/embed_text  {"model", "texts"}     -> {"dim", "vectors"}
///   POST /v1/embed_image {"model", "image_ids"} -> {"dim", "vectors"}
///   GET  /v1/info                               -> {"model", "dim"}
class ServiceBackend final : public EmbeddingBackend {
 public:
  /// Queries /v1/info to learn the model name and dimension.
  explicit ServiceBackend(std::string url, ServiceOptions options = {});

  const BackendDescriptor& descriptor() const override { return descriptor_; }

  std::vector<Embedding> embed_texts(std::span<const std::string> texts) const override;
  Embedding embed_image(const ImageAnnotation& image) const override;
  std::vector<Embedding> embed_images(std::span<const ImageAnnotation> images) const override;

 private:
  std::vector<Embedding> embed_batched(const std::string& endpoint, const char* field,
                                       const std::vector<std::string>& items) const;
  std::vector<Embedding> post_batch(const std::string& endpoint, const char* field,
                                    std::span<const std::string> items) const;

  std::string host_;
  int port_ = 80;
  std::string prefix_;
  ServiceOptions options_;
  BackendDescriptor descriptor_;
};

/// Decodes one wire response, normalizing every vector. Throws on malformed
/// payloads or when `expected_dim` (if non-zero) disagrees.
std::vector<Embedding> decode_embed_response(const std::string& body, std::size_t expected_count,
                                             std::size_t expected_dim);

}  // namespace vltaboo
