#include "vltaboo/embedding.hpp"

#include <future>
#include <regex>
#include <thread>

// httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers included after it.
#include <httplib.h>
#include <json.hpp>

#include "vltaboo/error.hpp"

namespace vltaboo {

namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string prefix;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw InvalidArgument("service url must look like http://host[:port][/prefix], got '" + url +
                          "'");
  }
  ParsedUrl p;
  p.host = m[1].str();
  if (m[2].matched) p.port = std::stoi(m[2].str());
  p.prefix = m[3].matched ? m[3].str() : "";
  while (!p.prefix.empty() && p.prefix.back() == '/') p.prefix.pop_back();
  return p;
}

template <typename Duration>
void configure(httplib::Client& cli, Duration timeout) {
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
}

}  // namespace

std::vector<Embedding> decode_embed_response(const std::string& body, std::size_t expected_count,
                                             std::size_t expected_dim) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("service returned malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("dim") || !j.contains("vectors")) {
    throw BackendError("service response lacks 'dim' or 'vectors'");
  }
  const auto dim = j.at("dim").get<std::size_t>();
  if (expected_dim != 0 && dim != expected_dim) {
    throw BackendError("service dimension " + std::to_string(dim) + " disagrees with expected " +
                       std::to_string(expected_dim));
  }
  const auto& vectors = j.at("vectors");
  if (!vectors.is_array() || vectors.size() != expected_count) {
    throw BackendError("service returned " + std::to_string(vectors.size()) +
                       " vectors for a batch of " + std::to_string(expected_count));
  }
  std::vector<Embedding> out;
  out.reserve(expected_count);
  for (const auto& row : vectors) {
    const auto values = row.get<std::vector<float>>();
    if (values.size() != dim) {
      throw BackendError("service vector has dimension " + std::to_string(values.size()) +
                         ", declared " + std::to_string(dim));
    }
    const Embedding v =
        Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
    out.push_back(is_unit_norm(v) ? v : l2_normalized(v));
  }
  return out;
}

ServiceBackend::ServiceBackend(std::string url, ServiceOptions options)
    : options_(options) {
  if (options_.batch_size == 0 || options_.max_in_flight == 0) {
    throw InvalidArgument("service batch size and in-flight cap must be positive");
  }
  const auto parsed = parse_url(url);
  host_ = parsed.host;
  port_ = parsed.port;
  prefix_ = parsed.prefix;
  descriptor_.kind = BackendKind::service;
  descriptor_.location = url;

  httplib::Client cli(host_, port_);
  configure(cli, options_.timeout);
  std::chrono::milliseconds backoff = options_.backoff;
  for (int attempt = 0;; ++attempt) {
    auto res = cli.Get(prefix_ + "/v1/info");
    if (res && res->status == 200) {
      try {
        const auto j = nlohmann::json::parse(res->body);
        descriptor_.model_name = j.at("model").get<std::string>();
        descriptor_.dim = j.at("dim").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed /v1/info response: ") + e.what());
      }
      if (descriptor_.dim == 0) throw BackendError("service reports zero dimension");
      return;
    }
    if (res && res->status < 500) {
      throw BackendError("/v1/info failed with HTTP " + std::to_string(res->status));
    }
    if (attempt >= options_.retries) {
      throw BackendError("cannot reach embedding service at " + url, true);
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

std::vector<Embedding> ServiceBackend::post_batch(const std::string& endpoint, const char* field,
                                                  std::span<const std::string> items) const {
  const std::string body =
      nlohmann::json{{"model", descriptor_.model_name},
                     {field, std::vector<std::string>(items.begin(), items.end())}}
          .dump();
  httplib::Client cli(host_, port_);
  configure(cli, options_.timeout);
  std::chrono::milliseconds backoff = options_.backoff;
  std::string last_error;
  for (int attempt = 0;; ++attempt) {
    auto res = cli.Post(prefix_ + endpoint, body, "application/json");
    if (res && res->status == 200) {
      return decode_embed_response(res->body, items.size(), descriptor_.dim);
    }
    if (res && res->status < 500) {
      throw BackendError(endpoint + " rejected request with HTTP " + std::to_string(res->status) +
                         ": " + res->body);
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt >= options_.retries) {
      throw BackendError(endpoint + " failed after " + std::to_string(attempt + 1) +
                             " attempts: " + last_error,
                         true);
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

std::vector<Embedding> ServiceBackend::embed_batched(const std::string& endpoint,
                                                     const char* field,
                                                     const std::vector<std::string>& items) const {
  if (items.empty()) throw InvalidArgument(endpoint + ": empty batch");
  const std::size_t n_batches = (items.size() + options_.batch_size - 1) / options_.batch_size;
  std::vector<std::vector<Embedding>> results(n_batches);
  // Results are written by batch index, never by completion order.
  for (std::size_t first = 0; first < n_batches; first += options_.max_in_flight) {
    const std::size_t last = std::min(n_batches, first + options_.max_in_flight);
    std::vector<std::future<std::vector<Embedding>>> pending;
    for (std::size_t b = first; b < last; ++b) {
      const std::size_t lo = b * options_.batch_size;
      const std::size_t hi = std::min(items.size(), lo + options_.batch_size);
      std::span<const std::string> chunk(items.data() + lo, hi - lo);
      pending.push_back(std::async(std::launch::async, [this, &endpoint, field, chunk] {
        return post_batch(endpoint, field, chunk);
      }));
    }
    for (std::size_t b = first; b < last; ++b) results[b] = pending[b - first].get();
  }
  std::vector<Embedding> out;
  out.reserve(items.size());
  for (auto& r : results) {
    for (auto& v : r) out.push_back(std::move(v));
  }
  return out;
}

std::vector<Embedding> ServiceBackend::embed_texts(std::span<const std::string> texts) const {
  return embed_batched("/v1/embed_text", "texts",
                       std::vector<std::string>(texts.begin(), texts.end()));
}

Embedding ServiceBackend::embed_image(const ImageAnnotation& image) const {
  return embed_batched("/v1/embed_image", "image_ids", {image.key}).front();
}

std::vector<Embedding> ServiceBackend::embed_images(std::span<const ImageAnnotation> images) const {
  std::vector<std::string> keys;
  keys.reserve(images.size());
  for (const auto& img : images) keys.push_back(img.key);
  return embed_batched("/v1/embed_image", "image_ids", keys);
}

}  // namespace vltaboo
