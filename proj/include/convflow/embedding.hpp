#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convflow/corpus.hpp"

namespace convflow {

inline constexpr std::size_t kEmbeddingDim = 768;

/// A sentence embedding: exactly 768 finite components, not all zero.
class EmbeddingVector {
 public:
  /// Throws NumericalError when the invariants do not hold.
  explicit EmbeddingVector(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }
  double norm() const noexcept;
  EmbeddingVector normalized() const;

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

struct EmbeddedConversation {
  std::string conversation_id;
  std::vector<Speaker> speakers;          // per turn
  std::vector<EmbeddingVector> vectors;   // aligned with the turn list
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Identifies the model; part of the cache key.
  virtual std::string id() const = 0;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// Bag-of-words embedding built from per-token pseudo-random unit vectors.
/// Bit-stable across runs and platforms; needs no model weights.
EmbeddingVector deterministic_embed(std::string_view text);

class DeterministicProvider final : public EmbeddingProvider {
 public:
  std::string id() const override { return "deterministic-bow-v1"; }
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
};

struct RemoteOptions {
  std::size_t max_batch = 256;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::seconds timeout{60};
};

/// Client for the embedding service: POST /embed, GET /health.
class RemoteProvider final : public EmbeddingProvider {
 public:
  explicit RemoteProvider(std::string endpoint, RemoteOptions options = {});

  std::string id() const override;
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  bool healthy() const;

  /// Model id reported by the last successful response.
  const std::string& model() const noexcept { return model_; }

 private:
  std::vector<EmbeddingVector> post_batch(std::span<const std::string> texts);

  std::string endpoint_;
  RemoteOptions options_;
  std::string model_;
};

std::vector<EmbeddingVector> remote_embed(std::span<const std::string> texts, const std::string& endpoint,
                                          RemoteOptions options = {});

/// Parses an /embed response body. Throws RemoteError on malformed JSON,
/// a dim other than 768, or a vector count different from `expected`.
std::vector<EmbeddingVector> parse_embed_response(std::string_view body, std::size_t expected,
                                                  std::string* model = nullptr);
std::string make_embed_request(std::span<const std::string> texts);

/// Vectors keyed by (provider id, content hash). Safe for concurrent use.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  EmbeddingCache(EmbeddingCache&& other) noexcept : entries_(std::move(other.entries_)) {}
  EmbeddingCache& operator=(EmbeddingCache&& other) noexcept {
    if (this != &other) {
      std::scoped_lock lock(mutex_, other.mutex_);
      entries_ = std::move(other.entries_);
    }
    return *this;
  }

  std::optional<EmbeddingVector> find(const std::string& provider, std::string_view text) const;
  void insert(const std::string& provider, std::string_view text, const EmbeddingVector& v);
  std::size_t size() const;

  void save(const std::filesystem::path& path) const;
  static EmbeddingCache load(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> entries_;
};

/// One vector per text, order preserved. Cached texts skip the provider.
std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, EmbeddingProvider& provider,
                                         EmbeddingCache* cache = nullptr);

/// Binary persistence of embedded conversations (written atomically).
void save_embeddings(std::span<const EmbeddedConversation> conversations, const std::filesystem::path& path);
std::vector<EmbeddedConversation> load_embeddings(const std::filesystem::path& path);

}  // namespace convflow
