#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace semlogue {

class Model;
class Vocab;

using EmbeddingVector = std::vector<double>;

enum class ProviderKind { kHashed, kIntrinsic, kRemote };

struct RemoteConfig {
  std::string endpoint = "http://127.0.0.1:8765/embed";
  double timeout_seconds = 10.0;
  std::size_t max_batch = 100;
  int retries = 2;
};

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kHashed;
  std::size_t dim = std::size_t{1} << 16;
  RemoteConfig remote;
  // Context strings are embedded without serialization tags unless disabled.
  bool strip_tags = true;
};

std::string_view provider_kind_name(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view name);

nlohmann::json provider_config_to_json(const ProviderConfig& c);
ProviderConfig provider_config_from_json(const nlohmann::json& j);

// Maps texts to fixed-dimension vectors. Implementations are safe for
// concurrent const use and never touch a differentiation tape.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
};

// Signed feature hashing of word unigrams and bigrams, L2-normalized.
class HashedProvider final : public EmbeddingProvider {
 public:
  struct Feature {
    std::size_t bucket;
    int sign;
  };

  explicit HashedProvider(std::size_t dim = std::size_t{1} << 16);

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override;
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "hashed"; }

  EmbeddingVector embed_one(std::string_view text) const;
  // The n-gram features of `text` in order: unigrams, then bigrams.
  std::vector<Feature> features(std::string_view text) const;

 private:
  std::size_t dim_;
};

EmbeddingVector hashed_embed(std::string_view text, std::size_t dim = std::size_t{1} << 16);

enum class EmbeddingErrorKind { kTimeout, kStatus, kDimMismatch, kCountMismatch, kProtocol, kTransport };

std::string_view embedding_error_kind_name(EmbeddingErrorKind kind);

class EmbeddingError : public std::runtime_error {
 public:
  EmbeddingError(EmbeddingErrorKind kind, std::string endpoint, std::size_t batch_index,
                 const std::string& detail);

  EmbeddingErrorKind kind() const { return kind_; }
  const std::string& endpoint() const { return endpoint_; }
  std::size_t batch_index() const { return batch_index_; }

 private:
  EmbeddingErrorKind kind_;
  std::string endpoint_;
  std::size_t batch_index_;
};

// Client for POST /embed {"texts": [...]} -> {"embeddings": [[...]]}.
// Batches go out sequentially, at most max_batch texts each.
class RemoteProvider final : public EmbeddingProvider {
 public:
  RemoteProvider(RemoteConfig config, std::size_t dim);

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override;
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "remote"; }

  std::size_t requests_sent() const { return requests_.load(); }

 private:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts,
                                           std::size_t batch_index) const;

  RemoteConfig config_;
  std::size_t dim_;
  std::string base_url_;
  std::string path_;
  mutable std::atomic<std::size_t> requests_{0};
};

// Mean-pools encoder states of a frozen copy of a model. The copy only changes
// through refresh(), which the trainer calls at epoch boundaries.
class IntrinsicProvider final : public EmbeddingProvider {
 public:
  IntrinsicProvider(const Model& model, const Vocab& vocab);
  ~IntrinsicProvider() override;

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override;
  std::size_t dim() const override;
  std::string name() const override { return "intrinsic"; }

  void refresh(const Model& model);

 private:
  std::unique_ptr<Model> snapshot_;
  const Vocab* vocab_;
};

// `model` and `vocab` are required for the intrinsic kind only.
std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config,
                                                 const Model* model = nullptr,
                                                 const Vocab* vocab = nullptr);

// Deterministic hashed-embedding HTTP service speaking the remote protocol.
class EchoEmbeddingServer {
 public:
  explicit EchoEmbeddingServer(std::size_t dim = std::size_t{1} << 16);
  ~EchoEmbeddingServer();
  EchoEmbeddingServer(const EchoEmbeddingServer&) = delete;
  EchoEmbeddingServer& operator=(const EchoEmbeddingServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

  std::size_t requests_served() const;
  std::string endpoint() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace semlogue
