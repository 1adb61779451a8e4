#include "semlogue/embeddings.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "semlogue/corpus.hpp"

namespace semlogue {

using nlohmann::json;

std::string_view provider_kind_name(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kHashed: return "hashed";
    case ProviderKind::kIntrinsic: return "intrinsic";
    case ProviderKind::kRemote: return "remote";
  }
  return "hashed";
}

ProviderKind parse_provider_kind(std::string_view name) {
  if (name == "hashed") return ProviderKind::kHashed;
  if (name == "intrinsic") return ProviderKind::kIntrinsic;
  if (name == "remote") return ProviderKind::kRemote;
  throw std::invalid_argument("unknown provider kind \"" + std::string(name) + "\"");
}

json provider_config_to_json(const ProviderConfig& c) {
  return {{"kind", provider_kind_name(c.kind)},
          {"dim", c.dim},
          {"strip_tags", c.strip_tags},
          {"endpoint", c.remote.endpoint},
          {"timeout", c.remote.timeout_seconds},
          {"max_batch", c.remote.max_batch},
          {"retries", c.remote.retries}};
}

ProviderConfig provider_config_from_json(const json& j) {
  ProviderConfig c;
  if (j.contains("kind")) c.kind = parse_provider_kind(j["kind"].get<std::string>());
  c.dim = j.value("dim", c.dim);
  c.strip_tags = j.value("strip_tags", c.strip_tags);
  c.remote.endpoint = j.value("endpoint", c.remote.endpoint);
  c.remote.timeout_seconds = j.value("timeout", c.remote.timeout_seconds);
  c.remote.max_batch = j.value("max_batch", c.remote.max_batch);
  c.remote.retries = j.value("retries", c.remote.retries);
  return c;
}

namespace {

std::uint64_t hash_ngram(std::string_view a, std::string_view b = {}) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  mix(a);
  if (!b.empty()) {
    h ^= 0x1f;
    h *= 0x100000001b3ULL;
    mix(b);
  }
  // murmur3 finalizer so that low bits (bucket) and the top bit (sign) are
  // both well mixed
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

}  // namespace

HashedProvider::HashedProvider(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("hashed provider: dim must be positive");
}

std::vector<HashedProvider::Feature> HashedProvider::features(std::string_view text) const {
  const auto toks = tokenize(text);
  std::vector<Feature> out;
  out.reserve(toks.size() * 2);
  auto push = [&](std::uint64_t h) {
    out.push_back({static_cast<std::size_t>(h % dim_), (h >> 63) ? -1 : 1});
  };
  for (const auto& t : toks) push(hash_ngram(t));
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) push(hash_ngram(toks[i], toks[i + 1]));
  return out;
}

EmbeddingVector HashedProvider::embed_one(std::string_view text) const {
  EmbeddingVector v(dim_, 0.0);
  for (const auto& f : features(text)) v[f.bucket] += f.sign;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

std::vector<EmbeddingVector> HashedProvider::embed(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

EmbeddingVector hashed_embed(std::string_view text, std::size_t dim) {
  return HashedProvider(dim).embed_one(text);
}

std::string_view embedding_error_kind_name(EmbeddingErrorKind kind) {
  switch (kind) {
    case EmbeddingErrorKind::kTimeout: return "timeout";
    case EmbeddingErrorKind::kStatus: return "status";
    case EmbeddingErrorKind::kDimMismatch: return "dim-mismatch";
    case EmbeddingErrorKind::kCountMismatch: return "count-mismatch";
    case EmbeddingErrorKind::kProtocol: return "protocol";
    case EmbeddingErrorKind::kTransport: return "transport";
  }
  return "transport";
}

EmbeddingError::EmbeddingError(EmbeddingErrorKind kind, std::string endpoint, std::size_t batch_index,
                               const std::string& detail)
    : std::runtime_error("embedding request to " + endpoint + " failed (" +
                         std::string(embedding_error_kind_name(kind)) + ", batch " +
                         std::to_string(batch_index) + "): " + detail),
      kind_(kind),
      endpoint_(std::move(endpoint)),
      batch_index_(batch_index) {}

RemoteProvider::RemoteProvider(RemoteConfig config, std::size_t dim)
    : config_(std::move(config)), dim_(dim) {
  if (dim_ == 0) throw std::invalid_argument("remote provider: dim must be positive");
  if (config_.max_batch == 0) throw std::invalid_argument("remote provider: max_batch must be positive");
  const auto scheme = config_.endpoint.find("://");
  const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = config_.endpoint.find('/', host_start);
  base_url_ = config_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/embed" : config_.endpoint.substr(slash);
}

std::vector<EmbeddingVector> RemoteProvider::embed(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < texts.size(); start += config_.max_batch, ++batch_index) {
    const std::size_t n = std::min(config_.max_batch, texts.size() - start);
    auto part = embed_batch(texts.subspan(start, n), batch_index);
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

std::vector<EmbeddingVector> RemoteProvider::embed_batch(std::span<const std::string> texts,
                                                         std::size_t batch_index) const {
  json body = {{"texts", json::array()}};
  for (const auto& t : texts) body["texts"].push_back(t);
  const std::string payload = body.dump();

  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  EmbeddingErrorKind last_kind = EmbeddingErrorKind::kTransport;
  std::string last_detail;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_us);
    client.set_read_timeout(timeout_us);
    client.set_write_timeout(timeout_us);
    ++requests_;
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      last_kind = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
                      ? EmbeddingErrorKind::kTimeout
                      : EmbeddingErrorKind::kTransport;
      last_detail = httplib::to_string(err);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_kind = EmbeddingErrorKind::kStatus;
      last_detail = "HTTP status " + std::to_string(res->status);
      continue;
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw EmbeddingError(EmbeddingErrorKind::kProtocol, config_.endpoint, batch_index,
                           std::string("unparseable response: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("embeddings") || !reply["embeddings"].is_array()) {
      throw EmbeddingError(EmbeddingErrorKind::kProtocol, config_.endpoint, batch_index,
                           "response lacks an \"embeddings\" array");
    }
    const auto& rows = reply["embeddings"];
    if (rows.size() != texts.size()) {
      throw EmbeddingError(EmbeddingErrorKind::kCountMismatch, config_.endpoint, batch_index,
                           "sent " + std::to_string(texts.size()) + " texts, got " +
                               std::to_string(rows.size()) + " vectors");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != dim_) {
        throw EmbeddingError(EmbeddingErrorKind::kDimMismatch, config_.endpoint, batch_index,
                             "expected dim " + std::to_string(dim_) + ", got " +
                                 std::to_string(row.is_array() ? row.size() : 0));
      }
      EmbeddingVector v;
      v.reserve(dim_);
      for (const auto& x : row) {
        if (!x.is_number()) {
          throw EmbeddingError(EmbeddingErrorKind::kProtocol, config_.endpoint, batch_index,
                               "non-numeric embedding entry");
        }
        const double d = x.get<double>();
        if (!std::isfinite(d)) {
          throw EmbeddingError(EmbeddingErrorKind::kProtocol, config_.endpoint, batch_index,
                               "non-finite embedding entry");
        }
        v.push_back(d);
      }
      out.push_back(std::move(v));
    }
    return out;
  }
  throw EmbeddingError(last_kind, config_.endpoint, batch_index,
                       last_detail + " after " + std::to_string(config_.retries + 1) + " attempts");
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config, const Model* model,
                                                 const Vocab* vocab) {
  switch (config.kind) {
    case ProviderKind::kHashed:
      return std::make_unique<HashedProvider>(config.dim);
    case ProviderKind::kRemote:
      return std::make_unique<RemoteProvider>(config.remote, config.dim);
    case ProviderKind::kIntrinsic:
      if (!model || !vocab) throw std::invalid_argument("intrinsic provider needs a model and vocabulary");
      return std::make_unique<IntrinsicProvider>(*model, *vocab);
  }
  throw std::invalid_argument("unknown provider kind");
}

struct EchoEmbeddingServer::Impl {
  explicit Impl(std::size_t dim) : provider(dim) {}

  HashedProvider provider;
  httplib::Server server;
  std::thread worker;
  std::atomic<std::size_t> served{0};
  std::string host;
  int port = 0;
};

EchoEmbeddingServer::EchoEmbeddingServer(std::size_t dim) : impl_(std::make_unique<Impl>(dim)) {
  Impl* impl = impl_.get();
  impl->server.Post("/embed", [impl](const httplib::Request& req, httplib::Response& res) {
    ++impl->served;
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":"invalid JSON"})", "application/json");
      return;
    }
    if (!body.is_object() || !body.contains("texts") || !body["texts"].is_array()) {
      res.status = 400;
      res.set_content(R"({"error":"expected {\"texts\": [...]}"})", "application/json");
      return;
    }
    json rows = json::array();
    for (const auto& t : body["texts"]) {
      if (!t.is_string()) {
        res.status = 400;
        res.set_content(R"({"error":"texts must be strings"})", "application/json");
        return;
      }
      rows.push_back(impl->provider.embed_one(t.get<std::string>()));
    }
    res.set_content(json{{"embeddings", std::move(rows)}}.dump(), "application/json");
  });
}

EchoEmbeddingServer::~EchoEmbeddingServer() { stop(); }

int EchoEmbeddingServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->worker = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

bool EchoEmbeddingServer::listen(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  return impl_->server.listen(host, port);
}

void EchoEmbeddingServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::size_t EchoEmbeddingServer::requests_served() const { return impl_->served.load(); }

std::string EchoEmbeddingServer::endpoint() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port) + "/embed";
}

}  // namespace semlogue
