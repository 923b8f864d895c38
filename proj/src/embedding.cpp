#include "convflow/embedding.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "convflow/error.hpp"
#include "convflow/hash.hpp"
#include "convflow/io.hpp"
#include "convflow/text.hpp"

namespace convflow {

using nlohmann::json;

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() != kEmbeddingDim)
    throw NumericalError("embedding has " + std::to_string(values_.size()) + " components, expected " +
                         std::to_string(kEmbeddingDim));
  bool nonzero = false;
  for (double v : values_) {
    if (!std::isfinite(v)) throw NumericalError("embedding has a non-finite component");
    nonzero = nonzero || v != 0.0;
  }
  if (!nonzero) throw NumericalError("embedding is the zero vector");
}

double EmbeddingVector::norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

EmbeddingVector EmbeddingVector::normalized() const {
  const double n = norm();
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values_[i] / n;
  return EmbeddingVector(std::move(out));
}

// ---- deterministic provider ----

namespace {

// Component i of a token's vector is the i-th output of a SplitMix64 stream
// seeded by the token hash, mapped to [-1, 1).
std::vector<double> token_direction(std::string_view token) {
  const std::uint64_t seed = fnv1a64(token);
  std::vector<double> v(kEmbeddingDim);
  double ss = 0.0;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    const std::uint64_t bits = splitmix64(seed + (i + 1) * 0x9e3779b97f4a7c15ULL);
    v[i] = static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
    ss += v[i] * v[i];
  }
  const double n = std::sqrt(ss);
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

EmbeddingVector deterministic_embed(std::string_view text_in) {
  auto tokens = text::tokenize(text_in);
  if (tokens.empty()) throw InputError("text has no tokens: '" + std::string(text_in) + "'");
  // Sorted distinct tokens with counts: word order cannot affect the result.
  std::sort(tokens.begin(), tokens.end());
  const double total = static_cast<double>(tokens.size());
  std::vector<double> acc(kEmbeddingDim, 0.0);
  for (std::size_t i = 0; i < tokens.size();) {
    std::size_t j = i;
    while (j < tokens.size() && tokens[j] == tokens[i]) ++j;
    const double weight = static_cast<double>(j - i) / total;
    const auto dir = token_direction(tokens[i]);
    for (std::size_t d = 0; d < kEmbeddingDim; ++d) acc[d] += weight * dir[d];
    i = j;
  }
  double ss = 0.0;
  for (double v : acc) ss += v * v;
  const double n = std::sqrt(ss);
  if (n == 0.0) throw NumericalError("degenerate embedding");
  for (auto& v : acc) v /= n;
  return EmbeddingVector(std::move(acc));
}

std::vector<EmbeddingVector> DeterministicProvider::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(deterministic_embed(t));
  return out;
}

// ---- remote provider ----

std::string make_embed_request(std::span<const std::string> texts) {
  json body;
  body["texts"] = json::array();
  for (const auto& t : texts) body["texts"].push_back(t);
  return body.dump();
}

std::vector<EmbeddingVector> parse_embed_response(std::string_view body, std::size_t expected,
                                                  std::string* model) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw RemoteError(std::string("malformed embed response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("vectors") || !j["vectors"].is_array())
    throw RemoteError("malformed embed response: no 'vectors' array");
  if (j.contains("dim") && (!j["dim"].is_number_integer() || j["dim"].get<long long>() != 768))
    throw RemoteError("dimension mismatch: service reports dim " + j["dim"].dump());
  const auto& vecs = j["vectors"];
  if (vecs.size() != expected)
    throw RemoteError("embed response has " + std::to_string(vecs.size()) + " vectors for " +
                      std::to_string(expected) + " texts");
  std::vector<EmbeddingVector> out;
  out.reserve(vecs.size());
  for (const auto& v : vecs) {
    if (!v.is_array()) throw RemoteError("malformed embed response: vector is not an array");
    if (v.size() != kEmbeddingDim)
      throw RemoteError("dimension mismatch: vector has " + std::to_string(v.size()) + " components");
    std::vector<double> values;
    values.reserve(kEmbeddingDim);
    for (const auto& x : v) {
      if (!x.is_number()) throw RemoteError("malformed embed response: non-numeric component");
      values.push_back(x.get<double>());
    }
    try {
      out.emplace_back(std::move(values));
    } catch (const NumericalError& e) {
      throw RemoteError(std::string("invalid vector from service: ") + e.what());
    }
  }
  if (model && j.contains("model") && j["model"].is_string()) *model = j["model"].get<std::string>();
  return out;
}

RemoteProvider::RemoteProvider(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.empty()) throw ConfigError("empty embedding endpoint");
  if (options_.max_batch == 0) throw ConfigError("max_batch must be positive");
}

std::string RemoteProvider::id() const { return "remote:" + endpoint_; }

bool RemoteProvider::healthy() const {
  httplib::Client cli(endpoint_);
  cli.set_connection_timeout(options_.timeout);
  auto res = cli.Get("/health");
  if (!res || res->status != 200) return false;
  try {
    return json::parse(res->body).value("status", "") == "ok";
  } catch (const json::exception&) {
    return false;
  }
}

std::vector<EmbeddingVector> RemoteProvider::post_batch(std::span<const std::string> texts) {
  const std::string body = make_embed_request(texts);
  auto backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client cli(endpoint_);
    cli.set_connection_timeout(options_.timeout);
    cli.set_read_timeout(options_.timeout);
    cli.set_write_timeout(options_.timeout);
    auto res = cli.Post("/embed", body, "application/json");
    if (res && res->status == 200) return parse_embed_response(res->body, texts.size(), &model_);
    if (res) {
      last_error = "HTTP " + std::to_string(res->status);
      // Only overload and server-side failures are worth retrying.
      if (res->status < 500 && res->status != 429) break;
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw RemoteError("embedding service " + endpoint_ + " failed: " + last_error);
}

std::vector<EmbeddingVector> RemoteProvider::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); i += options_.max_batch) {
    const auto n = std::min(options_.max_batch, texts.size() - i);
    auto part = post_batch(texts.subspan(i, n));
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<EmbeddingVector> remote_embed(std::span<const std::string> texts, const std::string& endpoint,
                                          RemoteOptions options) {
  RemoteProvider p(endpoint, options);
  return embed_batch(texts, p);
}

// ---- cache ----

std::optional<EmbeddingVector> EmbeddingCache::find(const std::string& provider, std::string_view text) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find({provider, fnv1a64(text)});
  if (it == entries_.end()) return std::nullopt;
  return EmbeddingVector(it->second);
}

void EmbeddingCache::insert(const std::string& provider, std::string_view text, const EmbeddingVector& v) {
  std::lock_guard lock(mutex_);
  entries_[{provider, fnv1a64(text)}] = std::vector<double>(v.values().begin(), v.values().end());
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

namespace {
constexpr char kCacheMagic[8] = {'C', 'F', 'E', 'C', 'A', 'C', 'H', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
void get(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw InputError("truncated embedding cache");
}
}  // namespace

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kCacheMagic, sizeof kCacheMagic);
    put(out, static_cast<std::uint64_t>(entries_.size()));
    for (const auto& [key, vec] : entries_) {
      put(out, static_cast<std::uint32_t>(key.first.size()));
      out.write(key.first.data(), static_cast<std::streamsize>(key.first.size()));
      put(out, key.second);
      out.write(reinterpret_cast<const char*>(vec.data()), static_cast<std::streamsize>(vec.size() * sizeof(double)));
    }
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path) {
  EmbeddingCache cache;
  std::ifstream in(path, std::ios::binary);
  if (!in) return cache;
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kCacheMagic)) throw InputError("not an embedding cache: " + path.string());
  std::uint64_t n = 0;
  get(in, n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t len = 0;
    get(in, len);
    std::string provider(len, '\0');
    in.read(provider.data(), len);
    std::uint64_t h = 0;
    get(in, h);
    std::vector<double> vec(kEmbeddingDim);
    in.read(reinterpret_cast<char*>(vec.data()), static_cast<std::streamsize>(vec.size() * sizeof(double)));
    if (!in) throw InputError("truncated embedding cache");
    cache.entries_[{std::move(provider), h}] = std::move(vec);
  }
  return cache;
}

std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, EmbeddingProvider& provider,
                                         EmbeddingCache* cache) {
  for (const auto& t : texts)
    if (text::trim(t).empty()) throw InputError("cannot embed empty text");
  const std::string pid = provider.id();
  std::vector<std::optional<EmbeddingVector>> slots(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_at;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache) slots[i] = cache->find(pid, texts[i]);
    if (!slots[i]) {
      missing.push_back(texts[i]);
      missing_at.push_back(i);
    }
  }
  if (!missing.empty()) {
    auto fresh = provider.embed(missing);
    if (fresh.size() != missing.size())
      throw RemoteError("provider returned " + std::to_string(fresh.size()) + " vectors for " +
                        std::to_string(missing.size()) + " texts");
    for (std::size_t k = 0; k < fresh.size(); ++k) {
      if (cache) cache->insert(pid, missing[k], fresh[k]);
      slots[missing_at[k]] = std::move(fresh[k]);
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

namespace {

constexpr char kEmbeddingsMagic[8] = {'C', 'F', 'E', 'M', 'B', 'E', 'D', '1'};

template <class T>
void append(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

void save_embeddings(std::span<const EmbeddedConversation> conversations, const std::filesystem::path& path) {
  std::string buf(kEmbeddingsMagic, sizeof kEmbeddingsMagic);
  append(buf, static_cast<std::uint64_t>(conversations.size()));
  for (const auto& c : conversations) {
    if (c.speakers.size() != c.vectors.size()) throw InputError("speakers and vectors differ in length");
    append(buf, static_cast<std::uint32_t>(c.conversation_id.size()));
    buf += c.conversation_id;
    append(buf, static_cast<std::uint64_t>(c.vectors.size()));
    for (auto s : c.speakers) buf.push_back(static_cast<char>(s));
    for (const auto& v : c.vectors)
      buf.append(reinterpret_cast<const char*>(v.values().data()), v.size() * sizeof(double));
  }
  io::write_file_atomic(path, buf);
}

std::vector<EmbeddedConversation> load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kEmbeddingsMagic)) throw InputError("not an embeddings file: " + path.string());
  std::uint64_t n = 0;
  get(in, n);
  std::vector<EmbeddedConversation> out;
  for (std::uint64_t i = 0; i < n && in; ++i) {
    EmbeddedConversation c;
    std::uint32_t len = 0;
    get(in, len);
    c.conversation_id.resize(len);
    in.read(c.conversation_id.data(), len);
    std::uint64_t turns = 0;
    get(in, turns);
    std::string speakers(turns, '\0');
    in.read(speakers.data(), static_cast<std::streamsize>(turns));
    for (char s : speakers) c.speakers.push_back(s == 0 ? Speaker::A : Speaker::B);
    for (std::uint64_t t = 0; t < turns && in; ++t) {
      std::vector<double> v(kEmbeddingDim);
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
      if (!in) break;
      c.vectors.emplace_back(std::move(v));
    }
    out.push_back(std::move(c));
  }
  if (!in) throw InputError("truncated embeddings file " + path.string());
  return out;
}

}  // namespace convflow
