#include "retbench/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <unistd.h>

#include "retbench/chunking.hpp"
#include "retbench/error.hpp"
#include "retbench/remote.hpp"

namespace retbench {

namespace fs = std::filesystem;

std::string_view task_wire_name(TaskType task) {
  return task == TaskType::kRetrievalQuery ? "query" : "document";
}

std::string to_string(PrefixPolicy p) {
  switch (p) {
    case PrefixPolicy::kNone: return "none";
    case PrefixPolicy::kE5Style: return "e5";
    case PrefixPolicy::kTaskTypeNative: return "task_type";
  }
  return "?";
}

std::string to_string(BackendKind b) { return b == BackendKind::kMock ? "mock" : "remote"; }

namespace {
std::string lowered(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace

PrefixPolicy parse_prefix_policy(std::string_view name) {
  const auto n = lowered(name);
  if (n == "none") return PrefixPolicy::kNone;
  if (n == "e5" || n == "e5style" || n == "e5_style") return PrefixPolicy::kE5Style;
  if (n == "task_type" || n == "tasktypenative" || n == "native") return PrefixPolicy::kTaskTypeNative;
  throw UsageError("unknown prefix policy '" + std::string(name) + "'");
}

BackendKind parse_backend_kind(std::string_view name) {
  const auto n = lowered(name);
  if (n == "mock") return BackendKind::kMock;
  if (n == "remote") return BackendKind::kRemote;
  throw UsageError("unknown backend '" + std::string(name) + "'");
}

void EmbedderSpec::validate() const {
  if (name.empty()) throw UsageError("embedder name is empty");
  if (dim == 0) throw UsageError("embedder '" + name + "' has dim 0");
  if (max_tokens == 0) throw UsageError("embedder '" + name + "' has max_tokens 0");
  if (backend == BackendKind::kRemote && (!endpoint || endpoint->empty())) {
    throw UsageError("remote embedder '" + name + "' has no endpoint");
  }
}

std::string prefix_for(const EmbedderSpec& spec, TaskType task) {
  if (spec.prefix_policy != PrefixPolicy::kE5Style) return {};
  return task == TaskType::kRetrievalQuery ? "query: " : "passage: ";
}

std::string CacheKey::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(64, '0');
  for (std::size_t i = 0; i < digest.size(); ++i) {
    out[2 * i] = kDigits[digest[i] >> 4];
    out[2 * i + 1] = kDigits[digest[i] & 0x0F];
  }
  return out;
}

CacheKey cache_key(std::string_view model, std::string_view text, bool normalize) {
  static constexpr char kSep = 0x1F;
  const char flag = normalize ? '1' : '0';
  CacheKey key;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned int len = 0;
  const bool ok = ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, model.data(), model.size()) == 1 &&
                  EVP_DigestUpdate(ctx, &kSep, 1) == 1 &&
                  EVP_DigestUpdate(ctx, text.data(), text.size()) == 1 &&
                  EVP_DigestUpdate(ctx, &kSep, 1) == 1 && EVP_DigestUpdate(ctx, &flag, 1) == 1 &&
                  EVP_DigestFinal_ex(ctx, key.digest.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok || len != key.digest.size()) throw ContractViolation("SHA-256 digest failed");
  return key;
}

std::string cache_model_id(const EmbedderSpec& spec, TaskType task) {
  if (spec.prefix_policy == PrefixPolicy::kTaskTypeNative) {
    return spec.name + "@" + std::string(task_wire_name(task));
  }
  return spec.name;
}

std::uint64_t mock_token_hash(std::string_view token) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

EmbeddingVector mock_embed(std::string_view text, std::size_t dim) {
  if (dim == 0) throw UsageError("mock_embed needs dim > 0");
  EmbeddingVector v;
  v.values.assign(dim, 0.0f);
  v.normalized = true;
  const auto tokens = tokenize_ws(text);
  if (tokens.empty()) {
    v.values[0] = 1.0f;
    return v;
  }
  std::vector<std::uint32_t> counts(dim, 0);
  for (const auto& t : tokens) ++counts[mock_token_hash(t) % dim];
  double sq = 0.0;
  for (auto c : counts) sq += static_cast<double>(c) * c;
  const double norm = std::sqrt(sq);
  for (std::size_t i = 0; i < dim; ++i) {
    v.values[i] = static_cast<float>(counts[i] / norm);
  }
  return v;
}

std::vector<std::vector<float>> MockBackend::embed(const EmbedRequest& request) {
  std::vector<std::vector<float>> out;
  out.reserve(request.texts.size());
  for (const auto& text : request.texts) {
    auto tokens = tokenize_ws(text);
    if (tokens.size() > max_tokens_) tokens.resize(max_tokens_);
    std::string clipped;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) clipped += ' ';
      clipped += tokens[i];
    }
    out.push_back(mock_embed(clipped, dim_).values);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Disk cache

namespace {

constexpr const char* kEntrySuffix = ".vec";

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::optional<std::vector<float>> decode_entry(const std::string& bytes) {
  if (bytes.size() < 4) return std::nullopt;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t dim = get_u32_le(p);
  if (dim == 0 || bytes.size() != 4 + 4 * static_cast<std::size_t>(dim)) return std::nullopt;
  std::vector<float> values(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    values[i] = std::bit_cast<float>(get_u32_le(p + 4 + 4 * i));
    if (!std::isfinite(values[i])) return std::nullopt;
  }
  return values;
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool is_hex_name(const std::string& s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

bool is_temp(const fs::path& p) { return p.filename().string().find(".tmp.") != std::string::npos; }

}  // namespace

EmbeddingCache::EmbeddingCache(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path EmbeddingCache::path_for(const CacheKey& key) const {
  const auto hex = key.hex();
  return root_ / hex.substr(0, 2) / (hex + kEntrySuffix);
}

std::optional<std::vector<float>> EmbeddingCache::get(const CacheKey& key) const {
  auto bytes = read_file(path_for(key));
  if (!bytes) return std::nullopt;
  return decode_entry(*bytes);
}

void EmbeddingCache::put(const CacheKey& key, std::span<const float> values) {
  const fs::path target = path_for(key);
  fs::create_directories(target.parent_path());
  std::string bytes;
  bytes.reserve(4 + 4 * values.size());
  put_u32_le(bytes, static_cast<std::uint32_t>(values.size()));
  for (float f : values) put_u32_le(bytes, std::bit_cast<std::uint32_t>(f));

  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = target.string() + fmt::format(".tmp.{}.{}", ::getpid(), counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write cache entry " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

CacheStats EmbeddingCache::stats() const {
  CacheStats s;
  if (!fs::exists(root_)) return s;
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    if (is_temp(entry.path())) {
      ++s.temp_files;
    } else if (entry.path().extension() == kEntrySuffix) {
      ++s.entries;
      s.bytes += entry.file_size();
    }
  }
  return s;
}

CacheVerifyReport EmbeddingCache::verify() const {
  CacheVerifyReport report;
  if (!fs::exists(root_)) return report;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (entry.is_regular_file() && !is_temp(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    ++report.checked;
    const auto stem = path.stem().string();
    const bool placed = path.extension() == kEntrySuffix && is_hex_name(stem) &&
                        path.parent_path().filename() == stem.substr(0, 2) &&
                        path.parent_path().parent_path() == root_;
    auto bytes = read_file(path);
    if (!placed || !bytes || !decode_entry(*bytes)) report.corrupt.push_back(path);
  }
  return report;
}

std::size_t EmbeddingCache::gc() {
  std::size_t removed = 0;
  if (!fs::exists(root_)) return removed;
  std::vector<fs::path> temps;
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (entry.is_regular_file() && is_temp(entry.path())) temps.push_back(entry.path());
  }
  for (const auto& p : temps) removed += fs::remove(p) ? 1 : 0;
  for (const auto& p : verify().corrupt) removed += fs::remove(p) ? 1 : 0;
  return removed;
}

// ---------------------------------------------------------------------------
// Embedder

Embedder::Embedder(EmbedderSpec spec, std::shared_ptr<EmbeddingBackend> backend,
                   std::shared_ptr<EmbeddingCache> cache, std::size_t batch_size)
    : spec_(std::move(spec)),
      backend_(std::move(backend)),
      cache_(std::move(cache)),
      batch_size_(batch_size == 0 ? 1 : batch_size) {
  spec_.validate();
  if (!backend_) throw UsageError("embedder '" + spec_.name + "' has no backend");
}

EmbeddingVector Embedder::finish(std::vector<float> values) const {
  if (values.size() != spec_.dim) {
    throw ContractViolation(fmt::format("backend for '{}' returned dim {}, expected {}", spec_.name,
                                        values.size(), spec_.dim));
  }
  EmbeddingVector v{std::move(values), false};
  double sq = 0.0;
  for (float f : v.values) {
    if (!std::isfinite(f)) throw ContractViolation("backend returned a non-finite value");
    sq += static_cast<double>(f) * f;
  }
  if (spec_.normalize) {
    if (sq == 0.0) throw ContractViolation("backend returned a zero vector; cannot normalize");
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& f : v.values) f = static_cast<float>(f * inv);
    v.normalized = true;
  }
  return v;
}

std::vector<std::vector<float>> Embedder::call_backend(std::span<const std::string> texts,
                                                       TaskType task) {
  EmbedRequest request;
  request.model = spec_.name;
  request.task = task;
  request.normalize = spec_.normalize;
  const std::string prefix = backend_->prefixes_server_side() ? std::string() : prefix_for(spec_, task);
  request.texts.reserve(texts.size());
  for (const auto& t : texts) request.texts.push_back(prefix + t);
  auto out = backend_->embed(request);
  if (out.size() != texts.size()) {
    throw ContractViolation(fmt::format("backend returned {} vectors for {} texts", out.size(),
                                        texts.size()));
  }
  return out;
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts,
                                                   TaskType task, CacheMode mode) {
  std::vector<EmbeddingVector> out(texts.size());
  const std::string model_id = cache_model_id(spec_, task);
  const std::string prefix = prefix_for(spec_, task);

  std::vector<std::string> hexes(texts.size());
  std::vector<CacheKey> keys(texts.size());
  // Distinct misses, in first-seen order; each maps to every position it fills.
  std::vector<std::size_t> miss_first;
  std::unordered_map<std::string, std::vector<std::size_t>> positions;

  std::size_t hits = 0, truncated = 0, tokens = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::size_t n_tok = tokenize_ws(texts[i]).size();
    tokens += n_tok;
    if (n_tok > spec_.max_tokens) ++truncated;
    if (mode == CacheMode::kBypass) {
      miss_first.push_back(i);
      continue;
    }
    keys[i] = cache_key(model_id, prefix + texts[i], spec_.normalize);
    hexes[i] = keys[i].hex();
    {
      std::lock_guard lock(mu_);
      if (auto it = memo_.find(hexes[i]); it != memo_.end()) {
        out[i] = it->second;
        ++hits;
        continue;
      }
    }
    auto& pos = positions[hexes[i]];
    if (!pos.empty()) {
      pos.push_back(i);
      continue;
    }
    if (cache_) {
      if (auto cached = cache_->get(keys[i]); cached && cached->size() == spec_.dim) {
        out[i] = EmbeddingVector{std::move(*cached), spec_.normalize};
        ++hits;
        std::lock_guard lock(mu_);
        memo_.emplace(hexes[i], out[i]);
        positions.erase(hexes[i]);
        continue;
      }
    }
    pos.push_back(i);
    miss_first.push_back(i);
  }

  std::size_t calls = 0, items = 0;
  for (std::size_t b = 0; b < miss_first.size(); b += batch_size_) {
    const std::size_t e = std::min(b + batch_size_, miss_first.size());
    std::vector<std::string> batch;
    for (std::size_t j = b; j < e; ++j) batch.push_back(texts[miss_first[j]]);
    auto raw = call_backend(batch, task);
    ++calls;
    items += batch.size();
    for (std::size_t j = b; j < e; ++j) {
      const std::size_t i = miss_first[j];
      EmbeddingVector v = finish(std::move(raw[j - b]));
      if (mode == CacheMode::kBypass) {
        out[i] = std::move(v);
        continue;
      }
      if (cache_) cache_->put(keys[i], v.values);
      for (std::size_t p : positions[hexes[i]]) out[p] = v;
      std::lock_guard lock(mu_);
      memo_.emplace(hexes[i], std::move(v));
    }
  }

  std::lock_guard lock(mu_);
  stats_.requested += texts.size();
  stats_.cache_hits += hits;
  stats_.backend_calls += calls;
  stats_.backend_items += items;
  stats_.truncated_items += truncated;
  stats_.input_tokens += tokens;
  return out;
}

EmbeddingVector Embedder::embed_one(const std::string& text, TaskType task, CacheMode mode) {
  return embed_batch(std::span<const std::string>(&text, 1), task, mode).front();
}

EmbedStats Embedder::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Embedder::reset_stats() {
  std::lock_guard lock(mu_);
  stats_ = {};
}

std::shared_ptr<EmbeddingBackend> make_backend(const EmbedderSpec& spec) {
  spec.validate();
  if (spec.backend == BackendKind::kMock) {
    return std::make_shared<MockBackend>(spec.dim, spec.max_tokens);
  }
  RemoteOptions opts;
  if (const char* token = std::getenv("RETBENCH_ENDPOINT_TOKEN")) opts.token = token;
  return std::make_shared<RemoteBackend>(*spec.endpoint, opts);
}

}  // namespace retbench
