#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace retbench {

struct EmbeddingVector {
  std::vector<float> values;
  bool normalized = false;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

enum class TaskType { kRetrievalQuery, kRetrievalDocument };

/// Wire name: "query" or "document".
std::string_view task_wire_name(TaskType task);

enum class PrefixPolicy { kNone, kE5Style, kTaskTypeNative };
enum class BackendKind { kMock, kRemote };

std::string to_string(PrefixPolicy p);
std::string to_string(BackendKind b);
PrefixPolicy parse_prefix_policy(std::string_view name);
BackendKind parse_backend_kind(std::string_view name);

struct EmbedderSpec {
  std::string name;
  std::size_t dim = 0;
  std::size_t max_tokens = 512;
  PrefixPolicy prefix_policy = PrefixPolicy::kNone;
  BackendKind backend = BackendKind::kMock;
  std::optional<std::string> endpoint;
  bool normalize = true;

  /// Throws UsageError when dim is zero or a remote spec has no endpoint.
  void validate() const;
};

/// "query: " / "passage: " for E5-style models, empty otherwise.
std::string prefix_for(const EmbedderSpec& spec, TaskType task);

struct CacheKey {
  std::array<std::uint8_t, 32> digest{};

  /// 64 lowercase hex characters.
  std::string hex() const;
  bool operator==(const CacheKey&) const = default;
};

/// SHA-256 over model 0x1F text 0x1F ("1" | "0").
CacheKey cache_key(std::string_view model, std::string_view text, bool normalize);

/// Model component of the cache key. Task-native models embed the same text
/// differently per task, so the task is folded into the model name for them.
std::string cache_model_id(const EmbedderSpec& spec, TaskType task);

/// Bag of hashed whitespace tokens, L2-normalized. Empty text maps to e0.
EmbeddingVector mock_embed(std::string_view text, std::size_t dim);

/// FNV-1a 64 of the token bytes; mock_embed buckets by this modulo dim.
std::uint64_t mock_token_hash(std::string_view token);

/// Batched request as it reaches a backend. Texts are already prefixed when
/// the backend does not prefix server-side.
struct EmbedRequest {
  std::string model;
  TaskType task = TaskType::kRetrievalDocument;
  bool normalize = true;
  std::vector<std::string> texts;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<std::vector<float>> embed(const EmbedRequest& request) = 0;
  /// True when the far side applies the model's query/passage prefix itself.
  virtual bool prefixes_server_side() const { return false; }
};

/// In-process backend over mock_embed. Inputs longer than max_tokens
/// whitespace tokens are truncated, as a real encoder would.
class MockBackend : public EmbeddingBackend {
 public:
  MockBackend(std::size_t dim, std::size_t max_tokens) : dim_(dim), max_tokens_(max_tokens) {}
  std::vector<std::vector<float>> embed(const EmbedRequest& request) override;

 private:
  std::size_t dim_;
  std::size_t max_tokens_;
};

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
  std::size_t temp_files = 0;
};

struct CacheVerifyReport {
  std::size_t checked = 0;
  std::vector<std::filesystem::path> corrupt;
};

/// Content-addressed on-disk vector store: <root>/<hex[0:2]>/<hex>.vec holding
/// a little-endian uint32 dim followed by dim little-endian float32 values.
/// Writers go through a temp file and rename, so readers never see partial
/// entries and concurrent writers of the same key are harmless.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_for(const CacheKey& key) const;

  /// Missing or unreadable entries read as nullopt.
  std::optional<std::vector<float>> get(const CacheKey& key) const;
  void put(const CacheKey& key, std::span<const float> values);

  CacheStats stats() const;
  /// Checks layout, declared dim against file size and value finiteness.
  CacheVerifyReport verify() const;
  /// Removes leftover temp files and corrupt entries; returns files removed.
  std::size_t gc();

 private:
  std::filesystem::path root_;
};

enum class CacheMode { kUse, kBypass };

struct EmbedStats {
  std::size_t requested = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t backend_items = 0;
  /// Inputs whose whitespace token count exceeded spec.max_tokens.
  std::size_t truncated_items = 0;
  std::size_t input_tokens = 0;
};

/// Spec + backend + cache. Consults the in-memory memo, then the disk cache,
/// and sends only misses to the backend in task-homogeneous batches.
/// Safe for concurrent embed_batch calls.
class Embedder {
 public:
  Embedder(EmbedderSpec spec, std::shared_ptr<EmbeddingBackend> backend,
           std::shared_ptr<EmbeddingCache> cache = nullptr, std::size_t batch_size = 16);

  const EmbedderSpec& spec() const { return spec_; }

  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, TaskType task,
                                           CacheMode mode = CacheMode::kUse);
  EmbeddingVector embed_one(const std::string& text, TaskType task,
                            CacheMode mode = CacheMode::kUse);

  EmbedStats stats() const;
  void reset_stats();

 private:
  std::vector<std::vector<float>> call_backend(std::span<const std::string> texts, TaskType task);
  EmbeddingVector finish(std::vector<float> values) const;

  EmbedderSpec spec_;
  std::shared_ptr<EmbeddingBackend> backend_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::size_t batch_size_;

  mutable std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> memo_;
  EmbedStats stats_;
};

/// Builds the backend a spec names (mock or remote).
std::shared_ptr<EmbeddingBackend> make_backend(const EmbedderSpec& spec);

}  // namespace retbench
