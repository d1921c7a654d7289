#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "retbench/embedding.hpp"

namespace retbench {

enum class IndexKind : std::uint8_t { kFlat = 0, kHnsw = 1 };

std::string to_string(IndexKind kind);

struct HnswParams {
  std::size_t M = 32;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 100;
  /// build_index switches from flat to HNSW at this many vectors.
  std::size_t activation_threshold = 100000;
  std::uint64_t seed = 42;

  void validate() const;
  bool operator==(const HnswParams&) const = default;
};

struct SearchHit {
  std::string id;
  float score = 0.0f;
  bool operator==(const SearchHit&) const = default;
};

/// Cosine similarity of two non-zero vectors of equal dimension.
/// Throws ContractViolation on dim mismatch or a zero vector.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);
double cosine(std::span<const float> u, std::span<const float> v);

/// Bytes needed for `count` float32 vectors of `dim` components.
std::uint64_t storage_bytes(std::uint64_t dim, std::uint64_t count);

using IdVector = std::pair<std::string, EmbeddingVector>;

/// Immutable cosine index. Vectors are L2-normalized on insert, so search is
/// a max-inner-product problem. Results are ordered by score descending, then
/// id ascending.
class VectorIndex {
 public:
  VectorIndex() = default;

  IndexKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const HnswParams& params() const { return params_; }

  const std::string& id(std::size_t i) const { return ids_[i]; }
  std::span<const float> vector(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  /// Throws ContractViolation when the query dim differs or k is zero.
  std::vector<SearchHit> search(const EmbeddingVector& query, std::size_t k) const;

  std::uint64_t vector_bytes() const { return storage_bytes(dim_, size()); }
  /// Adjacency lists (4 bytes per edge) plus per-node level headers.
  std::uint64_t graph_bytes() const;

  /// Layout documented in README: header, packed vectors, id table, graph.
  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

  bool operator==(const VectorIndex&) const = default;

 private:
  friend VectorIndex build_flat(std::vector<IdVector> vectors);
  friend VectorIndex build_hnsw(std::vector<IdVector> vectors, const HnswParams& params);

  std::vector<SearchHit> search_flat(std::span<const float> q, std::size_t k) const;
  std::vector<SearchHit> search_hnsw(std::span<const float> q, std::size_t k) const;
  void insert_hnsw(std::uint32_t node, int level);

  IndexKind kind_ = IndexKind::kFlat;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  HnswParams params_;

  // HNSW graph: links_[node][layer] is that node's adjacency at the layer.
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

/// Throws ContractViolation naming the first vector whose dim disagrees or
/// which is zero, and on duplicate ids.
VectorIndex build_flat(std::vector<IdVector> vectors);
/// Seeded, single-threaded construction; identical input gives identical graph.
VectorIndex build_hnsw(std::vector<IdVector> vectors, const HnswParams& params = {});
/// Flat below params.activation_threshold vectors, HNSW at or above.
VectorIndex build_index(std::vector<IdVector> vectors, const HnswParams& params = {});

}  // namespace retbench
