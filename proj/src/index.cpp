#include "retbench/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <queue>
#include <unordered_set>

#include <fmt/format.h>

#include "retbench/error.hpp"
#include "retbench/rng.hpp"

namespace retbench {

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

struct Scored {
  float score;
  std::uint32_t node;
};

// priority_queue ordering with the best candidate (highest score, lowest node) on top.
struct BestOnTop {
  bool operator()(const Scored& a, const Scored& b) const {
    return a.score != b.score ? a.score < b.score : a.node > b.node;
  }
};

// priority_queue ordering with the worst candidate on top.
struct WorstOnTop {
  bool operator()(const Scored& a, const Scored& b) const {
    return a.score != b.score ? a.score > b.score : a.node < b.node;
  }
};

bool hit_before(const SearchHit& a, const SearchHit& b) {
  return a.score != b.score ? a.score > b.score : a.id < b.id;
}

}  // namespace

std::string to_string(IndexKind kind) { return kind == IndexKind::kFlat ? "flat" : "hnsw"; }

void HnswParams::validate() const {
  if (M < 2) throw UsageError("HNSW M must be at least 2");
  if (ef_construction < 1) throw UsageError("HNSW ef_construction must be at least 1");
  if (ef_search < 1) throw UsageError("HNSW ef_search must be at least 1");
}

double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw ContractViolation(fmt::format("cosine of vectors with dims {} and {}", u.size(), v.size()));
  }
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (nu == 0.0 || nv == 0.0) {
    throw ContractViolation("cosine similarity undefined for a zero vector");
  }
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine(std::span<const float>(u.values), std::span<const float>(v.values));
}

std::uint64_t storage_bytes(std::uint64_t dim, std::uint64_t count) { return dim * 4 * count; }

std::uint64_t VectorIndex::graph_bytes() const {
  std::uint64_t bytes = 0;
  for (const auto& layers : links_) {
    bytes += 4;
    for (const auto& adj : layers) bytes += 4 + 4 * adj.size();
  }
  return bytes;
}

namespace {

void load_vectors(std::vector<IdVector>& vectors, std::size_t& dim, std::vector<std::string>& ids,
                  std::vector<float>& data) {
  dim = vectors.empty() ? 0 : vectors.front().second.dim();
  std::unordered_set<std::string> seen;
  ids.reserve(vectors.size());
  data.reserve(vectors.size() * dim);
  for (auto& [id, vec] : vectors) {
    if (vec.dim() != dim || dim == 0) {
      throw ContractViolation(
          fmt::format("vector '{}' has dim {}, index dim is {}", id, vec.dim(), dim));
    }
    if (!seen.insert(id).second) throw ContractViolation("duplicate index id '" + id + "'");
    const double n = std::sqrt(dot(vec.values, vec.values));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw ContractViolation("vector '" + id + "' is zero or non-finite");
    }
    for (float f : vec.values) data.push_back(static_cast<float>(f / n));
    ids.push_back(std::move(id));
  }
}

}  // namespace

VectorIndex build_flat(std::vector<IdVector> vectors) {
  VectorIndex index;
  index.kind_ = IndexKind::kFlat;
  load_vectors(vectors, index.dim_, index.ids_, index.data_);
  return index;
}

VectorIndex build_index(std::vector<IdVector> vectors, const HnswParams& params) {
  if (vectors.size() >= params.activation_threshold) return build_hnsw(std::move(vectors), params);
  return build_flat(std::move(vectors));
}

std::vector<SearchHit> VectorIndex::search(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw ContractViolation("search needs k >= 1");
  if (ids_.empty()) return {};
  if (query.dim() != dim_) {
    throw ContractViolation(
        fmt::format("query dim {} does not match index dim {}", query.dim(), dim_));
  }
  const double n = std::sqrt(dot(query.values, query.values));
  if (!(n > 0.0)) throw ContractViolation("query vector is zero");
  std::vector<float> q(dim_);
  for (std::size_t i = 0; i < dim_; ++i) q[i] = static_cast<float>(query.values[i] / n);
  return kind_ == IndexKind::kFlat ? search_flat(q, k) : search_hnsw(q, k);
}

std::vector<SearchHit> VectorIndex::search_flat(std::span<const float> q, std::size_t k) const {
  std::vector<SearchHit> hits;
  hits.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    hits.push_back({ids_[i], static_cast<float>(dot(q, vector(i)))});
  }
  k = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(),
                    hit_before);
  hits.resize(k);
  return hits;
}

// ---------------------------------------------------------------------------
// HNSW

namespace {

struct Graph {
  const VectorIndex& index;
  const std::vector<std::vector<std::vector<std::uint32_t>>>& links;

  float sim(std::span<const float> q, std::uint32_t node) const {
    return static_cast<float>(dot(q, index.vector(node)));
  }

  // Beam search over one layer; returns up to ef results, best first.
  std::vector<Scored> search_layer(std::span<const float> q, const std::vector<Scored>& entry,
                                   std::size_t ef, int layer) const {
    std::vector<bool> visited(index.size(), false);
    std::priority_queue<Scored, std::vector<Scored>, BestOnTop> candidates;
    std::priority_queue<Scored, std::vector<Scored>, WorstOnTop> results;
    for (const auto& e : entry) {
      visited[e.node] = true;
      candidates.push(e);
      results.push(e);
    }
    while (results.size() > ef) results.pop();
    while (!candidates.empty()) {
      const Scored c = candidates.top();
      if (results.size() >= ef && c.score < results.top().score) break;
      candidates.pop();
      for (std::uint32_t nb : links[c.node][static_cast<std::size_t>(layer)]) {
        if (visited[nb]) continue;
        visited[nb] = true;
        const Scored s{sim(q, nb), nb};
        if (results.size() < ef || s.score > results.top().score) {
          candidates.push(s);
          results.push(s);
          if (results.size() > ef) results.pop();
        }
      }
    }
    std::vector<Scored> out;
    out.reserve(results.size());
    while (!results.empty()) {
      out.push_back(results.top());
      results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  // Keeps a candidate only if it is closer to the base than to every kept neighbour.
  std::vector<std::uint32_t> select_neighbors(const std::vector<Scored>& best_first,
                                              std::size_t m) const {
    std::vector<std::uint32_t> kept;
    for (const auto& c : best_first) {
      if (kept.size() >= m) break;
      bool good = true;
      for (std::uint32_t r : kept) {
        if (static_cast<float>(dot(index.vector(c.node), index.vector(r))) > c.score) {
          good = false;
          break;
        }
      }
      if (good) kept.push_back(c.node);
    }
    return kept;
  }
};

}  // namespace

void VectorIndex::insert_hnsw(std::uint32_t node, int level) {
  Graph g{*this, links_};
  links_[node].resize(static_cast<std::size_t>(level) + 1);
  if (max_level_ < 0) {
    entry_ = node;
    max_level_ = level;
    return;
  }
  const auto q = vector(node);
  std::vector<Scored> ep{{g.sim(q, entry_), entry_}};
  for (int l = max_level_; l > level; --l) ep = {g.search_layer(q, ep, 1, l).front()};

  const std::size_t m = params_.M;
  for (int l = std::min(level, max_level_); l >= 0; --l) {
    auto found = g.search_layer(q, ep, params_.ef_construction, l);
    const auto neighbors = g.select_neighbors(found, m);
    auto& own = links_[node][static_cast<std::size_t>(l)];
    own = neighbors;
    const std::size_t max_degree = l == 0 ? 2 * m : m;
    for (std::uint32_t nb : neighbors) {
      auto& adj = links_[nb][static_cast<std::size_t>(l)];
      adj.push_back(node);
      if (adj.size() > max_degree) {
        const auto base = vector(nb);
        std::vector<Scored> cand;
        cand.reserve(adj.size());
        for (std::uint32_t x : adj) cand.push_back({g.sim(base, x), x});
        std::sort(cand.begin(), cand.end(), [](const Scored& a, const Scored& b) {
          return BestOnTop{}(b, a);
        });
        adj = g.select_neighbors(cand, max_degree);
      }
    }
    ep = std::move(found);
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = node;
  }
}

VectorIndex build_hnsw(std::vector<IdVector> vectors, const HnswParams& params) {
  params.validate();
  VectorIndex index;
  index.kind_ = IndexKind::kHnsw;
  index.params_ = params;
  load_vectors(vectors, index.dim_, index.ids_, index.data_);
  index.links_.resize(index.size());
  Rng rng(params.seed);
  const double ml = 1.0 / std::log(static_cast<double>(params.M));
  for (std::uint32_t node = 0; node < index.size(); ++node) {
    double u = rng.unit();
    while (u == 0.0) u = rng.unit();
    const int level = static_cast<int>(std::floor(-std::log(u) * ml));
    index.insert_hnsw(node, level);
  }
  return index;
}

std::vector<SearchHit> VectorIndex::search_hnsw(std::span<const float> q, std::size_t k) const {
  Graph g{*this, links_};
  std::vector<Scored> ep{{g.sim(q, entry_), entry_}};
  for (int l = max_level_; l > 0; --l) ep = {g.search_layer(q, ep, 1, l).front()};
  const auto found = g.search_layer(q, ep, std::max(params_.ef_search, k), 0);
  std::vector<SearchHit> hits;
  hits.reserve(found.size());
  for (const auto& s : found) hits.push_back({ids_[s.node], s.score});
  std::sort(hits.begin(), hits.end(), hit_before);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

// ---------------------------------------------------------------------------
// Persistence. All integers and floats little-endian.
//
//   char[4] magic "RBVI" | u32 version (1) | u8 kind | u8[3] zero
//   u32 dim | u64 count | u32 M | u32 ef_construction | u32 ef_search
//   u64 activation_threshold | u64 seed
//   f32[count * dim] unit vectors
//   count x (u32 byte length, bytes) ids
//   hnsw only: i32 max_level | u32 entry |
//              count x (u32 layers, layers x (u32 degree, degree x u32 node))

namespace {

constexpr char kMagic[4] = {'R', 'B', 'V', 'I'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    unsigned char buf[sizeof(U)];
    if (!in_.read(reinterpret_cast<char*>(buf), sizeof(U))) fail();
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
    return std::bit_cast<T>(bits);
  }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    if (n && !in_.read(s.data(), static_cast<std::streamsize>(n))) fail();
    return s;
  }
  [[noreturn]] void fail() const { throw DataError("truncated index file " + path_); }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

void VectorIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  Writer w(out);
  out.write(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(kind_));
  for (int i = 0; i < 3; ++i) w.put<std::uint8_t>(0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
  w.put<std::uint64_t>(size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params_.M));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params_.ef_construction));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params_.ef_search));
  w.put<std::uint64_t>(params_.activation_threshold);
  w.put<std::uint64_t>(params_.seed);
  for (float f : data_) w.put<float>(f);
  for (const auto& id : ids_) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(id.size()));
    w.bytes(id);
  }
  if (kind_ == IndexKind::kHnsw) {
    w.put<std::int32_t>(max_level_);
    w.put<std::uint32_t>(entry_);
    for (const auto& layers : links_) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
      for (const auto& adj : layers) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(adj.size()));
        for (auto nb : adj) w.put<std::uint32_t>(nb);
      }
    }
  }
  if (!out) throw DataError("short write to " + path.string());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open index " + path.string());
  Reader r(in, path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) throw DataError(path.string() + " is not an index file");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw DataError(fmt::format("{}: unsupported index version {}", path.string(), v));
  }
  VectorIndex index;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw DataError(path.string() + ": unknown index kind");
  index.kind_ = static_cast<IndexKind>(kind);
  for (int i = 0; i < 3; ++i) r.get<std::uint8_t>();
  index.dim_ = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  index.params_.M = r.get<std::uint32_t>();
  index.params_.ef_construction = r.get<std::uint32_t>();
  index.params_.ef_search = r.get<std::uint32_t>();
  index.params_.activation_threshold = r.get<std::uint64_t>();
  index.params_.seed = r.get<std::uint64_t>();
  index.data_.resize(count * index.dim_);
  for (auto& f : index.data_) f = r.get<float>();
  index.ids_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) index.ids_.push_back(r.bytes(r.get<std::uint32_t>()));
  if (index.kind_ == IndexKind::kHnsw) {
    index.max_level_ = r.get<std::int32_t>();
    index.entry_ = r.get<std::uint32_t>();
    index.links_.resize(count);
    for (auto& layers : index.links_) {
      layers.resize(r.get<std::uint32_t>());
      for (auto& adj : layers) {
        adj.resize(r.get<std::uint32_t>());
        for (auto& nb : adj) {
          nb = r.get<std::uint32_t>();
          if (nb >= count) throw DataError(path.string() + ": neighbour out of range");
        }
      }
    }
  }
  return index;
}

}  // namespace retbench
