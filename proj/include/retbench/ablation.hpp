#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "retbench/chunking.hpp"
#include "retbench/evaluation.hpp"

namespace retbench {

struct GridCell {
  ChunkStrategy strategy = ChunkStrategy::kFixed;
  std::size_t size = 0;
  std::optional<MetricReport> report;
  std::size_t chunk_count = 0;
  std::uint64_t storage_bytes = 0;
  double mean_query_ms = 0.0;
  /// Set when the cell failed; report is then empty.
  std::string error;
};

struct AblationGrid {
  std::string corpus;
  std::string embedder;
  std::vector<GridCell> cells;

  bool partial() const;
  const GridCell* find(ChunkStrategy strategy, std::size_t size) const;
};

struct GridOptions {
  std::vector<ChunkStrategy> strategies{ChunkStrategy::kFixed, ChunkStrategy::kSliding,
                                        ChunkStrategy::kSemantic};
  std::vector<std::size_t> sizes{8, 16, 32, 64, 128};
  double tau = 0.75;
  double trailing_min_fraction = 0.25;
  EvalOptions eval;
};

/// One evaluate_run per (strategy, size), strategies outermost. A failing cell
/// is recorded with its error and the grid continues.
AblationGrid run_grid(const Corpus& corpus, Embedder& embedder, const GridOptions& options = {});

struct ParetoPoint {
  std::string label;
  double latency_ms = 0.0;
  double quality = 0.0;
  bool operator==(const ParetoPoint&) const = default;
};

/// a dominates b: no slower, no worse, strictly better in one of the two.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);

/// Non-dominated points sorted by latency, then quality descending, then label.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

/// Size x strategy matrix of nDCG@10; failed cells print as "-".
std::string render_grid_matrix(const AblationGrid& grid);
/// Tidy records: strategy,size,metric,value.
std::string render_grid_csv(const AblationGrid& grid);
/// Every point with a front-membership flag, ordered by latency.
std::string render_pareto_csv(const std::vector<ParetoPoint>& points);
std::string render_pareto_table(const std::vector<ParetoPoint>& points);

}  // namespace retbench
