#include "retbench/ablation.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "retbench/embedding.hpp"
#include "retbench/error.hpp"

namespace retbench {

bool AblationGrid::partial() const {
  return std::any_of(cells.begin(), cells.end(), [](const GridCell& c) { return !c.report; });
}

const GridCell* AblationGrid::find(ChunkStrategy strategy, std::size_t size) const {
  for (const auto& c : cells) {
    if (c.strategy == strategy && c.size == size) return &c;
  }
  return nullptr;
}

AblationGrid run_grid(const Corpus& corpus, Embedder& embedder, const GridOptions& options) {
  AblationGrid grid;
  grid.corpus = corpus.name;
  grid.embedder = embedder.spec().name;
  for (auto strategy : options.strategies) {
    for (auto size : options.sizes) {
      GridCell cell;
      cell.strategy = strategy;
      cell.size = size;
      ChunkingConfig cfg{strategy, size, options.tau, options.trailing_min_fraction};
      try {
        RunTiming timing;
        cell.report = evaluate_run(corpus, cfg, embedder, options.eval, &timing);
        cell.chunk_count = cell.report->info.chunks;
        cell.storage_bytes = cell.report->info.storage_bytes;
        cell.mean_query_ms = timing.mean_query_ms;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.latency_ms <= b.latency_ms && a.quality >= b.quality &&
         (a.latency_ms < b.latency_ms || a.quality > b.quality);
}

namespace {

bool front_order(const ParetoPoint& a, const ParetoPoint& b) {
  if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
  if (a.quality != b.quality) return a.quality > b.quality;
  return a.label < b.label;
}

}  // namespace

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(), front_order);
  // After sorting by latency, a point is dominated iff some earlier point has
  // strictly higher quality, or equal quality at strictly lower latency.
  std::vector<ParetoPoint> front;
  for (const auto& p : sorted) {
    if (!front.empty() && dominates(front.back(), p)) continue;
    front.push_back(p);
  }
  return front;
}

namespace {

std::string ndcg_cell(const GridCell* c) {
  return c && c->report && c->report->means_defined ? fmt::format("{:.4f}", c->report->ndcg_at_10)
                                                    : std::string("-");
}

}  // namespace

std::string render_grid_matrix(const AblationGrid& grid) {
  std::vector<ChunkStrategy> strategies;
  std::set<std::size_t> sizes;
  for (const auto& c : grid.cells) {
    if (std::find(strategies.begin(), strategies.end(), c.strategy) == strategies.end()) {
      strategies.push_back(c.strategy);
    }
    sizes.insert(c.size);
  }
  std::string out = fmt::format("nDCG@10  model={}  corpus={}{}\n", grid.embedder, grid.corpus,
                                grid.partial() ? "  (partial grid)" : "");
  out += fmt::format("{:>6}", "L");
  for (auto s : strategies) out += fmt::format("  {:>9}", to_string(s));
  out += '\n';
  for (auto size : sizes) {
    out += fmt::format("{:>6}", size);
    for (auto s : strategies) out += fmt::format("  {:>9}", ndcg_cell(grid.find(s, size)));
    out += '\n';
  }
  return out;
}

std::string render_grid_csv(const AblationGrid& grid) {
  std::string out = "model,strategy,size,metric,value\n";
  for (const auto& c : grid.cells) {
    const auto prefix = fmt::format("{},{},{}", grid.embedder, to_string(c.strategy), c.size);
    if (!c.report) {
      out += prefix + ",error,\n";
      continue;
    }
    const auto& r = *c.report;
    if (r.means_defined) {
      out += fmt::format("{},ndcg@10,{:.6f}\n", prefix, r.ndcg_at_10);
      out += fmt::format("{},mrr,{:.6f}\n", prefix, r.mrr);
      for (const auto& [k, v] : r.recall_at) out += fmt::format("{},recall@{},{:.6f}\n", prefix, k, v);
    }
    out += fmt::format("{},chunks,{}\n", prefix, c.chunk_count);
    out += fmt::format("{},storage_bytes,{}\n", prefix, c.storage_bytes);
  }
  return out;
}

std::string render_pareto_csv(const std::vector<ParetoPoint>& points) {
  const auto front = pareto_front(points);
  std::vector<ParetoPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(), front_order);
  std::string out = "label,latency_ms,ndcg@10,on_front\n";
  for (const auto& p : sorted) {
    const bool on = std::find(front.begin(), front.end(), p) != front.end();
    out += fmt::format("{},{:.6f},{:.6f},{}\n", p.label, p.latency_ms, p.quality, on ? 1 : 0);
  }
  return out;
}

std::string render_pareto_table(const std::vector<ParetoPoint>& points) {
  const auto front = pareto_front(points);
  std::vector<ParetoPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(), front_order);
  std::size_t w = 5;
  for (const auto& p : sorted) w = std::max(w, p.label.size());
  std::string out = fmt::format("{:<{}}  {:>12}  {:>8}  {}\n", "Label", w, "latency_ms", "nDCG@10", "front");
  for (const auto& p : sorted) {
    const bool on = std::find(front.begin(), front.end(), p) != front.end();
    out += fmt::format("{:<{}}  {:>12.3f}  {:>8.4f}  {}\n", p.label, w, p.latency_ms, p.quality,
                       on ? "*" : "");
  }
  return out;
}

}  // namespace retbench
