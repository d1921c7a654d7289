#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "retbench/chunking.hpp"
#include "retbench/corpus.hpp"
#include "retbench/index.hpp"

namespace retbench {

class Embedder;

enum class Granularity { kChunk, kDocument };

struct RankedItem {
  std::string id;
  double score = 0.0;
  bool operator==(const RankedItem&) const = default;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedItem> hits;
  Granularity granularity = Granularity::kDocument;
};

/// Parent document of a chunk id of the form "{doc}#{start}-{end}".
std::string parent_of_chunk(const std::string& chunk_id);

/// Document score is the max over its chunks; ordered by score descending,
/// then doc id ascending; truncated to k.
RankedList aggregate_chunks_to_docs(const RankedList& chunk_hits, std::size_t k);

/// |relevant ∩ top-k| / |relevant|; nullopt when the query has no relevant document.
std::optional<double> recall_at_k(const RankedList& ranked, const RelevanceJudgments& qrels,
                                  std::size_t k);
/// 1 / rank of the first document with grade > 0, 0 if none is listed.
std::optional<double> reciprocal_rank(const RankedList& ranked, const RelevanceJudgments& qrels);
/// DCG with gains 2^grade - 1 and log2(rank + 1) discount over IDCG.
std::optional<double> ndcg_at_k(const RankedList& ranked, const RelevanceJudgments& qrels,
                                std::size_t k = 10);

struct QueryMetrics {
  std::string query_id;
  bool skipped = false;
  std::size_t relevant = 0;
  std::map<std::size_t, double> recall_at;
  double reciprocal_rank = 0.0;
  double ndcg_at_10 = 0.0;
};

/// Chunk/index facts for one run. Chunks-per-document skew is reported so the
/// optimistic bias of label inheritance can be judged.
struct RunInfo {
  std::string corpus;
  std::string model;
  std::string chunking;
  std::size_t documents = 0;
  std::size_t chunks = 0;
  double mean_chunks_per_doc = 0.0;
  std::size_t max_chunks_per_doc = 0;
  std::string index_kind = "flat";
  std::size_t dim = 0;
  std::uint64_t storage_bytes = 0;
};

struct MetricReport {
  RunInfo info;
  std::vector<std::size_t> k_values;
  std::vector<QueryMetrics> per_query;
  /// Means over non-skipped queries; zero and means_defined == false when none remain.
  std::map<std::size_t, double> recall_at;
  double mrr = 0.0;
  double ndcg_at_10 = 0.0;
  std::size_t num_queries = 0;
  std::size_t num_skipped_no_relevant = 0;
  bool means_defined = false;
};

/// Scores document-level rankings, one per query id in `query_ids` order.
/// Queries without a ranking are scored against an empty list.
MetricReport score_rankings(const std::vector<std::string>& query_ids,
                            const std::map<std::string, RankedList>& rankings,
                            const RelevanceJudgments& qrels, std::vector<std::size_t> k_values);

struct EvalOptions {
  std::vector<std::size_t> k_values{1, 5, 10};
  /// Chunk hits requested per document slot before aggregation.
  std::size_t oversample = 4;
  HnswParams hnsw;
  std::size_t jobs = 1;
};

struct RunTiming {
  double chunk_ms = 0.0;
  double embed_ms = 0.0;
  double index_ms = 0.0;
  /// Mean wall time per query for embedding plus search.
  double mean_query_ms = 0.0;
};

/// chunk -> embed (document task) -> index -> per query embed (query task),
/// search with oversampling, aggregate, score. Stage failures are rethrown as
/// StageError labelled with the stage.
MetricReport evaluate_run(const Corpus& corpus, const ChunkingConfig& chunking,
                          Embedder& embedder, const EvalOptions& options = {},
                          RunTiming* timing = nullptr);

/// Per-query records followed by one summary record, one JSON object per
/// line, values printed with six decimals so output is byte-stable.
std::string report_to_jsonl(const MetricReport& report);
/// Parses the summary line of report_to_jsonl output.
MetricReport summary_from_jsonl(const std::string& text);

/// Rows are runs, columns are R@k..., MRR, nDCG@10.
std::string render_metrics_table(const std::vector<MetricReport>& reports);
std::string render_metrics_csv(const std::vector<MetricReport>& reports);

}  // namespace retbench
