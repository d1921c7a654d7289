#include "retbench/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "retbench/embedding.hpp"
#include "retbench/error.hpp"

namespace retbench {

std::string parent_of_chunk(const std::string& chunk_id) {
  const auto hash = chunk_id.rfind('#');
  return hash == std::string::npos ? chunk_id : chunk_id.substr(0, hash);
}

RankedList aggregate_chunks_to_docs(const RankedList& chunk_hits, std::size_t k) {
  std::unordered_map<std::string, double> best;
  for (const auto& hit : chunk_hits.hits) {
    auto [it, inserted] = best.try_emplace(parent_of_chunk(hit.id), hit.score);
    if (!inserted) it->second = std::max(it->second, hit.score);
  }
  RankedList out;
  out.query_id = chunk_hits.query_id;
  out.granularity = Granularity::kDocument;
  out.hits.reserve(best.size());
  for (auto& [doc, score] : best) out.hits.push_back({doc, score});
  std::sort(out.hits.begin(), out.hits.end(), [](const RankedItem& a, const RankedItem& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (out.hits.size() > k) out.hits.resize(k);
  return out;
}

namespace {

int checked_grade(const RelevanceJudgments& qrels, const std::string& q, const std::string& d) {
  const int g = qrels.grade(q, d);
  if (g < 0 || g > 2) throw DataError(fmt::format("grade {} for ({}, {}) outside {{0,1,2}}", g, q, d));
  return g;
}

double gain(int grade) { return std::pow(2.0, grade) - 1.0; }

}  // namespace

std::optional<double> recall_at_k(const RankedList& ranked, const RelevanceJudgments& qrels,
                                  std::size_t k) {
  const auto relevant = qrels.relevant(ranked.query_id);
  if (relevant.empty()) return std::nullopt;
  const std::set<std::string> rel(relevant.begin(), relevant.end());
  std::set<std::string> found;
  for (std::size_t i = 0; i < std::min(k, ranked.hits.size()); ++i) {
    if (rel.contains(ranked.hits[i].id)) found.insert(ranked.hits[i].id);
  }
  return static_cast<double>(found.size()) / static_cast<double>(rel.size());
}

std::optional<double> reciprocal_rank(const RankedList& ranked, const RelevanceJudgments& qrels) {
  if (qrels.relevant(ranked.query_id).empty()) return std::nullopt;
  for (std::size_t i = 0; i < ranked.hits.size(); ++i) {
    if (checked_grade(qrels, ranked.query_id, ranked.hits[i].id) > 0) {
      return 1.0 / static_cast<double>(i + 1);
    }
  }
  return 0.0;
}

std::optional<double> ndcg_at_k(const RankedList& ranked, const RelevanceJudgments& qrels,
                                std::size_t k) {
  std::vector<int> ideal;
  for (const auto& [doc, g] : qrels.graded(ranked.query_id)) {
    checked_grade(qrels, ranked.query_id, doc);
    ideal.push_back(g);
  }
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
    idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg == 0.0) return std::nullopt;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.hits.size()); ++i) {
    dcg += gain(checked_grade(qrels, ranked.query_id, ranked.hits[i].id)) /
           std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

MetricReport score_rankings(const std::vector<std::string>& query_ids,
                            const std::map<std::string, RankedList>& rankings,
                            const RelevanceJudgments& qrels, std::vector<std::size_t> k_values) {
  std::sort(k_values.begin(), k_values.end());
  k_values.erase(std::unique(k_values.begin(), k_values.end()), k_values.end());
  if (k_values.empty() || k_values.front() == 0) throw UsageError("k values must be positive");

  MetricReport report;
  report.k_values = k_values;
  report.num_queries = query_ids.size();
  std::size_t scored = 0;
  for (const auto& qid : query_ids) {
    RankedList empty{qid, {}, Granularity::kDocument};
    auto it = rankings.find(qid);
    const RankedList& ranked = it == rankings.end() ? empty : it->second;
    if (ranked.granularity != Granularity::kDocument) {
      throw ContractViolation("scoring needs document-granularity rankings");
    }
    if (ranked.query_id != qid) {
      throw ContractViolation("ranking filed under " + qid + " belongs to " + ranked.query_id);
    }
    QueryMetrics qm;
    qm.query_id = qid;
    qm.relevant = qrels.relevant(qid).size();
    const auto rr = reciprocal_rank(ranked, qrels);
    if (!rr) {
      qm.skipped = true;
      ++report.num_skipped_no_relevant;
      report.per_query.push_back(std::move(qm));
      continue;
    }
    qm.reciprocal_rank = *rr;
    for (auto k : k_values) qm.recall_at[k] = *recall_at_k(ranked, qrels, k);
    qm.ndcg_at_10 = ndcg_at_k(ranked, qrels, 10).value_or(0.0);
    ++scored;
    for (auto k : k_values) report.recall_at[k] += qm.recall_at[k];
    report.mrr += qm.reciprocal_rank;
    report.ndcg_at_10 += qm.ndcg_at_10;
    report.per_query.push_back(std::move(qm));
  }
  report.means_defined = scored > 0;
  for (auto k : k_values) {
    report.recall_at[k] = scored ? report.recall_at[k] / static_cast<double>(scored) : 0.0;
  }
  if (scored) {
    report.mrr /= static_cast<double>(scored);
    report.ndcg_at_10 /= static_cast<double>(scored);
  }
  return report;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

}  // namespace

MetricReport evaluate_run(const Corpus& corpus, const ChunkingConfig& chunking, Embedder& embedder,
                          const EvalOptions& options, RunTiming* timing) {
  if (options.k_values.empty()) throw UsageError("no k values requested");
  RunTiming t;

  auto t0 = Clock::now();
  const auto chunks = stage("chunk", [&] { return chunk_corpus(corpus, chunking, &embedder); });
  t.chunk_ms = ms_since(t0);

  t0 = Clock::now();
  const auto vectors = stage("embed", [&] {
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    return embedder.embed_batch(texts, TaskType::kRetrievalDocument);
  });
  t.embed_ms = ms_since(t0);

  t0 = Clock::now();
  const VectorIndex index = stage("index", [&] {
    std::vector<IdVector> entries;
    entries.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) entries.emplace_back(chunks[i].chunk_id, vectors[i]);
    return build_index(std::move(entries), options.hnsw);
  });
  t.index_ms = ms_since(t0);

  const std::size_t depth =
      std::max<std::size_t>(10, *std::max_element(options.k_values.begin(), options.k_values.end()));
  const std::size_t chunk_k = std::max<std::size_t>(1, std::min(depth * std::max<std::size_t>(1, options.oversample),
                                                                 index.size()));

  std::vector<std::string> query_ids;
  std::vector<std::string> query_texts;
  for (const auto& q : corpus.queries) {
    query_ids.push_back(q.query_id);
    query_texts.push_back(q.text);
  }

  t0 = Clock::now();
  const auto qvecs = stage("query-embed", [&] {
    return embedder.embed_batch(query_texts, TaskType::kRetrievalQuery);
  });
  std::vector<RankedList> ranked(query_ids.size());
  stage("search", [&] {
    auto work = [&](std::size_t begin, std::size_t step) {
      for (std::size_t i = begin; i < query_ids.size(); i += step) {
        RankedList chunk_list{query_ids[i], {}, Granularity::kChunk};
        for (auto& hit : index.search(qvecs[i], chunk_k)) {
          chunk_list.hits.push_back({std::move(hit.id), static_cast<double>(hit.score)});
        }
        ranked[i] = aggregate_chunks_to_docs(chunk_list, depth);
      }
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(1, query_ids.size()));
    if (jobs == 1) {
      work(0, 1);
    } else {
      std::vector<std::exception_ptr> errors(jobs);
      {
        std::vector<std::jthread> threads;
        for (std::size_t j = 0; j < jobs; ++j) {
          threads.emplace_back([&, j] {
            try {
              work(j, jobs);
            } catch (...) {
              errors[j] = std::current_exception();
            }
          });
        }
      }
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    return 0;
  });
  t.mean_query_ms = query_ids.empty() ? 0.0 : ms_since(t0) / static_cast<double>(query_ids.size());

  std::map<std::string, RankedList> by_query;
  for (auto& r : ranked) by_query.emplace(r.query_id, std::move(r));
  MetricReport report = stage("score", [&] {
    return score_rankings(query_ids, by_query, corpus.judgments, options.k_values);
  });

  RunInfo& info = report.info;
  info.corpus = corpus.name;
  info.model = embedder.spec().name;
  info.chunking = fmt::format("{}-{}", to_string(chunking.strategy), chunking.target_size);
  info.documents = corpus.documents.size();
  info.chunks = chunks.size();
  std::unordered_map<std::string, std::size_t> per_doc;
  for (const auto& c : chunks) ++per_doc[c.parent_doc_id];
  for (const auto& [d, n] : per_doc) info.max_chunks_per_doc = std::max(info.max_chunks_per_doc, n);
  info.mean_chunks_per_doc =
      info.documents ? static_cast<double>(chunks.size()) / static_cast<double>(info.documents) : 0.0;
  info.index_kind = to_string(index.kind());
  info.dim = index.dim();
  info.storage_bytes = index.vector_bytes();

  if (timing) *timing = t;
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }
std::string num(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

std::string report_to_jsonl(const MetricReport& report) {
  std::string out;
  for (const auto& q : report.per_query) {
    out += fmt::format("{{\"type\":\"query\",\"query_id\":{},\"skipped\":{},\"relevant\":{}",
                       quoted(q.query_id), q.skipped, q.relevant);
    if (!q.skipped) {
      for (auto k : report.k_values) out += fmt::format(",\"recall@{}\":{}", k, num(q.recall_at.at(k)));
      out += fmt::format(",\"mrr\":{},\"ndcg@10\":{}", num(q.reciprocal_rank), num(q.ndcg_at_10));
    }
    out += "}\n";
  }
  const auto& i = report.info;
  out += fmt::format(
      "{{\"type\":\"summary\",\"corpus\":{},\"model\":{},\"chunking\":{},\"documents\":{},"
      "\"chunks\":{},\"mean_chunks_per_doc\":{},\"max_chunks_per_doc\":{},\"index\":{},\"dim\":{},"
      "\"storage_bytes\":{},\"num_queries\":{},\"num_skipped_no_relevant\":{},\"means_defined\":{},"
      "\"k\":[{}]",
      quoted(i.corpus), quoted(i.model), quoted(i.chunking), i.documents, i.chunks,
      num(i.mean_chunks_per_doc), i.max_chunks_per_doc, quoted(i.index_kind), i.dim,
      i.storage_bytes, report.num_queries, report.num_skipped_no_relevant, report.means_defined,
      fmt::join(report.k_values, ","));
  for (auto k : report.k_values) out += fmt::format(",\"recall@{}\":{}", k, num(report.recall_at.at(k)));
  out += fmt::format(",\"mrr\":{},\"ndcg@10\":{}}}\n", num(report.mrr), num(report.ndcg_at_10));
  return out;
}

MetricReport summary_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line)) {
    if (line.find("\"type\":\"summary\"") != std::string::npos) last = line;
  }
  if (last.empty()) throw DataError("no summary record in metrics output");
  try {
    const auto j = nlohmann::json::parse(last);
    MetricReport r;
    r.info.corpus = j.at("corpus");
    r.info.model = j.at("model");
    r.info.chunking = j.at("chunking");
    r.info.documents = j.at("documents");
    r.info.chunks = j.at("chunks");
    r.info.mean_chunks_per_doc = j.at("mean_chunks_per_doc");
    r.info.max_chunks_per_doc = j.at("max_chunks_per_doc");
    r.info.index_kind = j.at("index");
    r.info.dim = j.at("dim");
    r.info.storage_bytes = j.at("storage_bytes");
    r.num_queries = j.at("num_queries");
    r.num_skipped_no_relevant = j.at("num_skipped_no_relevant");
    r.means_defined = j.at("means_defined");
    r.k_values = j.at("k").get<std::vector<std::size_t>>();
    for (auto k : r.k_values) r.recall_at[k] = j.at(fmt::format("recall@{}", k)).get<double>();
    r.mrr = j.at("mrr");
    r.ndcg_at_10 = j.at("ndcg@10");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed summary record: ") + e.what());
  }
}

namespace {

std::vector<std::size_t> union_k(const std::vector<MetricReport>& reports) {
  std::set<std::size_t> ks;
  for (const auto& r : reports) ks.insert(r.k_values.begin(), r.k_values.end());
  return {ks.begin(), ks.end()};
}

std::string cell(const MetricReport& r, std::optional<std::size_t> k, bool mrr) {
  if (!r.means_defined) return "n/a";
  if (k) {
    auto it = r.recall_at.find(*k);
    return it == r.recall_at.end() ? "-" : fmt::format("{:.3f}", it->second);
  }
  return fmt::format("{:.3f}", mrr ? r.mrr : r.ndcg_at_10);
}

}  // namespace

std::string render_metrics_table(const std::vector<MetricReport>& reports) {
  const auto ks = union_k(reports);
  std::size_t w = 5;
  for (const auto& r : reports) w = std::max(w, r.info.model.size());
  std::string out = fmt::format("{:<{}}  {:<12}  {:<12}", "Model", w, "Corpus", "Chunking");
  for (auto k : ks) out += fmt::format("  {:>7}", fmt::format("R@{}", k));
  out += fmt::format("  {:>7}  {:>7}  {:>7}\n", "MRR", "nDCG@10", "Queries");
  for (const auto& r : reports) {
    out += fmt::format("{:<{}}  {:<12}  {:<12}", r.info.model, w, r.info.corpus, r.info.chunking);
    for (auto k : ks) out += fmt::format("  {:>7}", cell(r, k, false));
    out += fmt::format("  {:>7}  {:>7}  {:>7}\n", cell(r, std::nullopt, true),
                       cell(r, std::nullopt, false), r.num_queries - r.num_skipped_no_relevant);
  }
  return out;
}

std::string render_metrics_csv(const std::vector<MetricReport>& reports) {
  const auto ks = union_k(reports);
  std::string out = "model,corpus,chunking";
  for (auto k : ks) out += fmt::format(",recall@{}", k);
  out += ",mrr,ndcg@10,num_queries,num_skipped_no_relevant\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{}", r.info.model, r.info.corpus, r.info.chunking);
    for (auto k : ks) {
      auto it = r.recall_at.find(k);
      out += "," + (r.means_defined && it != r.recall_at.end() ? num(it->second) : std::string());
    }
    out += r.means_defined ? fmt::format(",{},{}", num(r.mrr), num(r.ndcg_at_10)) : ",,";
    out += fmt::format(",{},{}\n", r.num_queries, r.num_skipped_no_relevant);
  }
  return out;
}

}  // namespace retbench
