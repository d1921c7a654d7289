#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "retbench/ablation.hpp"
#include "retbench/chunking.hpp"
#include "retbench/error.hpp"
#include "retbench/evaluation.hpp"
#include "retbench/index.hpp"
#include "retbench/latency.hpp"
#include "retbench/remote.hpp"
#include "retbench/rng.hpp"

namespace retbench::cli {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("short write to " + path.string());
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions o;
  o.k_values = cfg.k_values;
  o.oversample = cfg.oversample;
  o.hnsw = cfg.hnsw;
  o.jobs = cfg.jobs;
  return o;
}

std::string embed_stats_json(const EmbedStats& s) {
  return nlohmann::json{{"requested", s.requested},
                        {"cache_hits", s.cache_hits},
                        {"backend_calls", s.backend_calls},
                        {"backend_items", s.backend_items},
                        {"truncated_items", s.truncated_items},
                        {"input_tokens", s.input_tokens}}
             .dump(2) +
         "\n";
}

std::vector<IdVector> embed_chunks(Embedder& embedder, const std::vector<Chunk>& chunks) {
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vecs = embedder.embed_batch(texts, TaskType::kRetrievalDocument);
  std::vector<IdVector> entries;
  entries.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) entries.emplace_back(chunks[i].chunk_id, std::move(vecs[i]));
  return entries;
}

}  // namespace

Corpus load_corpus(const Context& ctx) {
  const auto& cfg = ctx.config;
  if (cfg.beir_path) {
    LoadReport report;
    Corpus c = load_beir_corpus(*cfg.beir_path, cfg.beir_split, &report);
    if (report.dropped_qrels) {
      ctx.err << fmt::format("warning: dropped {} qrels rows referencing unknown ids\n",
                             report.dropped_qrels);
    }
    if (report.dropped_documents) {
      ctx.err << fmt::format("warning: dropped {} documents without text\n", report.dropped_documents);
    }
    return c;
  }
  if (cfg.synth) return synthesize_corpus(*cfg.synth);
  throw UsageError("config has no corpus source");
}

std::shared_ptr<Embedder> make_embedder(const RunConfig& cfg) {
  std::shared_ptr<EmbeddingBackend> backend;
  if (cfg.embedder.backend == BackendKind::kRemote) {
    RemoteOptions opts;
    opts.requests_per_second = cfg.rate_limit_rps;
    opts.retry.max_attempts = cfg.retry_max_attempts;
    opts.retry.base = std::chrono::milliseconds(cfg.retry_base_ms);
    opts.retry.jitter_seed = cfg.seed;
    opts.timeout = std::chrono::milliseconds(cfg.timeout_ms);
    if (const char* token = std::getenv("RETBENCH_ENDPOINT_TOKEN")) opts.token = token;
    backend = std::make_shared<RemoteBackend>(*cfg.embedder.endpoint, opts);
  } else {
    backend = make_backend(cfg.embedder);
  }
  return std::make_shared<Embedder>(cfg.embedder, backend,
                                    std::make_shared<EmbeddingCache>(cfg.cache_dir), cfg.batch_size);
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "resolved_config.yaml", config_to_yaml(cfg));
}

void cmd_synth(Context& ctx, const fs::path& out_dir) {
  if (!ctx.config.synth) throw UsageError("synth needs a corpus.synth section");
  const Corpus corpus = synthesize_corpus(*ctx.config.synth);
  write_beir_corpus(corpus, out_dir);
  echo_config(ctx.config, out_dir);
  const auto stats = corpus_stats(corpus);
  write_text(out_dir / "stats.json",
             nlohmann::json{{"documents", stats.documents},
                            {"queries", stats.queries},
                            {"mean_tokens", std::round(stats.mean_tokens * 1000.0) / 1000.0},
                            {"median_tokens", stats.median_tokens},
                            {"max_tokens", stats.max_tokens}}
                     .dump(2) +
                 "\n");
  ctx.out << fmt::format("wrote {} documents, {} queries to {} (mean {:.1f} tokens/doc)\n",
                         stats.documents, stats.queries, out_dir.string(), stats.mean_tokens);
}

void cmd_chunk(Context& ctx) {
  const Corpus corpus = load_corpus(ctx);
  auto embedder = ctx.config.chunking.strategy == ChunkStrategy::kSemantic
                      ? make_embedder(ctx.config)
                      : nullptr;
  const auto chunks = chunk_corpus(corpus, ctx.config.chunking, embedder.get());
  const auto& dir = ctx.config.output_dir;
  write_chunks(chunks, dir / "chunks.jsonl");
  echo_config(ctx.config, dir);
  ctx.out << fmt::format("{} chunks from {} documents -> {}\n", chunks.size(),
                         corpus.documents.size(), (dir / "chunks.jsonl").string());
}

void cmd_embed(Context& ctx) {
  const Corpus corpus = load_corpus(ctx);
  auto embedder = make_embedder(ctx.config);
  const auto chunks = chunk_corpus(corpus, ctx.config.chunking, embedder.get());
  embed_chunks(*embedder, chunks);
  std::vector<std::string> queries;
  for (const auto& q : corpus.queries) queries.push_back(q.text);
  embedder->embed_batch(queries, TaskType::kRetrievalQuery);
  const auto& dir = ctx.config.output_dir;
  write_text(dir / "embed_stats.json", embed_stats_json(embedder->stats()));
  echo_config(ctx.config, dir);
  const auto s = embedder->stats();
  ctx.out << fmt::format("embedded {} texts: {} cache hits, {} backend items in {} calls\n",
                         s.requested, s.cache_hits, s.backend_items, s.backend_calls);
}

void cmd_index(Context& ctx) {
  const Corpus corpus = load_corpus(ctx);
  auto embedder = make_embedder(ctx.config);
  const auto chunks = chunk_corpus(corpus, ctx.config.chunking, embedder.get());
  const auto index = build_index(embed_chunks(*embedder, chunks), ctx.config.hnsw);
  const auto& dir = ctx.config.output_dir;
  fs::create_directories(dir);
  index.save(dir / "index.bin");
  echo_config(ctx.config, dir);
  ctx.out << fmt::format("{} index: {} vectors x {} dims, {} vector bytes, {} graph bytes\n",
                         to_string(index.kind()), index.size(), index.dim(), index.vector_bytes(),
                         index.graph_bytes());
}

void cmd_eval(Context& ctx) {
  const Corpus corpus = load_corpus(ctx);
  auto embedder = make_embedder(ctx.config);
  const auto report = evaluate_run(corpus, ctx.config.chunking, *embedder, eval_options(ctx.config));
  const auto& dir = ctx.config.output_dir;
  write_text(dir / "metrics.jsonl", report_to_jsonl(report));
  write_text(dir / "metrics.txt", render_metrics_table({report}));
  write_text(dir / "metrics.csv", render_metrics_csv({report}));
  write_text(dir / "embed_stats.json", embed_stats_json(embedder->stats()));
  echo_config(ctx.config, dir);
  ctx.out << render_metrics_table({report});
  if (!report.means_defined) {
    ctx.err << "warning: no query has a relevant document; means are undefined\n";
  }
}

void cmd_latency(Context& ctx) {
  const auto& cfg = ctx.config;
  const Corpus corpus = load_corpus(ctx);
  if (corpus.queries.empty()) throw DataError("corpus has no queries to time");
  auto embedder = make_embedder(cfg);
  const auto chunks = chunk_corpus(corpus, cfg.chunking, embedder.get());
  const auto index = build_index(embed_chunks(*embedder, chunks), cfg.hnsw);

  const Query* query = nullptr;
  if (cfg.latency_query_id) {
    for (const auto& q : corpus.queries) {
      if (q.query_id == *cfg.latency_query_id) query = &q;
    }
    if (!query) throw DataError("latency query '" + *cfg.latency_query_id + "' not in corpus");
  } else {
    Rng rng(cfg.seed);
    query = &corpus.queries[rng.below(corpus.queries.size())];
  }

  std::size_t depth = 10;
  for (auto k : cfg.k_values) depth = std::max(depth, k);
  const std::size_t chunk_k = std::max<std::size_t>(1, std::min(depth * cfg.oversample, index.size()));
  auto pipeline = [&] {
    const auto q = embedder->embed_one(query->text, TaskType::kRetrievalQuery, CacheMode::kBypass);
    RankedList hits{query->query_id, {}, Granularity::kChunk};
    for (auto& h : index.search(q, chunk_k)) hits.hits.push_back({std::move(h.id), h.score});
    aggregate_chunks_to_docs(hits, depth);
  };
  const auto stats = measure_latency(pipeline, cfg.latency);
  const std::vector<LatencyRow> rows{{cfg.embedder.name, stats, cfg.cost_per_million_tokens}};
  const auto& dir = cfg.output_dir;
  std::string text = render_latency_table(rows);
  text += fmt::format("\nquery {}; {} warm-ups; timer resolution {:.6f} ms; {}\n", query->query_id,
                      stats.n_warmups, stats.timer_resolution_ms,
                      cfg.embedder.backend == BackendKind::kRemote
                          ? "remote connection reused across runs (keep-alive)"
                          : "in-process backend");
  write_text(dir / "latency.txt", text);
  write_text(dir / "latency.csv", render_latency_csv(rows));
  std::string samples = "run,ms\n";
  for (std::size_t i = 0; i < stats.samples_ms.size(); ++i) {
    samples += fmt::format("{},{:.6f}\n", i, stats.samples_ms[i]);
  }
  write_text(dir / "latency_samples.csv", samples);
  echo_config(cfg, dir);
  ctx.out << text;
}

void cmd_ablate(Context& ctx) {
  const auto& cfg = ctx.config;
  const Corpus corpus = load_corpus(ctx);
  auto embedder = make_embedder(cfg);
  GridOptions opts;
  opts.strategies = cfg.ablation_strategies;
  opts.sizes = cfg.ablation_sizes;
  opts.tau = cfg.chunking.tau;
  opts.trailing_min_fraction = cfg.chunking.trailing_min_fraction;
  opts.eval = eval_options(cfg);
  const auto grid = run_grid(corpus, *embedder, opts);

  std::vector<ParetoPoint> points;
  std::vector<MetricReport> reports;
  for (const auto& c : grid.cells) {
    if (!c.report) {
      ctx.err << fmt::format("warning: cell {}-{} failed: {}\n", to_string(c.strategy), c.size, c.error);
      continue;
    }
    reports.push_back(*c.report);
    if (c.report->means_defined) {
      points.push_back({c.report->info.chunking, c.mean_query_ms, c.report->ndcg_at_10});
    }
  }
  const auto& dir = cfg.output_dir;
  write_text(dir / "grid.txt", render_grid_matrix(grid));
  write_text(dir / "grid.csv", render_grid_csv(grid));
  write_text(dir / "grid_metrics.csv", render_metrics_csv(reports));
  write_text(dir / "pareto.txt", render_pareto_table(points));
  write_text(dir / "pareto.csv", render_pareto_csv(points));
  echo_config(cfg, dir);
  ctx.out << render_grid_matrix(grid);
  if (grid.partial()) throw DataError("ablation grid is partial; see warnings");
}

bool cmd_cache(Context& ctx, const std::string& action) {
  EmbeddingCache cache(ctx.config.cache_dir);
  if (action == "stats") {
    const auto s = cache.stats();
    ctx.out << fmt::format("entries {}\nbytes {}\ntemp_files {}\n", s.entries, s.bytes, s.temp_files);
    return true;
  }
  if (action == "verify") {
    const auto r = cache.verify();
    for (const auto& p : r.corrupt) ctx.out << "corrupt " << p.string() << '\n';
    ctx.out << fmt::format("checked {}\ncorrupt {}\n", r.checked, r.corrupt.size());
    return r.corrupt.empty();
  }
  if (action == "gc") {
    ctx.out << fmt::format("removed {}\n", cache.gc());
    return true;
  }
  throw UsageError("cache action must be stats, verify or gc");
}

void cmd_report(Context& ctx, const std::vector<fs::path>& runs) {
  if (runs.empty()) throw UsageError("report needs at least one run directory");
  std::vector<MetricReport> reports;
  std::vector<LatencyRow> latency_rows;
  std::vector<ParetoPoint> points;
  for (const auto& run : runs) {
    auto report = summary_from_jsonl(read_text(run / "metrics.jsonl"));
    const fs::path lat = run / "latency.csv";
    if (fs::exists(lat)) {
      std::istringstream in(read_text(lat));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string item;
        while (std::getline(ls, item, ',')) f.push_back(item);
        if (f.size() < 4) throw DataError("malformed " + lat.string());
        LatencyRow row;
        row.model = f[0];
        row.stats.median_ms = std::stod(f[1]);
        row.stats.std_ms = std::stod(f[2]);
        row.stats.p95_ms = std::stod(f[3]);
        if (f.size() > 4) row.stats.n_runs = std::stoul(f[4]);
        if (f.size() > 7 && !f[7].empty()) row.cost_per_million_tokens = std::stod(f[7]);
        if (report.means_defined) points.push_back({row.model, row.stats.median_ms, report.ndcg_at_10});
        latency_rows.push_back(std::move(row));
      }
    }
    reports.push_back(std::move(report));
  }
  const auto& dir = ctx.config.output_dir;
  write_text(dir / "report_metrics.txt", render_metrics_table(reports));
  write_text(dir / "report_metrics.csv", render_metrics_csv(reports));
  if (!latency_rows.empty()) {
    write_text(dir / "report_latency.txt", render_latency_table(latency_rows));
    write_text(dir / "report_latency.csv", render_latency_csv(latency_rows));
    write_text(dir / "pareto.txt", render_pareto_table(points));
    write_text(dir / "pareto.csv", render_pareto_csv(points));
  }
  ctx.out << render_metrics_table(reports);
  if (!points.empty()) ctx.out << '\n' << render_pareto_table(points);
}

}  // namespace retbench::cli
