#include "retbench/cli.hpp"

#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "retbench/error.hpp"

namespace retbench {

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string k;
  std::string strategy;
  std::optional<std::size_t> size;
  std::optional<double> tau;
  std::string output_dir;
  std::string cache_dir;
  std::string endpoint;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> warmups;
};

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? parse_config("", fs::current_path()) : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (!o.k.empty()) cfg.k_values = parse_size_list(o.k);
  if (!o.strategy.empty()) cfg.chunking.strategy = parse_strategy(o.strategy);
  if (o.size) cfg.chunking.target_size = *o.size;
  if (o.tau) cfg.chunking.tau = *o.tau;
  if (!o.output_dir.empty()) cfg.output_dir = fs::absolute(o.output_dir);
  if (!o.cache_dir.empty()) cfg.cache_dir = fs::absolute(o.cache_dir);
  if (!o.endpoint.empty()) cfg.embedder.endpoint = o.endpoint;
  if (o.runs) cfg.latency.n_runs = *o.runs;
  if (o.warmups) cfg.latency.n_warmups = *o.warmups;
  cfg.propagate_seed();
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dense retrieval benchmarking harness"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("-c,--config", o.config, "YAML run configuration");
  app.add_option("--seed", o.seed, "Override the global seed");
  app.add_option("-j,--jobs", o.jobs, "Worker cap for per-query evaluation");
  app.add_option("--k", o.k, "Comma-separated Recall@k cutoffs, e.g. 1,5,10");
  app.add_option("--strategy", o.strategy, "fixed | sliding | semantic");
  app.add_option("--size", o.size, "Chunk target size in whitespace tokens");
  app.add_option("--tau", o.tau, "Semantic boundary threshold");
  app.add_option("-o,--output-dir", o.output_dir, "Directory for artifacts");
  app.add_option("--cache-dir", o.cache_dir, "Embedding cache directory");
  app.add_option("--endpoint", o.endpoint, "Remote embedding endpoint URL");
  app.add_option("--runs", o.runs, "Measured latency runs");
  app.add_option("--warmups", o.warmups, "Unmeasured latency warm-ups");

  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Synthesize a templated corpus in BEIR layout")->fallthrough();
  synth->add_option("--out", synth_out, "Corpus directory (default <output_dir>/corpus)");
  auto* chunk = app.add_subcommand("chunk", "Chunk the corpus and write chunks.jsonl")->fallthrough();
  auto* embed = app.add_subcommand("embed", "Embed chunks and queries into the cache")->fallthrough();
  auto* index = app.add_subcommand("index", "Build and persist the vector index")->fallthrough();
  auto* eval = app.add_subcommand("eval", "Run retrieval evaluation")->fallthrough();
  auto* latency = app.add_subcommand("latency", "Measure single-query latency")->fallthrough();
  auto* ablate = app.add_subcommand("ablate", "Strategy x size grid and Pareto front")->fallthrough();
  std::string cache_action;
  auto* cache = app.add_subcommand("cache", "Inspect the embedding cache")->fallthrough();
  cache->add_option("action", cache_action, "stats | verify | gc")
      ->required()
      ->check(CLI::IsMember({"stats", "verify", "gc"}));
  std::vector<std::string> runs;
  auto* report = app.add_subcommand("report", "Combine run directories into tables")->fallthrough();
  report->add_option("runs", runs, "Run output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    cli::Context ctx{resolve_config(o), out, err};
    auto& cfg = ctx.config;
    if (synth->parsed()) {
      cfg.validate(true);
      cli::cmd_synth(ctx, synth_out.empty() ? cfg.output_dir / "corpus" : fs::absolute(synth_out));
    } else if (cache->parsed()) {
      if (!cli::cmd_cache(ctx, cache_action)) return static_cast<int>(ExitCode::kData);
    } else if (report->parsed()) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      cli::cmd_report(ctx, dirs);
    } else {
      cfg.validate(true);
      if (chunk->parsed()) cli::cmd_chunk(ctx);
      if (embed->parsed()) cli::cmd_embed(ctx);
      if (index->parsed()) cli::cmd_index(ctx);
      if (eval->parsed()) cli::cmd_eval(ctx);
      if (latency->parsed()) cli::cmd_latency(ctx);
      if (ablate->parsed()) cli::cmd_ablate(ctx);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kInternal);
  }
  return 0;
}

}  // namespace retbench
