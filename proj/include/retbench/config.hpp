#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "retbench/chunking.hpp"
#include "retbench/corpus.hpp"
#include "retbench/embedding.hpp"
#include "retbench/index.hpp"
#include "retbench/latency.hpp"

namespace retbench {

/// Everything one invocation needs. Relative paths in the file are resolved
/// against the directory holding the config file.
struct RunConfig {
  std::optional<std::filesystem::path> beir_path;
  std::string beir_split = "test";
  std::optional<SynthConfig> synth;

  EmbedderSpec embedder;
  std::size_t batch_size = 16;
  double rate_limit_rps = 5.0;
  int retry_max_attempts = 5;
  int retry_base_ms = 200;
  int timeout_ms = 30000;

  ChunkingConfig chunking;
  std::vector<std::size_t> k_values{1, 5, 10};
  std::size_t oversample = 4;
  HnswParams hnsw;

  std::uint64_t seed = 42;
  std::filesystem::path cache_dir = ".retbench-cache";
  std::filesystem::path output_dir = "out";
  std::optional<double> cost_per_million_tokens;

  LatencyOptions latency;
  std::optional<std::string> latency_query_id;

  std::vector<ChunkStrategy> ablation_strategies{ChunkStrategy::kFixed, ChunkStrategy::kSliding,
                                                 ChunkStrategy::kSemantic};
  std::vector<std::size_t> ablation_sizes{8, 16, 32, 64, 128};

  std::size_t jobs = 1;

  /// Pushes the global seed into every seeded component.
  void propagate_seed();
  /// Checks value ranges (UsageError) and that referenced inputs exist (DataError).
  void validate(bool need_corpus) const;
};

/// Throws UsageError on unknown keys or wrong types, DataError if unreadable.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir);

/// Fully resolved config, defaults included, in the same format load_config reads.
std::string config_to_yaml(const RunConfig& cfg);

/// "1,5,10" -> {1, 5, 10}.
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace retbench
