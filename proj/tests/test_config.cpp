#include <gtest/gtest.h>

#include "retbench/config.hpp"
#include "retbench/error.hpp"
#include "test_util.hpp"

namespace rb = retbench;
using rb::testing::TempDir;

TEST(Config, DefaultsWhenEmpty) {
  const auto cfg = rb::parse_config("", "/base");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.k_values, (std::vector<std::size_t>{1, 5, 10}));
  EXPECT_EQ(cfg.hnsw.M, 32u);
  EXPECT_EQ(cfg.hnsw.ef_construction, 200u);
  EXPECT_EQ(cfg.hnsw.ef_search, 100u);
  EXPECT_EQ(cfg.batch_size, 16u);
  EXPECT_EQ(cfg.rate_limit_rps, 5.0);
  EXPECT_EQ(cfg.latency.n_warmups, 5u);
  EXPECT_EQ(cfg.latency.n_runs, 50u);
}

TEST(Config, ParsesAndResolvesRelativePaths) {
  const auto cfg = rb::parse_config(R"(
seed: 7
corpus:
  beir: data/scifact
embedder: {name: e5, dim: 1024, prefix_policy: e5, backend: remote, endpoint: "http://h:1"}
chunking: {strategy: sliding, size: 64}
eval: {k: [1, 3]}
ablation: {strategies: [fixed], sizes: [16, 32]}
)", "/base/dir");
  EXPECT_EQ(*cfg.beir_path, std::filesystem::path("/base/dir/data/scifact"));
  EXPECT_EQ(cfg.embedder.prefix_policy, rb::PrefixPolicy::kE5Style);
  EXPECT_EQ(cfg.embedder.backend, rb::BackendKind::kRemote);
  EXPECT_EQ(cfg.chunking.strategy, rb::ChunkStrategy::kSliding);
  EXPECT_EQ(cfg.k_values, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(cfg.hnsw.seed, 7u);
  EXPECT_EQ(cfg.latency.seed, 7u);
  EXPECT_EQ(cfg.ablation_sizes.size(), 2u);
}

TEST(Config, UnknownKeyIsUsageError) {
  EXPECT_THROW(rb::parse_config("embedder: {nme: x}", "/"), rb::UsageError);
  EXPECT_THROW(rb::parse_config("sed: 1", "/"), rb::UsageError);
  EXPECT_THROW(rb::parse_config("seed: abc", "/"), rb::UsageError);
}

TEST(Config, YamlEchoRoundTrips) {
  TempDir dir;
  rb::testing::spit(dir / "pool.txt", rb::testing::make_pool(2, 100, 1));
  auto cfg = rb::parse_config(R"(
corpus:
  synth:
    passage_counts: {wiki: 3, news: 2}
    query_count: 4
    templates: ["{title}?"]
    sources: {wiki: pool.txt, news: pool.txt}
    passage_tokens: [10, 20]
embedder: {name: m, dim: 8}
cost_per_million_tokens: 0.025
)", dir.path());
  const auto text = rb::config_to_yaml(cfg);
  const auto back = rb::parse_config(text, "/elsewhere");
  EXPECT_EQ(rb::config_to_yaml(back), text);
  ASSERT_TRUE(back.synth);
  EXPECT_EQ(back.synth->passage_counts[0].first, "wiki");
  EXPECT_EQ(back.synth->min_passage_tokens, 10u);
  EXPECT_EQ(back.synth->source_texts.at("news"), dir / "pool.txt");
  EXPECT_EQ(*back.cost_per_million_tokens, 0.025);
}

TEST(Config, ValidateChecksInputs) {
  auto cfg = rb::parse_config("embedder: {name: m, dim: 8}", "/");
  EXPECT_THROW(cfg.validate(true), rb::UsageError);
  cfg.beir_path = "/no/such/dir";
  EXPECT_THROW(cfg.validate(true), rb::DataError);
  cfg.embedder.dim = 0;
  EXPECT_THROW(cfg.validate(false), rb::UsageError);
}

TEST(Config, SizeList) {
  EXPECT_EQ(rb::parse_size_list("1,5,10"), (std::vector<std::size_t>{1, 5, 10}));
  EXPECT_THROW(rb::parse_size_list("1,x"), rb::UsageError);
  EXPECT_THROW(rb::parse_size_list(""), rb::UsageError);
}
