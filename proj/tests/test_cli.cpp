#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "retbench/chunking.hpp"
#include "retbench/cli.hpp"
#include "retbench/corpus.hpp"
#include "test_util.hpp"

namespace rb = retbench;
using rb::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "retbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = rb::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string golden_config() { return (rb::testing::data_dir() / "golden" / "config.yaml").string(); }

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"eval", "--size", "abc"}).code, 1);
  EXPECT_EQ(run({"eval", "-c", golden_config(), "--strategy", "bogus"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, MissingConfigIsDataError) { EXPECT_EQ(run({"eval", "-c", "/no/such/config.yaml"}).code, 2); }

TEST(Cli, EvalGoldenMatchesCheckedInReport) {
  TempDir out, cache;
  const auto r = run({"eval", "-c", golden_config(), "-o", out.path().string(), "--cache-dir", cache.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(rb::testing::slurp(out / "metrics.jsonl"),
            rb::testing::slurp(rb::testing::data_dir() / "golden" / "expected_metrics.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(out / "resolved_config.yaml"));
  EXPECT_TRUE(std::filesystem::exists(out / "metrics.csv"));

  const auto corpus = rb::load_beir_corpus(rb::testing::data_dir() / "golden" / "corpus");
  std::set<std::string> distinct;
  for (const auto& c : rb::chunk_corpus(corpus, {}, nullptr)) distinct.insert(c.text);
  for (const auto& q : corpus.queries) distinct.insert(q.text);
  const auto stats = run({"cache", "stats", "--cache-dir", cache.path().string()});
  ASSERT_EQ(stats.code, 0);
  EXPECT_NE(stats.out.find("entries " + std::to_string(distinct.size()) + "\n"), std::string::npos) << stats.out;

  const auto verify = run({"cache", "verify", "--cache-dir", cache.path().string()});
  EXPECT_EQ(verify.code, 0);
  EXPECT_NE(verify.out.find("corrupt 0"), std::string::npos);

  std::filesystem::path victim;
  for (const auto& e : std::filesystem::recursive_directory_iterator(cache.path())) {
    if (e.is_regular_file()) victim = e.path();
  }
  std::filesystem::resize_file(victim, 10);
  const auto bad = run({"cache", "verify", "--cache-dir", cache.path().string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("corrupt 1"), std::string::npos);
  EXPECT_NE(bad.out.find(victim.filename().string()), std::string::npos);
  EXPECT_EQ(run({"cache", "gc", "--cache-dir", cache.path().string()}).code, 0);
  EXPECT_EQ(run({"cache", "verify", "--cache-dir", cache.path().string()}).code, 0);
}

TEST(Cli, KOverrideControlsCutoffs) {
  TempDir out, cache;
  const auto r = run({"eval", "-c", golden_config(), "--k", "2,7", "-o", out.path().string(), "--cache-dir",
                      cache.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto jsonl = rb::testing::slurp(out / "metrics.jsonl");
  EXPECT_NE(jsonl.find("\"recall@2\""), std::string::npos);
  EXPECT_NE(jsonl.find("\"recall@7\""), std::string::npos);
  EXPECT_EQ(jsonl.find("\"recall@10\""), std::string::npos);
  EXPECT_NE(rb::testing::slurp(out / "resolved_config.yaml").find("k: [2, 7]"), std::string::npos);
}

TEST(Cli, UnreachableEndpointIsTransportError) {
  TempDir dir;
  rb::testing::spit(dir / "c.yaml", R"(
corpus: {beir: )" + (rb::testing::data_dir() / "beir_small").string() + R"(}
embedder:
  name: remote-8
  dim: 8
  backend: remote
  endpoint: "http://127.0.0.1:9"
  retry_base_ms: 1
  timeout_ms: 200
  rate_limit_rps: 1000
)");
  const auto r = run({"eval", "-c", (dir / "c.yaml").string(), "-o", (dir / "out").string(), "--cache-dir",
                      (dir / "cache").string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("5 attempts"), std::string::npos) << r.err;
}

TEST(Cli, SynthDeterministicAndMissingPool) {
  TempDir dir;
  rb::testing::spit(dir / "pool.txt", rb::testing::make_pool(10, 300, 3));
  const std::string cfg = R"(
corpus:
  synth:
    passage_counts: {wiki: 20}
    query_count: 5
    templates: ["Che cosa sai di {keyphrase}?"]
    sources: {wiki: pool.txt}
embedder: {name: mock-64, dim: 64}
)";
  rb::testing::spit(dir / "c.yaml", cfg);
  ASSERT_EQ(run({"synth", "-c", (dir / "c.yaml").string(), "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(run({"synth", "-c", (dir / "c.yaml").string(), "--out", (dir / "b").string()}).code, 0);
  for (const char* f : {"corpus.jsonl", "queries.jsonl", "qrels/test.tsv"}) {
    EXPECT_EQ(rb::testing::slurp(dir / (std::string("a/") + f)), rb::testing::slurp(dir / (std::string("b/") + f)));
  }
  std::string missing = cfg;
  missing.replace(missing.find("pool.txt"), 8, "gone.txt");
  rb::testing::spit(dir / "m.yaml", missing);
  const auto r = run({"synth", "-c", (dir / "m.yaml").string(), "--out", (dir / "x").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("gone.txt"), std::string::npos);
}

TEST(Cli, StagedCommandsAndLatencyAndReport) {
  TempDir out, cache;
  const std::vector<std::string> common{"-c", golden_config(), "-o", out.path().string(), "--cache-dir",
                                        cache.path().string()};
  auto with = [&](std::string cmd, std::vector<std::string> extra = {}) {
    std::vector<std::string> a{cmd};
    a.insert(a.end(), common.begin(), common.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };
  ASSERT_EQ(with("chunk").code, 0);
  EXPECT_FALSE(rb::read_chunks(out / "chunks.jsonl").empty());
  ASSERT_EQ(with("embed").code, 0);
  ASSERT_EQ(with("index").code, 0);
  EXPECT_TRUE(std::filesystem::exists(out / "index.bin"));
  ASSERT_EQ(with("eval").code, 0);
  const auto lat = with("latency", {"--runs", "7", "--warmups", "2"});
  ASSERT_EQ(lat.code, 0) << lat.err;
  const auto samples = rb::testing::slurp(out / "latency_samples.csv");
  EXPECT_EQ(std::count(samples.begin(), samples.end(), '\n'), 8);
  TempDir rep;
  const auto r = run({"report", out.path().string(), "-o", rep.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(rep / "report_metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(rep / "pareto.csv"));
}

TEST(Cli, AblateWritesGridAndFront) {
  TempDir out, cache;
  const auto r = run({"ablate", "-c", golden_config(), "-o", out.path().string(), "--cache-dir",
                      cache.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto grid = rb::testing::slurp(out / "grid.csv");
  EXPECT_NE(grid.find("semantic,128"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(out / "pareto.csv"));
}
