#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "retbench/chunking.hpp"
#include "retbench/error.hpp"
#include "retbench/evaluation.hpp"
#include "test_util.hpp"

namespace rb = retbench;

namespace {

rb::RankedList ranked(std::vector<std::string> ids, std::string qid = "q") {
  rb::RankedList r;
  r.query_id = std::move(qid);
  double s = 1.0;
  for (auto& id : ids) r.hits.push_back({std::move(id), s -= 0.01});
  return r;
}

rb::RelevanceJudgments qrels(std::initializer_list<std::pair<const char*, int>> grades) {
  rb::RelevanceJudgments j;
  for (const auto& [d, g] : grades) j.set("q", d, g);
  return j;
}

rb::Embedder mock_embedder(std::size_t dim = 256) {
  const auto spec = rb::testing::mock_spec(dim);
  return rb::Embedder(spec, std::make_shared<rb::MockBackend>(dim, spec.max_tokens));
}

}  // namespace

TEST(Aggregate, MaxPerDocument) {
  rb::RankedList c;
  c.granularity = rb::Granularity::kChunk;
  c.hits = {{"d1#0-32", 0.9}, {"d1#32-64", 0.8}, {"d2#0-32", 0.85}};
  const auto d = rb::aggregate_chunks_to_docs(c, 10);
  ASSERT_EQ(d.hits.size(), 2u);
  EXPECT_EQ(d.hits[0], (rb::RankedItem{"d1", 0.9}));
  EXPECT_EQ(d.hits[1], (rb::RankedItem{"d2", 0.85}));
  EXPECT_EQ(d.granularity, rb::Granularity::kDocument);
}

TEST(Aggregate, SingleDocument) {
  rb::RankedList c;
  c.hits = {{"a#0-1", 0.3}, {"a#1-2", 0.7}};
  const auto d = rb::aggregate_chunks_to_docs(c, 5);
  ASSERT_EQ(d.hits.size(), 1u);
  EXPECT_EQ(d.hits[0].score, 0.7);
}

TEST(Aggregate, ParentKeepsHashesInDocId) { EXPECT_EQ(rb::parent_of_chunk("a#b#3-9"), "a#b"); }

TEST(Aggregate, MatchesGroupingOracle) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 200; ++t) {
    rb::RankedList c;
    std::vector<std::pair<std::string, double>> raw;
    for (int i = 0; i < 20; ++i) {
      const std::string id = "d" + std::to_string(rng() % 7) + "#" + std::to_string(i) + "-" + std::to_string(i + 1);
      const double s = static_cast<double>(rng() % 50) / 50.0;
      c.hits.push_back({id, s});
      raw.emplace_back(id, s);
    }
    const auto want = rb::oracle::group_max(raw, 5);
    const auto got = rb::aggregate_chunks_to_docs(c, 5);
    ASSERT_EQ(got.hits.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.hits[i].id, want[i].first);
      EXPECT_EQ(got.hits[i].score, want[i].second);
    }
  }
}

TEST(Recall, Examples) {
  EXPECT_EQ(*rb::recall_at_k(ranked({"d1", "x"}), qrels({{"d1", 1}, {"d2", 1}}), 5), 0.5);
  EXPECT_EQ(*rb::recall_at_k(ranked({"d2", "d1"}), qrels({{"d1", 1}, {"d2", 2}}), 5), 1.0);
  EXPECT_NEAR(*rb::recall_at_k(ranked({"d2", "d9", "d3", "d4"}), qrels({{"d1", 1}, {"d2", 1}, {"d3", 1}}), 10),
              2.0 / 3.0, 1e-12);
  EXPECT_FALSE(rb::recall_at_k(ranked({"d1"}), qrels({{"d1", 0}}), 5));
}

TEST(Recall, MonotoneInK) {
  const auto r = ranked({"a", "b", "c", "d", "e", "f"});
  const auto j = qrels({{"b", 1}, {"e", 2}, {"z", 1}});
  double prev = 0;
  for (std::size_t k = 1; k <= 8; ++k) {
    const double v = *rb::recall_at_k(r, j, k);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Mrr, Examples) {
  const auto j = qrels({{"r", 1}});
  EXPECT_EQ(*rb::reciprocal_rank(ranked({"r", "a"}), j), 1.0);
  EXPECT_EQ(*rb::reciprocal_rank(ranked({"a", "r"}), j), 0.5);
  EXPECT_NEAR(*rb::reciprocal_rank(ranked({"a", "b", "r"}), j), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(*rb::reciprocal_rank(ranked({"a", "b"}), j), 0.0);
}

TEST(Ndcg, Examples) {
  EXPECT_NEAR(*rb::ndcg_at_k(ranked({"a", "b"}), qrels({{"a", 0}, {"b", 2}}), 10), 0.63093, 1e-5);
  EXPECT_NEAR(*rb::ndcg_at_k(ranked({"a", "b", "c"}), qrels({{"a", 2}, {"b", 1}, {"c", 0}}), 10), 1.0, 1e-12);
  EXPECT_NEAR(rb::oracle::dcg({2, 1, 0}, 10), 3.63093, 1e-5);
}

TEST(Ndcg, AdjacentSwapStrictlyDecreases) {
  const auto j = qrels({{"a", 2}, {"b", 1}, {"c", 1}, {"d", 0}});
  EXPECT_EQ(*rb::ndcg_at_k(ranked({"a", "b", "c", "d"}), j, 10), 1.0);
  EXPECT_EQ(*rb::ndcg_at_k(ranked({"a", "c", "b", "d"}), j, 10), 1.0);
  EXPECT_LT(*rb::ndcg_at_k(ranked({"b", "a", "c", "d"}), j, 10), 1.0);
  EXPECT_LT(*rb::ndcg_at_k(ranked({"a", "b", "d", "c"}), j, 10), 1.0);
}

TEST(Metrics, BoundedAndMatchOracle) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<std::string> ids;
    std::vector<int> grades(n);
    rb::RelevanceJudgments j;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("d" + std::to_string(i));
      grades[i] = static_cast<int>(rng() % 3);
      j.set("q", ids[i], grades[i]);
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> order;
    std::vector<int> ranked_grades;
    for (auto p : perm) {
      order.push_back(ids[p]);
      ranked_grades.push_back(grades[p]);
    }
    const auto r = ranked(order);
    const bool any = std::any_of(grades.begin(), grades.end(), [](int g) { return g > 0; });
    const auto rec = rb::recall_at_k(r, j, 5);
    ASSERT_EQ(rec.has_value(), any);
    if (!any) continue;
    EXPECT_NEAR(*rec, rb::oracle::recall(ranked_grades, grades, 5), 1e-9);
    EXPECT_NEAR(*rb::reciprocal_rank(r, j), rb::oracle::rr(ranked_grades), 1e-9);
    const double nd = *rb::ndcg_at_k(r, j, 10);
    EXPECT_NEAR(nd, rb::oracle::ndcg(ranked_grades, grades, 10), 1e-9);
    EXPECT_GE(nd, 0.0);
    EXPECT_LE(nd, 1.0 + 1e-12);
  }
}

TEST(Score, SkipsQueriesWithoutRelevant) {
  rb::RelevanceJudgments j;
  j.set("q1", "a", 1);
  j.set("q2", "a", 0);
  std::map<std::string, rb::RankedList> runs{{"q1", ranked({"b", "a"}, "q1")}, {"q2", ranked({"a"}, "q2")}};
  const auto rep = rb::score_rankings({"q1", "q2", "q3"}, runs, j, {1, 5});
  EXPECT_EQ(rep.num_queries, 3u);
  EXPECT_EQ(rep.num_skipped_no_relevant, 2u);
  EXPECT_TRUE(rep.means_defined);
  EXPECT_EQ(rep.mrr, 0.5);
  EXPECT_EQ(rep.recall_at.at(1), 0.0);
  EXPECT_EQ(rep.recall_at.at(5), 1.0);
}

TEST(Score, MisfiledRankingRejected) {
  rb::RelevanceJudgments j;
  j.set("q1", "a", 1);
  EXPECT_THROW(rb::score_rankings({"q1"}, {{"q1", ranked({"a"}, "q2")}}, j, {1}), rb::ContractViolation);
}

TEST(Score, AllSkippedFlagsUndefinedMeans) {
  rb::RelevanceJudgments j;
  const auto rep = rb::score_rankings({"q1"}, {}, j, {1});
  EXPECT_EQ(rep.num_skipped_no_relevant, 1u);
  EXPECT_FALSE(rep.means_defined);
}

TEST(Run, VerbatimQueryRanksItsDocumentFirst) {
  rb::Corpus c;
  c.documents = {{"a", "", "il colosseo si trova a roma vicino al foro", ""},
                 {"b", "", "la mole antonelliana domina torino", ""},
                 {"c", "", "il vesuvio sovrasta napoli e il golfo", ""}};
  c.queries = {{"q", "la mole antonelliana domina torino"}};
  c.judgments.set("q", "b", 1);
  auto e = mock_embedder();
  const auto rep = rb::evaluate_run(c, {rb::ChunkStrategy::kFixed, 32, 0.75, 0.25}, e);
  ASSERT_EQ(rep.per_query.size(), 1u);
  EXPECT_EQ(rep.per_query[0].reciprocal_rank, 1.0);
  EXPECT_EQ(rep.mrr, 1.0);
}

TEST(Run, DeterministicAndSerializable) {
  const auto c = rb::load_beir_corpus(rb::testing::data_dir() / "beir_small");
  auto e1 = mock_embedder();
  auto e2 = mock_embedder();
  const auto a = rb::report_to_jsonl(rb::evaluate_run(c, {}, e1));
  const auto b = rb::report_to_jsonl(rb::evaluate_run(c, {}, e2));
  EXPECT_EQ(a, b);
  const auto summary = rb::summary_from_jsonl(a);
  EXPECT_EQ(summary.num_queries, 2u);
  EXPECT_EQ(summary.info.documents, 3u);
  EXPECT_NE(rb::render_metrics_table({summary}).find("nDCG@10"), std::string::npos);
}

TEST(Run, ParallelSearchMatchesSerial) {
  const auto c = rb::load_beir_corpus(rb::testing::data_dir() / "golden" / "corpus");
  auto e1 = mock_embedder();
  auto e2 = mock_embedder();
  rb::EvalOptions par;
  par.jobs = 4;
  EXPECT_EQ(rb::report_to_jsonl(rb::evaluate_run(c, {}, e1)),
            rb::report_to_jsonl(rb::evaluate_run(c, {}, e2, par)));
}

TEST(Run, StageErrorLabelled) {
  rb::Corpus c;
  c.documents = {{"a", "", "testo", ""}};
  c.queries = {{"q", "testo"}};
  c.judgments.set("q", "a", 1);
  auto spec = rb::testing::mock_spec(16);
  rb::Embedder e(spec, std::make_shared<rb::MockBackend>(8, 512));
  try {
    rb::evaluate_run(c, {}, e);
    FAIL();
  } catch (const rb::StageError& err) {
    EXPECT_EQ(err.stage(), "embed");
    EXPECT_EQ(err.code(), rb::ExitCode::kInternal);
  }
}
