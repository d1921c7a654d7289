#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "retbench/error.hpp"
#include "retbench/index.hpp"
#include "test_util.hpp"

namespace rb = retbench;

namespace {

std::vector<float> random_vec(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

std::vector<rb::IdVector> random_set(std::size_t count, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<rb::IdVector> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({"v" + std::to_string(i), {random_vec(dim, rng), false}});
  }
  return out;
}

rb::EmbeddingVector ev(std::vector<float> v) { return {std::move(v), false}; }

}  // namespace

TEST(Cosine, Examples) {
  EXPECT_NEAR(rb::cosine(ev({1, 1}), ev({1, 0})), 0.70710678, 1e-6);
  EXPECT_NEAR(rb::cosine(ev({3, 4}), ev({3, 4})), 1.0, 1e-12);
  EXPECT_NEAR(rb::cosine(ev({1, 0}), ev({0, 1})), 0.0, 1e-12);
  EXPECT_THROW(rb::cosine(ev({0, 0}), ev({1, 0})), rb::ContractViolation);
  EXPECT_THROW(rb::cosine(ev({1}), ev({1, 0})), rb::ContractViolation);
}

TEST(Cosine, Symmetric) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto a = ev(random_vec(16, rng));
    const auto b = ev(random_vec(16, rng));
    EXPECT_NEAR(rb::cosine(a, b), rb::cosine(b, a), 1e-6);
  }
}

TEST(Storage, Arithmetic) {
  EXPECT_EQ(rb::storage_bytes(768, 3200), 9830400u);
  EXPECT_EQ(rb::storage_bytes(1024, 3200), 13107200u);
  EXPECT_EQ(rb::storage_bytes(0, 3200), 0u);
  EXPECT_EQ(rb::storage_bytes(768, 0), 0u);
}

TEST(Flat, BuildErrors) {
  EXPECT_THROW(rb::build_flat({{"a", ev({1, 0})}, {"b", ev({1, 0, 0})}}), rb::ContractViolation);
  try {
    rb::build_flat({{"a", ev({1, 0})}, {"bad", ev({1, 0, 0})}});
  } catch (const rb::ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
  EXPECT_THROW(rb::build_flat({{"a", ev({1, 0})}, {"a", ev({0, 1})}}), rb::ContractViolation);
  EXPECT_THROW(rb::build_flat({{"z", ev({0, 0})}}), rb::ContractViolation);
}

TEST(Flat, NormalizesOnInsert) {
  const auto idx = rb::build_flat({{"a", ev({3, 4})}, {"b", ev({0.6f, 0.8f})}});
  EXPECT_EQ(idx.size(), 2u);
  EXPECT_NEAR(idx.vector(0)[0], 0.6, 1e-6);
  EXPECT_NEAR(idx.vector(1)[1], 0.8, 1e-6);
}

TEST(Flat, SearchBasics) {
  const auto idx = rb::build_flat({{"b", ev({1, 0})}, {"a", ev({1, 0})}, {"c", ev({0, 1})}});
  const auto hits = idx.search(ev({2, 0}), 10);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].id, "a");
  EXPECT_EQ(hits[1].id, "b");
  EXPECT_FLOAT_EQ(hits[0].score, 1.0f);
  EXPECT_THROW(idx.search(ev({1, 0}), 0), rb::ContractViolation);
  EXPECT_THROW(idx.search(ev({1, 0, 0}), 1), rb::ContractViolation);
  EXPECT_TRUE(rb::VectorIndex().search(ev({1, 0}), 3).empty());
}

TEST(Flat, MatchesBruteForce) {
  auto set = random_set(50, 12, 17);
  std::vector<std::pair<std::string, std::vector<float>>> raw;
  for (const auto& [id, v] : set) raw.emplace_back(id, v.values);
  const auto idx = rb::build_flat(set);
  std::mt19937_64 rng(99);
  for (int q = 0; q < 30; ++q) {
    const auto query = random_vec(12, rng);
    const auto want = rb::oracle::rank_all(raw, query);
    const auto hits = idx.search(ev(query), 10);
    ASSERT_EQ(hits.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(hits[i].id, want[i]);
  }
}

TEST(Flat, ScaleInvariant) {
  const auto idx = rb::build_flat(random_set(40, 8, 5));
  std::mt19937_64 rng(1);
  const auto q = random_vec(8, rng);
  auto scaled = q;
  for (auto& x : scaled) x *= 7.5f;
  const auto a = idx.search(ev(q), 10);
  const auto b = idx.search(ev(scaled), 10);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
}

TEST(Hnsw, RecallOnThousand) {
  const auto set = random_set(1000, 32, 21);
  const auto flat = rb::build_flat(set);
  const auto hnsw = rb::build_hnsw(set);
  EXPECT_EQ(hnsw.kind(), rb::IndexKind::kHnsw);
  std::mt19937_64 rng(8);
  std::size_t overlap = 0;
  for (int q = 0; q < 100; ++q) {
    const auto query = ev(random_vec(32, rng));
    const auto truth = flat.search(query, 10);
    const auto got = hnsw.search(query, 10);
    for (const auto& t : truth) {
      overlap += std::any_of(got.begin(), got.end(), [&](const rb::SearchHit& h) { return h.id == t.id; });
    }
  }
  EXPECT_GE(static_cast<double>(overlap) / 100.0, 9.0);
}

TEST(Hnsw, SingleVector) {
  const auto idx = rb::build_hnsw({{"only", ev({1, 2, 3})}});
  const auto hits = idx.search(ev({-1, 0, 0}), 5);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, "only");
}

TEST(Hnsw, Deterministic) {
  const auto set = random_set(300, 16, 4);
  const auto a = rb::build_hnsw(set);
  const auto b = rb::build_hnsw(set);
  EXPECT_EQ(a, b);
  rb::HnswParams other;
  other.seed = 7;
  EXPECT_NE(a, rb::build_hnsw(set, other));
}

TEST(Hnsw, ParamsValidated) {
  rb::HnswParams p;
  p.M = 1;
  EXPECT_THROW(p.validate(), rb::UsageError);
  p = {};
  p.ef_search = 0;
  EXPECT_THROW(p.validate(), rb::UsageError);
}

TEST(Index, BuildIndexSwitchesAtThreshold) {
  rb::HnswParams p;
  p.activation_threshold = 50;
  EXPECT_EQ(rb::build_index(random_set(49, 4, 1), p).kind(), rb::IndexKind::kFlat);
  EXPECT_EQ(rb::build_index(random_set(50, 4, 1), p).kind(), rb::IndexKind::kHnsw);
}

TEST(Index, SaveLoadRoundTrip) {
  rb::testing::TempDir dir;
  for (const auto& idx : {rb::build_flat(random_set(30, 8, 2)), rb::build_hnsw(random_set(200, 8, 2))}) {
    idx.save(dir / "i.bin");
    const auto back = rb::VectorIndex::load(dir / "i.bin");
    EXPECT_EQ(back, idx);
    EXPECT_EQ(std::filesystem::file_size(dir / "i.bin") >= idx.vector_bytes(), true);
  }
}

TEST(Index, LoadRejectsGarbage) {
  rb::testing::TempDir dir;
  rb::testing::spit(dir / "bad.bin", "RBVX....");
  EXPECT_THROW(rb::VectorIndex::load(dir / "bad.bin"), rb::DataError);
  EXPECT_THROW(rb::VectorIndex::load(dir / "missing.bin"), rb::DataError);
}
