#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "support.hpp"

using namespace ranrec;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

EmbeddingStore random_store(std::size_t n, std::size_t d, std::size_t q, Rng& rng) {
  EmbeddingStore s(d);
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "cell%04zu", i);
    s.add(id, random_vector(d, rng), random_vector(q, rng, 0.0, 1.0));
  }
  return s;
}

// Three config attributes: discrete/mode, continuous/median, continuous/mean.
AttributeSchema policy_schema() {
  return AttributeSchema({
      {"p", Technology::LTE, Role::Predictor, Kind::Continuous, Aggregation::Median},
      {"m", Technology::LTE, Role::Config, Kind::Discrete, Aggregation::Mode},
      {"d", Technology::LTE, Role::Config, Kind::Continuous, Aggregation::Median},
      {"a", Technology::LTE, Role::Config, Kind::Continuous, Aggregation::Mean},
  });
}

// Linear scan: smallest distance, then smallest id.
std::size_t brute_force_argmin(const std::vector<StoreRecord>& recs, const std::vector<double>& z) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const double di = l2_distance(z, recs[i].z), db = l2_distance(z, recs[best].z);
    if (di < db || (di == db && recs[i].cell_id < recs[best].cell_id)) best = i;
  }
  return best;
}

}  // namespace

TEST(DistanceSet, ExactMatchSortsFirst) {
  Rng rng(1);
  EmbeddingStore s = random_store(20, 3, 2, rng);
  const auto target = s.records()[7];
  const auto f = distance_set(s, target.z);
  EXPECT_EQ(f.entries.front().cell_id, target.cell_id);
  EXPECT_EQ(f.entries.front().distance, 0.0);
  EXPECT_EQ(f.size(), 20u);
}

TEST(DistanceSet, SingletonAndEmptyStore) {
  EmbeddingStore s(2);
  EXPECT_THROW(distance_set(s, {0, 0}), ValidationError);
  s.add("only", {1, 1}, {0.5});
  EXPECT_EQ(distance_set(s, {0, 0}).size(), 1u);
  EXPECT_THROW(distance_set(s, {0, 0, 0}), ValidationError);
}

TEST(DistanceSet, MatchesScanAndSortOracle) {
  Rng rng(2);
  const EmbeddingStore s = random_store(200, 14, 3, rng);
  const auto recs = s.records();
  for (int t = 0; t < 20; ++t) {
    const auto z = random_vector(14, rng);
    std::vector<std::pair<double, std::string>> oracle;
    for (const auto& r : recs) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 14; ++k) acc += (z[k] - r.z[k]) * (z[k] - r.z[k]);
      oracle.emplace_back(std::sqrt(acc), r.cell_id);
    }
    std::sort(oracle.begin(), oracle.end());
    const auto f = distance_set(s, z);
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      EXPECT_EQ(f.entries[i].cell_id, oracle[i].second);
      EXPECT_NEAR(f.entries[i].distance, oracle[i].first, 1e-12);
    }
  }
}

TEST(DistanceSet, InsertionOrderDoesNotMatter) {
  Rng rng(3);
  const EmbeddingStore s = random_store(50, 4, 2, rng);
  auto recs = s.records();
  // Duplicate embeddings force ties that only the id can break.
  recs[10].z = recs[3].z;
  recs[11].z = recs[3].z;
  EmbeddingStore a(4), b(4);
  for (const auto& r : recs) a.add(r.cell_id, r.z, r.y);
  rng.shuffle(recs);
  for (const auto& r : recs) b.add(r.cell_id, r.z, r.y);
  for (int t = 0; t < 10; ++t) {
    const auto z = t == 0 ? a.records()[3].z : random_vector(4, rng);
    const auto fa = distance_set(a, z), fb = distance_set(b, z);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      EXPECT_EQ(fa.entries[i].cell_id, fb.entries[i].cell_id);
      EXPECT_EQ(fa.entries[i].distance, fb.entries[i].distance);
    }
  }
}

TEST(PopMin, RemovesSmallestAndCounts) {
  DistanceSet f;
  f.entries = {{"a", 1.0, 0}, {"b", 2.0, 1}};
  auto [head, rest] = pop_min(f);
  EXPECT_EQ(head.distance, 1.0);
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(rest.entries[0].distance, 2.0);
  EXPECT_EQ(rest.removed, 1u);
  auto [second, empty] = pop_min(rest);
  EXPECT_EQ(second.cell_id, "b");
  EXPECT_TRUE(empty.empty());
  EXPECT_THROW(pop_min(empty), ValidationError);
}

TEST(PopMin, NonDecreasingSequence) {
  Rng rng(4);
  const EmbeddingStore s = random_store(60, 5, 1, rng);
  DistanceSet f = distance_set(s, random_vector(5, rng));
  double last = -1.0;
  std::size_t size = f.size();
  while (!f.empty()) {
    auto [e, rest] = pop_min(std::move(f));
    f = std::move(rest);
    EXPECT_GE(e.distance, last);
    EXPECT_EQ(f.size(), --size);
    last = e.distance;
  }
}

TEST(Closest, Examples) {
  EmbeddingStore s(2);
  s.add("b", {1.0, 0.0}, {0.2});
  EXPECT_EQ(recommend_closest(s, {5, 5}).y_hat, std::vector<double>{0.2});
  s.add("a", {-1.0, 0.0}, {0.7});
  s.add("c", {0.0, 3.0}, {0.9});
  // Equidistant from "a" and "b": the smaller id wins.
  const auto r = recommend_closest(s, {0.0, 0.0});
  EXPECT_EQ(r.sources.at(0).cell_id, "a");
  EXPECT_EQ(r.y_hat, std::vector<double>{0.7});
  EXPECT_EQ(recommend_closest(s, {0.0, 3.0}).y_hat, std::vector<double>{0.9});
}

TEST(Closest, MatchesBruteForceOnThousandQueries) {
  Rng rng(5);
  const EmbeddingStore s = random_store(200, 6, 3, rng);
  const auto recs = s.records();
  for (int t = 0; t < 1000; ++t) {
    // Every tenth query sits on a stored point, so exact hits are covered.
    const auto z = t % 10 == 0 ? recs[rng.below(recs.size())].z : random_vector(6, rng);
    const auto r = recommend_closest(s, z);
    const std::size_t expect = brute_force_argmin(recs, z);
    ASSERT_EQ(r.sources[0].cell_id, recs[expect].cell_id);
    ASSERT_EQ(r.y_hat, recs[expect].y);
  }
}

TEST(Aggregate, Policies) {
  EXPECT_EQ(aggregate_values({2, 2, 6}, Aggregation::Mode), 2.0);
  EXPECT_EQ(aggregate_values({0.1, 0.5, 0.9}, Aggregation::Median), 0.5);
  EXPECT_EQ(aggregate_values({0.1, 0.9}, Aggregation::Median), 0.5);
  EXPECT_NEAR(aggregate_values({0.1, 0.2, 0.6}, Aggregation::Mean), 0.3, 1e-15);
  // Mode ties resolve to the nearer neighbor's value.
  EXPECT_EQ(aggregate_values({6, 2, 2, 6}, Aggregation::Mode), 6.0);
  EXPECT_EQ(aggregate_values({3, 1, 2}, Aggregation::Mode), 3.0);
  EXPECT_THROW(aggregate_values({}, Aggregation::Mean), ValidationError);
}

TEST(Majority, KOneEqualsClosest) {
  Rng rng(6);
  const EmbeddingStore s = random_store(30, 3, 3, rng);
  for (int t = 0; t < 50; ++t) {
    const auto z = random_vector(3, rng);
    EXPECT_EQ(recommend_majority(s, z, 1, policy_schema()).y_hat, recommend_closest(s, z).y_hat);
  }
}

TEST(Majority, AggregatesPerAttributePolicy) {
  EmbeddingStore s(1);
  s.add("n1", {0.0}, {0.2, 0.1, 0.0});
  s.add("n2", {1.0}, {0.2, 0.5, 0.3});
  s.add("n3", {2.0}, {0.6, 0.9, 0.6});
  s.add("far", {9.0}, {1.0, 1.0, 1.0});
  const auto r = recommend_majority(s, {0.0}, 3, policy_schema());
  ASSERT_EQ(r.sources.size(), 3u);
  EXPECT_EQ(r.sources[2].cell_id, "n3");
  EXPECT_DOUBLE_EQ(r.y_hat[0], 0.2);
  EXPECT_DOUBLE_EQ(r.y_hat[1], 0.5);
  EXPECT_DOUBLE_EQ(r.y_hat[2], 0.3);
}

TEST(Majority, KOutOfRange) {
  Rng rng(7);
  const EmbeddingStore s = random_store(4, 2, 3, rng);
  EXPECT_THROW(recommend_majority(s, {0, 0}, 0, policy_schema()), ValidationError);
  try {
    recommend_majority(s, {0, 0}, 5, policy_schema());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "K = 5 is out of range for a store of 4 records");
  }
}

TEST(Majority, FullStoreIsQueryIndependentAndConvex) {
  Rng rng(8);
  const AttributeSchema schema({
      {"p", Technology::LTE, Role::Predictor, Kind::Continuous, Aggregation::Median},
      {"d", Technology::LTE, Role::Config, Kind::Continuous, Aggregation::Median},
      {"a", Technology::LTE, Role::Config, Kind::Continuous, Aggregation::Mean},
  });
  const EmbeddingStore s = random_store(25, 3, 2, rng);
  const auto ref = recommend_majority(s, random_vector(3, rng), 25, schema).y_hat;
  for (int t = 0; t < 20; ++t) {
    const auto got = recommend_majority(s, random_vector(3, rng), 25, schema).y_hat;
    EXPECT_EQ(got[0], ref[0]);
    EXPECT_NEAR(got[1], ref[1], 1e-14);
    for (std::size_t k = 5; k <= 25; k += 5)
      for (double v : recommend_majority(s, random_vector(3, rng), k, schema).y_hat)
        EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Store, AddThenQuery) {
  EmbeddingStore s(2);
  add_to_store(s, "x", {1, 2}, {0.1});
  EXPECT_EQ(s.size(), 1u);
  add_to_store(s, "y", {5, 5}, {0.9});
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(distance_set(s, {5, 5}).entries.front().distance, 0.0);
  EXPECT_THROW(add_to_store(s, "x", {0, 0}, {0.0}), ValidationError);
  EXPECT_THROW(add_to_store(s, "z", {0}, {0.0}), ValidationError);
}

TEST(Store, LaterQueryCitesEarlierAddedCell) {
  EmbeddingStore s(1);
  s.add("train", {0.0}, {0.1});
  // First new cell at 10 gets the training config...
  auto first = recommend_closest(s, {10.0});
  EXPECT_EQ(first.sources[0].cell_id, "train");
  add_to_store(s, "new1", {10.0}, first.y_hat);
  // ...and the second, near it, cites the first.
  EXPECT_EQ(recommend_closest(s, {9.0}).sources[0].cell_id, "new1");
}

TEST(Store, ConcurrentReadsAgree) {
  Rng rng(9);
  const EmbeddingStore s = random_store(100, 4, 2, rng);
  std::vector<std::vector<double>> queries;
  for (int i = 0; i < 64; ++i) queries.push_back(random_vector(4, rng));
  std::vector<std::string> serial(queries.size()), parallel(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    serial[i] = recommend_closest(s, queries[i]).sources[0].cell_id;
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < queries.size(); i += 4)
        parallel[i] = recommend_closest(s, queries[i]).sources[0].cell_id;
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(serial, parallel);
}

TEST(EmbedNewCell, FrozenEncoder) {
  const auto enc = std::make_shared<const EncoderStack>(init_encoder(ranrec::testing::small_arch(2), 1));
  EmbeddingStore s(4, enc);
  Subgraph sg;
  sg.features = Matrix{{0.3, 0.7}};
  const auto z = embed_new_cell(s, sg);
  EXPECT_EQ(z, embed_new_cell(s, sg));
  for (double v : z) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(embed_new_cell(EmbeddingStore(4), sg), ValidationError);
  EXPECT_THROW(embed_new_cell(EmbeddingStore(3, enc), sg), ValidationError);
}
