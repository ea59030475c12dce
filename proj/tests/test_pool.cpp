#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <set>

#include "test_support.hpp"
#include "tripletlab/eval.hpp"
#include "tripletlab/pool.hpp"
#include "tripletlab/sampler.hpp"

using namespace tripletlab;
using testing_support::random_matrix;

namespace {

std::vector<int> iota_ids(int first, int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

LabelVector cycling_labels(int n, int persons, int offset = 0) {
  LabelVector l;
  for (int i = 0; i < n; ++i) l.push_back(offset + i % persons);
  return l;
}

TripletList to_ids(const TripletList& rows, const std::vector<int>& ids) {
  TripletList out;
  for (const auto& t : rows) out.push_back({ids[t.anchor], ids[t.positive], ids[t.negative]});
  return out;
}

LabeledDataset small_synthetic(int identities, int samples, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.identities = identities;
  spec.samples_per_identity = samples;
  spec.dim = 6;
  spec.latent_dim = 3;
  spec.seed = seed;
  return generate_synthetic(spec);
}

}  // namespace

TEST(FeaturePool, WindowOneHoldsLatestBatch) {
  FeaturePool pool(1);
  Rng rng(1);
  for (int it = 0; it < 5; ++it) {
    pool.push(random_matrix(6, 3, rng), cycling_labels(6, 2), iota_ids(it * 100, 6), it);
    ASSERT_EQ(pool.batches().size(), 1u);
    EXPECT_EQ(pool.batches().front().iteration, it);
    EXPECT_EQ(pool.size(), 6);
  }
}

TEST(FeaturePool, TwelvePushesOfTwoHundredTen) {
  FeaturePool pool(10);
  Rng rng(2);
  for (int it = 0; it < 12; ++it) pool.push(random_matrix(210, 4, rng), cycling_labels(210, 42), iota_ids(it * 210, 210), it);
  EXPECT_EQ(pool.size(), 2100);
  EXPECT_EQ(pool.batches().front().iteration, 2);
  EXPECT_EQ(pool.batches().back().iteration, 11);
  EXPECT_LE(pool.max_age(), 10);
  EXPECT_EQ(pool.view().features.rows(), 2100);
}

TEST(FeaturePool, EvictionKeepsSurvivorOrder) {
  FeaturePool pool(3);
  Rng rng(3);
  std::vector<long> replay;
  for (long it = 0; it < 8; ++it) {
    pool.push(random_matrix(4, 2, rng), cycling_labels(4, 2), iota_ids(static_cast<int>(it) * 4, 4), it);
    replay.push_back(it);
    if (replay.size() > 3) replay.erase(replay.begin());
    std::vector<long> got;
    for (const auto& b : pool.batches()) got.push_back(b.iteration);
    EXPECT_EQ(got, replay);
  }
}

TEST(FeaturePool, GapsEvictByAge) {
  FeaturePool pool(3);
  pool.push(Matrix::Zero(2, 2), {0, 1}, {0, 1}, 0);
  pool.push(Matrix::Zero(2, 2), {0, 1}, {2, 3}, 1);
  pool.push(Matrix::Zero(2, 2), {0, 1}, {4, 5}, 5);
  ASSERT_EQ(pool.batches().size(), 1u);
  EXPECT_EQ(pool.batches().front().iteration, 5);
  EXPECT_THROW(pool.push(Matrix::Zero(2, 2), {0, 1}, {6, 7}, 4), Error);
}

TEST(FeaturePool, RepeatedSampleKeepsNewestRow) {
  FeaturePool pool(5);
  Matrix old_rows(2, 1), new_rows(2, 1);
  old_rows << 1, 2;
  new_rows << 3, 4;
  pool.push(old_rows, {0, 1}, {10, 11}, 0);
  pool.push(new_rows, {0, 2}, {10, 12}, 1);
  const auto v = pool.view();
  EXPECT_EQ(v.sample_ids, (std::vector<int>{11, 10, 12}));
  EXPECT_DOUBLE_EQ(v.features(1, 0), 3.0);
}

TEST(FeaturePool, MineOneBatchEqualsDirectMining) {
  Rng rng(4);
  for (Strategy s : {Strategy::All, Strategy::Random, Strategy::MinMin, Strategy::MinMax, Strategy::Hardest}) {
    const auto f = l2_normalize(random_matrix(12, 5, rng));
    const auto labels = cycling_labels(12, 4);
    const auto ids = iota_ids(500, 12);
    FeaturePool pool(1);
    pool.push(f, labels, ids, 0);
    const MiningConfig cfg{s, 0.3, 17};
    EXPECT_EQ(pool.mine(cfg, 9), to_ids(mine(pairwise_squared_distances(f), labels, cfg, 9), ids));
  }
}

TEST(FeaturePool, PooledTripletsAreValidAndActive) {
  Rng rng(5);
  FeaturePool pool(4);
  std::map<int, std::pair<Vector, int>> by_id;
  for (int it = 0; it < 6; ++it) {
    const auto f = l2_normalize(random_matrix(8, 3, rng));
    const auto labels = cycling_labels(8, 4, it * 4);
    const auto ids = iota_ids(it * 8, 8);
    pool.push(f, labels, ids, it);
    for (int r = 0; r < 8; ++r) by_id[ids[r]] = {f.row(r).transpose(), labels[r]};
  }
  const double margin = 0.5;
  const auto triplets = pool.mine({Strategy::All, margin, 0});
  ASSERT_FALSE(triplets.empty());
  for (const auto& t : triplets) {
    const auto& [fa, la] = by_id.at(t.anchor);
    const auto& [fp, lp] = by_id.at(t.positive);
    const auto& [fn, ln] = by_id.at(t.negative);
    EXPECT_EQ(la, lp);
    EXPECT_NE(la, ln);
    EXPECT_NE(t.anchor, t.positive);
    EXPECT_GT((fa - fp).squaredNorm() + margin, (fa - fn).squaredNorm());
    EXPECT_GE(t.anchor, 16);  // only the last four batches remain
  }
  EXPECT_LE(static_cast<int>(pool.mine({Strategy::Hardest, margin, 0}).size()), 4 * 4);
}

TEST(FeaturePool, SingleIdentityPoolMinesNothing) {
  FeaturePool pool(2);
  pool.push(Matrix::Identity(3, 3), {7, 7, 7}, {0, 1, 2}, 0);
  EXPECT_TRUE(pool.mine({Strategy::All, 0.2, 0}).empty());
  EXPECT_THROW(FeaturePool(2).mine({}), Error);
  EXPECT_THROW(FeaturePool(0), ConfigError);
}

TEST(OfflineMine, OneBatchDatasetEqualsOnline) {
  const auto ds = small_synthetic(4, 3, 1);
  const auto params = EmbedderParams::init({6, 8, 4}, 2);
  const MiningConfig cfg{Strategy::MinMax, 0.5, 3};
  const auto f = embed(params, ds.inputs);
  EXPECT_EQ(offline_mine(ds, params, cfg), mine(pairwise_squared_distances(f), ds.labels, cfg));
}

TEST(OfflineMine, HardestBoundedByIdentitiesAndDeterministic) {
  const auto ds = small_synthetic(20, 10, 4);
  const auto params = EmbedderParams::init({6, 8, 4}, 5);
  const auto hardest = offline_mine(ds, params, {Strategy::Hardest, 0.2, 0});
  EXPECT_LE(hardest.size(), 20u);
  const MiningConfig random{Strategy::Random, 0.2, 11};
  EXPECT_EQ(offline_mine(ds, params, random, 3), offline_mine(ds, params, random, 3));
}

TEST(OfflineMine, TooSmallDatasetGivesNothing) {
  const auto ds = small_synthetic(1, 5, 6);
  EXPECT_TRUE(offline_mine(ds, EmbedderParams::init({6, 3}, 1), {Strategy::All, 0.2, 0}).empty());
}
