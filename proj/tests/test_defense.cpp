#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <tuple>

#include "zksplit/defense.hpp"
#include "zksplit/frequency.hpp"
#include "zksplit/oracles.hpp"
#include "zksplit/trainer.hpp"

namespace zksplit {
namespace {

Checkpoint checkpoint_with_score(std::mt19937_64& rng, std::int64_t round, double scale, bool poisoned = false) {
  std::normal_distribution<double> g(0, scale);
  Eigen::VectorXd u(64), m(64);
  for (auto& x : u) x = g(rng);
  for (auto& x : m) x = g(rng);
  Checkpoint c;
  c.id = static_cast<std::uint64_t>(round + 100);
  c.round = round;
  c.update = ParamVector::quantize(u);
  c.model = ParamVector::quantize(m);
  c.poisoned = poisoned;
  return c;
}

QueueState queue_of(std::vector<Checkpoint> cs, std::size_t bm) {
  QueueState q;
  q.checkpoints = std::move(cs);
  q.bm_index = bm;
  return q;
}

TEST(Weights, ScaleOldestNewestAndMiddle) {
  DefenseParams p{3, {7, 10}};
  EXPECT_EQ(p.weight(0), 100);
  EXPECT_EQ(p.weight(1), 70);
  EXPECT_EQ(p.weight(2), 70);
  EXPECT_EQ(p.weight(3), 49);
  EXPECT_THROW((DefenseParams{0, {7, 10}}.validate()), ConfigError);
  EXPECT_THROW((DefenseParams{3, {11, 10}}.validate()), ConfigError);
  EXPECT_THROW((DefenseParams{3, {0, 10}}.validate()), ConfigError);
}

// Property: integer selection equals the exact-rational oracle, including ties.
TEST(Selection, MatchesRationalOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t k = 1 + rng() % 6;
    const Beta beta{static_cast<std::int64_t>(1 + rng() % 10), 10};
    // Small ranges force frequent ties.
    const std::int64_t range = trial % 2 ? 5 : 1000000;
    std::vector<std::int64_t> raw(k + 1);
    for (auto& s : raw) s = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(range));
    const auto got = select_from_scores(std::span<const std::int64_t>(raw), {k, beta});
    const auto want = oracle::naive_select(raw, k, beta);
    ASSERT_EQ(got.removed_index, want.removed);
    ASSERT_EQ(got.bm_index, want.bm);
    // Float variant agrees on integral inputs.
    const std::vector<double> fraw(raw.begin(), raw.end());
    const auto f = select_from_scores(std::span<const double>(fraw), {k, beta});
    ASSERT_EQ(f.removed_index, want.removed);
    ASSERT_EQ(f.bm_index, want.bm);
  }
}

TEST(Selection, TiesGoToLowestIndex) {
  const std::vector<std::int64_t> raw = {49, 70, 70, 100};  // weighted: 4900 each
  const auto o = select_from_scores(std::span<const std::int64_t>(raw), {3, {7, 10}});
  EXPECT_EQ(o.removed_index, 0u);
  EXPECT_EQ(o.bm_index, 0u);
}

TEST(Detect, RemovesTheOutlierAndPrunesQueue) {
  std::mt19937_64 rng(2);
  std::vector<Checkpoint> cs;
  for (int i = 0; i < 3; ++i) cs.push_back(checkpoint_with_score(rng, i, 0.01));
  const auto q = queue_of(cs, 2);
  const auto bad = checkpoint_with_score(rng, 3, 0.5, true);
  const auto [pruned, out] = detect_poisoned(q, bad, {3, {7, 10}});
  EXPECT_EQ(out.removed_index, 3u);
  ASSERT_EQ(pruned.size(), 3u);
  for (const auto& c : pruned.checkpoints) EXPECT_FALSE(c.poisoned);
  EXPECT_EQ(out.raw_scores.size(), 4u);
  EXPECT_EQ(out.raw_scores[3], static_cast<double>(oracle::naive_score(bad.update)));
  EXPECT_NO_THROW(pruned.validate());
}

TEST(Detect, QueueSizeMustBeK) {
  std::mt19937_64 rng(3);
  const auto q = queue_of({checkpoint_with_score(rng, 0, 0.01)}, 0);
  EXPECT_THROW(detect_poisoned(q, checkpoint_with_score(rng, 1, 0.01), {3, {7, 10}}), ProtocolStateError);
}

TEST(Detect, AlternativeMetricsProduceValidOutcomes) {
  std::mt19937_64 rng(4);
  std::vector<Checkpoint> cs;
  for (int i = 0; i < 3; ++i) cs.push_back(checkpoint_with_score(rng, i, 0.01));
  const auto q = queue_of(cs, 1);
  for (auto m : {ScoreMetric::kL2, ScoreMetric::kCosine}) {
    const auto [pruned, out] = detect_poisoned(q, checkpoint_with_score(rng, 3, 0.5), {3, {7, 10}}, m);
    EXPECT_LT(out.removed_index, 4u);
    EXPECT_LT(out.bm_index, 3u);
    EXPECT_EQ(pruned.size(), 3u);
  }
  EXPECT_EQ(parse_metric("l2"), ScoreMetric::kL2);
  EXPECT_THROW(parse_metric("hamming"), ConfigError);
}

TEST(Baselines, GoldRemovesNewestPoisonedAndPointsAtNewestBenign) {
  std::mt19937_64 rng(5);
  std::vector<Checkpoint> cs = {checkpoint_with_score(rng, 0, 0.01), checkpoint_with_score(rng, 1, 0.01, true),
                                checkpoint_with_score(rng, 2, 0.01)};
  const auto q = queue_of(cs, 2);
  auto [pruned, out] = gold_standard(q, checkpoint_with_score(rng, 3, 0.01, true));
  EXPECT_EQ(out.removed_index, 3u);
  EXPECT_EQ(out.bm_index, 2u);
  std::tie(pruned, out) = gold_standard(q, checkpoint_with_score(rng, 3, 0.01));
  EXPECT_EQ(out.removed_index, 1u);
  EXPECT_EQ(out.bm_index, 2u);
  EXPECT_TRUE(!pruned.best().poisoned);
}

TEST(Baselines, NoDefenseSlidesTheWindow) {
  std::mt19937_64 rng(6);
  const auto q = queue_of({checkpoint_with_score(rng, 0, 0.01), checkpoint_with_score(rng, 1, 0.01)}, 0);
  const auto fresh = checkpoint_with_score(rng, 2, 0.5, true);
  const auto [pruned, out] = no_defense(q, fresh);
  EXPECT_EQ(out.removed_index, 0u);
  EXPECT_EQ(pruned.best().id, fresh.id);
}

TEST(SecureInit, KeepsLowestScoresInRoundOrder) {
  std::mt19937_64 rng(7);
  std::vector<Checkpoint> cs;
  const double scales[] = {0.3, 0.01, 0.02, 0.4, 0.005};
  for (int i = 0; i < 5; ++i) cs.push_back(checkpoint_with_score(rng, i, scales[i], scales[i] > 0.1));
  const auto q = select_initial_queue(cs, 3);
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(q.checkpoints[0].round, 1);
  EXPECT_EQ(q.checkpoints[1].round, 2);
  EXPECT_EQ(q.checkpoints[2].round, 4);
  EXPECT_EQ(q.bm_index, 2u);
  // Arrival order does not matter.
  std::reverse(cs.begin(), cs.end());
  EXPECT_EQ(select_initial_queue(cs, 3).checkpoints[0].round, 1);
  EXPECT_THROW(select_initial_queue(cs, 6), ConfigError);
}

// Two malicious clients among ten train candidates from a shared start; the selected start should be benign.
TEST(SecureInit, BestModelIsBenignWithTwoMaliciousClients) {
  const SplitArch arch;
  const Hyper hyper;
  int benign = 0;
  const int runs = 50;
  for (int seed = 1; seed <= runs; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const auto data = make_blobs(arch, 2000, static_cast<std::uint64_t>(seed), 1000 + static_cast<std::uint64_t>(seed));
    const auto shards = partition_dataset(data, 10, 0.8, static_cast<std::uint64_t>(seed));
    const ParamVector start = ClientModel::random(arch, rng).quantize();
    const Backbone bb = Backbone::random(arch, rng);
    std::vector<Checkpoint> cs;
    for (int c = 0; c < 10; ++c) {
      Dataset d = shards[static_cast<std::size_t>(c)].data;
      const bool mal = c < 2;
      if (mal) d = poison_dataset(d, PoisonSpec{}, rng);
      LocalBackbone peer(bb, hyper.lr);
      Checkpoint ck;
      ck.model = train_round(arch, start, peer, d, {hyper.lr, 1, hyper.batch}, rng);
      ck.update = make_update(ck.model, start);
      ck.round = c;
      ck.poisoned = mal;
      cs.push_back(std::move(ck));
    }
    benign += select_initial_queue(std::move(cs), 3).best().poisoned ? 0 : 1;
  }
  EXPECT_GE(benign, runs * 95 / 100);
}

}  // namespace
}  // namespace zksplit
