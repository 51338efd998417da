#include <gtest/gtest.h>

#include "zk_fixtures.hpp"
#include "zksplit/zk/gadgets.hpp"
#include "zksplit/zk/transcript.hpp"

namespace zksplit {
namespace {

using test::make_defense_instance;
using test::run_defense;

TEST(Defense, HonestRoundAccepted) {
  auto d = make_defense_instance(1, 100);
  std::vector<Fp> digests;
  const auto r = run_defense(d, 7, &digests);
  ASSERT_TRUE(r.accepted) << r.detail << " / " << r.prover_error;
  ASSERT_EQ(digests.size(), d.pub.new_slots);
  const auto x = zk::chain_vector(d.w.models[3], make_update(d.w.models[3], d.w.models[d.pub.from_index]));
  for (std::size_t j = 0; j < digests.size(); ++j) {
    EXPECT_EQ(digests[j], zk::chain_digest(x, d.vin.new_points[j], d.w.new_blinds[j]));
  }
}

TEST(Defense, InflatedAbsRejectedInScore) {
  auto d = make_defense_instance(2, 100);
  d.w.abs[0][0] = d.w.abs[0][0] * 4 + 1;
  zk::fill_outcome(d.pub, d.w);
  const auto r = run_defense(d, 8);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.tag, "score");
}

TEST(Defense, SubstitutedModelRejectedInChain) {
  auto d = make_defense_instance(3, 100);
  d.w.models[1].raw[5] += 1;
  const auto r = run_defense(d, 9);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.tag, "chain");
}

TEST(Defense, TamperedDctRejectedInDct) {
  auto d = make_defense_instance(4, 100);
  d.w.dcts[2].coeffs(0, 0) += 3;
  d.w.abs[2][0] = std::abs(d.w.dcts[2].coeffs(0, 0));
  d.w.signs[2][0] = d.w.dcts[2].coeffs(0, 0) < 0;
  zk::fill_outcome(d.pub, d.w);
  const auto r = run_defense(d, 10);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.tag, "dct");
}

TEST(Defense, WrongRemovalRejectedInPrune) {
  auto d = make_defense_instance(5, 100);
  d.pub.removed_index = (d.pub.removed_index + 1) % 4;
  const auto r = run_defense(d, 11);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.tag, "prune");
}

TEST(Defense, WrongBestModelRejectedInBm) {
  auto d = make_defense_instance(6, 100);
  d.pub.bm_index = (d.pub.bm_index + 1) % 3;
  const auto r = run_defense(d, 12);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.tag, "bm");
}

TEST(Defense, OverTcp) {
  auto d = make_defense_instance(13, 64);
  EXPECT_TRUE(run_defense(d, 14, nullptr, true).accepted);
}

struct PublishCase {
  zk::PublishPublic pub;
  zk::PublishVerifierInputs vin;
  zk::PublishWitness w;
};

PublishCase make_publish(std::uint64_t seed, std::size_t n, bool anchored) {
  std::mt19937_64 rng(seed);
  PublishCase c;
  c.pub.length = n;
  c.pub.new_slots = 5;
  for (std::size_t i = 0; i < n; ++i) c.w.x.push_back(random_fp(rng));
  for (int j = 0; j < 5; ++j) {
    c.w.new_blinds.push_back(random_fp(rng));
    c.vin.new_points.push_back(random_fp(rng));
  }
  if (anchored) {
    c.pub.anchored = true;
    c.w.anchor_blind = random_fp(rng);
    c.vin.anchor_point = random_fp(rng);
    c.pub.anchor_digest = zk::chain_digest(c.w.x, c.vin.anchor_point, c.w.anchor_blind);
  }
  return c;
}

zk::Transcript record_publish(const PublishCase& c, std::uint64_t seed, zk::SessionResult* res = nullptr) {
  const auto keys = zk::deal_session(seed);
  zk::Transcript t{zk::StatementKind::kPublish, keys.id, keys.verifier, zk::kDefaultChunk, zk::encode(c.pub, c.vin), {}};
  auto r = zk::run_local([&](zk::Endpoint& ep) { zk::prove_publish(ep, keys, c.pub, c.w); },
                         [&](zk::Endpoint& ep) { zk::verify_publish(ep, keys.id, keys.verifier, c.pub, c.vin); },
                         [&](zk::Endpoint& ep) { zk::record_into(ep, t); });
  if (res) *res = r;
  return t;
}

TEST(Publish, DigestsMatchPlaintextAndAnchorBinds) {
  auto c = make_publish(1, 200, true);
  const auto keys = zk::deal_session(3);
  std::vector<Fp> got;
  auto r = zk::run_local([&](zk::Endpoint& ep) { zk::prove_publish(ep, keys, c.pub, c.w); },
                         [&](zk::Endpoint& ep) { got = zk::verify_publish(ep, keys.id, keys.verifier, c.pub, c.vin).digests; });
  ASSERT_TRUE(r.accepted) << r.detail;
  for (std::size_t j = 0; j < got.size(); ++j) {
    EXPECT_EQ(got[j], zk::chain_digest(c.w.x, c.vin.new_points[j], c.w.new_blinds[j]));
  }
  c.w.x[17] += Fp(1);
  r = zk::run_local([&](zk::Endpoint& ep) { zk::prove_publish(ep, keys, c.pub, c.w); },
                    [&](zk::Endpoint& ep) { zk::verify_publish(ep, keys.id, keys.verifier, c.pub, c.vin); });
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.tag, "chain");
}

TEST(Transcript, LiveRecordingReplays) {
  const auto c = make_publish(2, 300, true);
  zk::SessionResult r;
  const auto t = record_publish(c, 4, &r);
  ASSERT_TRUE(r.accepted);
  const auto back = zk::decode_transcript(zk::encode(t));
  EXPECT_TRUE(zk::replay_transcript(back).accepted);
}

TEST(Transcript, FlippedByteIsRejected) {
  const auto c = make_publish(5, 50, false);
  auto t = record_publish(c, 6);
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    auto bad = t;
    bad.frames[i].second.back() ^= 1;
    EXPECT_FALSE(zk::replay_transcript(bad).accepted) << "frame " << i;
  }
  auto truncated = t;
  truncated.frames.pop_back();
  EXPECT_FALSE(zk::replay_transcript(truncated).accepted);
}

TEST(Transcript, SimulatedPublishAndDefenseReplay) {
  const auto c = make_publish(7, 120, true);
  const auto keys = zk::deal_session(8);
  auto sim = zk::simulate_transcript(zk::StatementKind::kPublish, keys.id, keys.verifier, zk::encode(c.pub, c.vin), 99);
  EXPECT_TRUE(zk::replay_transcript(sim).accepted) << zk::replay_transcript(sim).reason;

  const auto d = test::make_defense_instance(9, 64);
  sim = zk::simulate_transcript(zk::StatementKind::kDefense, keys.id, keys.verifier, zk::encode(d.pub, d.vin), 5);
  EXPECT_TRUE(zk::replay_transcript(sim).accepted) << zk::replay_transcript(sim).reason;
}

}  // namespace
}  // namespace zksplit
