#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "zksplit/protocol/engine.hpp"

namespace zksplit::proto {
namespace {

ExperimentConfig small_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.clients = 6;
  c.rounds = 6;
  c.arch = SplitArch{16, 8, 12, 4};
  c.train_size = 900;
  c.test_size = 200;
  c.setup_size = 150;
  c.hyper.epochs = 1;
  c.pmr = 0.34;
  c.eval_every_round = false;
  return c;
}

Checkpoint sample_checkpoint(std::mt19937_64& rng) {
  Checkpoint c;
  c.id = rng();
  c.round = 7;
  Eigen::VectorXd v(10);
  for (auto& x : v) x = std::normal_distribution<double>(0, 1)(rng);
  c.model = ParamVector::quantize(v);
  c.update = ParamVector::quantize(v / 3);
  seal_hashes(c);
  c.chain.seed[3] = 9;
  return c;
}

std::vector<MsgBody> one_of_each() {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd m(3, 4);
  for (auto& x : m.reshaped()) x = std::normal_distribution<double>(0, 1)(rng);
  const auto ck = sample_checkpoint(rng);
  return {ModelsAndPointer{{ck, sample_checkpoint(rng)}, 1, Fp(12345)},
          HashBundle{ck.id, ck.round, ck.model_hash, ck.update_hash, ck.dct_hash},
          TrainActivations{m},
          TrainGradients{m.transpose()},
          ProofFrame{Bytes{1, 2, 3, 250}},
          Abort{3, "bad proof"},
          UseBackbone{77},
          EndTraining{}};
}

TEST(Messages, EveryKindRoundTrips) {
  const auto bodies = one_of_each();
  ASSERT_EQ(bodies.size(), 8u);
  for (const auto& b : bodies) {
    const RoundMessage m{{5, 2, kServer}, b};
    const Bytes bytes = encode(m);
    const auto back = decode_message(bytes);
    EXPECT_EQ(back.kind(), m.kind());
    EXPECT_EQ(back.header.round, 5u);
    EXPECT_EQ(back.header.sender, 2);
    EXPECT_EQ(back.header.receiver, kServer);
    EXPECT_EQ(encode(back), bytes) << to_string(m.kind());
  }
  const auto mp = std::get<ModelsAndPointer>(decode_message(encode({{1, 0, 1}, bodies[0]})).body);
  const auto& orig = std::get<ModelsAndPointer>(bodies[0]);
  EXPECT_EQ(mp.checkpoints[0].model, orig.checkpoints[0].model);
  EXPECT_EQ(mp.checkpoints[1].update_hash, orig.checkpoints[1].update_hash);
  EXPECT_EQ(mp.handoff_blind, Fp(12345));
  const auto act = std::get<TrainActivations>(decode_message(encode({{1, 0, 1}, bodies[2]})).body);
  EXPECT_EQ(act.values, std::get<TrainActivations>(bodies[2]).values);
}

TEST(Messages, MalformedInputIsShapeError) {
  const Bytes good = encode({{1, 0, kServer}, UseBackbone{4}});
  for (std::size_t n = 0; n < good.size(); ++n) {
    EXPECT_THROW(decode_message(std::span(good.data(), n)), ShapeError) << n;
  }
  Bytes bad_kind = good;
  bad_kind[0] = 99;  // kind byte
  EXPECT_THROW(decode_message(bad_kind), ShapeError);
  Bytes trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_message(trailing), ShapeError);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    Bytes junk(rng() % 17);  // shorter than any header
    for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
    EXPECT_THROW(decode_message(junk), ShapeError);
  }
}

TEST(Channel, RejectsWrongRoundAndAddressing) {
  auto [a, b] = zk::make_pipe();
  MessageChannel sender(*a, 1, kServer, 4);
  MessageChannel right(*b, kServer, 1, 4);
  sender.send(UseBackbone{1});
  EXPECT_EQ(right.recv_as<UseBackbone>().checkpoint_id, 1u);

  MessageChannel later(*b, kServer, 1, 5);
  sender.send(UseBackbone{1});
  EXPECT_THROW(later.recv(), ProtocolStateError);

  MessageChannel other_peer(*b, kServer, 2, 4);
  sender.send(UseBackbone{1});
  EXPECT_THROW(other_peer.recv(), ProtocolStateError);

  sender.send(EndTraining{});
  EXPECT_THROW(right.recv_as<UseBackbone>(), ProtocolStateError);
}

TEST(Config, ParseMapAndValidate) {
  const auto c = parse_config("# comment\nk = 5\nbeta_num=8\n\nstrategy=forge-bm\ndefense=gold\n");
  EXPECT_EQ(c.k, 5);
  EXPECT_EQ(c.beta_num, 8);
  EXPECT_EQ(c.strategy, Strategy::kForgeBm);
  EXPECT_EQ(c.defense, DefenseMode::kGold);
  // to_map is a complete description: feeding it back reproduces it.
  std::string text;
  for (const auto& [key, value] : to_map(c)) text += key + "=" + value + "\n";
  EXPECT_EQ(to_map(parse_config(text)), to_map(c));

  EXPECT_THROW(parse_config("colour=blue"), ConfigError);
  EXPECT_THROW(parse_config("k=three"), ConfigError);
  EXPECT_THROW(parse_config("k=0"), ConfigError);
  EXPECT_THROW(parse_config("beta_num=11"), ConfigError);
  EXPECT_THROW(parse_config("pmr=1.5"), ConfigError);
  EXPECT_THROW(parse_strategy("teleport"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/zksplit.cfg"), IoError);
}

TEST(Config, SlotLadderAndMaliciousCount) {
  ExperimentConfig c;
  EXPECT_EQ(c.slots_per_generation(), 9u);
  c.clients = 10;
  c.pmr = 0.2;
  EXPECT_EQ(c.malicious_count(), 2);
  c.defense = DefenseMode::kNone;
  EXPECT_FALSE(c.proving());
}

TEST(Audit, FlagsPlaintextModelsMagicAndForbiddenPatterns) {
  std::mt19937_64 rng(3);
  PrivacyAudit clean;
  clean.record(encode({{1, 0, kServer}, UseBackbone{4}}));
  clean.record(encode({{1, 0, kServer}, EndTraining{}}));
  EXPECT_TRUE(clean.check().clean);
  EXPECT_EQ(clean.check().messages, 2u);

  PrivacyAudit leak;
  leak.record(encode({{1, 0, kServer}, ModelsAndPointer{{sample_checkpoint(rng)}, 0, Fp(1)}}));
  EXPECT_FALSE(leak.check().clean);

  // A model encoding smuggled inside an otherwise legal proof frame.
  PrivacyAudit smuggled;
  smuggled.record(encode({{1, 0, kServer}, ProofFrame{serialize(sample_checkpoint(rng).model)}}));
  EXPECT_FALSE(smuggled.check().clean);

  PrivacyAudit labels;
  labels.forbid({0xde, 0xad, 0xbe, 0xef}, "labels");
  labels.record(encode({{1, 0, kServer}, ProofFrame{Bytes{1, 0xde, 0xad, 0xbe, 0xef, 2}}}));
  const auto r = labels.check();
  EXPECT_FALSE(r.clean);
  ASSERT_FALSE(r.findings.empty());
  EXPECT_NE(r.findings.front().find("labels"), std::string::npos);

  PrivacyAudit garbage;
  garbage.record(Bytes{1, 2, 3});
  EXPECT_FALSE(garbage.check().clean);
}

std::vector<std::uint64_t> ids_of(const QueueState& q) {
  std::vector<std::uint64_t> ids;
  for (const auto& c : q.checkpoints) ids.push_back(c.id);
  return ids;
}

TEST(World, HonestTurnsAreAcceptedAndMirrored) {
  auto cfg = small_config(1);
  cfg.pmr = 0;
  World w(cfg);
  int client = 0;
  for (std::uint64_t r = 0; r < 4; ++r) {
    const auto t = w.run_turn(client, r);
    ASSERT_TRUE(t.accepted) << t.stage << " " << t.tag << " " << t.reason;
    EXPECT_TRUE(t.server_session.accepted);
    EXPECT_TRUE(t.next_session.accepted);
    EXPECT_GT(t.server_session.bytes, 0u);
    EXPECT_EQ(ids_of(w.queue()), w.server().queue_ids());
    EXPECT_EQ(w.queue().bm_index, w.server().bm_index());
    EXPECT_NO_THROW(w.queue().validate());
    client = w.next_after(client);
  }
  EXPECT_TRUE(w.server().audit().check().clean);
  EXPECT_GT(w.publications(), 0u);
  EXPECT_EQ(w.transcripts().live_ok, w.publications());
  EXPECT_EQ(w.transcripts().simulated_ok, w.publications());
}

struct CheatCase {
  Strategy strategy;
  const char* stage;
  const char* tag;
};

class Cheats : public ::testing::TestWithParam<CheatCase> {};

TEST_P(Cheats, RejectedWithTagAndStateRestored) {
  auto cfg = small_config(2);
  cfg.strategy = GetParam().strategy;
  World w(cfg);
  int cheater = 0;
  while (!w.malicious(cheater)) ++cheater;
  const auto before = ids_of(w.queue());
  const auto bm = w.queue().bm_index;
  const auto backbones = w.server().backbone_count();
  const auto t = w.run_turn(cheater, 0);
  EXPECT_FALSE(t.accepted);
  EXPECT_EQ(t.culprit, cheater);
  EXPECT_EQ(t.stage, GetParam().stage);
  EXPECT_EQ(t.tag, GetParam().tag);
  EXPECT_EQ(ids_of(w.queue()), before);
  EXPECT_EQ(w.queue().bm_index, bm);
  EXPECT_EQ(w.server().queue_ids(), before);
  EXPECT_EQ(w.server().backbone_count(), backbones);

  // The protocol carries on without the culprit.
  w.drop(cheater);
  int honest = 0;
  while (w.malicious(honest)) ++honest;
  const auto next = w.run_turn(honest, 1);
  EXPECT_TRUE(next.accepted) << next.tag << " " << next.reason;
  EXPECT_NE(w.next_after(honest), cheater);
}

INSTANTIATE_TEST_SUITE_P(
    Strategies, Cheats,
    ::testing::Values(CheatCase{Strategy::kForgeBm, "proof", "bm"}, CheatCase{Strategy::kForgeRemoval, "proof", "prune"},
                      CheatCase{Strategy::kSubstituteModel, "proof", "chain"},
                      CheatCase{Strategy::kTamperDct, "proof", "dct"},
                      CheatCase{Strategy::kInflateScores, "proof", "score"},
                      CheatCase{Strategy::kSkipDefense, "proof", "missing-proof"},
                      CheatCase{Strategy::kTamperForward, "handoff", "hash"}),
    [](const auto& info) {
      std::string s = to_string(info.param.strategy);
      std::erase(s, '-');
      return s;
    });

TEST(World, RotationSkipsDroppedClients) {
  auto cfg = small_config(3);
  cfg.pmr = 0;
  cfg.prove = false;
  World w(cfg);
  EXPECT_EQ(w.next_after(5), 0);
  w.drop(1);
  w.drop(2);
  EXPECT_EQ(w.next_after(0), 3);
  EXPECT_EQ(w.active_clients(), 4);
}

TEST(Experiment, DeterministicAndLogRoundTrips) {
  auto cfg = small_config(4);
  cfg.rounds = 4;
  const auto a = run_experiment(cfg).to_jsonl();
  const auto b = run_experiment(cfg).to_jsonl();
  // Timing fields differ between runs; compare everything else.
  auto strip = [](const std::string& text) {
    auto log = RunLog::from_jsonl(text);
    for (auto& e : log.events) {
      e.erase("proof_ms");
      e.erase("turn_ms");
    }
    return log.to_jsonl();
  };
  EXPECT_EQ(strip(a), strip(b));
  const auto log = RunLog::from_jsonl(a);
  EXPECT_EQ(log.events.front()["event"], "config");
  EXPECT_EQ(log.events.back()["event"], "final");
  EXPECT_TRUE(log.events.back()["privacy_clean"].get<bool>());
  EXPECT_THROW(RunLog::from_jsonl("{not json"), ShapeError);
}

TEST(Experiment, TcpTransportMatchesPipeDecisions) {
  auto cfg = small_config(5);
  cfg.rounds = 3;
  const auto pipe = RunLog::from_jsonl(run_experiment(cfg).to_jsonl());
  cfg.transport = Transport::kTcp;
  const auto tcp = RunLog::from_jsonl(run_experiment(cfg).to_jsonl());
  ASSERT_EQ(pipe.events.size(), tcp.events.size());
  for (std::size_t i = 1; i < pipe.events.size(); ++i) {
    EXPECT_EQ(pipe.events[i].value("removed_index", -1), tcp.events[i].value("removed_index", -1));
    EXPECT_EQ(pipe.events[i].value("accepted", false), tcp.events[i].value("accepted", false));
  }
}

}  // namespace
}  // namespace zksplit::proto
