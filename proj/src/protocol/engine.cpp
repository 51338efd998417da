#include "zksplit/protocol/engine.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include "zksplit/frequency.hpp"

namespace zksplit::proto {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Per-purpose RNG stream, independent of call order elsewhere in the run.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
  return std::mt19937_64(seq);
}

Digest random_digest(std::mt19937_64& rng) {
  Digest d;
  for (auto& b : d) b = static_cast<std::uint8_t>(rng());
  return d;
}

std::vector<Fp> blinds(const ChainBinding& c, std::uint64_t generation, std::size_t count) {
  std::vector<Fp> out;
  for (std::size_t j = 0; j < count; ++j) out.push_back(c.blind(generation, j));
  return out;
}

enum SessionSalt : std::uint64_t { kSaltServer = 1, kSaltNext = 2, kSaltPublish = 3 };

// One proof session whose frames ride inside round messages. The verifier's raw endpoint can be tapped.
SessionReport framed_session(std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> raw,
                             std::int32_t prover, std::int32_t verifier, std::uint64_t round,
                             const std::function<void(Endpoint&)>& prove,
                             const std::function<void(Endpoint&)>& verify, PrivacyAudit* audit,
                             zk::Transcript* record) {
  auto& [raw_p, raw_v] = raw;
  if (audit) {
    raw_v->set_tap([audit](zk::Direction d, std::span<const std::uint8_t> m) {
      if (d == zk::Direction::kReceived) audit->record(m);
    });
  }
  FramedEndpoint pe(*raw_p, prover, verifier, round);
  FramedEndpoint ve(*raw_v, verifier, prover, round);
  if (record) zk::record_into(ve, *record);
  std::thread pt([&] {
    try {
      prove(pe);
    } catch (const std::exception&) {
      // The verifier's verdict is what counts.
    }
    pe.close();
  });
  SessionReport rep;
  try {
    verify(ve);
    rep.accepted = true;
  } catch (const ProofRejected& e) {
    rep.tag = e.tag();
    rep.detail = e.what();
  } catch (const TransportError& e) {
    rep.tag = "missing-proof";
    rep.detail = e.what();
  } catch (...) {
    ve.close();
    pt.join();
    throw;
  }
  ve.close();
  pt.join();
  rep.bytes = ve.bytes_sent() + ve.bytes_received();
  return rep;
}

}  // namespace

// ---------------------------------------------------------------------------

void PrivacyAudit::forbid(std::vector<std::uint8_t> pattern, std::string what) {
  std::lock_guard lock(mu_);
  forbidden_.emplace_back(std::move(pattern), std::move(what));
}

void PrivacyAudit::record(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  messages_.emplace_back(bytes.begin(), bytes.end());
}

PrivacyAudit::Result PrivacyAudit::check() const {
  std::lock_guard lock(mu_);
  Result r;
  static const std::array<std::uint8_t, 5> magic = {kSerialMagic[0], kSerialMagic[1], kSerialMagic[2],
                                                    kSerialMagic[3], kSerialVersion};
  for (const auto& m : messages_) {
    ++r.messages;
    r.bytes += m.size();
    try {
      const auto msg = decode_message(m);
      if (msg.kind() == MsgKind::kModelsAndPointer) r.findings.push_back("plaintext queue sent to the server");
    } catch (const ShapeError& e) {
      r.findings.push_back(std::string("undecodable server-bound message: ") + e.what());
    }
    if (std::search(m.begin(), m.end(), magic.begin(), magic.end()) != m.end()) {
      r.findings.push_back("model serialization magic in a server-bound message");
    }
    for (const auto& [pat, what] : forbidden_) {
      if (std::search(m.begin(), m.end(), std::boyer_moore_horspool_searcher(pat.begin(), pat.end())) != m.end()) {
        r.findings.push_back(what);
      }
    }
  }
  r.clean = r.findings.empty();
  return r;
}

// ---------------------------------------------------------------------------

ServerRole::ServerRole(const SplitArch& arch, double lr, std::uint64_t seed) : arch_(arch), lr_(lr), rng_(seed) {}

void ServerRole::publish_hashes(std::uint64_t round, const HashBundle& h) { hash_log_.emplace_back(round, h); }

const HashBundle* ServerRole::hashes(std::uint64_t checkpoint_id) const {
  for (auto it = hash_log_.rbegin(); it != hash_log_.rend(); ++it) {
    if (it->second.checkpoint_id == checkpoint_id) return &it->second;
  }
  return nullptr;
}

std::vector<Fp> ServerRole::fresh_points(std::size_t n) {
  std::vector<Fp> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_fp(rng_));
  return out;
}

ChainEntry& ServerRole::chain(std::uint64_t checkpoint_id) {
  auto it = chain_.find(checkpoint_id);
  if (it == chain_.end()) throw ProtocolStateError("no chain commitment for checkpoint " + std::to_string(checkpoint_id));
  return it->second;
}

const Backbone& ServerRole::backbone(std::uint64_t id) const {
  auto it = backbones_.find(id);
  if (it == backbones_.end()) throw ProtocolStateError("server holds no backbone for checkpoint " + std::to_string(id));
  return it->second;
}

void ServerRole::serve_training(MessageChannel& ch, std::uint64_t new_id) {
  const auto use = ch.recv_as<UseBackbone>();
  if (std::find(queue_ids_.begin(), queue_ids_.end(), use.checkpoint_id) == queue_ids_.end()) {
    throw ProtocolStateError("backbone requested for a checkpoint outside the queue");
  }
  LocalBackbone lb(backbone(use.checkpoint_id), lr_);
  for (;;) {
    RoundMessage m = ch.recv();
    if (auto* a = std::get_if<TrainActivations>(&m.body)) {
      if (a->values.cols() != arch_.h1) throw ShapeError("activation width");
      ch.send(TrainActivations{lb.forward(a->values)});
    } else if (auto* g = std::get_if<TrainGradients>(&m.body)) {
      if (g->values.cols() != arch_.h1) throw ShapeError("gradient width");
      ch.send(TrainGradients{lb.backward(g->values)});
    } else if (std::holds_alternative<EndTraining>(m.body)) {
      break;
    } else {
      throw ProtocolStateError(std::string("unexpected ") + to_string(m.kind()) + " during training");
    }
  }
  backbones_[new_id] = lb.backbone();
}

void ServerRole::set_queue(std::vector<std::uint64_t> ids, std::size_t bm) {
  queue_ids_ = std::move(ids);
  bm_index_ = bm;
  for (auto it = backbones_.begin(); it != backbones_.end();) {
    if (std::find(queue_ids_.begin(), queue_ids_.end(), it->first) == queue_ids_.end()) {
      it = backbones_.erase(it);
    } else {
      ++it;
    }
  }
}

void ServerRole::commit_round(std::uint64_t new_id, std::size_t removed_index, std::size_t bm_index) {
  auto ids = queue_ids_;
  ids.push_back(new_id);
  if (removed_index >= ids.size()) throw ProtocolStateError("removed index outside the list");
  backbones_.erase(ids[removed_index]);
  ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(removed_index));
  if (bm_index >= ids.size()) throw ProtocolStateError("bm index outside the queue");
  queue_ids_ = std::move(ids);
  bm_index_ = bm_index;
}

void ServerRole::discard_pending(std::uint64_t new_id) {
  if (std::find(queue_ids_.begin(), queue_ids_.end(), new_id) == queue_ids_.end()) backbones_.erase(new_id);
}

// ---------------------------------------------------------------------------

MatrixXd RemoteBackbone::forward(const MatrixXd& a1) {
  ch_.send(TrainActivations{a1});
  return ch_.recv_as<TrainActivations>().values;
}

MatrixXd RemoteBackbone::backward(const MatrixXd& d_a3) {
  ch_.send(TrainGradients{d_a3});
  return ch_.recv_as<TrainGradients>().values;
}

ParamVector run_training_exchange(const SplitArch& arch, const ParamVector& start, MessageChannel& ch,
                                  const Dataset& data, const Hyper& hyper, std::mt19937_64& rng) {
  RemoteBackbone peer(ch);
  return train_round(arch, start, peer, data, hyper, rng);
}

// ---------------------------------------------------------------------------

struct World::Turn {
  std::uint64_t round = 0;
  int client = 0;
  int next = 0;
  TurnReport report;
};

World::World(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto seed = cfg_.seed;
  if (cfg_.dataset == "blobs") {
    train_ = make_blobs(cfg_.arch, cfg_.train_size, seed, seed * 7 + 1, cfg_.blobs);
    test_ = make_blobs(cfg_.arch, cfg_.test_size, seed, seed * 7 + 2, cfg_.blobs);
    setup_ = make_blobs(cfg_.arch, cfg_.setup_size, seed, seed * 7 + 3, cfg_.blobs);
  } else {
    const Dataset all = load_csv(cfg_.dataset, cfg_.arch.d_in);
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = stream(seed, 0, 0, 11);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_test = std::max<std::size_t>(1, all.size() / 5);
    const std::size_t n_setup = std::max<std::size_t>(1, all.size() / 10);
    if (all.size() < n_test + n_setup + static_cast<std::size_t>(cfg_.clients)) throw ConfigError("dataset too small");
    test_ = all.subset({idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test)});
    setup_ = all.subset({idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                         idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_setup)});
    train_ = all.subset({idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_setup), idx.end()});
  }
  shards_ = partition_dataset(train_, cfg_.clients, cfg_.iid, seed);
  poison_.pdr = cfg_.pdr;
  poison_.validate();

  // Malicious positions: the first pmr * N of a seeded permutation.
  std::vector<int> order(static_cast<std::size_t>(cfg_.clients));
  std::iota(order.begin(), order.end(), 0);
  auto rng = stream(seed, 0, 0, 1);
  std::shuffle(order.begin(), order.end(), rng);
  malicious_.assign(order.size(), false);
  dropped_.assign(order.size(), false);
  for (int i = 0; i < cfg_.malicious_count(); ++i) malicious_[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  server_ = std::make_unique<ServerRole>(cfg_.arch, cfg_.hyper.lr, rng());
  if (cfg_.init == InitMode::kPretrained) {
    init_pretrained();
  } else {
    init_secure();
  }
  publish_initial(0);
}

World::~World() = default;

std::mt19937_64 World::turn_rng(std::uint64_t round, int client, std::uint64_t salt) const {
  return stream(cfg_.seed, round + 1, static_cast<std::uint64_t>(client + 16), salt);
}

void World::init_pretrained() {
  auto rng = stream(cfg_.seed, 0, 0, 2);
  ParamVector cur = ClientModel::random(cfg_.arch, rng).quantize();
  Backbone bb = Backbone::random(cfg_.arch, rng);
  const int boot = std::max(cfg_.setup_rounds, cfg_.k);
  std::vector<Checkpoint> all;
  for (int r = 0; r < boot; ++r) {
    LocalBackbone lb(bb, cfg_.hyper.lr);
    ParamVector next = train_round(cfg_.arch, cur, lb, setup_, cfg_.hyper, rng);
    Checkpoint c;
    c.id = next_id_++;
    c.update = make_update(next, cur);
    c.model = next;
    c.round = r - boot;
    c.origin_client = kSetup;
    server_->add_backbone(c.id, lb.backbone());
    all.push_back(std::move(c));
    cur = next;
    bb = lb.backbone();
  }
  queue_.checkpoints.assign(all.end() - cfg_.k, all.end());
  queue_.bm_index = static_cast<std::size_t>(cfg_.k - 1);
}

void World::init_secure() {
  auto rng = stream(cfg_.seed, 0, 0, 3);
  const ParamVector start = ClientModel::random(cfg_.arch, rng).quantize();
  const Backbone bb = Backbone::random(cfg_.arch, rng);
  std::vector<Checkpoint> candidates;
  for (int c = 0; c < cfg_.clients; ++c) {
    auto trng = stream(cfg_.seed, 0, static_cast<std::uint64_t>(c + 16), 4);
    Dataset data = shards_[static_cast<std::size_t>(c)].data;
    if (malicious(c)) data = poison_dataset(data, poison_, trng);
    LocalBackbone lb(bb, cfg_.hyper.lr);
    ParamVector m = train_round(cfg_.arch, start, lb, data, cfg_.hyper, trng);
    Checkpoint ck;
    ck.id = next_id_++;
    ck.update = make_update(m, start);
    ck.model = std::move(m);
    ck.round = c - cfg_.clients;
    ck.origin_client = c;
    ck.poisoned = malicious(c);
    server_->add_backbone(ck.id, lb.backbone());
    candidates.push_back(std::move(ck));
  }
  queue_ = select_initial_queue(std::move(candidates), static_cast<std::size_t>(cfg_.k));
}

std::unique_ptr<Endpoint> World::connect_pair(std::unique_ptr<Endpoint>& other) const {
  const zk::Millis timeout(cfg_.timeout_ms);
  auto [a, b] = cfg_.transport == Transport::kTcp ? zk::make_tcp_pair(timeout) : zk::make_pipe(timeout);
  other = std::move(b);
  return std::move(a);
}

void World::check_publication(const zk::Transcript& live) {
  ++tally_.sessions;
  if (zk::replay_transcript(live).accepted) ++tally_.live_ok;
  const auto sim = zk::simulate_transcript(live.kind, live.id, live.secrets, live.statement,
                                           cfg_.seed ^ (tally_.sessions * 0x9e3779b97f4a7c15ULL), live.chunk);
  if (zk::replay_transcript(sim).accepted) ++tally_.simulated_ok;
}

void World::publish_initial(std::uint64_t round) {
  auto rng = stream(cfg_.seed, 0, 0, 5);
  std::vector<std::uint64_t> ids;
  for (auto& c : queue_.checkpoints) {
    seal_hashes(c);
    c.chain.seed = random_digest(rng);
    poisoned_[c.id] = c.poisoned;
    server_->publish_hashes(round, {c.id, c.round, c.model_hash, c.update_hash, c.dct_hash});
    ids.push_back(c.id);
    if (!cfg_.proving()) continue;

    const auto n = cfg_.slots_per_generation();
    zk::PublishPublic pub{2 * c.model.size(), n, false, {}};
    zk::PublishVerifierInputs vin{server_->fresh_points(n), {}};
    zk::PublishWitness w{zk::chain_vector(c.model, c.update), blinds(c.chain, 0, n), {}};
    const auto keys = zk::deal_session(stream(cfg_.seed, 0, ++session_counter_, kSaltPublish)());
    zk::Transcript tr{zk::StatementKind::kPublish, keys.id, keys.verifier, zk::kDefaultChunk, zk::encode(pub, vin), {}};
    std::vector<Fp> digests;
    std::unique_ptr<Endpoint> v;
    auto p = connect_pair(v);
    const auto rep = framed_session(
        {std::move(p), std::move(v)}, c.origin_client, kServer, round,
        [&](Endpoint& ep) { zk::prove_publish(ep, keys, pub, w); },
        [&](Endpoint& ep) { digests = zk::verify_publish(ep, keys.id, keys.verifier, pub, vin).digests; },
        &server_->audit(), cfg_.check_transcripts ? &tr : nullptr);
    if (!rep.accepted) throw ProtocolStateError("initial publication rejected: " + rep.detail);
    if (cfg_.check_transcripts) check_publication(tr);
    server_->set_chain(c.id, {0, vin.new_points, digests, 1});
  }
  server_->set_queue(ids, queue_.bm_index);
}

bool World::republish_if_needed(Turn& t) {
  for (auto& c : queue_.checkpoints) {
    auto& entry = server_->chain(c.id);
    if (entry.remaining() >= 3) continue;
    const auto n = cfg_.slots_per_generation();
    const std::uint64_t a = entry.next_slot++;
    zk::PublishPublic pub{2 * c.model.size(), n, true, entry.digests.at(a)};
    zk::PublishVerifierInputs vin{server_->fresh_points(n), entry.points.at(a)};
    zk::PublishWitness w{zk::chain_vector(c.model, c.update), blinds(c.chain, entry.generation + 1, n),
                         c.chain.blind(entry.generation, a)};
    const auto keys = zk::deal_session(stream(cfg_.seed, t.round + 1, ++session_counter_, kSaltPublish)());
    zk::Transcript tr{zk::StatementKind::kPublish, keys.id, keys.verifier, zk::kDefaultChunk, zk::encode(pub, vin), {}};
    std::vector<Fp> digests;
    std::unique_ptr<Endpoint> v;
    auto p = connect_pair(v);
    const auto rep = framed_session(
        {std::move(p), std::move(v)}, t.client, kServer, t.round,
        [&](Endpoint& ep) { zk::prove_publish(ep, keys, pub, w); },
        [&](Endpoint& ep) { digests = zk::verify_publish(ep, keys.id, keys.verifier, pub, vin).digests; },
        &server_->audit(), cfg_.check_transcripts ? &tr : nullptr);
    if (cfg_.check_transcripts) check_publication(tr);
    if (!rep.accepted) {
      t.report.tag = rep.tag;
      t.report.reason = rep.detail;
      return false;
    }
    // Anchored to the old digest, so it stands even if the rest of the turn aborts.
    entry = {entry.generation + 1, vin.new_points, digests, 1};
    ++t.report.republished;
  }
  return true;
}

int World::next_after(int client) const {
  for (int i = 1; i <= cfg_.clients; ++i) {
    const int c = (client + i) % cfg_.clients;
    if (!dropped(c)) return c;
  }
  throw ProtocolStateError("no active clients");
}

int World::active_clients() const {
  return static_cast<int>(std::count(dropped_.begin(), dropped_.end(), false));
}

std::pair<double, double> World::evaluate_best() const {
  const auto& best = queue_.best();
  const auto model = ClientModel::from_params(cfg_.arch, best.model);
  const auto& bb = server_->backbone(best.id);
  return {evaluate(model, bb, test_, std::nullopt), evaluate(model, bb, test_, poison_)};
}

namespace {

std::vector<std::int64_t> weighted(const DefenseParams& p, const std::vector<std::int64_t>& s) {
  std::vector<std::int64_t> out;
  for (std::size_t t = 0; t < s.size(); ++t) out.push_back(p.weight(t) * s[t]);
  return out;
}

// Recomputes the weighted scores a claimed (removed, bm) pair refers to.
void claim(zk::DefensePublic& pub, const zk::DefenseWitness& w, std::size_t removed, std::size_t bm) {
  const auto ws = weighted(pub.params(), zk::witness_scores(pub, w));
  pub.removed_index = static_cast<std::uint32_t>(removed);
  pub.bm_index = static_cast<std::uint32_t>(bm);
  pub.s_wm = ws[removed];
  pub.s_bm = ws[bm < removed ? bm : bm + 1];
}

DefenseOutcome outcome_of(const zk::DefensePublic& pub, const DefenseOutcome& base) {
  DefenseOutcome o = base;
  o.removed_index = pub.removed_index;
  o.bm_index = pub.bm_index;
  return o;
}

void refresh_abs(zk::DefenseWitness& w, std::size_t t, const std::vector<std::size_t>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::int64_t d = w.dcts[t].coeffs.data()[cells[i]];
    w.abs[t][i] = d < 0 ? -d : d;
    w.signs[t][i] = d < 0 ? 1 : 0;
  }
}

std::vector<std::size_t> masked_cells(std::size_t length) {
  const auto n = square_side(length);
  std::vector<std::size_t> out;
  for (const auto& [u, v] : FreqMask::low(n).cells) out.push_back(static_cast<std::size_t>(u * n + v));
  return out;
}

}  // namespace

TurnReport World::run_turn(int client, std::uint64_t round) {
  const auto t0 = Clock::now();
  if (dropped(client)) throw ProtocolStateError("dropped client asked to play");
  Turn t;
  t.round = round;
  t.client = client;
  t.next = next_after(client);
  auto& rep = t.report;
  rep.round = round;
  rep.client = client;
  rep.malicious = malicious(client);
  const bool cheat = rep.malicious;
  const Strategy strategy = cheat ? cfg_.strategy : Strategy::kHonestButPoisoning;
  const std::size_t k = static_cast<std::size_t>(cfg_.k);
  const auto params = cfg_.defense_params();
  const std::uint64_t new_id = next_id_++;
  auto rng = turn_rng(round, client, 0);

  auto abort_turn = [&](int culprit, std::string stage) {
    rep.accepted = false;
    rep.culprit = culprit;
    rep.stage = std::move(stage);
    server_->discard_pending(new_id);
    rep.turn_ms = ms_since(t0);
    return rep;
  };

  if (cfg_.proving() && !republish_if_needed(t)) return abort_turn(client, "republish");

  // Steps 3-6: split training from the best model, then the local defense.
  const Checkpoint& from = queue_.best();
  Dataset data = shards_[static_cast<std::size_t>(client)].data;
  if (rep.malicious) data = poison_dataset(data, poison_, rng);
  {
    // Labels of this shard must never show up at the server.
    std::vector<std::uint8_t> pat;
    for (std::size_t i = 0; i < std::min<std::size_t>(data.size(), 32); ++i) {
      const auto y = static_cast<std::uint32_t>(data.y[i]);
      for (int b = 0; b < 4; ++b) pat.push_back(static_cast<std::uint8_t>(y >> (8 * b)));
    }
    server_->audit().forbid(std::move(pat), "label vector in a server-bound message");
    const auto hdr = serial_header(cfg_.arch.client_params(), kDefaultFracBits);
    server_->audit().forbid({hdr.begin(), hdr.end()}, "serialized client model in a server-bound message");
  }

  Checkpoint c;
  {
    std::unique_ptr<Endpoint> sep;
    auto cep = connect_pair(sep);
    sep->set_tap([this](zk::Direction d, std::span<const std::uint8_t> m) {
      if (d == zk::Direction::kReceived) server_->audit().record(m);
    });
    std::exception_ptr server_error;
    std::thread srv([&] {
      try {
        MessageChannel sch(*sep, kServer, client, round);
        server_->serve_training(sch, new_id);
        const auto h = sch.recv_as<HashBundle>();
        if (h.checkpoint_id != new_id) throw ProtocolStateError("hash bundle for an unexpected checkpoint");
        server_->publish_hashes(round, h);
      } catch (...) {
        server_error = std::current_exception();
        sep->close();
      }
    });
    try {
      MessageChannel cch(*cep, client, kServer, round);
      cch.send(UseBackbone{from.id});
      auto trng = turn_rng(round, client, 1);
      ParamVector model = run_training_exchange(cfg_.arch, from.model, cch, data, cfg_.hyper, trng);
      cch.send(EndTraining{});
      c.id = new_id;
      c.update = make_update(model, from.model);
      c.model = std::move(model);
      c.origin_client = client;
      c.round = static_cast<std::int64_t>(round);
      c.poisoned = rep.malicious;
      seal_hashes(c);
      c.chain.seed = random_digest(rng);
      // Step 7: hashes go to the server's registry.
      cch.send(HashBundle{c.id, c.round, c.model_hash, c.update_hash, c.dct_hash});
    } catch (...) {
      cep->close();
      srv.join();
      server_->discard_pending(new_id);
      throw;
    }
    srv.join();
    if (server_error) std::rethrow_exception(server_error);
  }
  poisoned_[c.id] = c.poisoned;

  for (const auto& q : queue_.checkpoints) {
    rep.list_ids.push_back(q.id);
    rep.list_poisoned.push_back(q.poisoned);
  }
  rep.list_ids.push_back(c.id);
  rep.list_poisoned.push_back(c.poisoned);

  DefenseOutcome honest;
  switch (cfg_.defense) {
    case DefenseMode::kZksl:
    case DefenseMode::kMetricAblation: honest = detect_poisoned(queue_, c, params, cfg_.metric).second; break;
    case DefenseMode::kNone: honest = no_defense(queue_, c).second; break;
    case DefenseMode::kGold: honest = gold_standard(queue_, c).second; break;
  }
  DefenseOutcome claimed = honest;

  // Step 7: two concurrent proof sessions, server and next client.
  Fp handoff_blind, handoff_point, handoff_digest;
  std::optional<ChainEntry> new_chain;
  if (cfg_.proving()) {
    const auto pt0 = Clock::now();
    zk::DefensePublic base;
    base.length = c.model.size();
    base.k = static_cast<std::uint32_t>(k);
    base.beta = params.beta;
    base.from_index = static_cast<std::uint32_t>(queue_.bm_index);
    base.freivalds_reps = cfg_.freivalds_reps;
    base.slot_digests.assign(k, Fp{});
    zk::DefenseWitness w;
    for (const auto& q : queue_.checkpoints) {
      w.models.push_back(q.model);
      w.updates.push_back(q.update);
    }
    w.models.push_back(c.model);
    zk::prepare_defense_witness(base, w);
    const auto circuit_outcome = zk::fill_outcome(base, w);
    if (circuit_outcome.removed_index != honest.removed_index || circuit_outcome.bm_index != honest.bm_index) {
      throw std::logic_error("circuit scores disagree with the plaintext defense");
    }

    const auto cells = masked_cells(base.length);
    switch (strategy) {
      case Strategy::kInflateScores: {
        // Blow up the oldest benign entry's score so it is the one removed.
        std::size_t victim = 0;
        while (victim < k && rep.list_poisoned[victim]) ++victim;
        if (victim == k) victim = 0;
        for (auto& a : w.abs[victim]) a = 4 * a + 1;
        zk::fill_outcome(base, w);
        break;
      }
      case Strategy::kTamperDct: {
        auto& d = w.dcts[k].coeffs;
        for (auto cell : cells) d.data()[cell] /= 2;
        d.data()[cells.front()] += 1;
        refresh_abs(w, k, cells);
        zk::fill_outcome(base, w);
        break;
      }
      case Strategy::kSubstituteModel: {
        // Proves over a different copy of an old model than the one the chain committed to.
        const std::size_t victim = (base.from_index + 1) % k;
        w.models[victim].raw[0] += 1;
        break;
      }
      case Strategy::kForgeRemoval: {
        std::size_t j = 0;
        while (j <= k && (j == honest.removed_index || rep.list_poisoned[j])) ++j;
        if (j > k) j = (honest.removed_index + 1) % (k + 1);
        claim(base, w, j, std::min(honest.bm_index, k - 1));
        break;
      }
      case Strategy::kForgeBm: {
        if (k < 2) break;
        // Point at the new (poisoned) model when it survives, else anywhere but the honest choice.
        std::size_t b = honest.removed_index == k ? k : k - 1;
        if (b >= k || b == honest.bm_index) b = (honest.bm_index + 1) % k;
        claim(base, w, honest.removed_index, b);
        break;
      }
      default: break;
    }
    claimed = outcome_of(base, honest);

    // Old entries: slot a for the server, a + 1 for the next client; both burn either way.
    zk::DefensePublic spub = base, npub = base;
    zk::DefenseVerifierInputs svin, nvin;
    spub.slot_digests.clear();
    npub.slot_digests.clear();
    zk::DefenseWitness sw = w, nw = w;
    sw.slot_blinds.clear();
    nw.slot_blinds.clear();
    for (const auto& q : queue_.checkpoints) {
      auto& e = server_->chain(q.id);
      const std::uint64_t a = e.next_slot;
      e.next_slot += 2;
      spub.slot_digests.push_back(e.digests.at(a));
      svin.slot_points.push_back(e.points.at(a));
      sw.slot_blinds.push_back(q.chain.blind(e.generation, a));
      npub.slot_digests.push_back(e.digests.at(a + 1));
      nvin.slot_points.push_back(e.points.at(a + 1));
      nw.slot_blinds.push_back(q.chain.blind(e.generation, a + 1));
    }
    const auto n = cfg_.slots_per_generation();
    spub.new_slots = n;
    svin.new_points = server_->fresh_points(n);
    sw.new_blinds = blinds(c.chain, 0, n);
    auto nrng = turn_rng(round, t.next, 2);
    handoff_point = random_fp(nrng);
    handoff_blind = random_fp(rng);
    npub.new_slots = 1;
    nvin.new_points = {handoff_point};
    nw.new_blinds = {handoff_blind};

    const auto skeys = zk::deal_session(stream(cfg_.seed, round + 1, ++session_counter_, kSaltServer)());
    const auto nkeys = zk::deal_session(stream(cfg_.seed, round + 1, ++session_counter_, kSaltNext)());
    const bool skip = strategy == Strategy::kSkipDefense;
    std::vector<Fp> server_digests, next_digests;
    std::unique_ptr<Endpoint> sv, nv;
    auto sp = connect_pair(sv);
    auto np = connect_pair(nv);
    std::exception_ptr server_err;
    std::thread server_thread([&] {
      try {
        rep.server_session = framed_session(
            {std::move(sp), std::move(sv)}, client, kServer, round,
            [&](Endpoint& ep) {
              if (!skip) zk::prove_defense(ep, skeys, spub, sw);
            },
            [&](Endpoint& ep) {
              server_digests = zk::verify_defense(ep, skeys.id, skeys.verifier, spub, svin).new_digests;
            },
            &server_->audit(), nullptr);
      } catch (...) {
        server_err = std::current_exception();
      }
    });
    try {
      rep.next_session = framed_session(
          {std::move(np), std::move(nv)}, client, t.next, round,
          [&](Endpoint& ep) {
            if (!skip) zk::prove_defense(ep, nkeys, npub, nw);
          },
          [&](Endpoint& ep) {
            next_digests = zk::verify_defense(ep, nkeys.id, nkeys.verifier, npub, nvin).new_digests;
          },
          nullptr, nullptr);
    } catch (...) {
      server_thread.join();
      throw;
    }
    server_thread.join();
    if (server_err) std::rethrow_exception(server_err);
    rep.proof_ms = ms_since(pt0);
    rep.outcome = claimed;
    for (const auto* s : {&rep.server_session, &rep.next_session}) {
      if (!s->accepted) {
        rep.tag = s->tag;
        rep.reason = s->detail;
        return abort_turn(client, "proof");
      }
    }
    handoff_digest = next_digests.at(0);
    new_chain = ChainEntry{0, svin.new_points, server_digests, 1};
  }
  rep.outcome = claimed;

  // Step 8: forward the pruned queue to the next client.
  QueueState pruned = apply_outcome(queue_, c, claimed);
  ModelsAndPointer mp{pruned.checkpoints, pruned.bm_index, handoff_blind};
  if (strategy == Strategy::kTamperForward) {
    for (auto& q : mp.checkpoints) {
      if (q.id == c.id) q.model.raw[0] += 1;
    }
    if (std::none_of(mp.checkpoints.begin(), mp.checkpoints.end(), [&](const Checkpoint& q) { return q.id == c.id; })) {
      mp.checkpoints.back().model.raw[0] += 1;
    }
  }
  ModelsAndPointer got;
  {
    std::unique_ptr<Endpoint> rx;
    auto tx = connect_pair(rx);
    MessageChannel out(*tx, client, t.next, round);
    MessageChannel in(*rx, t.next, client, round);
    out.send(mp);
    got = in.recv_as<ModelsAndPointer>();
  }

  // Step 2 at the next client: hashes, chain audits and the handoff digest.
  auto fail = [&](std::string tag, std::string why) {
    rep.tag = std::move(tag);
    rep.reason = std::move(why);
    return abort_turn(client, "handoff");
  };
  if (got.checkpoints.size() != k || got.bm_index >= k) return fail("shape", "forwarded queue has the wrong shape");
  for (auto& q : got.checkpoints) {
    const HashBundle* h = server_->hashes(q.id);
    if (!h) return fail("hash", "no published hashes for checkpoint " + std::to_string(q.id));
    Checkpoint check = q;
    seal_hashes(check);
    if (check.model_hash != h->model_hash || check.update_hash != h->update_hash || check.dct_hash != h->dct_hash ||
        q.model_hash != h->model_hash) {
      return fail("hash", "checkpoint " + std::to_string(q.id) + " does not match its published hashes");
    }
    if (!cfg_.proving()) continue;
    const ChainEntry& e = q.id == c.id ? *new_chain : server_->chain(q.id);
    const auto x = zk::chain_vector(q.model, q.update);
    if (zk::chain_digest(x, e.points.at(0), q.chain.blind(e.generation, 0)) != e.digests.at(0)) {
      return fail("audit", "checkpoint " + std::to_string(q.id) + " fails its chain audit");
    }
    if (q.id == c.id && zk::chain_digest(x, handoff_point, got.handoff_blind) != handoff_digest) {
      return fail("handoff", "new checkpoint differs from the one proven to the next client");
    }
  }

  // Commit.
  server_->commit_round(c.id, claimed.removed_index, claimed.bm_index);
  if (new_chain) server_->set_chain(c.id, *new_chain);
  for (auto& q : got.checkpoints) q.poisoned = poisoned_.at(q.id);
  queue_.checkpoints = std::move(got.checkpoints);
  queue_.bm_index = got.bm_index;
  rep.accepted = true;
  rep.turn_ms = ms_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------

std::string RunLog::to_jsonl() const {
  std::string out;
  for (const auto& e : events) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

RunLog RunLog::from_jsonl(const std::string& text) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      log.events.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ShapeError(std::string("bad run log line: ") + e.what());
    }
  }
  return log;
}

void RunLog::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << to_jsonl();
  if (!f) throw IoError("write failed: " + path.string());
}

nlohmann::json to_json(const TurnReport& t) {
  nlohmann::json j;
  j["round"] = t.round;
  j["client"] = t.client;
  j["malicious"] = t.malicious;
  j["accepted"] = t.accepted;
  j["list_ids"] = t.list_ids;
  j["list_poisoned"] = t.list_poisoned;
  j["removed_index"] = t.outcome.removed_index;
  j["bm_index"] = t.outcome.bm_index;
  j["raw_scores"] = t.outcome.raw_scores;
  j["adjusted_scores"] = t.outcome.adjusted_scores;
  j["proof_bytes_server"] = t.server_session.bytes;
  j["proof_bytes_next"] = t.next_session.bytes;
  j["proof_ms"] = t.proof_ms;
  j["turn_ms"] = t.turn_ms;
  j["republished"] = t.republished;
  if (!t.accepted) {
    j["culprit"] = t.culprit;
    j["stage"] = t.stage;
    j["tag"] = t.tag;
    j["reason"] = t.reason;
  }
  return j;
}

RunLog run_experiment(const ExperimentConfig& cfg) {
  RunLog log;
  World world(cfg);
  {
    nlohmann::json j;
    j["event"] = "config";
    j["config"] = to_map(cfg);
    std::vector<int> mal;
    for (int c = 0; c < cfg.clients; ++c) {
      if (world.malicious(c)) mal.push_back(c);
    }
    j["malicious_clients"] = mal;
    std::vector<bool> flags;
    std::vector<std::uint64_t> ids;
    for (const auto& q : world.queue().checkpoints) {
      flags.push_back(q.poisoned);
      ids.push_back(q.id);
    }
    j["initial_queue"] = ids;
    j["initial_poisoned"] = flags;
    j["initial_bm"] = world.queue().bm_index;
    log.events.push_back(std::move(j));
  }
  int client = 0;
  for (int r = 0; r < cfg.rounds; ++r) {
    if (world.active_clients() < 2) {
      log.events.push_back({{"event", "halt"}, {"round", r}, {"reason", "fewer than two active clients"}});
      break;
    }
    if (world.dropped(client)) client = world.next_after(client);
    const TurnReport t = world.run_turn(client, static_cast<std::uint64_t>(r));
    auto j = to_json(t);
    j["event"] = t.accepted ? "round" : "abort";
    if (t.accepted) {
      std::vector<bool> flags;
      for (const auto& q : world.queue().checkpoints) flags.push_back(q.poisoned);
      j["queue_poisoned"] = flags;
      if (cfg.eval_every_round) {
        const auto [ma, ba] = world.evaluate_best();
        j["ma"] = ma;
        j["ba"] = ba;
      }
    }
    log.events.push_back(std::move(j));
    const int next = world.next_after(client);
    if (!t.accepted) world.drop(t.culprit);
    client = world.dropped(next) ? world.next_after(next) : next;
  }
  const auto [ma, ba] = world.evaluate_best();
  const auto audit = world.server().audit().check();
  nlohmann::json fin;
  fin["event"] = "final";
  fin["ma"] = ma;
  fin["ba"] = ba;
  fin["privacy_clean"] = audit.clean;
  fin["privacy_findings"] = audit.findings;
  fin["server_bound_messages"] = audit.messages;
  fin["server_bound_bytes"] = audit.bytes;
  fin["publications"] = world.transcripts().sessions;
  fin["publication_replays_ok"] = world.transcripts().live_ok;
  fin["simulated_replays_ok"] = world.transcripts().simulated_ok;
  log.events.push_back(std::move(fin));
  return log;
}

}  // namespace zksplit::proto
