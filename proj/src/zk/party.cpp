#include "zksplit/zk/party.hpp"

#include "zksplit/modelcore.hpp"
#include "zksplit/zk/bytes.hpp"

namespace zksplit::zk {

namespace {

enum : std::uint8_t { kOpenCheck = 0, kOpenReveal = 1 };
enum : std::uint8_t { kValuesChallenge = 0, kValuesDisclose = 1 };

Bytes result_payload(bool ok, const std::string& tag, const std::string& detail) {
  ByteWriter w;
  w.u8(ok ? 1 : 0);
  w.str(tag);
  w.str(detail);
  return w.take();
}

// Interprets a verdict or abort that arrived where something else was expected.
[[noreturn]] void raise_unexpected(const Frame& f, FrameType want) {
  ByteReader r(f.payload);
  if (f.type == FrameType::kAssertResult) {
    r.u8();
    const auto tag = r.str();
    throw ProofRejected(tag, r.str());
  }
  if (f.type == FrameType::kAbort) throw ProofRejected("abort", r.str());
  throw ProofRejected("protocol", std::string("expected ") + to_string(want) + ", got " + to_string(f.type));
}

}  // namespace

SessionKeys deal_session(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SessionKeys k;
  const Digest d = sha256(std::string_view(reinterpret_cast<const char*>(&seed), sizeof seed));
  std::copy_n(d.begin(), 16, k.id.begin());
  do {
    k.dealer_delta = random_fp(rng);
  } while (k.dealer_delta.is_zero());
  k.dealer_seed = rng();
  k.verifier = {k.dealer_delta, k.dealer_seed, rng()};
  return k;
}

// ---------------------------------------------------------------------------

ProverParty::ProverParty(Endpoint& ep, SessionId id, DealerProverStream dealer, std::size_t chunk)
    : ep_(ep), id_(id), dealer_(dealer), chunk_(chunk) {}

void ProverParty::send(FrameType t, Bytes payload) { ep_.send(encode_frame({id_, t, std::move(payload)})); }

Frame ProverParty::recv_expect(FrameType t) {
  Frame f = decode_frame(ep_.recv());
  if (f.session != id_) throw ProofRejected("protocol", "frame for another session");
  if (f.type != t) raise_unexpected(f, t);
  if (t == FrameType::kAssertResult) {
    ByteReader r(f.payload);
    if (r.u8() != 1) raise_unexpected(f, t);
  }
  return f;
}

void ProverParty::flush() {
  if (outbox_.empty()) return;
  ByteWriter w;
  w.fps(outbox_);
  outbox_.clear();
  send(FrameType::kCommitBatch, w.take());
}

ProverParty::Wire ProverParty::input(Fp x) {
  auto [share, msg] = commit(x, dealer_.next());
  outbox_.push_back(msg);
  ++stats_.commits;
  if (outbox_.size() >= chunk_) flush();
  return {share.value, share.mac};
}

std::vector<ProverParty::Wire> ProverParty::inputs(std::span<const Fp> xs) {
  std::vector<Wire> out;
  out.reserve(xs.size());
  for (auto x : xs) out.push_back(input(x));
  return out;
}

ProverParty::Wire ProverParty::mul(Wire a, Wire b) {
  const Wire z = input(a.x * b.x);
  triples_.push_back({a, b, z});
  ++stats_.triples;
  if (triples_.size() >= chunk_) run_check();
  return z;
}

void ProverParty::assert_zero(Wire w) {
  zeros_.push_back(w.m);
  ++stats_.zero_checks;
  if (zeros_.size() >= chunk_) run_check();
}

void ProverParty::assert_bit(Wire b) {
  triples_.push_back({b, b, b});
  ++stats_.triples;
  if (triples_.size() >= chunk_) run_check();
}

void ProverParty::seal() {
  flush();
  sealed_ = true;
}

std::vector<Fp> ProverParty::challenge(std::size_t n) {
  if (!sealed_) throw ProtocolStateError("challenge requested before the commitment phase was sealed");
  flush();
  const Frame f = recv_expect(FrameType::kChallengeR);
  ByteReader r(f.payload);
  if (r.u8() != kValuesChallenge) throw ProofRejected("protocol", "expected a challenge");
  auto v = r.fps();
  if (v.size() != n) throw ProofRejected("protocol", "challenge length");
  return v;
}

std::vector<Fp> ProverParty::disclose(std::span<const Fp>, std::size_t n) {
  if (!sealed_) throw ProtocolStateError("disclosure before the commitment phase was sealed");
  flush();
  const Frame f = recv_expect(FrameType::kChallengeR);
  ByteReader r(f.payload);
  if (r.u8() != kValuesDisclose) throw ProofRejected("protocol", "expected a disclosure");
  auto v = r.fps();
  if (v.size() != n) throw ProofRejected("protocol", "disclosure length");
  return v;
}

std::vector<Fp> ProverParty::reveal(std::span<const Wire> ws) {
  flush();
  ByteWriter w;
  w.u8(kOpenReveal);
  w.u64(ws.size());
  std::vector<Fp> out;
  out.reserve(ws.size());
  for (const auto& x : ws) {
    w.fp(x.x);
    w.fp(x.m);
    out.push_back(x.x);
  }
  send(FrameType::kOpenBatch, w.take());
  return out;
}

void ProverParty::run_check() {
  if (triples_.empty() && zeros_.empty()) return;
  flush();
  const Frame f = recv_expect(FrameType::kChallengeBatch);
  ByteReader r(f.payload);
  const Fp chi = r.fp();

  Fp u, v, z;
  if (!triples_.empty()) {
    const ProverShare mask = dealer_.next();
    Fp pw = chi;
    for (const auto& [a, b, c] : triples_) {
      u += pw * (a.m * b.m);
      v += pw * (a.x * b.m + b.x * a.m - c.m);
      pw *= chi;
    }
    u += mask.mac;
    v += mask.value;
  }
  Fp pw = chi;
  for (const auto& m : zeros_) {
    z += pw * m;
    pw *= chi;
  }
  triples_.clear();
  zeros_.clear();
  ++stats_.batches;

  ByteWriter w;
  w.u8(kOpenCheck);
  w.fp(u);
  w.fp(v);
  w.fp(z);
  send(FrameType::kOpenBatch, w.take());
  recv_expect(FrameType::kAssertResult);
}

void ProverParty::phase(const std::string& tag) {
  run_check();
  tag_ = tag;
}

void ProverParty::finish() {
  run_check();
  flush();
  recv_expect(FrameType::kAssertResult);
}

void ProverParty::abort(const std::string& reason) {
  ByteWriter w;
  w.str(reason);
  try {
    send(FrameType::kAbort, w.take());
  } catch (const TransportError&) {
  }
}

// ---------------------------------------------------------------------------

VerifierParty::VerifierParty(Endpoint& ep, SessionId id, VerifierSecrets secrets, std::size_t chunk)
    : ep_(&ep), id_(id), s_(secrets), dealer_(secrets.dealer_seed), challenge_rng_(secrets.challenge_seed),
      chunk_(chunk) {}

VerifierParty::VerifierParty(SimulatedFrames& sink, SessionId id, VerifierSecrets secrets, std::uint64_t sim_seed,
                             std::size_t chunk)
    : sim_(&sink), id_(id), s_(secrets), dealer_(secrets.dealer_seed), challenge_rng_(secrets.challenge_seed),
      sim_rng_(sim_seed), chunk_(chunk) {}

void VerifierParty::send(FrameType t, Bytes payload) {
  Bytes frame = encode_frame({id_, t, std::move(payload)});
  if (sim_) {
    sim_->frames.emplace_back(Direction::kSent, std::move(frame));
  } else {
    ep_->send(std::move(frame));
  }
}

void VerifierParty::sim_emit(FrameType t, Bytes payload) {
  sim_->frames.emplace_back(Direction::kReceived, encode_frame({id_, t, std::move(payload)}));
}

void VerifierParty::sim_flush() {
  if (sim_outbox_.empty()) return;
  ByteWriter w;
  w.fps(sim_outbox_);
  sim_outbox_.clear();
  sim_emit(FrameType::kCommitBatch, w.take());
}

void VerifierParty::reject(const std::string& tag, const std::string& detail) {
  if (!sim_) {
    try {
      send(FrameType::kAssertResult, result_payload(false, tag, detail));
    } catch (const TransportError&) {
    }
  }
  throw ProofRejected(tag, detail);
}

Frame VerifierParty::recv_expect(FrameType t) {
  Frame f;
  try {
    f = decode_frame(ep_->recv());
  } catch (const ShapeError& e) {
    reject("protocol", e.what());
  }
  if (f.session != id_) reject("protocol", "frame for another session");
  if (f.type == FrameType::kAbort) {
    ByteReader r(f.payload);
    throw ProofRejected("abort", r.str());
  }
  if (f.type != t) reject("protocol", std::string("expected ") + to_string(t) + ", got " + to_string(f.type));
  return f;
}

Fp VerifierParty::next_delta_key() {
  const Fp fresh = dealer_.next();
  Fp delta_msg;
  if (sim_) {
    delta_msg = random_fp(sim_rng_);
    sim_outbox_.push_back(delta_msg);
    if (sim_outbox_.size() >= chunk_) sim_flush();
  } else {
    if (inbox_at_ == inbox_.size()) {
      const Frame f = recv_expect(FrameType::kCommitBatch);
      try {
        ByteReader r(f.payload);
        inbox_ = r.fps();
        r.expect_done();
      } catch (const ShapeError& e) {
        reject("protocol", e.what());
      }
      inbox_at_ = 0;
      if (inbox_.empty()) reject("protocol", "empty commit batch");
    }
    delta_msg = inbox_[inbox_at_++];
  }
  ++stats_.commits;
  return receive_commit(fresh, delta_msg, s_.delta).key;
}

VerifierParty::Wire VerifierParty::input(Fp) { return {next_delta_key()}; }

std::vector<VerifierParty::Wire> VerifierParty::inputs(std::span<const Fp> xs) {
  std::vector<Wire> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(input(Fp{}));
  return out;
}

VerifierParty::Wire VerifierParty::mul(Wire a, Wire b) {
  const Wire z = input(Fp{});
  triples_.push_back({a, b, z});
  ++stats_.triples;
  if (triples_.size() >= chunk_) run_check();
  return z;
}

void VerifierParty::assert_zero(Wire w) {
  zeros_.push_back(w.k);
  ++stats_.zero_checks;
  if (zeros_.size() >= chunk_) run_check();
}

void VerifierParty::assert_bit(Wire b) {
  triples_.push_back({b, b, b});
  ++stats_.triples;
  if (triples_.size() >= chunk_) run_check();
}

void VerifierParty::seal() {
  if (sim_) sim_flush();
  sealed_ = true;
}

std::vector<Fp> VerifierParty::challenge(std::size_t n) {
  if (!sealed_) reject("protocol", "challenge requested before the commitment phase was sealed");
  if (sim_) sim_flush();
  if (!sim_ && inbox_at_ != inbox_.size()) reject("protocol", "unconsumed commitments at challenge time");
  std::vector<Fp> r(n);
  for (auto& x : r) x = random_fp(challenge_rng_);
  ByteWriter w;
  w.u8(kValuesChallenge);
  w.fps(r);
  send(FrameType::kChallengeR, w.take());
  return r;
}

std::vector<Fp> VerifierParty::disclose(std::span<const Fp> values, std::size_t n) {
  if (!sealed_) reject("protocol", "disclosure before the commitment phase was sealed");
  if (values.size() != n) throw ProtocolStateError("disclosure length mismatch");
  if (sim_) sim_flush();
  ByteWriter w;
  w.u8(kValuesDisclose);
  w.fps(values);
  send(FrameType::kChallengeR, w.take());
  return {values.begin(), values.end()};
}

std::vector<Fp> VerifierParty::reveal(std::span<const Wire> ws) {
  std::vector<Fp> out;
  out.reserve(ws.size());
  if (sim_) {
    sim_flush();
    ByteWriter w;
    w.u8(kOpenReveal);
    w.u64(ws.size());
    for (const auto& k : ws) {
      const Fp v = random_fp(sim_rng_);
      w.fp(v);
      w.fp(k.k + v * s_.delta);
      out.push_back(v);
    }
    sim_emit(FrameType::kOpenBatch, w.take());
    return out;
  }
  const Frame f = recv_expect(FrameType::kOpenBatch);
  try {
    ByteReader r(f.payload);
    if (r.u8() != kOpenReveal || r.u64() != ws.size()) reject("protocol", "malformed opening");
    for (const auto& k : ws) {
      const Fp v = r.fp();
      const Fp m = r.fp();
      if (!mac_valid({k.k}, s_.delta, v, m)) reject("open", "MAC mismatch at " + tag_);
      out.push_back(v);
    }
    r.expect_done();
  } catch (const ShapeError& e) {
    reject("protocol", e.what());
  }
  return out;
}

void VerifierParty::run_check() {
  if (triples_.empty() && zeros_.empty()) return;
  if (sim_) sim_flush();
  const Fp chi = random_fp(challenge_rng_);
  {
    ByteWriter w;
    w.fp(chi);
    send(FrameType::kChallengeBatch, w.take());
  }

  Fp expect_b;
  Fp mask_key;
  const bool have_triples = !triples_.empty();
  if (have_triples) {
    mask_key = dealer_.next();
    Fp pw = chi;
    for (const auto& [a, b, c] : triples_) {
      expect_b += pw * (a.k * b.k + c.k * s_.delta);
      pw *= chi;
    }
    expect_b += mask_key;
  }
  Fp expect_z;
  Fp pw = chi;
  for (const auto& k : zeros_) {
    expect_z += pw * k;
    pw *= chi;
  }
  triples_.clear();
  zeros_.clear();
  ++stats_.batches;

  Fp u, v, z;
  if (sim_) {
    // A prover knowing Δ passes both checks with uniformly distributed v.
    if (have_triples) {
      v = random_fp(sim_rng_);
      u = expect_b + v * s_.delta;
    }
    z = expect_z;
    ByteWriter w;
    w.u8(kOpenCheck);
    w.fp(u);
    w.fp(v);
    w.fp(z);
    sim_emit(FrameType::kOpenBatch, w.take());
  } else {
    const Frame f = recv_expect(FrameType::kOpenBatch);
    try {
      ByteReader r(f.payload);
      if (r.u8() != kOpenCheck) reject("protocol", "expected a check response");
      u = r.fp();
      v = r.fp();
      z = r.fp();
      r.expect_done();
    } catch (const ShapeError& e) {
      reject("protocol", e.what());
    }
  }
  if (u - v * s_.delta != expect_b) reject(tag_, "multiplication check failed");
  if (z != expect_z) reject(tag_, "zero check failed");
  send(FrameType::kAssertResult, result_payload(true, tag_, {}));
}

void VerifierParty::phase(const std::string& tag) {
  run_check();
  tag_ = tag;
}

void VerifierParty::finish() {
  run_check();
  if (sim_) sim_flush();
  if (!sim_ && inbox_at_ != inbox_.size()) reject("protocol", "unconsumed commitments at finish");
  send(FrameType::kAssertResult, result_payload(true, "finish", {}));
}

}  // namespace zksplit::zk
