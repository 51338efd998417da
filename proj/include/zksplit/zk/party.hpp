#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zksplit/field.hpp"
#include "zksplit/zk/channel.hpp"

namespace zksplit::zk {

/// Prover view of an authenticated value.
struct PWire {
  Fp x;
  Fp m;
};
inline PWire operator+(PWire a, PWire b) { return {a.x + b.x, a.m + b.m}; }
inline PWire operator-(PWire a, PWire b) { return {a.x - b.x, a.m - b.m}; }
inline PWire operator-(PWire a) { return {-a.x, -a.m}; }
inline PWire operator*(Fp c, PWire a) { return {c * a.x, c * a.m}; }

/// Verifier view of an authenticated value.
struct VWire {
  Fp k;
};
inline VWire operator+(VWire a, VWire b) { return {a.k + b.k}; }
inline VWire operator-(VWire a, VWire b) { return {a.k - b.k}; }
inline VWire operator-(VWire a) { return {-a.k}; }
inline VWire operator*(Fp c, VWire a) { return {c * a.k}; }

inline constexpr std::size_t kDefaultChunk = std::size_t{1} << 16;

struct VerifierSecrets {
  Fp delta;
  std::uint64_t dealer_seed = 0;
  std::uint64_t challenge_seed = 0;
};

/// What the trusted dealer hands out for one session.
struct SessionKeys {
  SessionId id{};
  std::uint64_t dealer_seed = 0;
  Fp dealer_delta;  // only ever used inside the prover's DealerProverStream
  VerifierSecrets verifier;

  DealerProverStream prover_stream() const { return {dealer_delta, dealer_seed}; }
};

/// Deterministic per-session correlated randomness; Δ is never zero.
SessionKeys deal_session(std::uint64_t seed);

struct SessionStats {
  std::uint64_t commits = 0;
  std::uint64_t triples = 0;
  std::uint64_t zero_checks = 0;
  std::uint64_t batches = 0;
};

// ---------------------------------------------------------------------------

class ProverParty {
 public:
  using Wire = PWire;
  static constexpr bool kIsProver = true;

  ProverParty(Endpoint& ep, SessionId id, DealerProverStream dealer, std::size_t chunk = kDefaultChunk);

  Wire input(Fp x);
  std::vector<Wire> inputs(std::span<const Fp> xs);
  Wire constant(Fp c) const { return {c, Fp{}}; }
  Wire add_const(Wire w, Fp c) const { return {w.x + c, w.m}; }
  Wire mul(Wire a, Wire b);
  void assert_zero(Wire w);
  void assert_bit(Wire b);
  Fp value(Wire w) const { return w.x; }

  /// Ends the commitment phase; challenges and disclosures are only legal afterwards.
  void seal();
  bool sealed() const { return sealed_; }
  std::vector<Fp> challenge(std::size_t n);
  /// Public values the verifier discloses after the seal; the prover's argument is ignored.
  std::vector<Fp> disclose(std::span<const Fp> verifier_values, std::size_t n);
  std::vector<Fp> reveal(std::span<const Wire> ws);

  /// Starts a named group of constraints; pending checks of the previous group run first.
  void phase(const std::string& tag);
  const std::string& tag() const { return tag_; }
  void finish();
  /// Tells the verifier the prover gives up (e.g. it has no valid witness).
  void abort(const std::string& reason);

  const SessionStats& stats() const { return stats_; }

 private:
  void flush();
  void run_check();
  Frame recv_expect(FrameType t);
  void send(FrameType t, Bytes payload);

  Endpoint& ep_;
  SessionId id_;
  DealerProverStream dealer_;
  std::size_t chunk_;
  bool sealed_ = false;
  std::string tag_ = "commit";
  std::vector<Fp> outbox_;
  std::vector<std::array<PWire, 3>> triples_;
  std::vector<Fp> zeros_;  // macs of wires asserted zero
  SessionStats stats_;
};

// ---------------------------------------------------------------------------

/// Frames a simulated session would have carried, seen from the verifier.
struct SimulatedFrames {
  std::vector<std::pair<Direction, Bytes>> frames;  // kReceived = prover to verifier
};

class VerifierParty {
 public:
  using Wire = VWire;
  static constexpr bool kIsProver = false;

  /// Verifies a live prover over `ep`.
  VerifierParty(Endpoint& ep, SessionId id, VerifierSecrets secrets, std::size_t chunk = kDefaultChunk);
  /// Simulation: fabricates every prover message from the verifier secrets alone.
  VerifierParty(SimulatedFrames& sink, SessionId id, VerifierSecrets secrets, std::uint64_t sim_seed,
                std::size_t chunk = kDefaultChunk);

  Wire input(Fp ignored);
  std::vector<Wire> inputs(std::span<const Fp> xs);
  Wire constant(Fp c) const { return {-(c * s_.delta)}; }
  Wire add_const(Wire w, Fp c) const { return {w.k - c * s_.delta}; }
  Wire mul(Wire a, Wire b);
  void assert_zero(Wire w);
  void assert_bit(Wire b);
  Fp value(Wire) const { return {}; }

  void seal();
  bool sealed() const { return sealed_; }
  std::vector<Fp> challenge(std::size_t n);
  std::vector<Fp> disclose(std::span<const Fp> verifier_values, std::size_t n);
  std::vector<Fp> reveal(std::span<const Wire> ws);

  void phase(const std::string& tag);
  const std::string& tag() const { return tag_; }
  void finish();

  const SessionStats& stats() const { return stats_; }
  bool simulating() const { return sim_ != nullptr; }

 private:
  Fp next_delta_key();
  void run_check();
  Frame recv_expect(FrameType t);
  void send(FrameType t, Bytes payload);
  [[noreturn]] void reject(const std::string& tag, const std::string& detail);
  // Simulation helpers mirroring the prover's flush schedule.
  void sim_flush();
  void sim_emit(FrameType t, Bytes payload);

  Endpoint* ep_ = nullptr;
  SimulatedFrames* sim_ = nullptr;
  SessionId id_;
  VerifierSecrets s_;
  DealerVerifierStream dealer_;
  std::mt19937_64 challenge_rng_;
  std::mt19937_64 sim_rng_;
  std::size_t chunk_;
  bool sealed_ = false;
  std::string tag_ = "commit";
  std::vector<Fp> inbox_;
  std::size_t inbox_at_ = 0;
  std::vector<Fp> sim_outbox_;
  std::vector<std::array<VWire, 3>> triples_;
  std::vector<Fp> zeros_;
  SessionStats stats_;
};

// ---------------------------------------------------------------------------
// Wire helpers shared by every party type.

template <class W>
W lincomb(std::span<const W> ws, std::span<const Fp> cs) {
  W acc{};
  for (std::size_t i = 0; i < ws.size(); ++i) acc = acc + cs[i] * ws[i];
  return acc;
}

/// acc + sum_j coeff^(j+1) * ws[j], i.e. the chain-digest polynomial evaluated at `point`.
template <class W>
W poly_eval(W acc, std::span<const W> ws, Fp point) {
  Fp pw = point;
  for (const auto& w : ws) {
    acc = acc + pw * w;
    pw *= point;
  }
  return acc;
}

}  // namespace zksplit::zk
