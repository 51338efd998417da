#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zksplit/defense.hpp"
#include "zksplit/frequency.hpp"
#include "zksplit/modelcore.hpp"
#include "zksplit/zk/channel.hpp"
#include "zksplit/zk/party.hpp"

namespace zksplit::zk {

enum class StatementKind : std::uint8_t { kPublish = 1, kDefense = 2, kFreivalds = 3 };

/// concat(model, update) as field elements: the vector a chain digest commits to.
std::vector<Fp> chain_vector(const ParamVector& model, const ParamVector& update);

/// b + sum_j x_j s^(j+1), computed in the clear (setup party, audits, tests).
Fp chain_digest(std::span<const Fp> x, Fp point, Fp blind);

// ---------------------------------------------------------------------------
// Publication: commit a vector and fresh slot blinds, then open the slot digests at points the
// verifier discloses after the seal. An optional anchor proves the vector matches an earlier digest.

struct PublishPublic {
  std::uint64_t length = 0;
  std::uint32_t new_slots = 0;
  bool anchored = false;
  Fp anchor_digest;
};

struct PublishVerifierInputs {
  std::vector<Fp> new_points;
  Fp anchor_point;
};

struct PublishWitness {
  std::vector<Fp> x;
  std::vector<Fp> new_blinds;
  Fp anchor_blind;
};

struct PublishOutput {
  std::vector<Fp> digests;
  SessionStats stats;
};

// ---------------------------------------------------------------------------
// One defense round over k queue entries plus the new checkpoint.

struct DefensePublic {
  std::uint64_t length = 0;  // parameters per model
  std::uint8_t frac_bits = kDefaultFracBits;
  std::uint32_t k = 3;
  Beta beta;
  std::uint32_t from_index = 0;  // queue entry the new model was trained from
  std::uint32_t removed_index = 0;
  std::uint32_t bm_index = 0;
  std::int64_t s_wm = 0;  // weighted score of the removed entry
  std::int64_t s_bm = 0;  // weighted score of the best model
  std::vector<Fp> slot_digests;  // one per queue entry
  // Fresh digests opened for the new checkpoint: every slot of its ladder in the server session,
  // a single handoff digest in the next-client session.
  std::uint32_t new_slots = 1;
  std::uint32_t freivalds_reps = 1;

  /// Throws ConfigError when the public inputs are malformed.
  void validate() const;
  DefenseParams params() const { return {k, beta}; }
};

struct DefenseVerifierInputs {
  std::vector<Fp> slot_points;  // k
  std::vector<Fp> new_points;   // new_slots
};

struct DefenseWitness {
  std::vector<ParamVector> models;   // k + 1, new model last
  std::vector<ParamVector> updates;  // k, queue entries only; the new update is derived in-circuit
  std::vector<Fp> slot_blinds;       // k
  std::vector<Fp> new_blinds;        // new_slots
  // Filled by prepare_defense_witness; adversarial tests may overwrite them afterwards.
  std::vector<QuantizedDct> dcts;                 // k + 1
  std::vector<std::vector<std::int64_t>> abs;     // k + 1, per masked cell
  std::vector<std::vector<std::uint8_t>> signs;   // k + 1, per masked cell
};

struct DefenseOutput {
  std::vector<Fp> new_digests;
  SessionStats stats;
};

/// Computes the honest DCT and absolute-value witnesses. Throws EncodingOverflow when a masked
/// coefficient does not fit the proven range.
void prepare_defense_witness(const DefensePublic& pub, DefenseWitness& w);

/// Update scores of the k+1 entries, exactly as the circuit sums them.
std::vector<std::int64_t> witness_scores(const DefensePublic& pub, const DefenseWitness& w);

/// Fills removed/bm/s_wm/s_bm of `pub` from the plaintext defense over the witness.
DefenseOutcome fill_outcome(DefensePublic& pub, const DefenseWitness& w);

/// A k-entry queue of random models and updates plus a new model, with chain slots opened at random
/// points. Used for proof-cost measurements and tests; no training involved.
struct DefenseInstance {
  DefensePublic pub;
  DefenseVerifierInputs vin;
  DefenseWitness w;
};

DefenseInstance synthetic_defense(std::uint64_t seed, std::size_t length, std::uint32_t k = 3,
                                  std::uint32_t new_slots = 2);

// ---------------------------------------------------------------------------
// Standalone DCT consistency: committed update and quantized DCT, Freivalds check, remainder ranges.

struct FreivaldsPublic {
  std::uint64_t length = 0;
  std::uint8_t frac_bits = kDefaultFracBits;
  std::uint32_t reps = 1;
};

struct FreivaldsWitness {
  ParamVector update;
  QuantizedDct dct;
};

// ---------------------------------------------------------------------------
// Running sessions

struct SessionResult {
  bool accepted = false;
  std::string tag;     // failing check class when rejected
  std::string detail;
  std::string prover_error;  // set when the prover side threw
  std::uint64_t bytes_to_verifier = 0;
  std::uint64_t bytes_to_prover = 0;
};

/// Prover runs throw ProofRejected when the verifier refuses and TransportError on channel failure.
PublishOutput prove_publish(Endpoint& ep, const SessionKeys& keys, const PublishPublic& pub, const PublishWitness& w,
                            std::size_t chunk = kDefaultChunk);
PublishOutput verify_publish(Endpoint& ep, SessionId id, const VerifierSecrets& s, const PublishPublic& pub,
                             const PublishVerifierInputs& vin, std::size_t chunk = kDefaultChunk);

DefenseOutput prove_defense(Endpoint& ep, const SessionKeys& keys, const DefensePublic& pub, const DefenseWitness& w,
                            std::size_t chunk = kDefaultChunk);
DefenseOutput verify_defense(Endpoint& ep, SessionId id, const VerifierSecrets& s, const DefensePublic& pub,
                             const DefenseVerifierInputs& vin, std::size_t chunk = kDefaultChunk);

/// Honest witness for a standalone DCT session.
FreivaldsWitness make_freivalds_witness(const ParamVector& update);

SessionStats prove_freivalds(Endpoint& ep, const SessionKeys& keys, const FreivaldsPublic& pub, const FreivaldsWitness& w,
                     std::size_t chunk = kDefaultChunk);
SessionStats verify_freivalds(Endpoint& ep, SessionId id, const VerifierSecrets& s, const FreivaldsPublic& pub,
                      std::size_t chunk = kDefaultChunk);

/// Runs the prover on a worker thread and the verifier on the calling thread, over an in-process pipe
/// (or loopback TCP). `ep_hook` sees the verifier endpoint before the session starts.
SessionResult run_local(const std::function<void(Endpoint&)>& prove, const std::function<void(Endpoint&)>& verify,
                        const std::function<void(Endpoint&)>& ep_hook = {}, bool tcp = false);

/// Verifier-only runs that fabricate the prover's messages.
SimulatedFrames simulate_publish(SessionId id, const VerifierSecrets& s, const PublishPublic& pub,
                                 const PublishVerifierInputs& vin, std::uint64_t sim_seed,
                                 std::size_t chunk = kDefaultChunk);
SimulatedFrames simulate_defense(SessionId id, const VerifierSecrets& s, const DefensePublic& pub,
                                 const DefenseVerifierInputs& vin, std::uint64_t sim_seed,
                                 std::size_t chunk = kDefaultChunk);
SimulatedFrames simulate_freivalds(SessionId id, const VerifierSecrets& s, const FreivaldsPublic& pub,
                                   std::uint64_t sim_seed, std::size_t chunk = kDefaultChunk);

// ---------------------------------------------------------------------------
// Encodings used by transcripts

Bytes encode(const PublishPublic& pub, const PublishVerifierInputs& vin);
std::pair<PublishPublic, PublishVerifierInputs> decode_publish(std::span<const std::uint8_t> b);
Bytes encode(const DefensePublic& pub, const DefenseVerifierInputs& vin);
std::pair<DefensePublic, DefenseVerifierInputs> decode_defense(std::span<const std::uint8_t> b);
Bytes encode(const FreivaldsPublic& pub);
FreivaldsPublic decode_freivalds(std::span<const std::uint8_t> b);

}  // namespace zksplit::zk
