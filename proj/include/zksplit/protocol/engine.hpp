#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zksplit/defense.hpp"
#include "zksplit/protocol/config.hpp"
#include "zksplit/protocol/messages.hpp"
#include "zksplit/trainer.hpp"
#include "zksplit/zk/statements.hpp"
#include "zksplit/zk/transcript.hpp"

namespace zksplit::proto {

/// Server-held chain commitment of one checkpoint: the points are the server's secret.
struct ChainEntry {
  std::uint64_t generation = 0;
  std::vector<Fp> points;
  std::vector<Fp> digests;
  std::uint64_t next_slot = 1;  // slot 0 is the audit slot, never used in a proof

  std::uint64_t remaining() const { return points.size() - next_slot; }
};

/// Every server-bound message, recorded at the server's endpoints.
class PrivacyAudit {
 public:
  void record(std::span<const std::uint8_t> bytes);
  /// Adds byte patterns that must never reach the server (e.g. encoded label vectors).
  void forbid(std::vector<std::uint8_t> pattern, std::string what);

  struct Result {
    bool clean = true;
    std::uint64_t messages = 0;
    std::uint64_t bytes = 0;
    std::vector<std::string> findings;
  };
  Result check() const;

 private:
  mutable std::mutex mu_;
  std::vector<Bytes> messages_;
  std::vector<std::pair<std::vector<std::uint8_t>, std::string>> forbidden_;
};

class ServerRole {
 public:
  ServerRole(const SplitArch& arch, double lr, std::uint64_t seed);

  // Hash registry, append-only and keyed by round.
  void publish_hashes(std::uint64_t round, const HashBundle& h);
  const HashBundle* hashes(std::uint64_t checkpoint_id) const;

  std::vector<Fp> fresh_points(std::size_t n);
  ChainEntry& chain(std::uint64_t checkpoint_id);
  bool has_chain(std::uint64_t checkpoint_id) const { return chain_.count(checkpoint_id) != 0; }
  void set_chain(std::uint64_t checkpoint_id, ChainEntry e) { chain_[checkpoint_id] = std::move(e); }

  /// Step 3 onwards: answers UseBackbone, activations and gradients until EndTraining, then keeps the
  /// trained backbone for `new_id`.
  void serve_training(MessageChannel& ch, std::uint64_t new_id);

  void add_backbone(std::uint64_t id, Backbone b) { backbones_[id] = std::move(b); }
  const Backbone& backbone(std::uint64_t id) const;
  std::size_t backbone_count() const { return backbones_.size(); }

  /// The checkpoint list the server mirrors from accepted proofs.
  const std::vector<std::uint64_t>& queue_ids() const { return queue_ids_; }
  std::size_t bm_index() const { return bm_index_; }
  void set_queue(std::vector<std::uint64_t> ids, std::size_t bm);
  /// Applies an accepted round: the removal and pointer are public inputs of the proof.
  void commit_round(std::uint64_t new_id, std::size_t removed_index, std::size_t bm_index);
  void discard_pending(std::uint64_t new_id);

  PrivacyAudit& audit() { return audit_; }

 private:
  SplitArch arch_;
  double lr_;
  std::mt19937_64 rng_;
  std::map<std::uint64_t, Backbone> backbones_;
  std::vector<std::pair<std::uint64_t, HashBundle>> hash_log_;
  std::map<std::uint64_t, ChainEntry> chain_;
  std::vector<std::uint64_t> queue_ids_;
  std::size_t bm_index_ = 0;
  PrivacyAudit audit_;
};

/// Client half of the split exchange: head and tail stay here, the backbone is behind `ch`.
class RemoteBackbone : public SplitPeer {
 public:
  explicit RemoteBackbone(MessageChannel& ch) : ch_(ch) {}
  MatrixXd forward(const MatrixXd& a1) override;
  MatrixXd backward(const MatrixXd& d_a3) override;

 private:
  MessageChannel& ch_;
};

/// Split training over a message channel to a server thread running `serve_training`.
ParamVector run_training_exchange(const SplitArch& arch, const ParamVector& start, MessageChannel& ch,
                                  const Dataset& data, const Hyper& hyper, std::mt19937_64& rng);

// ---------------------------------------------------------------------------

struct SessionReport {
  bool accepted = false;
  std::string tag;
  std::string detail;
  std::uint64_t bytes = 0;
  zk::SessionStats stats;
};

struct TurnReport {
  std::uint64_t round = 0;
  int client = 0;
  bool malicious = false;
  bool accepted = false;
  int culprit = -1;
  std::string stage;  // where an abort happened: republish, proof, handoff
  std::string tag;
  std::string reason;
  DefenseOutcome outcome;       // the outcome the client claimed
  std::vector<bool> list_poisoned;  // oracle flags of the k + 1 list
  std::vector<std::uint64_t> list_ids;
  SessionReport server_session;
  SessionReport next_session;
  std::uint64_t republished = 0;
  double proof_ms = 0;
  double turn_ms = 0;
};

/// The whole deployment in one process: server, clients and the plaintext queue in flight.
class World {
 public:
  explicit World(ExperimentConfig cfg);
  ~World();

  const ExperimentConfig& config() const { return cfg_; }

  /// One sequential turn: Steps 3-8 for `client` plus the next client's Step-2 checks on what it
  /// receives. Aborted turns leave queue, server list and backbones as they were.
  TurnReport run_turn(int client, std::uint64_t round);
  /// Client whose turn follows `client` among those not dropped.
  int next_after(int client) const;
  void drop(int client) { dropped_.at(static_cast<std::size_t>(client)) = true; }
  bool dropped(int client) const { return dropped_.at(static_cast<std::size_t>(client)); }
  bool malicious(int client) const { return malicious_.at(static_cast<std::size_t>(client)); }
  int active_clients() const;

  const QueueState& queue() const { return queue_; }
  ServerRole& server() { return *server_; }
  const Dataset& test_set() const { return test_; }
  const PoisonSpec& poison() const { return poison_; }

  /// MA and BA of the current best model.
  std::pair<double, double> evaluate_best() const;

  /// Transcript checks of publication sessions so far: {live replays ok, simulations ok, total}.
  struct TranscriptTally {
    std::uint64_t sessions = 0;
    std::uint64_t live_ok = 0;
    std::uint64_t simulated_ok = 0;
  };
  const TranscriptTally& transcripts() const { return tally_; }
  std::uint64_t publications() const { return tally_.sessions; }

 private:
  struct Turn;
  void init_pretrained();
  void init_secure();
  void publish_initial(std::uint64_t round);
  bool republish_if_needed(Turn& t);
  void check_publication(const zk::Transcript& live);
  std::mt19937_64 turn_rng(std::uint64_t round, int client, std::uint64_t salt) const;
  std::unique_ptr<Endpoint> connect_pair(std::unique_ptr<Endpoint>& other) const;

  ExperimentConfig cfg_;
  Dataset train_, test_, setup_;
  std::vector<DataShard> shards_;
  std::vector<bool> malicious_;
  std::vector<bool> dropped_;
  PoisonSpec poison_;
  std::unique_ptr<ServerRole> server_;
  QueueState queue_;
  std::map<std::uint64_t, bool> poisoned_;  // oracle: checkpoint id -> trained on poisoned data
  std::uint64_t next_id_ = 1;
  std::uint64_t session_counter_ = 0;
  TranscriptTally tally_;
};

// ---------------------------------------------------------------------------

/// JSON-lines event log of one run.
struct RunLog {
  std::vector<nlohmann::json> events;

  std::string to_jsonl() const;
  static RunLog from_jsonl(const std::string& text);
  void save(const std::filesystem::path& path) const;
};

nlohmann::json to_json(const TurnReport& t);

/// Runs the configured experiment to completion. Deterministic for a given config.
RunLog run_experiment(const ExperimentConfig& cfg);

}  // namespace zksplit::proto
