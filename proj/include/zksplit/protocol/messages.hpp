#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "zksplit/modelcore.hpp"
#include "zksplit/zk/channel.hpp"

namespace zksplit::proto {

using zk::Bytes;
using zk::Endpoint;

inline constexpr std::int32_t kServer = -1;
inline constexpr std::int32_t kSetup = -2;  // publisher of the initial queue

enum class MsgKind : std::uint8_t {
  kModelsAndPointer = 1,
  kHashBundle = 2,
  kTrainActivations = 3,
  kTrainGradients = 4,
  kProofFrame = 5,
  kAbort = 6,
  kUseBackbone = 7,
  kEndTraining = 8,
};

const char* to_string(MsgKind k);

struct MsgHeader {
  std::uint64_t round = 0;
  std::int32_t sender = 0;
  std::int32_t receiver = 0;
};

/// Plaintext queue forwarded client to client. Never addressed to the server.
struct ModelsAndPointer {
  std::vector<Checkpoint> checkpoints;  // oracle flags are not encoded
  std::uint64_t bm_index = 0;
  Fp handoff_blind;  // opens the digest the receiver checked in its proof session
};

struct HashBundle {
  std::uint64_t checkpoint_id = 0;
  std::int64_t checkpoint_round = 0;
  Digest model_hash{};
  Digest update_hash{};
  Digest dct_hash{};
};

/// Smashed data: head output going to the server, backbone output coming back.
struct TrainActivations {
  Eigen::MatrixXd values;
};

/// Gradients at a partition boundary, in either direction.
struct TrainGradients {
  Eigen::MatrixXd values;
};

struct ProofFrame {
  Bytes frame;
};

struct Abort {
  std::int32_t culprit = 0;
  std::string reason;
};

/// Step 3: the server trains on from the backbone stored with this checkpoint.
struct UseBackbone {
  std::uint64_t checkpoint_id = 0;
};

struct EndTraining {};

using MsgBody = std::variant<ModelsAndPointer, HashBundle, TrainActivations, TrainGradients, ProofFrame, Abort,
                             UseBackbone, EndTraining>;

struct RoundMessage {
  MsgHeader header;
  MsgBody body;

  MsgKind kind() const { return static_cast<MsgKind>(body.index() + 1); }
};

Bytes encode(const RoundMessage& m);
/// Throws ShapeError on malformed input.
RoundMessage decode_message(std::span<const std::uint8_t> bytes);

/// Message-level view of an endpoint for one party in one round.
class MessageChannel {
 public:
  MessageChannel(Endpoint& ep, std::int32_t self, std::int32_t peer, std::uint64_t round)
      : ep_(ep), self_(self), peer_(peer), round_(round) {}

  void send(MsgBody body);
  /// Receives the next message; out-of-order rounds, wrong addressing or an unexpected kind throw
  /// ProtocolStateError.
  RoundMessage recv();
  template <class T>
  T recv_as() {
    RoundMessage m = recv();
    if (!std::holds_alternative<T>(m.body)) {
      throw ProtocolStateError(std::string("unexpected ") + to_string(m.kind()) + " message");
    }
    return std::get<T>(std::move(m.body));
  }

  Endpoint& endpoint() { return ep_; }

 private:
  Endpoint& ep_;
  std::int32_t self_;
  std::int32_t peer_;
  std::uint64_t round_;
};

/// Carries proof frames inside ProofFrame round messages over another endpoint.
class FramedEndpoint : public Endpoint {
 public:
  FramedEndpoint(Endpoint& inner, std::int32_t self, std::int32_t peer, std::uint64_t round)
      : ch_(inner, self, peer, round), inner_(inner) {}
  void close() override { inner_.close(); }

 protected:
  void do_send(Bytes msg) override { ch_.send(ProofFrame{std::move(msg)}); }
  Bytes do_recv(zk::Millis timeout) override;

 private:
  MessageChannel ch_;
  Endpoint& inner_;
};

}  // namespace zksplit::proto
