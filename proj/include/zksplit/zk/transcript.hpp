#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "zksplit/zk/statements.hpp"

namespace zksplit::zk {

/// Everything a third party needs to re-run the verifier of one session: the verifier's secrets,
/// the statement (public plus verifier-private inputs) and every frame seen at the verifier.
struct Transcript {
  StatementKind kind = StatementKind::kPublish;
  SessionId id{};
  VerifierSecrets secrets;
  std::uint64_t chunk = kDefaultChunk;
  Bytes statement;
  std::vector<std::pair<Direction, Bytes>> frames;  // kReceived = prover to verifier
};

Bytes encode(const Transcript& t);
Transcript decode_transcript(std::span<const std::uint8_t> bytes);
void save_transcript(const Transcript& t, const std::filesystem::path& path);
Transcript load_transcript(const std::filesystem::path& path);

/// Appends every frame passing `ep` to `t`. `t` must outlive the endpoint's use.
void record_into(Endpoint& ep, Transcript& t);

struct ReplayResult {
  bool accepted = false;
  std::string reason;
};

/// Feeds the recorded prover frames to a fresh verifier and requires its own frames to match the
/// recorded ones byte for byte, with nothing left over.
ReplayResult replay_transcript(const Transcript& t);

/// A transcript produced without any prover.
Transcript simulate_transcript(StatementKind kind, SessionId id, const VerifierSecrets& s, Bytes statement,
                               std::uint64_t sim_seed, std::size_t chunk = kDefaultChunk);

}  // namespace zksplit::zk
