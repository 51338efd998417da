#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zksplit/field.hpp"

namespace zksplit {

using RawVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;
using Digest = std::array<std::uint8_t, 32>;

/// Flat fixed-point parameter array. All entries share one frac_bits.
struct ParamVector {
  RawVector raw;
  std::uint8_t frac_bits = kDefaultFracBits;

  ParamVector() = default;
  ParamVector(RawVector r, int fb) : raw(std::move(r)), frac_bits(static_cast<std::uint8_t>(fb)) {}

  std::size_t size() const { return static_cast<std::size_t>(raw.size()); }
  FixedPoint at(std::size_t i) const { return {raw[static_cast<Eigen::Index>(i)], frac_bits}; }

  static ParamVector quantize(const Eigen::VectorXd& values, int frac_bits = kDefaultFracBits);
  Eigen::VectorXd dequantize() const;

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.frac_bits == b.frac_bits && a.raw.size() == b.raw.size() && a.raw == b.raw;
  }
};

inline constexpr std::array<std::uint8_t, 4> kSerialMagic = {'Z', 'K', 'S', 'L'};
inline constexpr std::uint8_t kSerialVersion = 1;
inline constexpr std::size_t kSerialHeaderSize = 4 + 1 + 8 + 1;

/// Header (magic, version, n as u64 LE, frac_bits) followed by each raw as 8-byte LE two's complement.
std::vector<std::uint8_t> serialize(const ParamVector& pv);
ParamVector deserialize(std::span<const std::uint8_t> bytes);

/// The 14 header bytes serialize() would emit for a vector of length n.
std::array<std::uint8_t, kSerialHeaderSize> serial_header(std::uint64_t n, int frac_bits);

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);
std::string to_hex(std::span<const std::uint8_t> bytes);

inline Digest hash_model(const ParamVector& pv) { return sha256(serialize(pv)); }

/// Entrywise raw difference new_model - checkpoint_model.
ParamVector make_update(const ParamVector& new_model, const ParamVector& checkpoint_model);

void save_param_vector(const ParamVector& pv, const std::filesystem::path& path);
ParamVector load_param_vector(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// Secret that travels with a plaintext checkpoint. Blinds of its chain-commitment slots are derived
/// from it, so whoever holds the plaintext can open any slot of any generation the server published.
struct ChainBinding {
  Digest seed{};

  Fp blind(std::uint64_t generation, std::uint64_t slot) const;
};

struct Checkpoint {
  std::uint64_t id = 0;
  ParamVector model;
  ParamVector update;
  int origin_client = -1;
  std::int64_t round = 0;
  Digest model_hash{};
  Digest update_hash{};
  Digest dct_hash{};
  ChainBinding chain;
  // Harness oracle flag; never placed on the wire.
  bool poisoned = false;
};

/// Fills the three SHA-256 digests from the model and update contents.
void seal_hashes(Checkpoint& c);

/// The k retained checkpoints, oldest first, and the best-model pointer.
struct QueueState {
  std::vector<Checkpoint> checkpoints;
  std::size_t bm_index = 0;

  std::size_t size() const { return checkpoints.size(); }
  const Checkpoint& best() const { return checkpoints.at(bm_index); }
  /// Throws ProtocolStateError when the pointer or round ordering is broken.
  void validate() const;
};

}  // namespace zksplit
