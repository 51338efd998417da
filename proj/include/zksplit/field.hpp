#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "zksplit/errors.hpp"

namespace zksplit {

/// Element of the Mersenne prime field GF(2^61 - 1), always held in canonical form [0, p).
class Fp {
 public:
  static constexpr std::uint64_t kModulus = (std::uint64_t{1} << 61) - 1;

  constexpr Fp() = default;
  constexpr explicit Fp(std::uint64_t v) : v_(reduce(v)) {}

  /// Signed embedding: nonnegative v maps to v, negative v to p - |v|.
  static constexpr Fp from_signed(std::int64_t v) {
    if (v >= 0) return Fp(static_cast<std::uint64_t>(v));
    return -Fp(static_cast<std::uint64_t>(-(v + 1)) + 1);
  }

  constexpr std::uint64_t value() const { return v_; }

  /// Centered lift into (-p/2, p/2].
  constexpr std::int64_t to_signed() const {
    return v_ > kModulus / 2 ? -static_cast<std::int64_t>(kModulus - v_) : static_cast<std::int64_t>(v_);
  }

  constexpr bool is_zero() const { return v_ == 0; }

  friend constexpr Fp operator+(Fp a, Fp b) {
    std::uint64_t s = a.v_ + b.v_;
    return raw(s >= kModulus ? s - kModulus : s);
  }
  friend constexpr Fp operator-(Fp a, Fp b) { return raw(a.v_ >= b.v_ ? a.v_ - b.v_ : a.v_ + kModulus - b.v_); }
  friend constexpr Fp operator-(Fp a) { return raw(a.v_ == 0 ? 0 : kModulus - a.v_); }
  friend constexpr Fp operator*(Fp a, Fp b) {
    const unsigned __int128 z = static_cast<unsigned __int128>(a.v_) * b.v_;
    const std::uint64_t lo = static_cast<std::uint64_t>(z) & kModulus;
    const std::uint64_t hi = static_cast<std::uint64_t>(z >> 61);
    return Fp(lo + hi);
  }
  constexpr Fp& operator+=(Fp o) { return *this = *this + o; }
  constexpr Fp& operator-=(Fp o) { return *this = *this - o; }
  constexpr Fp& operator*=(Fp o) { return *this = *this * o; }
  friend constexpr bool operator==(Fp a, Fp b) = default;

  constexpr Fp pow(std::uint64_t e) const {
    Fp base = *this, acc(1);
    while (e) {
      if (e & 1) acc *= base;
      base *= base;
      e >>= 1;
    }
    return acc;
  }

  /// Multiplicative inverse via Fermat. Throws DivisionByZero for 0.
  Fp inv() const {
    if (v_ == 0) throw DivisionByZero();
    return pow(kModulus - 2);
  }

 private:
  static constexpr std::uint64_t reduce(std::uint64_t v) {
    v = (v & kModulus) + (v >> 61);
    return v >= kModulus ? v - kModulus : v;
  }
  static constexpr Fp raw(std::uint64_t v) {
    Fp f;
    f.v_ = v;
    return f;
  }

  std::uint64_t v_ = 0;
};

enum class FieldOp { kAdd, kSub, kMul, kInv, kNeg };

/// Dispatching form of the field operations; `b` is ignored by the unary ops.
Fp field_arith(Fp a, Fp b, FieldOp op);

/// Uniform element drawn by rejection sampling.
template <class Rng>
Fp random_fp(Rng& rng) {
  for (;;) {
    const std::uint64_t v = static_cast<std::uint64_t>(rng()) >> 3;
    if (v < Fp::kModulus) return Fp(v);
  }
}

std::array<std::uint8_t, 8> to_bytes(Fp x);
Fp fp_from_bytes(std::span<const std::uint8_t, 8> bytes);

// ---------------------------------------------------------------------------
// Fixed point

inline constexpr int kDefaultFracBits = 16;
inline constexpr int kMagnitudeBits = 40;

struct FixedPoint {
  std::int64_t raw = 0;
  std::uint8_t frac_bits = kDefaultFracBits;

  friend bool operator==(const FixedPoint&, const FixedPoint&) = default;
};

/// Quantizes x with round-half-to-even. Requires |x| < 2^(40 - frac_bits).
FixedPoint fp_encode(double x, int frac_bits = kDefaultFracBits);
double fp_decode(FixedPoint fx);
inline Fp fp_to_field(FixedPoint fx) { return Fp::from_signed(fx.raw); }

std::array<std::uint8_t, 9> to_bytes(FixedPoint fx);
FixedPoint fixed_from_bytes(std::span<const std::uint8_t, 9> bytes);

// ---------------------------------------------------------------------------
// IT-MAC authenticated values: mac = key + value * delta.

struct ProverShare {
  Fp value;
  Fp mac;
};

inline ProverShare operator+(ProverShare a, ProverShare b) { return {a.value + b.value, a.mac + b.mac}; }
inline ProverShare operator-(ProverShare a, ProverShare b) { return {a.value - b.value, a.mac - b.mac}; }
inline ProverShare operator*(Fp c, ProverShare a) { return {c * a.value, c * a.mac}; }

struct VerifierKey {
  Fp key;
};

inline VerifierKey operator+(VerifierKey a, VerifierKey b) { return {a.key + b.key}; }
inline VerifierKey operator-(VerifierKey a, VerifierKey b) { return {a.key - b.key}; }
inline VerifierKey operator*(Fp c, VerifierKey a) { return {c * a.key}; }

/// Adding a public constant changes only the value on the prover side and only the key on the verifier side.
inline ProverShare add_const(ProverShare a, Fp c) { return {a.value + c, a.mac}; }
inline VerifierKey add_const(VerifierKey a, Fp c, Fp delta) { return {a.key - c * delta}; }

inline bool mac_valid(VerifierKey k, Fp delta, Fp value, Fp mac) { return mac == k.key + value * delta; }

// ---------------------------------------------------------------------------
// Trusted dealer standing in for VOLE correlations.

/// Prover half of a dealer stream: yields (random value, mac) pairs.
class DealerProverStream {
 public:
  DealerProverStream(Fp delta, std::uint64_t seed) : delta_(delta), rng_(seed) {}
  ProverShare next() {
    const Fp x = random_fp(rng_);
    const Fp key = random_fp(rng_);
    return {x, key + x * delta_};
  }

 private:
  Fp delta_;
  std::mt19937_64 rng_;
};

/// Verifier half of the same stream: yields the matching keys.
class DealerVerifierStream {
 public:
  explicit DealerVerifierStream(std::uint64_t seed) : rng_(seed) {}
  Fp next() {
    (void)random_fp(rng_);
    return random_fp(rng_);
  }

 private:
  std::mt19937_64 rng_;
};

struct DealerBatch {
  std::vector<ProverShare> prover;
  std::vector<Fp> verifier;
};

DealerBatch dealer_gen(std::size_t count, Fp delta, std::uint64_t seed);

/// Prover side of a one-shot commitment: returns the share it keeps and the message x - x_rand.
std::pair<ProverShare, Fp> commit(Fp x, ProverShare fresh);

/// Verifier side: folds the commitment message into the dealer key.
VerifierKey receive_commit(Fp fresh_key, Fp message, Fp delta);

/// Returns the opened value or throws ProofRejected("open") on MAC mismatch.
Fp open(VerifierKey key, Fp delta, ProverShare claimed);

}  // namespace zksplit
