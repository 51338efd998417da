#include "zksplit/field.hpp"

#include <cfenv>
#include <cmath>
#include <cstring>
#include <string>

namespace zksplit {

Fp field_arith(Fp a, Fp b, FieldOp op) {
  switch (op) {
    case FieldOp::kAdd: return a + b;
    case FieldOp::kSub: return a - b;
    case FieldOp::kMul: return a * b;
    case FieldOp::kInv: return a.inv();
    case FieldOp::kNeg: return -a;
  }
  return {};
}

std::array<std::uint8_t, 8> to_bytes(Fp x) {
  std::array<std::uint8_t, 8> out{};
  std::uint64_t v = x.value();
  for (auto& b : out) {
    b = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
  return out;
}

Fp fp_from_bytes(std::span<const std::uint8_t, 8> bytes) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return Fp(v);
}

FixedPoint fp_encode(double x, int frac_bits) {
  if (frac_bits < 0 || frac_bits >= kMagnitudeBits) throw EncodingOverflow("frac_bits out of range");
  const double bound = std::ldexp(1.0, kMagnitudeBits - frac_bits);
  if (!(std::fabs(x) < bound)) throw EncodingOverflow("|x| >= 2^" + std::to_string(kMagnitudeBits - frac_bits));
  // nearbyint honours the default FE_TONEAREST mode, i.e. ties go to even.
  const double scaled = std::nearbyint(std::ldexp(x, frac_bits));
  const auto raw = static_cast<std::int64_t>(scaled);
  if (raw >= (std::int64_t{1} << kMagnitudeBits) || raw <= -(std::int64_t{1} << kMagnitudeBits)) {
    throw EncodingOverflow("rounded magnitude reaches 2^40");
  }
  return {raw, static_cast<std::uint8_t>(frac_bits)};
}

double fp_decode(FixedPoint fx) { return std::ldexp(static_cast<double>(fx.raw), -fx.frac_bits); }

std::array<std::uint8_t, 9> to_bytes(FixedPoint fx) {
  std::array<std::uint8_t, 9> out{};
  auto v = static_cast<std::uint64_t>(fx.raw);
  for (int i = 0; i < 8; ++i) {
    out[i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
  out[8] = fx.frac_bits;
  return out;
}

FixedPoint fixed_from_bytes(std::span<const std::uint8_t, 9> bytes) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return {static_cast<std::int64_t>(v), bytes[8]};
}

DealerBatch dealer_gen(std::size_t count, Fp delta, std::uint64_t seed) {
  DealerProverStream ps(delta, seed);
  DealerVerifierStream vs(seed);
  DealerBatch batch;
  batch.prover.reserve(count);
  batch.verifier.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    batch.prover.push_back(ps.next());
    batch.verifier.push_back(vs.next());
  }
  return batch;
}

std::pair<ProverShare, Fp> commit(Fp x, ProverShare fresh) { return {{x, fresh.mac}, x - fresh.value}; }

VerifierKey receive_commit(Fp fresh_key, Fp message, Fp delta) { return {fresh_key - message * delta}; }

Fp open(VerifierKey key, Fp delta, ProverShare claimed) {
  if (!mac_valid(key, delta, claimed.value, claimed.mac)) throw ProofRejected("open", "MAC mismatch");
  return claimed.value;
}

}  // namespace zksplit
