#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "zksplit/field.hpp"
#include "zksplit/oracles.hpp"

namespace zksplit {
namespace {

TEST(Field, ArithmeticMatchesWideReference) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20000; ++i) {
    const Fp a = random_fp(rng), b = random_fp(rng);
    ASSERT_EQ((a * b).value(), oracle::mod_mul(a.value(), b.value()));
    ASSERT_EQ((a + b).value(), oracle::mod_add(a.value(), b.value()));
    ASSERT_EQ((a - b).value(), oracle::mod_sub(a.value(), b.value()));
    if (!a.is_zero()) ASSERT_EQ(a.inv().value(), oracle::mod_inv(a.value()));
  }
}

TEST(Field, EdgeValuesReduce) {
  const std::uint64_t p = Fp::kModulus;
  EXPECT_EQ(Fp(p).value(), 0u);
  EXPECT_EQ(Fp(p + 5).value(), 5u);
  EXPECT_EQ(Fp(~std::uint64_t{0}).value(), oracle::mod_add(~std::uint64_t{0} % p, 0));
  EXPECT_EQ((Fp(p - 1) * Fp(p - 1)).value(), 1u);
  EXPECT_EQ((-Fp(0)).value(), 0u);
  EXPECT_EQ(field_arith(Fp(3), Fp(4), FieldOp::kMul), Fp(12));
  EXPECT_EQ(field_arith(Fp(3), Fp(), FieldOp::kNeg), Fp(p - 3));
}

TEST(Field, InverseOfZeroThrows) {
  EXPECT_THROW(Fp(0).inv(), DivisionByZero);
  EXPECT_THROW(field_arith(Fp(0), Fp(1), FieldOp::kInv), DivisionByZero);
}

TEST(Field, SignedEmbeddingRoundTrips) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int64_t> d(-(std::int64_t{1} << 59), std::int64_t{1} << 59);
  for (int i = 0; i < 5000; ++i) {
    const auto v = d(rng);
    ASSERT_EQ(Fp::from_signed(v).to_signed(), v);
    ASSERT_EQ(Fp::from_signed(v) + Fp::from_signed(-v), Fp(0));
  }
  EXPECT_EQ(Fp::from_signed(-1).value(), Fp::kModulus - 1);
}

TEST(Field, BytesRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Fp a = random_fp(rng);
    const auto b = to_bytes(a);
    EXPECT_EQ(fp_from_bytes(b), a);
  }
}

TEST(FixedPoint, TiesGoToEven) {
  // 2^-17 is exactly half a unit at 16 fractional bits.
  const double half = std::ldexp(1.0, -17);
  EXPECT_EQ(fp_encode(half).raw, 0);
  EXPECT_EQ(fp_encode(3 * half).raw, 2);
  EXPECT_EQ(fp_encode(-3 * half).raw, -2);
  EXPECT_EQ(fp_encode(5 * half).raw, 2);
}

TEST(FixedPoint, EncodeDecodeWithinHalfUnit) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1000, 1000);
  for (int i = 0; i < 5000; ++i) {
    const double x = u(rng);
    const auto fx = fp_encode(x);
    ASSERT_LE(std::fabs(fp_decode(fx) - x), std::ldexp(0.5, -16));
    const auto b = to_bytes(fx);
    ASSERT_EQ(fixed_from_bytes(b), fx);
  }
}

TEST(FixedPoint, OverflowThrows) {
  EXPECT_THROW(fp_encode(std::ldexp(1.0, 24)), EncodingOverflow);
  EXPECT_THROW(fp_encode(-std::ldexp(1.0, 24)), EncodingOverflow);
  EXPECT_THROW(fp_encode(std::nan("")), EncodingOverflow);
  EXPECT_NO_THROW(fp_encode(std::ldexp(1.0, 23)));
}

TEST(ItMac, DealerSharesAreConsistent) {
  const Fp delta(123456789);
  const auto batch = dealer_gen(1000, delta, 77);
  for (std::size_t i = 0; i < batch.prover.size(); ++i) {
    ASSERT_TRUE(mac_valid({batch.verifier[i]}, delta, batch.prover[i].value, batch.prover[i].mac));
  }
}

TEST(ItMac, CommitOpenAndLinearity) {
  std::mt19937_64 rng(5);
  const Fp delta = random_fp(rng);
  const auto batch = dealer_gen(2, delta, 9);
  const Fp x = random_fp(rng), y = random_fp(rng), c = random_fp(rng);
  auto [sx, mx] = commit(x, batch.prover[0]);
  auto [sy, my] = commit(y, batch.prover[1]);
  const auto kx = receive_commit(batch.verifier[0], mx, delta);
  const auto ky = receive_commit(batch.verifier[1], my, delta);
  EXPECT_EQ(open(kx, delta, sx), x);
  // Linear combination plus a public constant stays authenticated.
  const auto s = add_const(sx + c * sy, Fp(7));
  const auto k = add_const(kx + c * ky, Fp(7), delta);
  EXPECT_EQ(open(k, delta, s), x + c * y + Fp(7));
}

TEST(ItMac, ForgedOpeningRejected) {
  std::mt19937_64 rng(6);
  const Fp delta = random_fp(rng);
  const auto batch = dealer_gen(1, delta, 10);
  auto [sx, mx] = commit(Fp(42), batch.prover[0]);
  const auto kx = receive_commit(batch.verifier[0], mx, delta);
  ProverShare forged = sx;
  forged.value += Fp(1);
  EXPECT_THROW(open(kx, delta, forged), ProofRejected);
}

}  // namespace
}  // namespace zksplit
