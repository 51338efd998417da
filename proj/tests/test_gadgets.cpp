#include <gtest/gtest.h>

#include <random>

#include "zksplit/zk/gadgets.hpp"
#include "zksplit/zk/statements.hpp"

namespace zksplit::zk {
namespace {

// Runs the same circuit on both sides; the verifier sees zeros where the prover sees witness values.
template <class Circuit>
SessionResult session(std::uint64_t seed, Circuit circuit) {
  const auto keys = deal_session(seed);
  return run_local(
      [&](Endpoint& ep) {
        ProverParty p(ep, keys.id, keys.prover_stream());
        circuit(p, true);
      },
      [&](Endpoint& ep) {
        VerifierParty v(ep, keys.id, keys.verifier);
        circuit(v, false);
      });
}

SessionResult range_session(std::uint64_t seed, Fp value, int bits) {
  return session(seed, [&](auto& p, bool prover) {
    p.phase("range");
    assert_range(p, p.input(prover ? value : Fp{}), bits);
    p.finish();
  });
}

TEST(Range, AcceptsInRangeAndRejectsOutside) {
  EXPECT_TRUE(range_session(1, Fp(0), 8).accepted);
  EXPECT_TRUE(range_session(2, Fp(255), 8).accepted);
  const auto over = range_session(3, Fp(256), 8);
  EXPECT_FALSE(over.accepted);
  EXPECT_EQ(over.tag, "range");
  EXPECT_FALSE(range_session(4, Fp::from_signed(-1), 8).accepted);
  EXPECT_TRUE(range_session(5, Fp((std::uint64_t{1} << kCoefBits) - 1), kCoefBits).accepted);
  EXPECT_FALSE(range_session(6, Fp(std::uint64_t{1} << kCoefBits), kCoefBits).accepted);
}

SessionResult abs_session(std::uint64_t seed, std::int64_t x, AbsWitness w) {
  return session(seed, [&](auto& p, bool prover) {
    p.phase("abs");
    const auto xw = p.input(prover ? Fp::from_signed(x) : Fp{});
    const auto a = p.input(prover ? w.a : Fp{});
    const auto s = p.input(prover ? w.s : Fp{});
    assert_abs(p, xw, a, s);
    p.finish();
  });
}

TEST(Abs, HonestWitnessesAccepted) {
  std::uint64_t seed = 10;
  for (std::int64_t x : {std::int64_t{0}, std::int64_t{7}, std::int64_t{-5}, (std::int64_t{1} << kCoefBits) - 1,
                         -(std::int64_t{1} << kCoefBits) + 1}) {
    EXPECT_TRUE(abs_session(seed++, x, abs_witness(x)).accepted) << x;
  }
}

TEST(Abs, CheatingWitnessesRejected) {
  // Sign flipped: a = x for a negative x is out of range.
  EXPECT_FALSE(abs_session(20, -5, {Fp::from_signed(-5), Fp(0)}).accepted);
  // Non-bit sign.
  EXPECT_FALSE(abs_session(21, 5, {Fp(5), Fp(2)}).accepted);
  // Wrong magnitude.
  EXPECT_FALSE(abs_session(22, -5, {Fp(6), Fp(1)}).accepted);
  // Magnitude too wide for the proven range.
  const std::int64_t big = std::int64_t{1} << kCoefBits;
  EXPECT_FALSE(abs_session(23, big, abs_witness(big)).accepted);
}

// Many products in one batch; exactly one claimed result is off by one.
TEST(Mul, BatchWithOneWrongProductRejected) {
  std::mt19937_64 rng(30);
  constexpr int kCount = 500;
  std::vector<Fp> a(kCount), b(kCount);
  for (int i = 0; i < kCount; ++i) {
    a[i] = random_fp(rng);
    b[i] = random_fp(rng);
  }
  for (int bad : {-1, 0, 249, kCount - 1}) {
    const auto r = session(31 + static_cast<std::uint64_t>(bad + 1), [&](auto& p, bool prover) {
      p.phase("mul");
      for (int i = 0; i < kCount; ++i) {
        const auto x = p.input(prover ? a[i] : Fp{});
        const auto y = p.input(prover ? b[i] : Fp{});
        const Fp want = a[i] * b[i] + (i == bad ? Fp(1) : Fp{});
        const auto z = p.input(prover ? want : Fp{});
        p.assert_zero(p.mul(x, y) - z);
      }
      p.finish();
    });
    EXPECT_EQ(r.accepted, bad < 0) << bad;
    if (bad >= 0) EXPECT_EQ(r.tag, "mul");
  }
}

TEST(Mul, ConstantsAndAddConstCompose) {
  const auto r = session(40, [](auto& p, bool prover) {
    const auto x = p.input(prover ? Fp(6) : Fp{});
    // 3x + 2 - 20 = 0
    p.assert_zero(p.add_const(Fp(3) * x, Fp(2)) - p.constant(Fp(20)));
    p.finish();
  });
  EXPECT_TRUE(r.accepted) << r.detail;
}

// U and A = Cq U Cq^T as field elements, computed with plain loops.
struct FreivaldsCase {
  Eigen::Index n;
  std::vector<Fp> cq, u, a;
};

FreivaldsCase freivalds_case(std::mt19937_64& rng, Eigen::Index n) {
  FreivaldsCase c{n, field_matrix(dct_cache(n).quantized), {}, {}};
  const auto N = static_cast<std::size_t>(n);
  std::uniform_int_distribution<std::int64_t> d(-(1 << 20), 1 << 20);
  for (std::size_t i = 0; i < N * N; ++i) c.u.push_back(Fp::from_signed(d(rng)));
  std::vector<Fp> t(N * N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t l = 0; l < N; ++l)
      for (std::size_t k = 0; k < N; ++k) t[j * N + l] += c.cq[j * N + k] * c.u[k * N + l];
  c.a.assign(N * N, Fp{});
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t l = 0; l < N; ++l) c.a[j * N + i] += t[j * N + l] * c.cq[i * N + l];
  return c;
}

SessionResult freivalds_session(std::uint64_t seed, const FreivaldsCase& c) {
  return session(seed, [&](auto& p, bool prover) {
    p.phase("dct");
    const std::vector<Fp> zeros(c.u.size());
    const auto u = p.inputs(prover ? c.u : zeros);
    const auto a = p.inputs(prover ? c.a : zeros);
    p.seal();
    const auto r = p.challenge(static_cast<std::size_t>(c.n));
    freivalds_check(p, c.cq, c.n, std::span(u), std::span(a), r);
    p.finish();
  });
}

TEST(Freivalds, HonestAcceptedSingleTamperRejected) {
  std::mt19937_64 rng(50);
  for (Eigen::Index n : {1, 2, 5, 12}) {
    auto c = freivalds_case(rng, n);
    EXPECT_TRUE(freivalds_session(rng(), c).accepted) << n;
    for (int trial = 0; trial < 5; ++trial) {
      auto bad = c;
      bad.a[rng() % bad.a.size()] += Fp(1 + rng() % 1000);
      const auto r = freivalds_session(rng(), bad);
      EXPECT_FALSE(r.accepted) << n;
      EXPECT_EQ(r.tag, "dct");
    }
  }
}

TEST(Comparison, WidthAddsCoefficientCountAndWeightBits) {
  EXPECT_EQ(comparison_bits(6, 100), kCoefBits + 3 + 7);
  EXPECT_EQ(comparison_bits(136, 100), kCoefBits + 8 + 7);
  EXPECT_EQ(comparison_bits(1, 1), kCoefBits + 2);
  EXPECT_THROW(comparison_bits(1 << 20, 1 << 12), ConfigError);
  EXPECT_THROW(comparison_bits(6, 0), ConfigError);
}

TEST(Session, KeysAreDeterministicAndDeltaNonzero) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto k = deal_session(s);
    EXPECT_NE(k.verifier.delta, Fp{});
    EXPECT_EQ(k.verifier.delta, deal_session(s).verifier.delta);
  }
  EXPECT_NE(deal_session(1).id, deal_session(2).id);
}

}  // namespace
}  // namespace zksplit::zk
