#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "zksplit/frequency.hpp"
#include "zksplit/oracles.hpp"

namespace zksplit {
namespace {

RawMatrix random_raw(std::mt19937_64& rng, Eigen::Index n, std::int64_t bound) {
  std::uniform_int_distribution<std::int64_t> d(-bound, bound);
  RawMatrix m(n, n);
  for (auto& x : m.reshaped()) x = d(rng);
  return m;
}

TEST(Dct, MatrixFormMatchesDoubleSum) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (Eigen::Index n = 1; n <= 20; ++n) {
    SquareMatrix<double> m(n, n);
    for (auto& x : m.reshaped()) x = u(rng);
    EXPECT_LE((dct2(m) - oracle::naive_dct2(m)).cwiseAbs().maxCoeff(), 1e-9) << "N=" << n;
  }
}

TEST(Dct, BasisIsOrthonormal) {
  for (Eigen::Index n : {2, 5, 16, 33}) {
    const auto c = dct_matrix(n);
    EXPECT_LE((c * c.transpose() - SquareMatrix<double>::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Dct, QuantizedMatrixMatchesCosineFormula) {
  for (Eigen::Index n : {2, 7, 32, 50}) {
    EXPECT_EQ(dct_cache(n).quantized, oracle::naive_quantized_matrix(n, kDefaultFracBits)) << n;
  }
}

TEST(Dct, QuantizedTransformMatchesWideLoop) {
  std::mt19937_64 rng(2);
  for (Eigen::Index n = 1; n <= 14; ++n) {
    const auto u = random_raw(rng, n, std::int64_t{1} << 30);
    const auto a = dct2_quantized(u);
    const auto b = oracle::naive_quantized_dct(u, kDefaultFracBits);
    ASSERT_EQ(a.coeffs, b.coeffs) << n;
    ASSERT_EQ(a.remainder, b.remainder) << n;
    // Remainder lies in [-2^31, 2^31).
    ASSERT_GE(a.remainder.minCoeff(), -(std::int64_t{1} << 31));
    ASSERT_LT(a.remainder.maxCoeff(), std::int64_t{1} << 31);
  }
}

TEST(Dct, QuantizedIsCloseToFloat) {
  std::mt19937_64 rng(3);
  const auto u = random_raw(rng, 12, 1 << 16);
  const auto q = dct2_quantized(u);
  const SquareMatrix<double> f = dct2(u.cast<double>());
  // Each matrix entry is off by at most half a unit, |C| <= 1, plus final rounding.
  const double unit = std::ldexp(1.0, -kDefaultFracBits);
  const double bound = u.cast<double>().cwiseAbs().sum() * (unit + unit * unit / 4) + 0.5;
  EXPECT_LE((q.coeffs.cast<double>() - f).cwiseAbs().maxCoeff(), bound);
}

TEST(Dct, QuantizedIsDeterministic) {
  std::mt19937_64 rng(4);
  const auto u = random_raw(rng, 25, 1 << 20);
  const auto a = dct2_quantized(u), b = dct2_quantized(u);
  EXPECT_EQ(a.coeffs, b.coeffs);
  EXPECT_EQ(a.remainder, b.remainder);
}

TEST(Mask, CellsAreTheLowTriangle) {
  for (Eigen::Index n = 1; n <= 40; ++n) {
    const auto mask = FreqMask::low(n);
    std::size_t brute = 0;
    for (Eigen::Index u = 0; u < n; ++u) {
      for (Eigen::Index v = 0; v < n; ++v) brute += (u + v < n / 2) ? 1 : 0;
    }
    ASSERT_EQ(mask.cells.size(), brute);
    ASSERT_EQ(FreqMask::cardinality(n), brute);
    for (const auto& [u, v] : mask.cells) ASSERT_LT(u + v, n / 2);
  }
}

TEST(Embed, RowMajorZeroPadded) {
  Eigen::VectorXd v(5);
  v << 1, 2, 3, 4, 5;
  const auto m = embed_square(v);
  ASSERT_EQ(m.rows(), 3);
  EXPECT_EQ(m(0, 2), 3);
  EXPECT_EQ(m(1, 1), 5);
  EXPECT_EQ(m(2, 2), 0);
  EXPECT_EQ(square_side(16), 4);
  EXPECT_EQ(square_side(17), 5);
}

TEST(Score, MatchesScanningOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 0.05);
  for (std::size_t n : {4u, 30u, 100u, 500u}) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = g(rng);
    const auto pv = ParamVector::quantize(v);
    EXPECT_EQ(poison_score(pv), oracle::naive_score(pv)) << n;
    std::int64_t sum = 0;
    for (auto c : low_freq_coeffs(pv)) sum += std::abs(c);
    EXPECT_EQ(sum, poison_score(pv));
  }
}

TEST(Score, FloatTracksQuantized) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 0.05);
  Eigen::VectorXd v(400);
  for (auto& x : v) x = g(rng);
  const double exact = static_cast<double>(poison_score(ParamVector::quantize(v))) / 65536.0;
  EXPECT_NEAR(poison_score_float(v), exact, 1e-3 * exact + 1e-3);
}

}  // namespace
}  // namespace zksplit
