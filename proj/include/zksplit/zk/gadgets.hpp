#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "zksplit/frequency.hpp"
#include "zksplit/zk/party.hpp"

namespace zksplit::zk {

/// Bits of |coefficient| proven per masked cell. Since 2^-32 = 2^29 mod p, any non-canonical split of
/// a Freivalds-consistent coefficient moves it by at least 2^29, outside this range.
inline constexpr int kCoefBits = 28;
/// Width of the rescale remainder E + 2^31.
inline constexpr int kRemainderBits = 32;

inline Fp pow2(int e) { return Fp(2).pow(static_cast<std::uint64_t>(e)); }

/// Proves 0 <= x < 2^bits by committed bit decomposition.
template <class P>
void assert_range(P& p, typename P::Wire x, int bits) {
  using W = typename P::Wire;
  const std::uint64_t v = p.value(x).value();
  W sum{};
  Fp pw(1);
  for (int i = 0; i < bits; ++i) {
    const W b = p.input(Fp((v >> i) & 1));
    p.assert_bit(b);
    sum = sum + pw * b;
    pw += pw;
  }
  p.assert_zero(sum - x);
}

/// Absolute-value witness for the signed embedding: a = |x|, s = 1 iff x is negative.
struct AbsWitness {
  Fp a;
  Fp s;
};

inline AbsWitness abs_witness(std::int64_t x) {
  return {Fp::from_signed(x < 0 ? -x : x), Fp(x < 0 ? 1 : 0)};
}

/// s in {0,1}, a = (1 - 2s) x, 0 <= a < 2^bits.
template <class P>
void assert_abs(P& p, typename P::Wire x, typename P::Wire a, typename P::Wire s, int bits = kCoefBits) {
  p.assert_bit(s);
  const auto t = p.mul(s, x);
  p.assert_zero(a - x + Fp(2) * t);
  assert_range(p, a, bits);
}

/// Cq as field constants, row-major.
std::vector<Fp> field_matrix(const RawMatrix& m);

/// Checks A r = Cq (U (Cq^T r)) for committed N x N matrices U and A (row-major), public Cq and r.
template <class P>
void freivalds_check(P& p, std::span<const Fp> cq, Eigen::Index n, std::span<const typename P::Wire> u,
                     std::span<const typename P::Wire> a, std::span<const Fp> r) {
  using W = typename P::Wire;
  const auto N = static_cast<std::size_t>(n);
  std::vector<Fp> v1(N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) v1[j] += cq[i * N + j] * r[i];
  }
  std::vector<W> v2(N);
  for (std::size_t i = 0; i < N; ++i) v2[i] = lincomb<W>(u.subspan(i * N, N), v1);
  for (std::size_t i = 0; i < N; ++i) {
    const W z = lincomb<W>(v2, cq.subspan(i * N, N));
    const W lhs = lincomb<W>(a.subspan(i * N, N), r);
    p.assert_zero(lhs - z);
  }
}

/// Comparison width for weighted scores: masked count, coefficient bound and largest weight.
int comparison_bits(std::size_t mask_cells, std::int64_t max_weight);

}  // namespace zksplit::zk
