#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "zksplit/modelcore.hpp"

namespace zksplit {

template <typename Scalar>
using SquareMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RawMatrix = SquareMatrix<std::int64_t>;

/// Orthonormal DCT-II matrix: C[j,k] = sqrt(alpha_j / N) cos(pi (2k+1) j / (2N)), alpha_0 = 1, alpha_j = 2.
template <typename Scalar = double>
SquareMatrix<Scalar> dct_matrix(Eigen::Index n) {
  SquareMatrix<Scalar> c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar scale = std::sqrt(Scalar(j == 0 ? 1 : 2) / Scalar(n));
    for (Eigen::Index k = 0; k < n; ++k) {
      c(j, k) = scale * std::cos(std::numbers::pi_v<Scalar> * Scalar(2 * k + 1) * Scalar(j) / Scalar(2 * n));
    }
  }
  return c;
}

/// Quantized DCT matrix plus the float shadow it was rounded from. Built once per (N, frac_bits).
struct DctMatrix {
  Eigen::Index n = 0;
  int frac_bits = kDefaultFracBits;
  RawMatrix quantized;
  SquareMatrix<double> shadow;
};

/// Shared read-only instance; thread-safe.
const DctMatrix& dct_cache(Eigen::Index n, int frac_bits = kDefaultFracBits);

/// Side length of the square embedding: ceil(sqrt(n)).
Eigen::Index square_side(std::size_t n);

/// Row-major fill of the flat vector into an N x N matrix, zero padded.
template <typename Derived>
SquareMatrix<typename Derived::Scalar> embed_square(const Eigen::MatrixBase<Derived>& flat) {
  const auto side = square_side(static_cast<std::size_t>(flat.size()));
  SquareMatrix<typename Derived::Scalar> m = SquareMatrix<typename Derived::Scalar>::Zero(side, side);
  for (Eigen::Index i = 0; i < flat.size(); ++i) m(i / side, i % side) = flat(i);
  return m;
}

/// Float two-sided transform C M C^T.
SquareMatrix<double> dct2(const SquareMatrix<double>& m);

/// Exact quantized transform. coeffs = round_half_up(Cq M Cq^T / 2^(2f)) and
/// remainder = Cq M Cq^T - coeffs * 2^(2f), so remainder lies in [-2^(2f-1), 2^(2f-1)).
struct QuantizedDct {
  RawMatrix coeffs;
  RawMatrix remainder;
};

QuantizedDct dct2_quantized(const RawMatrix& m, int frac_bits = kDefaultFracBits);

/// Low-frequency triangle u + v < floor(N/2), listed as (row u, column v) with v outer.
struct FreqMask {
  Eigen::Index n = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;

  static FreqMask low(Eigen::Index n);
  static std::size_t cardinality(Eigen::Index n) {
    const auto h = static_cast<std::size_t>(n / 2);
    return h * (h + 1) / 2;
  }
};

template <typename Scalar>
Scalar low_freq_taxicab(const SquareMatrix<Scalar>& d) {
  Scalar s{0};
  for (const auto& [u, v] : FreqMask::low(d.rows()).cells) s += d(u, v) < 0 ? -d(u, v) : d(u, v);
  return s;
}

/// Low-frequency coefficients of the quantized transform, in mask order.
std::vector<std::int64_t> low_freq_coeffs(const ParamVector& update);

/// Normative score: exact integer in raw units of the quantized pipeline.
std::int64_t poison_score(const ParamVector& update);

/// Float oracle/baseline score.
double poison_score_float(const Eigen::VectorXd& update);

/// The quantized coefficient matrix flattened row-major, hashed as the published DCT digest.
ParamVector quantized_dct_params(const ParamVector& update);

}  // namespace zksplit
