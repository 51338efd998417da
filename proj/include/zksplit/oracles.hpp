#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "zksplit/defense.hpp"
#include "zksplit/frequency.hpp"
#include "zksplit/trainer.hpp"

// Slow reference implementations written without the production code paths.
namespace zksplit::oracle {

/// Double-sum DCT-II, orthonormal scaling.
SquareMatrix<double> naive_dct2(const SquareMatrix<double>& m);

/// llround(C[j,k] * 2^frac_bits) from the cosine formula.
RawMatrix naive_quantized_matrix(Eigen::Index n, int frac_bits);

/// Quadruple loop in 128-bit integers, round half up on the 2^(2f) rescale.
QuantizedDct naive_quantized_dct(const RawMatrix& u, int frac_bits);

/// Taxicab norm of quantized coefficients with u + v < floor(N/2), found by scanning every cell.
std::int64_t naive_score(const ParamVector& update);

std::uint64_t mod_mul(std::uint64_t a, std::uint64_t b);
std::uint64_t mod_add(std::uint64_t a, std::uint64_t b);
std::uint64_t mod_sub(std::uint64_t a, std::uint64_t b);
/// Fermat inverse by repeated squaring.
std::uint64_t mod_inv(std::uint64_t a);

struct Selection {
  std::size_t removed = 0;
  std::size_t bm = 0;
};

/// Exact rational weighting (S[0]/beta, S[k]*beta), first argmax removed, first argmin kept as BM.
Selection naive_select(std::span<const std::int64_t> raw, std::size_t k, Beta beta);

/// Mean cross-entropy of the unsplit network, scalar loops over flat client and backbone parameters.
double reference_loss(const SplitArch& arch, const Eigen::VectorXd& client, const Eigen::VectorXd& backbone,
                      const Eigen::MatrixXd& x, const std::vector<int>& labels);

/// Central differences of reference_loss over every parameter.
struct NumericGrad {
  Eigen::VectorXd client;
  Eigen::VectorXd backbone;
};
NumericGrad numeric_gradient(const SplitArch& arch, const Eigen::VectorXd& client, const Eigen::VectorXd& backbone,
                             const Eigen::MatrixXd& x, const std::vector<int>& labels, double h = 1e-6);

/// Unsplit network: forward, backward and SGD update for one batch in a single function.
struct MonolithicNet {
  Eigen::MatrixXd w1, w2, w3, w4;
  Eigen::VectorXd b1, b2, b3, b4;

  static MonolithicNet from(const ClientModel& c, const Backbone& b);
  void step(const Eigen::MatrixXd& x, const std::vector<int>& labels, double lr);
  /// Same sample order as the split trainer for a given rng state; returns quantized client params.
  ParamVector train(const Dataset& data, const Hyper& hyper, std::mt19937_64& rng, int frac_bits);
};

}  // namespace zksplit::oracle
