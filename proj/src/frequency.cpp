#include "zksplit/frequency.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace zksplit {

namespace {

using i128 = __int128;

// Floor division by 2^shift on signed 128-bit values.
i128 floor_shift(i128 x, int shift) { return x >> shift; }

}  // namespace

const DctMatrix& dct_cache(Eigen::Index n, int frac_bits) {
  static std::mutex mu;
  static std::map<std::pair<Eigen::Index, int>, std::unique_ptr<DctMatrix>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{n, frac_bits}];
  if (!slot) {
    auto m = std::make_unique<DctMatrix>();
    m->n = n;
    m->frac_bits = frac_bits;
    m->shadow = dct_matrix<double>(n);
    m->quantized.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) m->quantized(i, j) = fp_encode(m->shadow(i, j), frac_bits).raw;
    }
    slot = std::move(m);
  }
  return *slot;
}

Eigen::Index square_side(std::size_t n) {
  if (n == 0) return 0;
  auto side = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (side * side < n) ++side;
  while (side > 1 && (side - 1) * (side - 1) >= n) --side;
  return static_cast<Eigen::Index>(side);
}

SquareMatrix<double> dct2(const SquareMatrix<double>& m) {
  if (m.rows() != m.cols()) throw ShapeError("dct2 needs a square matrix");
  const auto& c = dct_cache(m.rows()).shadow;
  return c * m * c.transpose();
}

QuantizedDct dct2_quantized(const RawMatrix& m, int frac_bits) {
  if (m.rows() != m.cols()) throw ShapeError("dct2 needs a square matrix");
  const Eigen::Index n = m.rows();
  const auto& cq = dct_cache(n, frac_bits).quantized;

  // t = M Cq^T
  std::vector<i128> t(static_cast<std::size_t>(n * n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      i128 acc = 0;
      for (Eigen::Index l = 0; l < n; ++l) acc += static_cast<i128>(m(i, l)) * cq(j, l);
      t[static_cast<std::size_t>(i * n + j)] = acc;
    }
  }
  const int shift = 2 * frac_bits;
  const i128 half = i128{1} << (shift - 1);
  QuantizedDct out{RawMatrix(n, n), RawMatrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      i128 acc = 0;
      for (Eigen::Index l = 0; l < n; ++l) acc += static_cast<i128>(cq(i, l)) * t[static_cast<std::size_t>(l * n + j)];
      const i128 q = floor_shift(acc + half, shift);
      if (q > INT64_MAX || q < INT64_MIN) throw EncodingOverflow("DCT coefficient exceeds 64 bits");
      out.coeffs(i, j) = static_cast<std::int64_t>(q);
      out.remainder(i, j) = static_cast<std::int64_t>(acc - (q << shift));
    }
  }
  return out;
}

FreqMask FreqMask::low(Eigen::Index n) {
  FreqMask mask;
  mask.n = n;
  const Eigen::Index half = n / 2;
  mask.cells.reserve(cardinality(n));
  for (Eigen::Index v = 0; v < half; ++v) {
    for (Eigen::Index u = 0; u < half - v; ++u) mask.cells.emplace_back(u, v);
  }
  return mask;
}

std::vector<std::int64_t> low_freq_coeffs(const ParamVector& update) {
  const auto d = dct2_quantized(embed_square(update.raw), update.frac_bits).coeffs;
  std::vector<std::int64_t> out;
  for (const auto& [u, v] : FreqMask::low(d.rows()).cells) out.push_back(d(u, v));
  return out;
}

std::int64_t poison_score(const ParamVector& update) {
  std::int64_t s = 0;
  for (auto c : low_freq_coeffs(update)) s += c < 0 ? -c : c;
  return s;
}

double poison_score_float(const Eigen::VectorXd& update) {
  return low_freq_taxicab<double>(dct2(embed_square(update)));
}

ParamVector quantized_dct_params(const ParamVector& update) {
  const auto d = dct2_quantized(embed_square(update.raw), update.frac_bits).coeffs;
  RawVector flat = Eigen::Map<const RawVector>(d.data(), d.size());
  return {std::move(flat), update.frac_bits};
}

}  // namespace zksplit
