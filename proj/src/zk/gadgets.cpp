#include "zksplit/zk/gadgets.hpp"

namespace zksplit::zk {

std::vector<Fp> field_matrix(const RawMatrix& m) {
  std::vector<Fp> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(Fp::from_signed(m(i, j)));
  }
  return out;
}

int comparison_bits(std::size_t mask_cells, std::int64_t max_weight) {
  if (max_weight <= 0) throw ConfigError("comparison weight must be positive");
  const int bits = kCoefBits + static_cast<int>(std::bit_width(mask_cells)) +
                   static_cast<int>(std::bit_width(static_cast<std::uint64_t>(max_weight)));
  // Differences of values below 2^60 cannot wrap past p into the accepted range.
  if (bits > 60) throw ConfigError("weighted scores too wide for the field: " + std::to_string(bits) + " bits");
  return bits;
}

}  // namespace zksplit::zk
