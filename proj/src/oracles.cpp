#include "zksplit/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>

#include "zksplit/field.hpp"

namespace zksplit::oracle {

namespace {

using i128 = __int128;
constexpr std::uint64_t kP = (std::uint64_t{1} << 61) - 1;

double basis(Eigen::Index n, Eigen::Index j, Eigen::Index k) {
  const double a = j == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
  return a * std::cos(std::numbers::pi * static_cast<double>((2 * k + 1) * j) / static_cast<double>(2 * n));
}

}  // namespace

SquareMatrix<double> naive_dct2(const SquareMatrix<double>& m) {
  const auto n = m.rows();
  SquareMatrix<double> out(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index v = 0; v < n; ++v) {
      double s = 0;
      for (Eigen::Index x = 0; x < n; ++x) {
        for (Eigen::Index y = 0; y < n; ++y) s += basis(n, u, x) * basis(n, v, y) * m(x, y);
      }
      out(u, v) = s;
    }
  }
  return out;
}

RawMatrix naive_quantized_matrix(Eigen::Index n, int frac_bits) {
  RawMatrix c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) c(j, k) = std::llround(std::ldexp(basis(n, j, k), frac_bits));
  }
  return c;
}

QuantizedDct naive_quantized_dct(const RawMatrix& u, int frac_bits) {
  const auto n = u.rows();
  const RawMatrix c = naive_quantized_matrix(n, frac_bits);
  const i128 scale = i128{1} << (2 * frac_bits);
  QuantizedDct out{RawMatrix(n, n), RawMatrix(n, n)};
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      i128 acc = 0;
      for (Eigen::Index x = 0; x < n; ++x) {
        for (Eigen::Index y = 0; y < n; ++y) acc += i128{c(a, x)} * u(x, y) * c(b, y);
      }
      // floor((acc + scale/2) / scale) for either sign
      i128 num = acc + scale / 2;
      i128 q = num / scale;
      if (num % scale != 0 && num < 0) --q;
      out.coeffs(a, b) = static_cast<std::int64_t>(q);
      out.remainder(a, b) = static_cast<std::int64_t>(acc - q * scale);
    }
  }
  return out;
}

std::int64_t naive_score(const ParamVector& update) {
  const auto n = square_side(update.size());
  RawMatrix u = RawMatrix::Zero(n, n);
  for (std::size_t i = 0; i < update.size(); ++i) {
    u(static_cast<Eigen::Index>(i) / n, static_cast<Eigen::Index>(i) % n) = update.raw(static_cast<Eigen::Index>(i));
  }
  const auto d = naive_quantized_dct(u, update.frac_bits);
  std::int64_t s = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      if (a + b < n / 2) s += std::abs(d.coeffs(a, b));
    }
  }
  return s;
}

std::uint64_t mod_mul(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % kP);
}
std::uint64_t mod_add(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) + b) % kP);
}
std::uint64_t mod_sub(std::uint64_t a, std::uint64_t b) { return mod_add(a, kP - b % kP); }

std::uint64_t mod_inv(std::uint64_t a) {
  std::uint64_t r = 1, base = a % kP, e = kP - 2;
  while (e) {
    if (e & 1) r = mod_mul(r, base);
    base = mod_mul(base, base);
    e >>= 1;
  }
  return r;
}

Selection naive_select(std::span<const std::int64_t> raw, std::size_t k, Beta beta) {
  // Compare a/b against c/d by cross multiplication; weights are rationals with denominator den.
  struct Q {
    i128 num, den;
  };
  auto weighted = [&](std::size_t t) -> Q {
    if (t == 0) return {i128{raw[t]} * beta.den, beta.num};
    if (t == k) return {i128{raw[t]} * beta.num, beta.den};
    return {raw[t], 1};
  };
  auto less = [](Q a, Q b) { return a.num * b.den < b.num * a.den; };
  Selection s;
  for (std::size_t t = 1; t <= k; ++t) {
    if (less(weighted(s.removed), weighted(t))) s.removed = t;
  }
  bool first = true;
  std::size_t best = 0;
  for (std::size_t t = 0; t <= k; ++t) {
    if (t == s.removed) continue;
    if (first || less(weighted(t), weighted(best))) best = t;
    first = false;
  }
  s.bm = best < s.removed ? best : best - 1;
  return s;
}

namespace {

struct Layer {
  const double* w;  // rows x cols, row-major
  const double* b;
  int rows, cols;
};

std::vector<double> apply(const Layer& l, const std::vector<double>& in, bool squash) {
  std::vector<double> out(static_cast<std::size_t>(l.rows));
  for (int r = 0; r < l.rows; ++r) {
    double z = l.b[r];
    for (int c = 0; c < l.cols; ++c) z += l.w[r * l.cols + c] * in[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = squash ? std::tanh(z) : z;
  }
  return out;
}

}  // namespace

double reference_loss(const SplitArch& arch, const Eigen::VectorXd& client, const Eigen::VectorXd& backbone,
                      const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  const double* cp = client.data();
  const double* bp = backbone.data();
  const Layer l1{cp, cp + arch.h1 * arch.d_in, arch.h1, arch.d_in};
  const double* t4 = cp + arch.h1 * (arch.d_in + 1);
  const Layer l4{t4, t4 + arch.classes * arch.h1, arch.classes, arch.h1};
  const Layer l2{bp, bp + arch.h2 * arch.h1, arch.h2, arch.h1};
  const double* t3 = bp + arch.h2 * (arch.h1 + 1);
  const Layer l3{t3, t3 + arch.h1 * arch.h2, arch.h1, arch.h2};
  double total = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> in(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) in[static_cast<std::size_t>(j)] = x(i, j);
    const auto logits = apply(l4, apply(l3, apply(l2, apply(l1, in, true), true), true), false);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (double z : logits) sum += std::exp(z - mx);
    total += mx + std::log(sum) - logits[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  return total / static_cast<double>(x.rows());
}

NumericGrad numeric_gradient(const SplitArch& arch, const Eigen::VectorXd& client, const Eigen::VectorXd& backbone,
                             const Eigen::MatrixXd& x, const std::vector<int>& labels, double h) {
  NumericGrad g{Eigen::VectorXd(client.size()), Eigen::VectorXd(backbone.size())};
  Eigen::VectorXd c = client, b = backbone;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double keep = c[i];
    c[i] = keep + h;
    const double up = reference_loss(arch, c, b, x, labels);
    c[i] = keep - h;
    const double down = reference_loss(arch, c, b, x, labels);
    c[i] = keep;
    g.client[i] = (up - down) / (2 * h);
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double keep = b[i];
    b[i] = keep + h;
    const double up = reference_loss(arch, c, b, x, labels);
    b[i] = keep - h;
    const double down = reference_loss(arch, c, b, x, labels);
    b[i] = keep;
    g.backbone[i] = (up - down) / (2 * h);
  }
  return g;
}

MonolithicNet MonolithicNet::from(const ClientModel& c, const Backbone& b) {
  return {c.w1, b.w2, b.w3, c.w4, c.b1, b.b2, b.b3, c.b4};
}

void MonolithicNet::step(const Eigen::MatrixXd& x, const std::vector<int>& labels, double lr) {
  using Eigen::MatrixXd;
  const auto n = static_cast<double>(labels.size());
  MatrixXd z1 = x * w1.transpose();
  z1.rowwise() += b1.transpose();
  const MatrixXd a1 = z1.array().tanh().matrix();
  MatrixXd z2 = a1 * w2.transpose();
  z2.rowwise() += b2.transpose();
  const MatrixXd a2 = z2.array().tanh().matrix();
  MatrixXd z3 = a2 * w3.transpose();
  z3.rowwise() += b3.transpose();
  const MatrixXd a3 = z3.array().tanh().matrix();
  MatrixXd p = a3 * w4.transpose();
  p.rowwise() += b4.transpose();

  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp().matrix();
    p.row(i) /= p.row(i).sum();
    p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  p /= n;
  const MatrixXd d_a3 = p * w4;
  const MatrixXd d_z3 = (d_a3.array() * (1.0 - a3.array().square())).matrix();
  const MatrixXd d_z2 = ((d_z3 * w3).array() * (1.0 - a2.array().square())).matrix();
  const MatrixXd d_z1 = ((d_z2 * w2).array() * (1.0 - a1.array().square())).matrix();

  const MatrixXd g4 = p.transpose() * a3;
  const MatrixXd g3 = d_z3.transpose() * a2;
  const MatrixXd g2 = d_z2.transpose() * a1;
  const MatrixXd g1 = d_z1.transpose() * x;
  w4 -= lr * g4;
  b4 -= lr * Eigen::VectorXd(p.colwise().sum().transpose());
  w3 -= lr * g3;
  b3 -= lr * Eigen::VectorXd(d_z3.colwise().sum().transpose());
  w2 -= lr * g2;
  b2 -= lr * Eigen::VectorXd(d_z2.colwise().sum().transpose());
  w1 -= lr * g1;
  b1 -= lr * Eigen::VectorXd(d_z1.colwise().sum().transpose());
}

ParamVector MonolithicNet::train(const Dataset& data, const Hyper& hyper, std::mt19937_64& rng, int frac_bits) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(hyper.batch));
      Eigen::MatrixXd x(static_cast<Eigen::Index>(end - at), data.x.cols());
      std::vector<int> y;
      for (std::size_t i = at; i < end; ++i) {
        x.row(static_cast<Eigen::Index>(i - at)) = data.x.row(static_cast<Eigen::Index>(order[i]));
        y.push_back(data.y[order[i]]);
      }
      step(x, y, hyper.lr);
    }
  }
  Eigen::VectorXd flat(w1.size() + b1.size() + w4.size() + b4.size());
  Eigen::Index at = 0;
  for (const Eigen::MatrixXd* m : {&w1, &w4}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) flat[at++] = (*m)(i, j);
    }
    const Eigen::VectorXd& b = m == &w1 ? b1 : b4;
    for (Eigen::Index i = 0; i < b.size(); ++i) flat[at++] = b[i];
  }
  return ParamVector::quantize(flat, frac_bits);
}

}  // namespace zksplit::oracle
