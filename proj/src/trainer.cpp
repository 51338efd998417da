#include "zksplit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace zksplit {

namespace {

MatrixXd init_weights(int rows, int cols, std::mt19937_64& rng) {
  // Glorot-uniform, suits tanh.
  const double a = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  MatrixXd w(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) w(i, j) = u(rng);
  }
  return w;
}

MatrixXd dense(const MatrixXd& x, const MatrixXd& w, const VectorXd& b) {
  MatrixXd z = x * w.transpose();
  z.rowwise() += b.transpose();
  return z;
}

MatrixXd tanh_of(const MatrixXd& z) { return z.array().tanh().matrix(); }

MatrixXd tanh_grad(const MatrixXd& act, const MatrixXd& upstream) {
  return (upstream.array() * (1.0 - act.array().square())).matrix();
}

// Row-wise softmax with the usual max shift.
MatrixXd softmax(const MatrixXd& logits) {
  MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double cross_entropy(const MatrixXd& logits, const std::vector<int>& labels) {
  double loss = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += lse - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(logits.rows());
}

void put(VectorXd& out, Eigen::Index& at, const MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[at++] = m(i, j);
  }
}

void take(const VectorXd& in, Eigen::Index& at, MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = in[at++];
  }
}

void take(const VectorXd& in, Eigen::Index& at, VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = in[at++];
}

}  // namespace

void SplitArch::validate() const {
  if (d_in < 1 || h1 < 1 || h2 < 1 || classes < 2) throw ConfigError("invalid architecture sizes");
}

ClientModel ClientModel::random(const SplitArch& arch, std::mt19937_64& rng) {
  ClientModel m;
  m.w1 = init_weights(arch.h1, arch.d_in, rng);
  m.b1 = VectorXd::Zero(arch.h1);
  m.w4 = init_weights(arch.classes, arch.h1, rng);
  m.b4 = VectorXd::Zero(arch.classes);
  return m;
}

ClientModel ClientModel::from_params(const SplitArch& arch, const ParamVector& pv) {
  if (pv.size() != arch.client_params()) throw ShapeError("client parameter count does not match architecture");
  const VectorXd flat = pv.dequantize();
  ClientModel m;
  m.w1.resize(arch.h1, arch.d_in);
  m.b1.resize(arch.h1);
  m.w4.resize(arch.classes, arch.h1);
  m.b4.resize(arch.classes);
  Eigen::Index at = 0;
  take(flat, at, m.w1);
  take(flat, at, m.b1);
  take(flat, at, m.w4);
  take(flat, at, m.b4);
  return m;
}

VectorXd ClientModel::flatten() const {
  VectorXd out(w1.size() + b1.size() + w4.size() + b4.size());
  Eigen::Index at = 0;
  put(out, at, w1);
  put(out, at, b1);
  put(out, at, w4);
  put(out, at, b4);
  return out;
}

Backbone Backbone::random(const SplitArch& arch, std::mt19937_64& rng) {
  Backbone b;
  b.w2 = init_weights(arch.h2, arch.h1, rng);
  b.b2 = VectorXd::Zero(arch.h2);
  b.w3 = init_weights(arch.h1, arch.h2, rng);
  b.b3 = VectorXd::Zero(arch.h1);
  return b;
}

VectorXd Backbone::flatten() const {
  VectorXd out(w2.size() + b2.size() + w3.size() + b3.size());
  Eigen::Index at = 0;
  put(out, at, w2);
  put(out, at, b2);
  put(out, at, w3);
  put(out, at, b3);
  return out;
}

Backbone Backbone::unflatten(const SplitArch& arch, const VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != arch.backbone_params()) throw ShapeError("backbone size mismatch");
  Backbone b;
  b.w2.resize(arch.h2, arch.h1);
  b.b2.resize(arch.h2);
  b.w3.resize(arch.h1, arch.h2);
  b.b3.resize(arch.h1);
  Eigen::Index at = 0;
  take(flat, at, b.w2);
  take(flat, at, b.b2);
  take(flat, at, b.w3);
  take(flat, at, b.b3);
  return b;
}

MatrixXd head_forward(const ClientModel& m, const MatrixXd& x) {
  if (x.cols() != m.w1.cols()) throw ShapeError("input width does not match head");
  return tanh_of(dense(x, m.w1, m.b1));
}

BackboneActivations backbone_forward(const Backbone& b, const MatrixXd& a1) {
  if (a1.cols() != b.w2.cols()) throw ShapeError("smashed data width does not match backbone");
  BackboneActivations act;
  act.a2 = tanh_of(dense(a1, b.w2, b.b2));
  act.a3 = tanh_of(dense(act.a2, b.w3, b.b3));
  return act;
}

MatrixXd tail_logits(const ClientModel& m, const MatrixXd& a3) {
  if (a3.cols() != m.w4.cols()) throw ShapeError("backbone output width does not match tail");
  return dense(a3, m.w4, m.b4);
}

TailStep tail_step(const ClientModel& m, const MatrixXd& a3, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(a3.rows()) != labels.size()) throw ShapeError("label count mismatch");
  const MatrixXd logits = tail_logits(m, a3);
  TailStep out;
  out.loss = cross_entropy(logits, labels);
  MatrixXd d_logits = softmax(logits);
  for (std::size_t i = 0; i < labels.size(); ++i) d_logits(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  d_logits /= static_cast<double>(labels.size());
  out.grad_w4 = d_logits.transpose() * a3;
  out.grad_b4 = d_logits.colwise().sum().transpose();
  out.d_a3 = d_logits * m.w4;
  return out;
}

BackboneGrads backbone_backward(const Backbone& b, const MatrixXd& a1, const BackboneActivations& act,
                                const MatrixXd& d_a3) {
  if (d_a3.rows() != act.a3.rows() || d_a3.cols() != act.a3.cols()) throw ShapeError("gradient shape mismatch");
  BackboneGrads g;
  const MatrixXd d_z3 = tanh_grad(act.a3, d_a3);
  g.grad_w3 = d_z3.transpose() * act.a2;
  g.grad_b3 = d_z3.colwise().sum().transpose();
  const MatrixXd d_z2 = tanh_grad(act.a2, d_z3 * b.w3);
  g.grad_w2 = d_z2.transpose() * a1;
  g.grad_b2 = d_z2.colwise().sum().transpose();
  g.d_a1 = d_z2 * b.w2;
  return g;
}

HeadGrads head_backward(const MatrixXd& x, const MatrixXd& a1, const MatrixXd& d_a1) {
  if (d_a1.rows() != a1.rows() || d_a1.cols() != a1.cols()) throw ShapeError("gradient shape mismatch");
  const MatrixXd d_z1 = tanh_grad(a1, d_a1);
  return {d_z1.transpose() * x, d_z1.colwise().sum().transpose()};
}

double full_loss(const ClientModel& m, const Backbone& b, const MatrixXd& x, const std::vector<int>& labels) {
  return cross_entropy(tail_logits(m, backbone_forward(b, head_forward(m, x)).a3), labels);
}

MatrixXd LocalBackbone::forward(const MatrixXd& a1) {
  a1_ = a1;
  act_ = backbone_forward(backbone_, a1);
  return act_.a3;
}

MatrixXd LocalBackbone::backward(const MatrixXd& d_a3) {
  auto g = backbone_backward(backbone_, a1_, act_, d_a3);
  backbone_.w2 -= lr_ * g.grad_w2;
  backbone_.b2 -= lr_ * g.grad_b2;
  backbone_.w3 -= lr_ * g.grad_w3;
  backbone_.b3 -= lr_ * g.grad_b3;
  return std::move(g.d_a1);
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

Dataset make_blobs(const SplitArch& arch, std::size_t count, std::uint64_t task_seed, std::uint64_t sample_seed,
                   const BlobSpec& spec) {
  std::mt19937_64 task_rng(task_seed);
  std::uniform_real_distribution<double> center(spec.center_lo, spec.center_hi);
  MatrixXd centers(arch.classes, arch.d_in);
  for (int c = 0; c < arch.classes; ++c) {
    for (int j = 0; j < arch.d_in; ++j) centers(c, j) = center(task_rng);
  }
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> noise(0.0, spec.noise);
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(count), arch.d_in);
  d.y.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(arch.classes));
    d.y[i] = label;
    for (int j = 0; j < arch.d_in; ++j) {
      d.x(static_cast<Eigen::Index>(i), j) = std::clamp(centers(label, j) + noise(rng), 0.0, 1.0);
    }
  }
  return d;
}

Dataset load_csv(const std::filesystem::path& path, int d_in) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("empty CSV: " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw ConfigError("CSV has no label column");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());
  if (header.size() != static_cast<std::size_t>(d_in) + 1) throw ShapeError("CSV feature count does not match d_in");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col == label_col) {
        labels.push_back(std::stoi(cell));
      } else {
        row.push_back(std::stod(cell));
      }
      ++col;
    }
    if (col != header.size()) throw ShapeError("ragged CSV row");
    rows.push_back(std::move(row));
  }
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(rows.size()), d_in);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d_in; ++j) d.x(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  d.y = std::move(labels);
  return d;
}

std::vector<DataShard> partition_dataset(const Dataset& global, int clients, double iid_degree, std::uint64_t seed) {
  if (clients < 1) throw ConfigError("need at least one client");
  if (iid_degree < 0 || iid_degree > 1) throw ConfigError("iid degree must lie in [0, 1]");
  if (global.size() == 0) throw ConfigError("empty dataset");
  std::mt19937_64 rng(seed);
  const int classes = *std::max_element(global.y.begin(), global.y.end()) + 1;
  std::vector<std::vector<std::size_t>> by_label(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < global.size(); ++i) by_label[static_cast<std::size_t>(global.y[i])].push_back(i);

  std::vector<DataShard> shards;
  const std::size_t base = global.size() / static_cast<std::size_t>(clients);
  const std::size_t extra = global.size() % static_cast<std::size_t>(clients);
  std::uniform_int_distribution<int> pick_label(0, classes - 1);
  for (int c = 0; c < clients; ++c) {
    const std::size_t size = base + (static_cast<std::size_t>(c) < extra ? 1 : 0);
    int main_label = pick_label(rng);
    while (by_label[static_cast<std::size_t>(main_label)].empty()) main_label = (main_label + 1) % classes;
    const auto n_iid = static_cast<std::size_t>(std::llround(iid_degree * static_cast<double>(size)));

    std::vector<std::size_t> pool(global.size());
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::size_t> rows(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(n_iid, pool.size())));
    auto main = by_label[static_cast<std::size_t>(main_label)];
    std::shuffle(main.begin(), main.end(), rng);
    for (std::size_t i = 0; rows.size() < size; ++i) rows.push_back(main[i % main.size()]);

    shards.push_back({global.subset(rows), c, iid_degree, main_label});
  }
  return shards;
}

void PoisonSpec::validate() const {
  if (pdr < 0 || pdr > 1) throw ConfigError("pdr must lie in [0, 1]");
  if (trigger_features.empty()) throw ConfigError("empty trigger");
}

void apply_trigger(MatrixXd& x, std::size_t row, const PoisonSpec& spec) {
  for (int f : spec.trigger_features) x(static_cast<Eigen::Index>(row), f) = spec.trigger_value;
}

Dataset poison_dataset(const Dataset& d, const PoisonSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  Dataset out = d;
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(spec.pdr * static_cast<double>(d.size())));
  for (std::size_t i = 0; i < n; ++i) {
    apply_trigger(out.x, rows[i], spec);
    out.y[rows[i]] = spec.target_label;
  }
  return out;
}

ParamVector train_round(const SplitArch& arch, const ParamVector& start, SplitPeer& peer, const Dataset& data,
                        const Hyper& hyper, std::mt19937_64& rng) {
  if (hyper.epochs <= 0 || data.size() == 0) return start;
  if (hyper.batch < 1) throw ConfigError("batch size must be positive");
  ClientModel m = ClientModel::from_params(arch, start);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(hyper.batch));
      const Dataset batch = data.subset({order.begin() + static_cast<std::ptrdiff_t>(at),
                                         order.begin() + static_cast<std::ptrdiff_t>(end)});
      const MatrixXd a1 = head_forward(m, batch.x);
      const MatrixXd a3 = peer.forward(a1);
      TailStep tail = tail_step(m, a3, batch.y);
      if (!std::isfinite(tail.loss) || tail.loss > 1e6) throw TrainingDiverged("loss diverged");
      const MatrixXd d_a1 = peer.backward(tail.d_a3);
      const HeadGrads head = head_backward(batch.x, a1, d_a1);
      m.w4 -= hyper.lr * tail.grad_w4;
      m.b4 -= hyper.lr * tail.grad_b4;
      m.w1 -= hyper.lr * head.grad_w1;
      m.b1 -= hyper.lr * head.grad_b1;
    }
  }
  const VectorXd flat = m.flatten();
  if (!flat.allFinite() || flat.cwiseAbs().maxCoeff() > 1e4) throw TrainingDiverged("parameters diverged");
  return ParamVector::quantize(flat, start.frac_bits);
}

double evaluate(const ClientModel& m, const Backbone& b, const Dataset& test, const std::optional<PoisonSpec>& trigger) {
  if (test.size() == 0) throw ConfigError("empty test set");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!trigger || test.y[i] != trigger->target_label) rows.push_back(i);
  }
  if (rows.empty()) throw ConfigError("no evaluable samples");
  Dataset d = test.subset(rows);
  if (trigger) {
    for (std::size_t i = 0; i < d.size(); ++i) apply_trigger(d.x, i, *trigger);
  }
  const MatrixXd logits = tail_logits(m, backbone_forward(b, head_forward(m, d.x)).a3);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    const int want = trigger ? trigger->target_label : d.y[static_cast<std::size_t>(i)];
    if (arg == want) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

}  // namespace zksplit
