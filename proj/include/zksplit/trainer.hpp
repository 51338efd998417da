#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "zksplit/modelcore.hpp"

namespace zksplit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Head d_in -> h1 (tanh), backbone h1 -> h2 -> h1 (tanh, tanh), tail h1 -> classes (softmax).
struct SplitArch {
  int d_in = 64;
  int h1 = 32;
  int h2 = 64;
  int classes = 10;

  std::size_t client_params() const { return std::size_t(h1) * (d_in + 1) + std::size_t(classes) * (h1 + 1); }
  std::size_t backbone_params() const { return std::size_t(h2) * (h1 + 1) + std::size_t(h1) * (h2 + 1); }
  void validate() const;
};

/// Client-side partition: head (w1, b1) and tail (w4, b4). Flattened as w1 row-major, b1, w4 row-major, b4.
struct ClientModel {
  MatrixXd w1;
  VectorXd b1;
  MatrixXd w4;
  VectorXd b4;

  static ClientModel random(const SplitArch& arch, std::mt19937_64& rng);
  static ClientModel from_params(const SplitArch& arch, const ParamVector& pv);
  VectorXd flatten() const;
  ParamVector quantize(int frac_bits = kDefaultFracBits) const { return ParamVector::quantize(flatten(), frac_bits); }
};

/// Server-side partition.
struct Backbone {
  MatrixXd w2;
  VectorXd b2;
  MatrixXd w3;
  VectorXd b3;

  static Backbone random(const SplitArch& arch, std::mt19937_64& rng);
  VectorXd flatten() const;
  static Backbone unflatten(const SplitArch& arch, const VectorXd& flat);
};

// ---------------------------------------------------------------------------
// Partition-local passes. Rows are samples.

struct BackboneActivations {
  MatrixXd a2;
  MatrixXd a3;
};

struct TailStep {
  double loss = 0;
  MatrixXd grad_w4;
  VectorXd grad_b4;
  MatrixXd d_a3;  // sent back to the server
};

struct BackboneGrads {
  MatrixXd grad_w2;
  VectorXd grad_b2;
  MatrixXd grad_w3;
  VectorXd grad_b3;
  MatrixXd d_a1;  // sent back to the client
};

struct HeadGrads {
  MatrixXd grad_w1;
  VectorXd grad_b1;
};

MatrixXd head_forward(const ClientModel& m, const MatrixXd& x);
BackboneActivations backbone_forward(const Backbone& b, const MatrixXd& a1);
MatrixXd tail_logits(const ClientModel& m, const MatrixXd& a3);
TailStep tail_step(const ClientModel& m, const MatrixXd& a3, const std::vector<int>& labels);
BackboneGrads backbone_backward(const Backbone& b, const MatrixXd& a1, const BackboneActivations& act, const MatrixXd& d_a3);
HeadGrads head_backward(const MatrixXd& x, const MatrixXd& a1, const MatrixXd& d_a1);

/// Mean softmax cross-entropy of the unsplit network.
double full_loss(const ClientModel& m, const Backbone& b, const MatrixXd& x, const std::vector<int>& labels);

/// Server half of the split exchange as seen by the client.
class SplitPeer {
 public:
  virtual ~SplitPeer() = default;
  virtual MatrixXd forward(const MatrixXd& a1) = 0;
  virtual MatrixXd backward(const MatrixXd& d_a3) = 0;
};

/// In-process backbone trainer: caches activations between forward and backward and applies SGD.
class LocalBackbone : public SplitPeer {
 public:
  LocalBackbone(Backbone b, double lr) : backbone_(std::move(b)), lr_(lr) {}
  MatrixXd forward(const MatrixXd& a1) override;
  MatrixXd backward(const MatrixXd& d_a3) override;
  const Backbone& backbone() const { return backbone_; }

 private:
  Backbone backbone_;
  double lr_;
  MatrixXd a1_;
  BackboneActivations act_;
};

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  MatrixXd x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct BlobSpec {
  double center_lo = 0.05;
  double center_hi = 0.5;
  double noise = 0.25;
};

/// Seeded Gaussian-blob classification task, features clipped to [0, 1]. Class centers depend only on
/// `task_seed`, so train and test sets drawn with different `sample_seed` share one distribution.
Dataset make_blobs(const SplitArch& arch, std::size_t count, std::uint64_t task_seed, std::uint64_t sample_seed,
                   const BlobSpec& spec = {});

/// CSV with a header row, d_in float feature columns and an integer column named "label".
Dataset load_csv(const std::filesystem::path& path, int d_in);

struct DataShard {
  Dataset data;
  int owner = 0;
  double iid_degree = 1.0;
  int main_label = 0;
};

/// Each shard takes round(iid * size) samples from the whole pool and the rest from its main label.
std::vector<DataShard> partition_dataset(const Dataset& global, int clients, double iid_degree, std::uint64_t seed);

struct PoisonSpec {
  std::vector<int> trigger_features{0, 1, 2, 3};
  double trigger_value = 1.0;
  int target_label = 0;
  double pdr = 0.75;

  void validate() const;
};

void apply_trigger(MatrixXd& x, std::size_t row, const PoisonSpec& spec);

/// Triggers and relabels round(pdr * size) randomly chosen samples.
Dataset poison_dataset(const Dataset& d, const PoisonSpec& spec, std::mt19937_64& rng);

// ---------------------------------------------------------------------------

struct Hyper {
  double lr = 0.05;
  int epochs = 3;
  int batch = 32;
};

/// Local SGD through the split exchange, starting from `start`. The peer owns the backbone.
ParamVector train_round(const SplitArch& arch, const ParamVector& start, SplitPeer& peer, const Dataset& data,
                        const Hyper& hyper, std::mt19937_64& rng);

/// MA when `trigger` is empty; otherwise BA over the triggered non-target samples.
double evaluate(const ClientModel& m, const Backbone& b, const Dataset& test, const std::optional<PoisonSpec>& trigger);

}  // namespace zksplit
