#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "zksplit/defense.hpp"
#include "zksplit/trainer.hpp"

namespace zksplit::proto {

enum class DefenseMode { kZksl, kNone, kGold, kMetricAblation };
enum class InitMode { kPretrained, kSecureInit };
enum class Transport { kPipe, kTcp };

/// What a malicious client does on its turn besides training on poisoned data.
enum class Strategy {
  kHonestButPoisoning,
  kForgeBm,
  kForgeRemoval,
  kSubstituteModel,
  kTamperDct,
  kInflateScores,
  kSkipDefense,
  kTamperForward,  // forwards plaintext that differs from what was proven and published
};

Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);
std::string to_string(DefenseMode m);

struct ExperimentConfig {
  int clients = 10;
  int rounds = 20;
  int k = 3;
  std::int64_t beta_num = 7;
  std::int64_t beta_den = 10;
  double pmr = 0.2;
  double pdr = 0.75;
  double iid = 0.8;
  std::uint64_t seed = 1;
  DefenseMode defense = DefenseMode::kZksl;
  ScoreMetric metric = ScoreMetric::kTaxicab;
  InitMode init = InitMode::kPretrained;
  Transport transport = Transport::kPipe;
  std::string dataset = "blobs";  // or a CSV path
  Strategy strategy = Strategy::kHonestButPoisoning;
  // Run the proof sessions. Defense decisions do not depend on it; ablation grids switch it off.
  bool prove = true;

  SplitArch arch;
  Hyper hyper;
  BlobSpec blobs;
  std::size_t train_size = 5000;
  std::size_t test_size = 1000;
  std::size_t setup_size = 500;
  int setup_rounds = 4;  // bootstrap rounds of the pretrained init; at least k are run
  std::uint32_t freivalds_reps = 1;
  int timeout_ms = 30'000;
  bool eval_every_round = true;
  bool check_transcripts = true;  // record publication sessions and replay them plus a simulation

  DefenseParams defense_params() const { return {static_cast<std::size_t>(k), {beta_num, beta_den}}; }
  int malicious_count() const;
  /// Slots published per chain generation: one audit slot plus two per round for k + 1 rounds.
  std::uint32_t slots_per_generation() const { return static_cast<std::uint32_t>(2 * k + 3); }
  bool proving() const { return prove && defense == DefenseMode::kZksl; }

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

/// Applies one key=value pair; unknown keys and bad values throw ConfigError.
void set_option(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Flat key=value text, '#' starts a comment.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in a stable order.
std::map<std::string, std::string> to_map(const ExperimentConfig& cfg);

}  // namespace zksplit::proto
