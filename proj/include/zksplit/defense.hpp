#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zksplit/modelcore.hpp"

namespace zksplit {

/// Score adjustment parameter as an exact rational num/den in (0, 1].
struct Beta {
  std::int64_t num = 7;
  std::int64_t den = 10;
};

struct DefenseParams {
  std::size_t k = 3;
  Beta beta;

  void validate() const;

  /// Integer weight applied to position t of the k+1 list: den^2 for the oldest, num^2 for the
  /// newest and num*den in between. Equivalent to S[0]/beta and S[k]*beta after scaling by den^2.
  std::int64_t weight(std::size_t t) const;
};

struct DefenseOutcome {
  std::size_t removed_index = 0;  // position in the k+1 temporary list
  std::size_t bm_index = 0;       // position in the pruned k list
  std::vector<double> raw_scores;
  std::vector<double> adjusted_scores;
};

enum class ScoreMetric { kTaxicab, kL2, kCosine };

ScoreMetric parse_metric(const std::string& name);
std::string to_string(ScoreMetric m);

/// Weighting, argmax removal and argmin best-model selection over k+1 raw scores.
/// Ties go to the lowest index.
DefenseOutcome select_from_scores(std::span<const double> raw_scores, const DefenseParams& params);

/// Integer variant used by the taxicab path; identical decisions, no rounding anywhere.
DefenseOutcome select_from_scores(std::span<const std::int64_t> raw_scores, const DefenseParams& params);

/// Pruned queue: drop `removed_index` from queue + new_ckpt, point at `bm_index`.
QueueState apply_outcome(const QueueState& queue, const Checkpoint& new_ckpt, const DefenseOutcome& outcome);

/// Scores the k+1 updates with the given metric.
std::vector<double> score_updates(std::span<const ParamVector* const> updates, ScoreMetric metric);

/// Poison detection over the queue plus the new checkpoint.
std::pair<QueueState, DefenseOutcome> detect_poisoned(const QueueState& queue, const Checkpoint& new_ckpt,
                                                      const DefenseParams& params,
                                                      ScoreMetric metric = ScoreMetric::kTaxicab);

/// Oracle baseline: drops the newest poisoned checkpoint if any, else the oldest, and points at the
/// newest benign one.
std::pair<QueueState, DefenseOutcome> gold_standard(const QueueState& queue, const Checkpoint& new_ckpt);

/// Undefended baseline: always continue from the newest model.
std::pair<QueueState, DefenseOutcome> no_defense(const QueueState& queue, const Checkpoint& new_ckpt);

/// Secure-initialization selection over N candidate checkpoints trained from a common start.
/// Keeps the k lowest-score candidates in round order; BM is the global argmin.
QueueState select_initial_queue(std::vector<Checkpoint> candidates, std::size_t k);

}  // namespace zksplit
