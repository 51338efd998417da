#include "zksplit/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zksplit/frequency.hpp"

namespace zksplit {

void DefenseParams::validate() const {
  if (k < 1) throw ConfigError("queue length k must be >= 1");
  if (beta.num <= 0 || beta.den <= 0 || beta.num > beta.den) throw ConfigError("beta must lie in (0, 1]");
}

std::int64_t DefenseParams::weight(std::size_t t) const {
  if (t == 0) return beta.den * beta.den;
  if (t == k) return beta.num * beta.num;
  return beta.num * beta.den;
}

ScoreMetric parse_metric(const std::string& name) {
  if (name == "taxicab") return ScoreMetric::kTaxicab;
  if (name == "l2") return ScoreMetric::kL2;
  if (name == "cosine") return ScoreMetric::kCosine;
  throw ConfigError("unknown metric: " + name);
}

std::string to_string(ScoreMetric m) {
  switch (m) {
    case ScoreMetric::kTaxicab: return "taxicab";
    case ScoreMetric::kL2: return "l2";
    case ScoreMetric::kCosine: return "cosine";
  }
  return "?";
}

namespace {

template <typename Score>
DefenseOutcome select_impl(std::span<const Score> raw, const DefenseParams& params) {
  params.validate();
  if (raw.size() != params.k + 1) throw ProtocolStateError("expected k+1 scores");
  std::vector<Score> adjusted(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) adjusted[t] = raw[t] * static_cast<Score>(params.weight(t));

  DefenseOutcome out;
  // max_element / min_element return the first extremum, i.e. the lowest index on ties.
  out.removed_index = static_cast<std::size_t>(std::max_element(adjusted.begin(), adjusted.end()) - adjusted.begin());
  std::size_t best = adjusted.size();
  for (std::size_t t = 0; t < adjusted.size(); ++t) {
    if (t == out.removed_index) continue;
    if (best == adjusted.size() || adjusted[t] < adjusted[best]) best = t;
  }
  out.bm_index = best > out.removed_index ? best - 1 : best;
  out.raw_scores.assign(raw.begin(), raw.end());
  out.adjusted_scores.assign(adjusted.begin(), adjusted.end());
  return out;
}

Eigen::VectorXd low_freq_float(const ParamVector& update) {
  const auto d = dct2(embed_square(update.dequantize()));
  const auto mask = FreqMask::low(d.rows());
  Eigen::VectorXd out(static_cast<Eigen::Index>(mask.cells.size()));
  for (std::size_t i = 0; i < mask.cells.size(); ++i) out[static_cast<Eigen::Index>(i)] = d(mask.cells[i].first, mask.cells[i].second);
  return out;
}

}  // namespace

DefenseOutcome select_from_scores(std::span<const double> raw_scores, const DefenseParams& params) {
  return select_impl(raw_scores, params);
}

DefenseOutcome select_from_scores(std::span<const std::int64_t> raw_scores, const DefenseParams& params) {
  return select_impl(raw_scores, params);
}

QueueState apply_outcome(const QueueState& queue, const Checkpoint& new_ckpt, const DefenseOutcome& outcome) {
  QueueState next;
  next.checkpoints.reserve(queue.size());
  for (std::size_t t = 0; t <= queue.size(); ++t) {
    if (t == outcome.removed_index) continue;
    next.checkpoints.push_back(t < queue.size() ? queue.checkpoints[t] : new_ckpt);
  }
  next.bm_index = outcome.bm_index;
  return next;
}

std::vector<double> score_updates(std::span<const ParamVector* const> updates, ScoreMetric metric) {
  std::vector<double> scores;
  scores.reserve(updates.size());
  switch (metric) {
    case ScoreMetric::kTaxicab:
      for (const auto* u : updates) scores.push_back(static_cast<double>(poison_score(*u)));
      break;
    case ScoreMetric::kL2:
      for (const auto* u : updates) scores.push_back(low_freq_float(*u).norm());
      break;
    case ScoreMetric::kCosine: {
      // Cosine distance of each low-frequency vector to the mean of the list.
      std::vector<Eigen::VectorXd> lows;
      for (const auto* u : updates) lows.push_back(low_freq_float(*u));
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(lows.front().size());
      for (const auto& l : lows) mean += l;
      mean /= static_cast<double>(lows.size());
      for (const auto& l : lows) {
        const double denom = l.norm() * mean.norm();
        scores.push_back(denom > 0 ? 1.0 - l.dot(mean) / denom : 0.0);
      }
      break;
    }
  }
  return scores;
}

std::pair<QueueState, DefenseOutcome> detect_poisoned(const QueueState& queue, const Checkpoint& new_ckpt,
                                                      const DefenseParams& params, ScoreMetric metric) {
  if (queue.size() != params.k) throw ProtocolStateError("queue holds " + std::to_string(queue.size()) + " checkpoints, expected k");
  for (const auto& c : queue.checkpoints) {
    if (c.update.size() != new_ckpt.update.size()) throw ShapeError("update length mismatch");
  }
  DefenseOutcome outcome;
  if (metric == ScoreMetric::kTaxicab) {
    std::vector<std::int64_t> raw;
    for (const auto& c : queue.checkpoints) raw.push_back(poison_score(c.update));
    raw.push_back(poison_score(new_ckpt.update));
    outcome = select_from_scores(std::span<const std::int64_t>(raw), params);
  } else {
    std::vector<const ParamVector*> updates;
    for (const auto& c : queue.checkpoints) updates.push_back(&c.update);
    updates.push_back(&new_ckpt.update);
    const auto raw = score_updates(updates, metric);
    outcome = select_from_scores(std::span<const double>(raw), params);
  }
  return {apply_outcome(queue, new_ckpt, outcome), outcome};
}

std::pair<QueueState, DefenseOutcome> gold_standard(const QueueState& queue, const Checkpoint& new_ckpt) {
  const std::size_t total = queue.size() + 1;
  auto at = [&](std::size_t t) -> const Checkpoint& { return t < queue.size() ? queue.checkpoints[t] : new_ckpt; };
  DefenseOutcome out;
  out.removed_index = 0;
  for (std::size_t t = total; t-- > 0;) {
    if (at(t).poisoned) {
      out.removed_index = t;
      break;
    }
  }
  std::vector<std::size_t> kept;
  for (std::size_t t = 0; t < total; ++t) {
    if (t != out.removed_index) kept.push_back(t);
  }
  out.bm_index = kept.size() - 1;
  for (std::size_t i = kept.size(); i-- > 0;) {
    if (!at(kept[i]).poisoned) {
      out.bm_index = i;
      break;
    }
  }
  out.raw_scores.assign(total, 0.0);
  out.adjusted_scores.assign(total, 0.0);
  return {apply_outcome(queue, new_ckpt, out), out};
}

std::pair<QueueState, DefenseOutcome> no_defense(const QueueState& queue, const Checkpoint& new_ckpt) {
  DefenseOutcome out;
  out.removed_index = 0;
  out.bm_index = queue.size() - 1;
  out.raw_scores.assign(queue.size() + 1, 0.0);
  out.adjusted_scores.assign(queue.size() + 1, 0.0);
  return {apply_outcome(queue, new_ckpt, out), out};
}

QueueState select_initial_queue(std::vector<Checkpoint> candidates, std::size_t k) {
  if (candidates.size() < k) throw ConfigError("secure initialization needs at least k clients");
  std::vector<std::int64_t> scores;
  for (const auto& c : candidates) scores.push_back(poison_score(c.update));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  // Rank by (score, round) so the result does not depend on the order candidates arrived in.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(scores[a], candidates[a].round) < std::pair(scores[b], candidates[b].round);
  });
  order.resize(k);
  const std::size_t best = order.front();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return candidates[a].round < candidates[b].round; });
  QueueState q;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] == best) q.bm_index = i;
    q.checkpoints.push_back(std::move(candidates[order[i]]));
  }
  return q;
}

}  // namespace zksplit
