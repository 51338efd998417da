#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zksplit/protocol/engine.hpp"

namespace zksplit::harness {

struct RoundRecord {
  std::uint64_t round = 0;
  int client = 0;
  bool accepted = false;
  std::vector<bool> list_poisoned;  // k + 1 oracle flags, new checkpoint last
  std::size_t removed_index = 0;
  std::size_t bm_index = 0;
  std::uint64_t proof_bytes = 0;  // both sessions
  double proof_ms = 0;
};

struct AbortRecord {
  std::uint64_t round = 0;
  int client = 0;
  int culprit = 0;
  std::string stage;
  std::string tag;
};

struct MetricReport {
  double ba = 0;
  double ma = 0;
  std::optional<double> prr;  // null when no round had a poisoned entry in its list
  double bbr = 0;
  std::size_t rounds = 0;  // accepted rounds
  std::size_t eligible = 0;
  std::size_t correct_removals = 0;
  std::size_t bbr_events = 0;
  // Rounds whose pruned queue held no benign checkpoint.
  std::size_t benign_violations = 0;
  bool privacy_clean = true;
  std::uint64_t publications = 0;
  std::uint64_t publication_replays_ok = 0;
  std::uint64_t simulated_replays_ok = 0;
  std::vector<RoundRecord> series;
  std::vector<AbortRecord> aborts;
};

/// PRR, BBR and the invariant counts from the per-round oracle flags; BA/MA from the final event.
/// Throws ShapeError when the log lacks a final event or a round record is malformed.
MetricReport compute_metrics(const proto::RunLog& log);

/// Pruned-queue flags of one round: the k+1 list without the removed entry.
std::vector<bool> pruned_flags(const RoundRecord& r);

struct CellResult {
  std::string name;
  std::map<std::string, std::string> overrides;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> per_seed;

  double mean_ba() const;
  double mean_ma() const;
  std::optional<double> mean_prr() const;  // over seeds with a defined PRR
  double mean_bbr() const;
  double stddev_ba() const;
  double stddev_ma() const;
};

struct ScalingPoint {
  std::size_t length = 0;
  std::uint64_t seed = 0;
  std::uint64_t bytes = 0;
  double wall_ms = 0;
  double peak_rss_mb = 0;
  bool accepted = false;
};

struct AffineFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

AffineFit fit_affine(const std::vector<double>& x, const std::vector<double>& y);

struct SuiteReport {
  std::string suite;
  std::vector<CellResult> cells;
  std::vector<ScalingPoint> scaling;
  std::optional<AffineFit> bytes_fit;
};

const std::vector<std::string>& suite_names();

struct SuiteOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  proto::ExperimentConfig base;
  int threads = 0;  // 0: ZKSPLIT_THREADS or the hardware count
  std::optional<std::filesystem::path> runlog_dir;  // per-run logs are written here when set
  std::vector<std::size_t> scaling_lengths{1000, 10000, 100000};
};

/// Worker cap: ZKSPLIT_THREADS when set and positive, else the hardware count.
int worker_count(int requested = 0);

/// Runs `task(i)` for i < n on up to `threads` workers; the first exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task);

/// Unknown names throw ConfigError.
SuiteReport run_suite(const std::string& name, const SuiteOptions& opts);

/// One proof of a synthetic defense round at the given parameter count.
ScalingPoint measure_scaling(std::size_t length, std::uint64_t seed);

enum class ReportFormat { kJsonl, kCsv, kMarkdown };

std::string render_report(const SuiteReport& r, ReportFormat f);
/// Writes the rendering to `path`; throws IoError when the file cannot be written.
void emit_report(const SuiteReport& r, ReportFormat f, const std::filesystem::path& path);

/// Columns of the csv rendering, in order: per-seed metric rows, or scaling rows.
const std::vector<std::string>& csv_columns(bool scaling = false);

/// A single run's metrics as one JSON object.
nlohmann::json to_json(const MetricReport& m);

}  // namespace zksplit::harness
