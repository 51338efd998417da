#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "zksplit/harness.hpp"

namespace zksplit::harness {
namespace {

using nlohmann::json;

json round_event(std::uint64_t r, std::vector<bool> list, std::size_t removed, std::size_t bm) {
  return {{"event", "round"},        {"round", r},  {"client", static_cast<int>(r % 3)},
          {"list_poisoned", list},   {"removed_index", removed}, {"bm_index", bm},
          {"proof_bytes_server", 100}, {"proof_bytes_next", 50}, {"proof_ms", 2.0}};
}

json final_event(double ma, double ba) { return {{"event", "final"}, {"ma", ma}, {"ba", ba}}; }

TEST(Metrics, HandBuiltLog) {
  proto::RunLog log;
  log.events.push_back({{"event", "config"}});
  // Eligible, poisoned entry removed; BM is the last pruned entry.
  log.events.push_back(round_event(0, {false, false, false, true}, 3, 2));
  // Eligible, benign entry removed; BM skips a newer benign entry -> one BBR event.
  log.events.push_back(round_event(1, {false, true, false, false}, 0, 1));
  // Not eligible.
  log.events.push_back(round_event(2, {false, false, false, false}, 0, 2));
  // Eligible, pruned queue all poisoned -> invariant violation.
  log.events.push_back(round_event(3, {true, true, false, true}, 2, 0));
  log.events.push_back({{"event", "abort"}, {"round", 4}, {"client", 1}, {"culprit", 1}, {"stage", "proof"}, {"tag", "bm"}});
  log.events.push_back(final_event(0.9, 0.1));
  const auto m = compute_metrics(log);
  EXPECT_EQ(m.rounds, 4u);
  EXPECT_EQ(m.eligible, 3u);
  EXPECT_EQ(m.correct_removals, 1u);
  ASSERT_TRUE(m.prr);
  EXPECT_DOUBLE_EQ(*m.prr, 1.0 / 3.0);
  EXPECT_EQ(m.bbr_events, 1u);
  EXPECT_DOUBLE_EQ(m.bbr, 0.25);
  EXPECT_EQ(m.benign_violations, 1u);
  ASSERT_EQ(m.aborts.size(), 1u);
  EXPECT_EQ(m.aborts[0].tag, "bm");
  EXPECT_DOUBLE_EQ(m.ma, 0.9);
  EXPECT_DOUBLE_EQ(m.ba, 0.1);
  EXPECT_EQ(pruned_flags(m.series[0]), (std::vector<bool>{false, false, false}));
  EXPECT_EQ(to_json(m)["mean_proof_bytes"].get<double>(), 150.0);
}

TEST(Metrics, PrrIsNullWithoutPoisonedEntries) {
  proto::RunLog log;
  log.events.push_back(round_event(0, {false, false}, 0, 0));
  log.events.push_back(final_event(0.5, 0.0));
  const auto m = compute_metrics(log);
  EXPECT_FALSE(m.prr.has_value());
  EXPECT_TRUE(to_json(m)["prr"].is_null());
}

TEST(Metrics, MalformedLogsThrow) {
  proto::RunLog no_final;
  no_final.events.push_back(round_event(0, {false, false}, 0, 0));
  EXPECT_THROW(compute_metrics(no_final), ShapeError);
  proto::RunLog bad_bm;
  bad_bm.events.push_back(round_event(0, {false, false}, 0, 1));
  bad_bm.events.push_back(final_event(0, 0));
  EXPECT_THROW(compute_metrics(bad_bm), ShapeError);
  proto::RunLog missing;
  missing.events.push_back({{"event", "round"}, {"round", 0}});
  missing.events.push_back(final_event(0, 0));
  EXPECT_THROW(compute_metrics(missing), ShapeError);
}

// Random logs against a direct recount written here.
TEST(Metrics, RandomLogsMatchRecount) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 1 + rng() % 5;
    proto::RunLog log;
    int eligible = 0, correct = 0, bbr = 0, violations = 0;
    const int rounds = 1 + static_cast<int>(rng() % 30);
    for (int r = 0; r < rounds; ++r) {
      std::vector<bool> list(k + 1);
      for (std::size_t t = 0; t <= k; ++t) list[t] = rng() % 3 == 0;
      const std::size_t removed = rng() % (k + 1);
      const std::size_t bm = rng() % k;
      std::vector<bool> kept;
      for (std::size_t t = 0; t <= k; ++t) {
        if (t != removed) kept.push_back(list[t]);
      }
      const bool any = std::count(list.begin(), list.end(), true) > 0;
      eligible += any;
      correct += any && list[removed];
      bool newer_benign = false;
      for (std::size_t t = bm + 1; t < kept.size(); ++t) newer_benign = newer_benign || !kept[t];
      bbr += newer_benign;
      violations += std::count(kept.begin(), kept.end(), false) == 0;
      log.events.push_back(round_event(static_cast<std::uint64_t>(r), list, removed, bm));
    }
    log.events.push_back(final_event(0, 0));
    const auto m = compute_metrics(log);
    ASSERT_EQ(m.eligible, static_cast<std::size_t>(eligible));
    ASSERT_EQ(m.correct_removals, static_cast<std::size_t>(correct));
    ASSERT_EQ(m.bbr_events, static_cast<std::size_t>(bbr));
    ASSERT_EQ(m.benign_violations, static_cast<std::size_t>(violations));
    if (eligible) {
      ASSERT_DOUBLE_EQ(*m.prr, static_cast<double>(correct) / eligible);
    } else {
      ASSERT_FALSE(m.prr);
    }
  }
}

proto::ExperimentConfig tiny(proto::DefenseMode mode) {
  proto::ExperimentConfig c;
  c.clients = 6;
  c.rounds = 8;
  c.arch = SplitArch{16, 8, 12, 4};
  c.train_size = 900;
  c.test_size = 200;
  c.setup_size = 150;
  c.hyper.epochs = 1;
  c.pmr = 0.34;
  c.defense = mode;
  c.eval_every_round = false;
  return c;
}

TEST(Metrics, GoldStandardRemovesEveryPoisonedEntry) {
  const auto m = compute_metrics(proto::run_experiment(tiny(proto::DefenseMode::kGold)));
  ASSERT_TRUE(m.prr);
  EXPECT_DOUBLE_EQ(*m.prr, 1.0);
  EXPECT_DOUBLE_EQ(m.bbr, 0.0);
  EXPECT_EQ(m.benign_violations, 0u);
}

TEST(Fit, ExactLineAndNoise) {
  const auto f = fit_affine({1, 2, 3, 4}, {5, 7, 9, 11});
  EXPECT_NEAR(f.slope, 2, 1e-12);
  EXPECT_NEAR(f.intercept, 3, 1e-12);
  EXPECT_NEAR(f.r2, 1, 1e-12);
  const auto g = fit_affine({1, 2, 3, 4}, {1, 3, 2, 4});
  EXPECT_LT(g.r2, 1);
  EXPECT_GT(g.r2, 0);
  EXPECT_THROW(fit_affine({1}, {2}), ShapeError);
  EXPECT_THROW(fit_affine({3, 3}, {1, 2}), ShapeError);
}

TEST(Parallel, EveryIndexRunsOnceAndErrorsPropagate) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw ConfigError("boom");
               }),
               ConfigError);
  EXPECT_GE(worker_count(), 1);
}

SuiteReport small_report() {
  SuiteReport r;
  r.suite = "default";
  for (const char* name : {"none", "zksl"}) {
    CellResult c;
    c.name = name;
    c.seeds = {1, 2};
    for (double ba : {0.2, 0.4}) {
      MetricReport m;
      m.ba = ba;
      m.ma = 0.8;
      m.prr = ba;
      c.per_seed.push_back(m);
    }
    r.cells.push_back(c);
  }
  return r;
}

TEST(Report, CellMeansAndRenderings) {
  const auto r = small_report();
  EXPECT_DOUBLE_EQ(r.cells[0].mean_ba(), 0.3);
  EXPECT_NEAR(r.cells[0].stddev_ba(), std::sqrt(0.02), 1e-12);  // sample deviation
  EXPECT_DOUBLE_EQ(*r.cells[0].mean_prr(), 0.3);

  const auto csv = render_report(r, ReportFormat::kCsv);
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  std::string want;
  for (const auto& c : csv_columns()) want += (want.empty() ? "" : ",") + c;
  EXPECT_EQ(header, want);
  int rows = 0;
  for (std::string line; std::getline(in, line);) rows += !line.empty();
  EXPECT_EQ(rows, 4);

  const auto md = render_report(r, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| none |"), std::string::npos);
  EXPECT_NE(md.find("| zksl |"), std::string::npos);

  const auto jl = render_report(r, ReportFormat::kJsonl);
  for (const auto& line : proto::RunLog::from_jsonl(jl).events) EXPECT_TRUE(line.is_object());

  // Rendering is a pure function of the report.
  EXPECT_EQ(render_report(r, ReportFormat::kCsv), csv);
  const auto dir = std::filesystem::temp_directory_path() / "zksplit_report_test";
  std::filesystem::create_directories(dir);
  emit_report(r, ReportFormat::kCsv, dir / "a.csv");
  emit_report(r, ReportFormat::kCsv, dir / "b.csv");
  std::ifstream a(dir / "a.csv"), b(dir / "b.csv");
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
  EXPECT_THROW(emit_report(r, ReportFormat::kCsv, "/nonexistent/dir/x.csv"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Suite, NamesAndUnknownSuite) {
  const auto& names = suite_names();
  EXPECT_NE(std::find(names.begin(), names.end(), "default"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "scaling"), names.end());
  EXPECT_THROW(run_suite("nope", {}), ConfigError);
}

TEST(Scaling, SmallProofIsAcceptedAndCounted) {
  const auto p = measure_scaling(500, 1);
  EXPECT_TRUE(p.accepted);
  EXPECT_GT(p.bytes, 0u);
  EXPECT_GT(p.peak_rss_mb, 0.0);
  EXPECT_GT(measure_scaling(4000, 1).bytes, p.bytes);
}

}  // namespace
}  // namespace zksplit::harness
