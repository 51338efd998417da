#include "zksplit/harness.hpp"

#include <sys/resource.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "zksplit/zk/statements.hpp"

namespace zksplit::harness {

namespace {

using nlohmann::json;

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ShapeError(std::string("run log record lacks '") + key + "'");
  return j.at(key).get<T>();
}

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

template <class F>
std::vector<double> collect(const std::vector<MetricReport>& rs, F f) {
  std::vector<double> out;
  for (const auto& r : rs) out.push_back(f(r));
  return out;
}

double mean_proof_bytes(const MetricReport& m) {
  std::vector<double> v;
  for (const auto& r : m.series) v.push_back(static_cast<double>(r.proof_bytes));
  return mean_of(v);
}

double mean_proof_ms(const MetricReport& m) {
  std::vector<double> v;
  for (const auto& r : m.series) v.push_back(r.proof_ms);
  return mean_of(v);
}

}  // namespace

std::vector<bool> pruned_flags(const RoundRecord& r) {
  if (r.removed_index >= r.list_poisoned.size()) throw ShapeError("removed index outside the list");
  std::vector<bool> out = r.list_poisoned;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(r.removed_index));
  return out;
}

MetricReport compute_metrics(const proto::RunLog& log) {
  MetricReport m;
  bool final_seen = false;
  for (const auto& e : log.events) {
    const auto ev = field<std::string>(e, "event");
    if (ev == "round") {
      RoundRecord r;
      r.round = field<std::uint64_t>(e, "round");
      r.client = field<int>(e, "client");
      r.accepted = true;
      r.list_poisoned = field<std::vector<bool>>(e, "list_poisoned");
      r.removed_index = field<std::size_t>(e, "removed_index");
      r.bm_index = field<std::size_t>(e, "bm_index");
      r.proof_bytes = e.value("proof_bytes_server", std::uint64_t{0}) + e.value("proof_bytes_next", std::uint64_t{0});
      r.proof_ms = e.value("proof_ms", 0.0);
      const auto pruned = pruned_flags(r);
      if (r.bm_index >= pruned.size()) throw ShapeError("bm index outside the pruned queue");
      ++m.rounds;
      if (std::find(r.list_poisoned.begin(), r.list_poisoned.end(), true) != r.list_poisoned.end()) {
        ++m.eligible;
        if (r.list_poisoned[r.removed_index]) ++m.correct_removals;
      }
      for (std::size_t t = r.bm_index + 1; t < pruned.size(); ++t) {
        if (!pruned[t]) {
          ++m.bbr_events;
          break;
        }
      }
      if (std::find(pruned.begin(), pruned.end(), false) == pruned.end()) ++m.benign_violations;
      m.series.push_back(std::move(r));
    } else if (ev == "abort") {
      m.aborts.push_back({field<std::uint64_t>(e, "round"), field<int>(e, "client"), field<int>(e, "culprit"),
                          field<std::string>(e, "stage"), field<std::string>(e, "tag")});
    } else if (ev == "final") {
      m.ba = field<double>(e, "ba");
      m.ma = field<double>(e, "ma");
      m.privacy_clean = e.value("privacy_clean", true);
      m.publications = e.value("publications", std::uint64_t{0});
      m.publication_replays_ok = e.value("publication_replays_ok", std::uint64_t{0});
      m.simulated_replays_ok = e.value("simulated_replays_ok", std::uint64_t{0});
      final_seen = true;
    }
  }
  if (!final_seen) throw ShapeError("run log has no final event");
  if (m.eligible > 0) m.prr = static_cast<double>(m.correct_removals) / static_cast<double>(m.eligible);
  m.bbr = m.rounds ? static_cast<double>(m.bbr_events) / static_cast<double>(m.rounds) : 0.0;
  return m;
}

json to_json(const MetricReport& m) {
  json j;
  j["ba"] = m.ba;
  j["ma"] = m.ma;
  j["prr"] = m.prr ? json(*m.prr) : json(nullptr);
  j["bbr"] = m.bbr;
  j["rounds"] = m.rounds;
  j["eligible"] = m.eligible;
  j["correct_removals"] = m.correct_removals;
  j["bbr_events"] = m.bbr_events;
  j["benign_violations"] = m.benign_violations;
  j["aborts"] = m.aborts.size();
  j["privacy_clean"] = m.privacy_clean;
  j["publications"] = m.publications;
  j["publication_replays_ok"] = m.publication_replays_ok;
  j["simulated_replays_ok"] = m.simulated_replays_ok;
  j["mean_proof_bytes"] = mean_proof_bytes(m);
  j["mean_proof_ms"] = mean_proof_ms(m);
  return j;
}

// ---------------------------------------------------------------------------

double CellResult::mean_ba() const { return mean_of(collect(per_seed, [](auto& r) { return r.ba; })); }
double CellResult::mean_ma() const { return mean_of(collect(per_seed, [](auto& r) { return r.ma; })); }
double CellResult::mean_bbr() const { return mean_of(collect(per_seed, [](auto& r) { return r.bbr; })); }
double CellResult::stddev_ba() const { return stddev_of(collect(per_seed, [](auto& r) { return r.ba; })); }
double CellResult::stddev_ma() const { return stddev_of(collect(per_seed, [](auto& r) { return r.ma; })); }

std::optional<double> CellResult::mean_prr() const {
  std::vector<double> v;
  for (const auto& r : per_seed) {
    if (r.prr) v.push_back(*r.prr);
  }
  if (v.empty()) return std::nullopt;
  return mean_of(v);
}

AffineFit fit_affine(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeError("affine fit needs two or more paired points");
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw ShapeError("affine fit needs distinct x values");
  AffineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r2 = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
  return f;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"default",    "beta-ablation", "k-ablation", "metric-ablation",
                                                 "pmr-sweep",  "pdr-sweep",     "scaling"};
  return names;
}

int worker_count(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("ZKSPLIT_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  const auto w = static_cast<std::size_t>(std::max(1, threads));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(w, n); ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

ScalingPoint measure_scaling(std::size_t length, std::uint64_t seed) {
  const auto inst = zk::synthetic_defense(seed, length);
  const auto keys = zk::deal_session(seed ^ 0x5ca1ab1eULL);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = zk::run_local([&](zk::Endpoint& ep) { zk::prove_defense(ep, keys, inst.pub, inst.w); },
                                 [&](zk::Endpoint& ep) { zk::verify_defense(ep, keys.id, keys.verifier, inst.pub, inst.vin); });
  ScalingPoint p;
  p.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  p.length = length;
  p.seed = seed;
  p.bytes = res.bytes_to_verifier + res.bytes_to_prover;
  p.accepted = res.accepted;
  rusage ru{};
  ::getrusage(RUSAGE_SELF, &ru);
  p.peak_rss_mb = static_cast<double>(ru.ru_maxrss) / 1024.0;
  return p;
}

namespace {

struct CellSpec {
  std::string name;
  std::map<std::string, std::string> overrides;
};

std::vector<CellSpec> cells_for(const std::string& suite) {
  std::vector<CellSpec> cells;
  if (suite == "default") {
    for (const char* d : {"none", "gold", "zksl"}) cells.push_back({d, {{"defense", d}}});
  } else if (suite == "beta-ablation") {
    for (int b = 5; b <= 10; ++b) {
      cells.push_back({"beta=" + num(b / 10.0, 1), {{"beta_num", std::to_string(b)}, {"beta_den", "10"}, {"prove", "false"}}});
    }
  } else if (suite == "k-ablation") {
    for (int k = 1; k <= 5; ++k) cells.push_back({"k=" + std::to_string(k), {{"k", std::to_string(k)}, {"prove", "false"}}});
  } else if (suite == "metric-ablation") {
    for (const char* m : {"taxicab", "l2", "cosine"}) {
      cells.push_back({m, {{"defense", "metric-ablation"}, {"metric", m}, {"prove", "false"}}});
    }
  } else if (suite == "pmr-sweep" || suite == "pdr-sweep") {
    const std::string key = suite == "pmr-sweep" ? "pmr" : "pdr";
    const std::vector<std::string> values =
        key == "pmr" ? std::vector<std::string>{"0.1", "0.2", "0.3", "0.4"} : std::vector<std::string>{"0.25", "0.5", "0.75", "1"};
    for (const auto& v : values) {
      for (const char* d : {"none", "zksl"}) {
        cells.push_back({key + "=" + v + " " + d, {{key, v}, {"defense", d}, {"prove", "false"}}});
      }
    }
  } else if (suite != "scaling") {
    throw ConfigError("unknown suite '" + suite + "'");
  }
  return cells;
}

}  // namespace

SuiteReport run_suite(const std::string& name, const SuiteOptions& opts) {
  SuiteReport rep;
  rep.suite = name;
  const int threads = worker_count(opts.threads);
  if (opts.seeds.empty()) throw ConfigError("at least one seed");
  if (name == "scaling") {
    // Sequential on purpose: concurrent sessions would distort the wall times.
    for (auto len : opts.scaling_lengths) {
      for (auto s : opts.seeds) rep.scaling.push_back(measure_scaling(len, s));
    }
    std::vector<double> x, y;
    for (const auto& p : rep.scaling) {
      x.push_back(static_cast<double>(p.length));
      y.push_back(static_cast<double>(p.bytes));
    }
    rep.bytes_fit = fit_affine(x, y);
    return rep;
  }
  const auto specs = cells_for(name);
  for (const auto& c : specs) {
    CellResult r;
    r.name = c.name;
    r.overrides = c.overrides;
    r.seeds = opts.seeds;
    r.per_seed.resize(opts.seeds.size());
    rep.cells.push_back(std::move(r));
  }
  if (opts.runlog_dir) std::filesystem::create_directories(*opts.runlog_dir);
  const std::size_t per = opts.seeds.size();
  parallel_for(specs.size() * per, threads, [&](std::size_t i) {
    const auto& spec = specs[i / per];
    auto cfg = opts.base;
    for (const auto& [k, v] : spec.overrides) proto::set_option(cfg, k, v);
    cfg.seed = opts.seeds[i % per];
    cfg.eval_every_round = false;
    const auto log = proto::run_experiment(cfg);
    if (opts.runlog_dir) {
      std::string file = name + "_" + spec.name + "_seed" + std::to_string(cfg.seed) + ".jsonl";
      for (auto& ch : file) {
        if (ch == ' ' || ch == '=' || ch == '/') ch = '_';
      }
      log.save(*opts.runlog_dir / file);
    }
    rep.cells[i / per].per_seed[i % per] = compute_metrics(log);
  });
  return rep;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& csv_columns(bool scaling) {
  static const std::vector<std::string> metrics = {
      "suite", "cell", "seed", "ba", "ma", "prr", "bbr", "rounds", "eligible", "correct_removals",
      "bbr_events", "benign_violations", "aborts", "mean_proof_bytes", "mean_proof_ms", "privacy_clean"};
  static const std::vector<std::string> scale = {"suite", "length", "seed", "bytes", "wall_ms", "peak_rss_mb", "accepted"};
  return scaling ? scale : metrics;
}

std::string render_report(const SuiteReport& r, ReportFormat f) {
  std::ostringstream out;
  switch (f) {
    case ReportFormat::kJsonl: {
      for (const auto& c : r.cells) {
        json j;
        j["suite"] = r.suite;
        j["cell"] = c.name;
        j["overrides"] = c.overrides;
        j["seeds"] = c.seeds;
        j["ba"] = c.mean_ba();
        j["ma"] = c.mean_ma();
        const auto prr = c.mean_prr();
        j["prr"] = prr ? json(*prr) : json(nullptr);
        j["bbr"] = c.mean_bbr();
        j["ba_stddev"] = c.stddev_ba();
        j["ma_stddev"] = c.stddev_ma();
        j["per_seed"] = json::array();
        for (const auto& m : c.per_seed) j["per_seed"].push_back(to_json(m));
        out << j.dump() << '\n';
      }
      for (const auto& p : r.scaling) {
        out << json{{"suite", r.suite}, {"length", p.length}, {"seed", p.seed}, {"bytes", p.bytes},
                    {"wall_ms", p.wall_ms}, {"peak_rss_mb", p.peak_rss_mb}, {"accepted", p.accepted}}
                   .dump()
            << '\n';
      }
      if (r.bytes_fit) {
        out << json{{"suite", r.suite}, {"fit", "bytes~length"}, {"slope", r.bytes_fit->slope},
                    {"intercept", r.bytes_fit->intercept}, {"r2", r.bytes_fit->r2}}
                   .dump()
            << '\n';
      }
      break;
    }
    case ReportFormat::kCsv: {
      const bool scaling = !r.scaling.empty();
      const auto& cols = csv_columns(scaling);
      for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
      out << '\n';
      for (const auto& p : r.scaling) {
        out << r.suite << ',' << p.length << ',' << p.seed << ',' << p.bytes << ',' << num(p.wall_ms) << ','
            << num(p.peak_rss_mb) << ',' << (p.accepted ? 1 : 0) << '\n';
      }
      for (const auto& c : r.cells) {
        for (std::size_t s = 0; s < c.per_seed.size(); ++s) {
          const auto& m = c.per_seed[s];
          out << r.suite << ',' << '"' << c.name << '"' << ',' << c.seeds[s] << ',' << num(m.ba) << ',' << num(m.ma)
              << ',' << (m.prr ? num(*m.prr) : "") << ',' << num(m.bbr) << ',' << m.rounds << ',' << m.eligible << ','
              << m.correct_removals << ',' << m.bbr_events << ',' << m.benign_violations << ',' << m.aborts.size()
              << ',' << num(mean_proof_bytes(m)) << ',' << num(mean_proof_ms(m)) << ',' << (m.privacy_clean ? 1 : 0)
              << '\n';
        }
      }
      break;
    }
    case ReportFormat::kMarkdown: {
      if (!r.scaling.empty()) {
        out << "| Parameters | Seed | Proof bytes | Wall time (ms) | Peak RSS (MB) |\n|---:|---:|---:|---:|---:|\n";
        for (const auto& p : r.scaling) {
          out << "| " << p.length << " | " << p.seed << " | " << p.bytes << " | " << num(p.wall_ms, 2)
              << " | " << num(p.peak_rss_mb, 2) << " |\n";
        }
        if (r.bytes_fit) {
          out << "\nbytes = " << num(r.bytes_fit->slope) << " * parameters + " << num(r.bytes_fit->intercept)
              << ", R^2 = " << num(r.bytes_fit->r2) << "\n";
        }
        break;
      }
      out << "| Cell | BA | MA | PRR | BBR |\n|---|---:|---:|---:|---:|\n";
      for (const auto& c : r.cells) {
        const auto prr = c.mean_prr();
        out << "| " << c.name << " | " << pct(c.mean_ba()) << " | " << pct(c.mean_ma()) << " | "
            << (prr ? pct(*prr) : "-") << " | " << pct(c.mean_bbr()) << " |\n";
      }
      break;
    }
  }
  return out.str();
}

void emit_report(const SuiteReport& r, ReportFormat f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << render_report(r, f);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace zksplit::harness
