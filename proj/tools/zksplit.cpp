#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "zksplit/harness.hpp"
#include "zksplit/oracles.hpp"
#include "zksplit/zk/gadgets.hpp"
#include "zksplit/zk/transcript.hpp"

using namespace zksplit;
namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config, const std::vector<std::string>& sets, const std::string& out) {
  auto cfg = config.empty() ? proto::ExperimentConfig{} : proto::load_config(config);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    proto::set_option(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  const auto log = proto::run_experiment(cfg);
  const auto m = harness::compute_metrics(log);
  fs::create_directories(out);
  log.save(fs::path(out) / "runlog.jsonl");
  std::ofstream(fs::path(out) / "metrics.json") << harness::to_json(m).dump(2) << '\n';
  std::cout << "BA " << m.ba << "  MA " << m.ma << "  PRR " << (m.prr ? std::to_string(*m.prr) : "null") << "  BBR "
            << m.bbr << "  rounds " << m.rounds << "  aborts " << m.aborts.size() << '\n';
  for (const auto& a : m.aborts) {
    std::cout << "  abort round " << a.round << ": client " << a.culprit << " at " << a.stage << " (" << a.tag << ")\n";
  }
  std::cout << "wrote " << out << "/runlog.jsonl\n";
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("no seeds given");
  return out;
}

int cmd_suite(const std::string& name, const std::string& out, const std::string& seeds, int threads,
              const std::string& config) {
  harness::SuiteOptions opts;
  opts.seeds = parse_seeds(seeds);
  opts.threads = threads;
  if (!config.empty()) opts.base = proto::load_config(config);
  opts.runlog_dir = fs::path(out) / "runs";
  fs::create_directories(out);
  const auto rep = harness::run_suite(name, opts);
  harness::emit_report(rep, harness::ReportFormat::kJsonl, fs::path(out) / (name + ".jsonl"));
  harness::emit_report(rep, harness::ReportFormat::kCsv, fs::path(out) / (name + ".csv"));
  harness::emit_report(rep, harness::ReportFormat::kMarkdown, fs::path(out) / (name + ".md"));
  std::cout << harness::render_report(rep, harness::ReportFormat::kMarkdown);
  return 0;
}

int cmd_verify(const std::string& file) {
  const auto t = zk::load_transcript(file);
  const auto r = zk::replay_transcript(t);
  std::cout << (r.accepted ? "ACCEPT" : "REJECT") << (r.reason.empty() ? "" : ": " + r.reason) << '\n';
  return r.accepted ? 0 : 1;
}

int cmd_record(std::size_t length, std::uint64_t seed, bool simulate, const std::string& out) {
  const auto inst = zk::synthetic_defense(seed, length);
  const auto keys = zk::deal_session(seed);
  const zk::Bytes stmt = zk::encode(inst.pub, inst.vin);
  zk::Transcript t;
  if (simulate) {
    t = zk::simulate_transcript(zk::StatementKind::kDefense, keys.id, keys.verifier, stmt, seed + 1);
  } else {
    t = {zk::StatementKind::kDefense, keys.id, keys.verifier, zk::kDefaultChunk, stmt, {}};
    const auto res = zk::run_local([&](zk::Endpoint& ep) { zk::prove_defense(ep, keys, inst.pub, inst.w); },
                                   [&](zk::Endpoint& ep) { zk::verify_defense(ep, keys.id, keys.verifier, inst.pub, inst.vin); },
                                   [&](zk::Endpoint& ep) { zk::record_into(ep, t); });
    if (!res.accepted) throw ProtocolStateError("live session rejected: " + res.detail);
  }
  zk::save_transcript(t, out);
  std::cout << "wrote " << t.frames.size() << " frames to " << out << '\n';
  return 0;
}

// Quick oracle checks of the arithmetic building blocks.
int cmd_selftest() {
  std::mt19937_64 rng(20261015);
  int failures = 0;
  auto report = [&](const char* what, bool ok) {
    std::cout << (ok ? "ok    " : "FAIL  ") << what << '\n';
    failures += ok ? 0 : 1;
  };

  bool field_ok = true;
  for (int i = 0; i < 10000; ++i) {
    const Fp a = random_fp(rng), b = random_fp(rng);
    field_ok &= (a * b).value() == oracle::mod_mul(a.value(), b.value());
    field_ok &= (a + b).value() == oracle::mod_add(a.value(), b.value());
    field_ok &= (a - b).value() == oracle::mod_sub(a.value(), b.value());
    if (a.value() != 0) field_ok &= a.inv().value() == oracle::mod_inv(a.value());
  }
  report("field arithmetic vs 128-bit reference", field_ok);

  double worst = 0;
  for (int n = 2; n <= 16; ++n) {
    SquareMatrix<double> m = SquareMatrix<double>::Random(n, n);
    worst = std::max(worst, (dct2(m) - oracle::naive_dct2(m)).cwiseAbs().maxCoeff());
  }
  report("dct2 vs double-sum DCT-II", worst <= 1e-9);

  bool q_ok = true;
  std::uniform_int_distribution<std::int64_t> raw(-(1 << 20), 1 << 20);
  for (int n = 2; n <= 12; ++n) {
    RawMatrix u(n, n);
    for (auto& x : u.reshaped()) x = raw(rng);
    const auto a = dct2_quantized(u);
    const auto b = oracle::naive_quantized_dct(u, kDefaultFracBits);
    q_ok &= a.coeffs == b.coeffs && a.remainder == b.remainder;
  }
  report("quantized dct vs 128-bit quadruple loop", q_ok);

  // A small committed circuit: range, abs and a product, honest then with a wrong product.
  auto session = [&](bool cheat) {
    const auto keys = zk::deal_session(rng());
    auto circuit = [cheat](auto& p, bool prover) {
      auto x = p.input(Fp::from_signed(prover ? -1234 : 0));
      auto w = zk::abs_witness(-1234);
      auto a = p.input(prover ? w.a : Fp{});
      auto s = p.input(prover ? w.s : Fp{});
      zk::assert_abs(p, x, a, s);
      auto y = p.input(Fp(prover ? 99 : 0));
      auto z = p.input(Fp(prover ? (cheat ? 99 * 1234 + 1 : 99 * 1234) : 0));
      p.assert_zero(p.mul(a, y) - z);
      p.finish();
    };
    return zk::run_local(
        [&](zk::Endpoint& ep) {
          zk::ProverParty p(ep, keys.id, keys.prover_stream());
          circuit(p, true);
        },
        [&](zk::Endpoint& ep) {
          zk::VerifierParty v(ep, keys.id, keys.verifier);
          circuit(v, false);
        });
  };
  report("gadget session accepts an honest witness", session(false).accepted);
  report("gadget session rejects a wrong product", !session(true).accepted);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zksplit: split-learning poisoning defense with interactive proofs"};
  app.require_subcommand(1);

  std::string config, out = "out", seeds = "1,2,3", suite, file;
  std::vector<std::string> sets;
  int threads = 0;
  std::size_t length = 1000;
  std::uint64_t seed = 1;
  bool simulate = false;

  auto* run = app.add_subcommand("run", "run one experiment and write its run log");
  run->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
  run->add_option("--set", sets, "override a config key, key=value");
  run->add_option("--out", out, "output directory");

  auto* su = app.add_subcommand("suite", "run a seeded experiment grid and emit reports");
  su->add_option("name", suite, "suite name")->required()->check(CLI::IsMember(harness::suite_names()));
  su->add_option("--out", out, "output directory");
  su->add_option("--seeds", seeds, "comma separated seeds");
  su->add_option("--threads", threads, "worker cap (default ZKSPLIT_THREADS or hardware)");
  su->add_option("--config", config, "base config file")->check(CLI::ExistingFile);

  auto* vt = app.add_subcommand("verify-transcript", "replay a recorded session against a fresh verifier");
  vt->add_option("file", file)->required()->check(CLI::ExistingFile);

  auto* rec = app.add_subcommand("record-transcript", "prove a synthetic defense round and save its transcript");
  rec->add_option("--length", length, "parameters per model");
  rec->add_option("--seed", seed);
  rec->add_flag("--simulate", simulate, "fabricate the transcript without a prover");
  rec->add_option("--out", file, "transcript file")->required();

  auto* st = app.add_subcommand("selftest", "field, DCT and gadget oracle checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, sets, out);
    if (*su) return cmd_suite(suite, out, seeds, threads, config);
    if (*vt) return cmd_verify(file);
    if (*rec) return cmd_record(length, seed, simulate, file);
    if (*st) return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
