#include "zksplit/protocol/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace zksplit::proto {

namespace {

const std::pair<Strategy, const char*> kStrategies[] = {
    {Strategy::kHonestButPoisoning, "honest-but-poisoning"},
    {Strategy::kForgeBm, "forge-bm"},
    {Strategy::kForgeRemoval, "forge-removal"},
    {Strategy::kSubstituteModel, "substitute-model"},
    {Strategy::kTamperDct, "tamper-dct"},
    {Strategy::kInflateScores, "inflate-scores"},
    {Strategy::kSkipDefense, "skip-defense"},
    {Strategy::kTamperForward, "tamper-forward"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Strategy parse_strategy(const std::string& s) {
  for (const auto& [st, name] : kStrategies) {
    if (s == name) return st;
  }
  throw ConfigError("unknown strategy '" + s + "'");
}

std::string to_string(Strategy s) {
  for (const auto& [st, name] : kStrategies) {
    if (s == st) return name;
  }
  return "?";
}

std::string to_string(DefenseMode m) {
  switch (m) {
    case DefenseMode::kZksl: return "zksl";
    case DefenseMode::kNone: return "none";
    case DefenseMode::kGold: return "gold";
    case DefenseMode::kMetricAblation: return "metric-ablation";
  }
  return "?";
}

int ExperimentConfig::malicious_count() const { return static_cast<int>(std::lround(pmr * clients)); }

void ExperimentConfig::validate() const {
  if (clients < 2) throw ConfigError("need at least two clients");
  if (rounds < 1) throw ConfigError("rounds must be positive");
  if (k < 1 || k >= clients) throw ConfigError("k must be in [1, clients)");
  defense_params().validate();
  if (!(pmr >= 0 && pmr <= 1)) throw ConfigError("pmr must be in [0, 1]");
  if (!(pdr >= 0 && pdr <= 1)) throw ConfigError("pdr must be in [0, 1]");
  if (!(iid >= 0 && iid <= 1)) throw ConfigError("iid must be in [0, 1]");
  arch.validate();
  if (hyper.lr <= 0 || hyper.epochs < 0 || hyper.batch < 1) throw ConfigError("bad training hyperparameters");
  if (train_size < static_cast<std::size_t>(clients) || test_size < 1 || setup_size < 1) {
    throw ConfigError("dataset sizes too small");
  }
  if (setup_rounds < 0) throw ConfigError("setup_rounds must be nonnegative");
  if (freivalds_reps < 1) throw ConfigError("freivalds_reps must be positive");
  if (timeout_ms < 1) throw ConfigError("timeout_ms must be positive");
  if (defense == DefenseMode::kZksl && metric != ScoreMetric::kTaxicab) {
    throw ConfigError("zksl proves the taxicab score; use defense=metric-ablation for other metrics");
  }
  for (int f : PoisonSpec{}.trigger_features) {
    if (f >= arch.d_in) throw ConfigError("trigger features exceed d_in");
  }
}

void set_option(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "clients") c.clients = parse_num<int>(key, v);
  else if (key == "rounds") c.rounds = parse_num<int>(key, v);
  else if (key == "k") c.k = parse_num<int>(key, v);
  else if (key == "beta_num") c.beta_num = parse_num<std::int64_t>(key, v);
  else if (key == "beta_den") c.beta_den = parse_num<std::int64_t>(key, v);
  else if (key == "pmr") c.pmr = parse_num<double>(key, v);
  else if (key == "pdr") c.pdr = parse_num<double>(key, v);
  else if (key == "iid") c.iid = parse_num<double>(key, v);
  else if (key == "seed") c.seed = parse_num<std::uint64_t>(key, v);
  else if (key == "defense") {
    if (v == "zksl") c.defense = DefenseMode::kZksl;
    else if (v == "none") c.defense = DefenseMode::kNone;
    else if (v == "gold") c.defense = DefenseMode::kGold;
    else if (v == "metric-ablation") c.defense = DefenseMode::kMetricAblation;
    else throw ConfigError("unknown defense '" + v + "'");
  } else if (key == "metric") c.metric = parse_metric(v);
  else if (key == "init") {
    if (v == "pretrained") c.init = InitMode::kPretrained;
    else if (v == "secure-init") c.init = InitMode::kSecureInit;
    else throw ConfigError("unknown init '" + v + "'");
  } else if (key == "transport") {
    if (v == "pipe" || v == "inproc") c.transport = Transport::kPipe;
    else if (v == "tcp") c.transport = Transport::kTcp;
    else throw ConfigError("unknown transport '" + v + "'");
  } else if (key == "dataset") c.dataset = v;
  else if (key == "strategy") c.strategy = parse_strategy(v);
  else if (key == "prove") c.prove = parse_bool(key, v);
  else if (key == "d_in") c.arch.d_in = parse_num<int>(key, v);
  else if (key == "h1") c.arch.h1 = parse_num<int>(key, v);
  else if (key == "h2") c.arch.h2 = parse_num<int>(key, v);
  else if (key == "classes") c.arch.classes = parse_num<int>(key, v);
  else if (key == "lr") c.hyper.lr = parse_num<double>(key, v);
  else if (key == "epochs") c.hyper.epochs = parse_num<int>(key, v);
  else if (key == "batch") c.hyper.batch = parse_num<int>(key, v);
  else if (key == "noise") c.blobs.noise = parse_num<double>(key, v);
  else if (key == "center_lo") c.blobs.center_lo = parse_num<double>(key, v);
  else if (key == "center_hi") c.blobs.center_hi = parse_num<double>(key, v);
  else if (key == "train_size") c.train_size = parse_num<std::size_t>(key, v);
  else if (key == "test_size") c.test_size = parse_num<std::size_t>(key, v);
  else if (key == "setup_size") c.setup_size = parse_num<std::size_t>(key, v);
  else if (key == "setup_rounds") c.setup_rounds = parse_num<int>(key, v);
  else if (key == "freivalds_reps") c.freivalds_reps = parse_num<std::uint32_t>(key, v);
  else if (key == "timeout_ms") c.timeout_ms = parse_num<int>(key, v);
  else if (key == "eval_every_round") c.eval_every_round = parse_bool(key, v);
  else if (key == "check_transcripts") c.check_transcripts = parse_bool(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    set_option(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::map<std::string, std::string> to_map(const ExperimentConfig& c) {
  return {
      {"clients", std::to_string(c.clients)},
      {"rounds", std::to_string(c.rounds)},
      {"k", std::to_string(c.k)},
      {"beta_num", std::to_string(c.beta_num)},
      {"beta_den", std::to_string(c.beta_den)},
      {"pmr", fmt(c.pmr)},
      {"pdr", fmt(c.pdr)},
      {"iid", fmt(c.iid)},
      {"seed", std::to_string(c.seed)},
      {"defense", to_string(c.defense)},
      {"metric", zksplit::to_string(c.metric)},
      {"init", c.init == InitMode::kPretrained ? "pretrained" : "secure-init"},
      {"transport", c.transport == Transport::kPipe ? "pipe" : "tcp"},
      {"dataset", c.dataset},
      {"strategy", to_string(c.strategy)},
      {"prove", c.prove ? "true" : "false"},
      {"d_in", std::to_string(c.arch.d_in)},
      {"h1", std::to_string(c.arch.h1)},
      {"h2", std::to_string(c.arch.h2)},
      {"classes", std::to_string(c.arch.classes)},
      {"lr", fmt(c.hyper.lr)},
      {"epochs", std::to_string(c.hyper.epochs)},
      {"batch", std::to_string(c.hyper.batch)},
      {"noise", fmt(c.blobs.noise)},
      {"center_lo", fmt(c.blobs.center_lo)},
      {"center_hi", fmt(c.blobs.center_hi)},
      {"train_size", std::to_string(c.train_size)},
      {"test_size", std::to_string(c.test_size)},
      {"setup_size", std::to_string(c.setup_size)},
      {"setup_rounds", std::to_string(c.setup_rounds)},
      {"freivalds_reps", std::to_string(c.freivalds_reps)},
      {"timeout_ms", std::to_string(c.timeout_ms)},
      {"eval_every_round", c.eval_every_round ? "true" : "false"},
      {"check_transcripts", c.check_transcripts ? "true" : "false"},
  };
}

}  // namespace zksplit::proto
