#pragma once

#include <random>

#include "zksplit/zk/statements.hpp"

namespace zksplit::test {

using zk::DefenseInstance;

inline ParamVector random_params(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return ParamVector::quantize(v);
}

inline DefenseInstance make_defense_instance(std::uint64_t seed, std::size_t length, std::uint32_t k = 3,
                                             std::uint32_t new_slots = 2) {
  return zk::synthetic_defense(seed, length, k, new_slots);
}

inline zk::SessionResult run_defense(const DefenseInstance& d, std::uint64_t session_seed,
                                     std::vector<Fp>* digests = nullptr, bool tcp = false) {
  const auto keys = zk::deal_session(session_seed);
  return zk::run_local(
      [&](zk::Endpoint& ep) { zk::prove_defense(ep, keys, d.pub, d.w); },
      [&](zk::Endpoint& ep) {
        auto out = zk::verify_defense(ep, keys.id, keys.verifier, d.pub, d.vin);
        if (digests) *digests = out.new_digests;
      },
      {}, tcp);
}

}  // namespace zksplit::test
