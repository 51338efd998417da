#include "zksplit/zk/statements.hpp"

#include <thread>

#include "zksplit/zk/bytes.hpp"
#include "zksplit/zk/gadgets.hpp"

namespace zksplit::zk {

namespace {

template <class P>
using WireVec = std::vector<typename P::Wire>;

// Commits n values; the verifier passes nullptr and only consumes commitments.
template <class P>
WireVec<P> commit_all(P& p, const std::vector<Fp>* values, std::size_t n) {
  if (values && values->size() != n) throw ShapeError("witness length mismatch");
  WireVec<P> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(p.input(values ? (*values)[i] : Fp{}));
  return out;
}

std::vector<Fp> to_field(const ParamVector& v) {
  std::vector<Fp> out;
  out.reserve(v.size());
  for (Eigen::Index i = 0; i < v.raw.size(); ++i) out.push_back(Fp::from_signed(v.raw[i]));
  return out;
}

template <class W>
std::vector<W> concat(const std::vector<W>& a, const std::vector<W>& b) {
  std::vector<W> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Placement of the masked cells inside the N x N coefficient grid.
struct DctLayout {
  Eigen::Index n = 0;
  std::vector<int> mask_of;          // flat cell -> mask position, -1 when unmasked
  std::vector<std::size_t> cells;    // mask order -> flat cell

  explicit DctLayout(std::size_t length) : n(square_side(length)) {
    mask_of.assign(static_cast<std::size_t>(n * n), -1);
    for (const auto& [u, v] : FreqMask::low(n).cells) {
      const auto flat = static_cast<std::size_t>(u * n + v);
      mask_of[flat] = static_cast<int>(cells.size());
      cells.push_back(flat);
    }
  }
  std::size_t size() const { return cells.size(); }
};

template <class P>
struct DctWires {
  WireVec<P> a;  // reconstructed unscaled transform, row-major
  WireVec<P> d;  // coefficients, mask order
  WireVec<P> e;  // remainders, mask order
};

constexpr int kShift = 2 * kDefaultFracBits;

template <class P>
DctWires<P> commit_dct(P& p, const DctLayout& lay, const QuantizedDct* q) {
  using W = typename P::Wire;
  const std::size_t cells = static_cast<std::size_t>(lay.n * lay.n);
  if (q && (q->coeffs.rows() != lay.n || q->coeffs.cols() != lay.n || q->remainder.rows() != lay.n ||
            q->remainder.cols() != lay.n)) {
    throw ShapeError("DCT witness has the wrong side length");
  }
  const Fp scale = pow2(kShift);
  DctWires<P> w;
  w.a.reserve(cells);
  w.d.resize(lay.size());
  w.e.resize(lay.size());
  for (std::size_t c = 0; c < cells; ++c) {
    Fp coef, rem;
    if (q) {
      coef = Fp::from_signed(q->coeffs.data()[c]);
      rem = Fp::from_signed(q->remainder.data()[c]);
    }
    const int m = lay.mask_of[c];
    if (m < 0) {
      w.a.push_back(p.input(coef * scale + rem));
      continue;
    }
    const W d = p.input(coef);
    const W e = p.input(rem);
    w.d[static_cast<std::size_t>(m)] = d;
    w.e[static_cast<std::size_t>(m)] = e;
    w.a.push_back(scale * d + e);
  }
  return w;
}

template <class P>
std::pair<WireVec<P>, WireVec<P>> commit_abs(P& p, std::size_t m, const std::vector<std::int64_t>* abs,
                                             const std::vector<std::uint8_t>* signs) {
  if (abs && (abs->size() != m || !signs || signs->size() != m)) throw ShapeError("abs witness length mismatch");
  WireVec<P> a, s;
  a.reserve(m);
  s.reserve(m);
  for (std::size_t i = 0; i < m; ++i) a.push_back(p.input(abs ? Fp::from_signed((*abs)[i]) : Fp{}));
  for (std::size_t i = 0; i < m; ++i) s.push_back(p.input(signs ? Fp((*signs)[i]) : Fp{}));
  return {a, s};
}

template <class P>
WireVec<P> padded(const WireVec<P>& u, const DctLayout& lay) {
  WireVec<P> out(u);
  out.resize(static_cast<std::size_t>(lay.n * lay.n));
  return out;
}

// Freivalds against every challenge row, then the remainder ranges of the masked cells.
template <class P>
void check_dct(P& p, const DctLayout& lay, const std::vector<Fp>& cq, const WireVec<P>& u, const DctWires<P>& w,
               const std::vector<Fp>& r, std::uint32_t reps) {
  const auto N = static_cast<std::size_t>(lay.n);
  const auto up = padded<P>(u, lay);
  for (std::uint32_t i = 0; i < reps; ++i) {
    freivalds_check(p, cq, lay.n, std::span<const typename P::Wire>(up), std::span<const typename P::Wire>(w.a),
                    std::span<const Fp>(r).subspan(i * N, N));
  }
  const Fp half = pow2(kRemainderBits - 1);
  for (const auto& e : w.e) assert_range(p, p.add_const(e, half), kRemainderBits);
}

void split_abs(const QuantizedDct& q, const DctLayout& lay, std::vector<std::int64_t>& abs,
               std::vector<std::uint8_t>& signs) {
  abs.clear();
  signs.clear();
  for (auto c : lay.cells) {
    const std::int64_t d = q.coeffs.data()[c];
    if (d >= (std::int64_t{1} << kCoefBits) || -d >= (std::int64_t{1} << kCoefBits)) {
      throw EncodingOverflow("low-frequency coefficient exceeds the proven range");
    }
    abs.push_back(d < 0 ? -d : d);
    signs.push_back(d < 0 ? 1 : 0);
  }
}

// ---------------------------------------------------------------------------

template <class P>
std::vector<Fp> publish_circuit(P& p, const PublishPublic& pub, const PublishWitness* w,
                                const PublishVerifierInputs* vin) {
  using W = typename P::Wire;
  const auto x = commit_all(p, w ? &w->x : nullptr, pub.length);
  const auto blinds = commit_all(p, w ? &w->new_blinds : nullptr, pub.new_slots);
  W anchor_blind{};
  if (pub.anchored) anchor_blind = p.input(w ? w->anchor_blind : Fp{});
  p.seal();

  p.phase("chain");
  std::vector<Fp> offered;
  if (vin) {
    if (pub.anchored) offered.push_back(vin->anchor_point);
    offered.insert(offered.end(), vin->new_points.begin(), vin->new_points.end());
  }
  const std::size_t off = pub.anchored ? 1 : 0;
  const auto pts = p.disclose(offered, off + pub.new_slots);
  if (pub.anchored) {
    p.assert_zero(p.add_const(poly_eval<W>(anchor_blind, x, pts[0]), -pub.anchor_digest));
  }
  std::vector<W> digests;
  for (std::size_t j = 0; j < pub.new_slots; ++j) digests.push_back(poly_eval<W>(blinds[j], x, pts[off + j]));
  auto out = p.reveal(digests);
  p.finish();
  return out;
}

template <class P>
std::vector<Fp> defense_circuit(P& p, const DefensePublic& pub, const DefenseWitness* w,
                                const DefenseVerifierInputs* vin) {
  using W = typename P::Wire;
  pub.validate();
  const std::size_t k = pub.k;
  const std::size_t L = pub.length;
  if (w && (w->models.size() != k + 1 || w->updates.size() != k || w->dcts.size() != k + 1 ||
            w->abs.size() != k + 1 || w->signs.size() != k + 1)) {
    throw ShapeError("defense witness shape");
  }
  const DctLayout lay(L);

  std::vector<WireVec<P>> models, updates;
  for (std::size_t t = 0; t < k; ++t) {
    std::vector<Fp> mv, uv;
    if (w) {
      mv = to_field(w->models[t]);
      uv = to_field(w->updates[t]);
    }
    models.push_back(commit_all(p, w ? &mv : nullptr, L));
    updates.push_back(commit_all(p, w ? &uv : nullptr, L));
  }
  {
    std::vector<Fp> mv;
    if (w) mv = to_field(w->models[k]);
    models.push_back(commit_all(p, w ? &mv : nullptr, L));
  }
  const auto slot_blinds = commit_all(p, w ? &w->slot_blinds : nullptr, k);
  const auto new_blinds = commit_all(p, w ? &w->new_blinds : nullptr, pub.new_slots);
  std::vector<DctWires<P>> dcts;
  for (std::size_t t = 0; t <= k; ++t) dcts.push_back(commit_dct(p, lay, w ? &w->dcts[t] : nullptr));
  std::vector<std::pair<WireVec<P>, WireVec<P>>> abs;
  for (std::size_t t = 0; t <= k; ++t) {
    abs.push_back(commit_abs(p, lay.size(), w ? &w->abs[t] : nullptr, w ? &w->signs[t] : nullptr));
  }
  p.seal();

  // The new update is the difference to the model it was trained from, never a free witness.
  WireVec<P> fresh(L);
  for (std::size_t i = 0; i < L; ++i) fresh[i] = models[k][i] - models[pub.from_index][i];
  updates.push_back(std::move(fresh));

  p.phase("chain");
  std::vector<Fp> offered;
  if (vin) {
    offered = vin->slot_points;
    offered.insert(offered.end(), vin->new_points.begin(), vin->new_points.end());
  }
  const auto pts = p.disclose(offered, k + pub.new_slots);
  for (std::size_t t = 0; t < k; ++t) {
    const auto x = concat(models[t], updates[t]);
    p.assert_zero(p.add_const(poly_eval<W>(slot_blinds[t], x, pts[t]), -pub.slot_digests[t]));
  }
  std::vector<W> digests;
  {
    const auto x = concat(models[k], updates[k]);
    for (std::size_t j = 0; j < pub.new_slots; ++j) digests.push_back(poly_eval<W>(new_blinds[j], x, pts[k + j]));
  }
  auto out = p.reveal(digests);

  p.phase("dct");
  const auto cq = field_matrix(dct_cache(lay.n, pub.frac_bits).quantized);
  const auto r = p.challenge(static_cast<std::size_t>(lay.n) * pub.freivalds_reps);
  for (std::size_t t = 0; t <= k; ++t) check_dct(p, lay, cq, updates[t], dcts[t], r, pub.freivalds_reps);

  p.phase("score");
  std::vector<W> score(k + 1);
  for (std::size_t t = 0; t <= k; ++t) {
    const auto& [a, s] = abs[t];
    for (std::size_t i = 0; i < lay.size(); ++i) {
      assert_abs(p, dcts[t].d[i], a[i], s[i], kCoefBits);
      score[t] = score[t] + a[i];
    }
  }

  const auto params = pub.params();
  std::vector<W> ws(k + 1);
  std::int64_t max_weight = 0;
  for (std::size_t t = 0; t <= k; ++t) {
    ws[t] = Fp(static_cast<std::uint64_t>(params.weight(t))) * score[t];
    max_weight = std::max(max_weight, params.weight(t));
  }
  const int bits = comparison_bits(lay.size(), max_weight);

  // First maximum: strictly above every earlier entry, at least every later one.
  p.phase("prune");
  const std::size_t j = pub.removed_index;
  for (std::size_t t = 0; t <= k; ++t) {
    if (t == j) continue;
    W diff = ws[j] - ws[t];
    if (t < j) diff = p.add_const(diff, -Fp(1));
    assert_range(p, diff, bits);
  }
  p.assert_zero(p.add_const(ws[j], -Fp::from_signed(pub.s_wm)));

  // First minimum among the kept entries.
  p.phase("bm");
  const std::size_t b = pub.bm_index < j ? pub.bm_index : pub.bm_index + 1;
  for (std::size_t t = 0; t <= k; ++t) {
    if (t == j || t == b) continue;
    W diff = ws[t] - ws[b];
    if (t < b) diff = p.add_const(diff, -Fp(1));
    assert_range(p, diff, bits);
  }
  p.assert_zero(p.add_const(ws[b], -Fp::from_signed(pub.s_bm)));

  p.finish();
  return out;
}

template <class P>
void freivalds_circuit(P& p, const FreivaldsPublic& pub, const FreivaldsWitness* w) {
  if (pub.frac_bits != kDefaultFracBits) throw ConfigError("only the default fixed-point scale is supported");
  if (pub.reps < 1) throw ConfigError("at least one Freivalds repetition");
  const DctLayout lay(pub.length);
  std::vector<Fp> uv;
  if (w) uv = to_field(w->update);
  const auto u = commit_all(p, w ? &uv : nullptr, pub.length);
  const auto dct = commit_dct(p, lay, w ? &w->dct : nullptr);
  std::vector<std::int64_t> abs;
  std::vector<std::uint8_t> signs;
  if (w) {
    // A tampered witness may not fit the abs encoding; commit something and let the checks fail.
    for (auto c : lay.cells) {
      const std::int64_t d = w->dct.coeffs.data()[c];
      abs.push_back(d < 0 ? -d : d);
      signs.push_back(d < 0 ? 1 : 0);
    }
  }
  const auto [a, s] = commit_abs(p, lay.size(), w ? &abs : nullptr, w ? &signs : nullptr);
  p.seal();

  p.phase("dct");
  const auto cq = field_matrix(dct_cache(lay.n, pub.frac_bits).quantized);
  const auto r = p.challenge(static_cast<std::size_t>(lay.n) * pub.reps);
  check_dct(p, lay, cq, u, dct, r, pub.reps);
  for (std::size_t i = 0; i < lay.size(); ++i) assert_abs(p, dct.d[i], a[i], s[i], kCoefBits);
  p.finish();
}

// Runs a prover body; local failures tell the verifier before propagating.
template <class F>
auto guarded(ProverParty& p, F&& body) {
  try {
    return body();
  } catch (const ProofRejected&) {
    throw;
  } catch (const TransportError&) {
    throw;
  } catch (const std::exception& e) {
    p.abort(e.what());
    throw;
  }
}

}  // namespace

std::vector<Fp> chain_vector(const ParamVector& model, const ParamVector& update) {
  if (model.size() != update.size()) throw ShapeError("model and update lengths differ");
  return concat(to_field(model), to_field(update));
}

Fp chain_digest(std::span<const Fp> x, Fp point, Fp blind) {
  Fp acc = blind, pw = point;
  for (auto v : x) {
    acc += pw * v;
    pw *= point;
  }
  return acc;
}

void DefensePublic::validate() const {
  if (length == 0) throw ConfigError("empty model");
  if (frac_bits != kDefaultFracBits) throw ConfigError("only the default fixed-point scale is supported");
  params().validate();
  if (from_index >= k) throw ConfigError("from_index outside the queue");
  if (removed_index > k) throw ConfigError("removed_index outside the list");
  if (bm_index >= k) throw ConfigError("bm_index outside the pruned queue");
  if (slot_digests.size() != k) throw ConfigError("one slot digest per queue entry");
  if (freivalds_reps < 1) throw ConfigError("at least one Freivalds repetition");
  if (s_wm < 0 || s_bm < 0) throw ConfigError("weighted scores are nonnegative");
}

void prepare_defense_witness(const DefensePublic& pub, DefenseWitness& w) {
  pub.validate();
  if (w.models.size() != pub.k + 1 || w.updates.size() != pub.k) throw ShapeError("defense witness shape");
  for (const auto& m : w.models) {
    if (m.size() != pub.length) throw ShapeError("model length");
  }
  for (const auto& u : w.updates) {
    if (u.size() != pub.length) throw ShapeError("update length");
  }
  const DctLayout lay(pub.length);
  w.dcts.clear();
  w.abs.assign(pub.k + 1, {});
  w.signs.assign(pub.k + 1, {});
  const ParamVector fresh = make_update(w.models[pub.k], w.models[pub.from_index]);
  for (std::size_t t = 0; t <= pub.k; ++t) {
    const ParamVector& u = t < pub.k ? w.updates[t] : fresh;
    w.dcts.push_back(dct2_quantized(embed_square(u.raw), pub.frac_bits));
    split_abs(w.dcts.back(), lay, w.abs[t], w.signs[t]);
  }
}

std::vector<std::int64_t> witness_scores(const DefensePublic& pub, const DefenseWitness& w) {
  std::vector<std::int64_t> out;
  for (std::size_t t = 0; t <= pub.k; ++t) {
    std::int64_t s = 0;
    for (auto a : w.abs.at(t)) s += a;
    out.push_back(s);
  }
  return out;
}

DefenseOutcome fill_outcome(DefensePublic& pub, const DefenseWitness& w) {
  const auto scores = witness_scores(pub, w);
  const auto params = pub.params();
  auto out = select_from_scores(std::span<const std::int64_t>(scores), params);
  pub.removed_index = static_cast<std::uint32_t>(out.removed_index);
  pub.bm_index = static_cast<std::uint32_t>(out.bm_index);
  const std::size_t b = out.bm_index < out.removed_index ? out.bm_index : out.bm_index + 1;
  pub.s_wm = params.weight(out.removed_index) * scores[out.removed_index];
  pub.s_bm = params.weight(b) * scores[b];
  return out;
}

FreivaldsWitness make_freivalds_witness(const ParamVector& update) {
  return {update, dct2_quantized(embed_square(update.raw), update.frac_bits)};
}

// ---------------------------------------------------------------------------

PublishOutput prove_publish(Endpoint& ep, const SessionKeys& keys, const PublishPublic& pub, const PublishWitness& w,
                            std::size_t chunk) {
  ProverParty p(ep, keys.id, keys.prover_stream(), chunk);
  auto d = guarded(p, [&] { return publish_circuit(p, pub, &w, nullptr); });
  return {std::move(d), p.stats()};
}

PublishOutput verify_publish(Endpoint& ep, SessionId id, const VerifierSecrets& s, const PublishPublic& pub,
                             const PublishVerifierInputs& vin, std::size_t chunk) {
  if (vin.new_points.size() != pub.new_slots) throw ProtocolStateError("one point per new slot");
  VerifierParty v(ep, id, s, chunk);
  auto d = publish_circuit(v, pub, nullptr, &vin);
  return {std::move(d), v.stats()};
}

DefenseOutput prove_defense(Endpoint& ep, const SessionKeys& keys, const DefensePublic& pub, const DefenseWitness& w,
                            std::size_t chunk) {
  ProverParty p(ep, keys.id, keys.prover_stream(), chunk);
  auto d = guarded(p, [&] { return defense_circuit(p, pub, &w, nullptr); });
  return {std::move(d), p.stats()};
}

DefenseOutput verify_defense(Endpoint& ep, SessionId id, const VerifierSecrets& s, const DefensePublic& pub,
                             const DefenseVerifierInputs& vin, std::size_t chunk) {
  if (vin.slot_points.size() != pub.k || vin.new_points.size() != pub.new_slots) {
    throw ProtocolStateError("verifier points do not match the statement");
  }
  VerifierParty v(ep, id, s, chunk);
  auto d = defense_circuit(v, pub, nullptr, &vin);
  return {std::move(d), v.stats()};
}

SessionStats prove_freivalds(Endpoint& ep, const SessionKeys& keys, const FreivaldsPublic& pub,
                             const FreivaldsWitness& w, std::size_t chunk) {
  ProverParty p(ep, keys.id, keys.prover_stream(), chunk);
  guarded(p, [&] { freivalds_circuit(p, pub, &w); });
  return p.stats();
}

SessionStats verify_freivalds(Endpoint& ep, SessionId id, const VerifierSecrets& s, const FreivaldsPublic& pub,
                              std::size_t chunk) {
  VerifierParty v(ep, id, s, chunk);
  freivalds_circuit(v, pub, nullptr);
  return v.stats();
}

SimulatedFrames simulate_publish(SessionId id, const VerifierSecrets& s, const PublishPublic& pub,
                                 const PublishVerifierInputs& vin, std::uint64_t sim_seed, std::size_t chunk) {
  SimulatedFrames f;
  VerifierParty v(f, id, s, sim_seed, chunk);
  publish_circuit(v, pub, nullptr, &vin);
  return f;
}

SimulatedFrames simulate_defense(SessionId id, const VerifierSecrets& s, const DefensePublic& pub,
                                 const DefenseVerifierInputs& vin, std::uint64_t sim_seed, std::size_t chunk) {
  SimulatedFrames f;
  VerifierParty v(f, id, s, sim_seed, chunk);
  defense_circuit(v, pub, nullptr, &vin);
  return f;
}

SimulatedFrames simulate_freivalds(SessionId id, const VerifierSecrets& s, const FreivaldsPublic& pub,
                                   std::uint64_t sim_seed, std::size_t chunk) {
  SimulatedFrames f;
  VerifierParty v(f, id, s, sim_seed, chunk);
  freivalds_circuit(v, pub, nullptr);
  return f;
}

SessionResult run_local(const std::function<void(Endpoint&)>& prove, const std::function<void(Endpoint&)>& verify,
                        const std::function<void(Endpoint&)>& ep_hook, bool tcp) {
  auto [pe, ve] = tcp ? make_tcp_pair() : make_pipe();
  if (ep_hook) ep_hook(*ve);
  SessionResult r;
  std::thread prover([&, pe = pe.get()] {
    try {
      prove(*pe);
    } catch (const std::exception& e) {
      r.prover_error = e.what();
    }
    pe->close();
  });
  try {
    verify(*ve);
    r.accepted = true;
  } catch (const ProofRejected& e) {
    r.tag = e.tag();
    r.detail = e.what();
  } catch (const TransportError& e) {
    r.tag = "transport";
    r.detail = e.what();
  } catch (...) {
    ve->close();
    prover.join();
    throw;
  }
  ve->close();
  prover.join();
  r.bytes_to_verifier = ve->bytes_received();
  r.bytes_to_prover = ve->bytes_sent();
  return r;
}

// ---------------------------------------------------------------------------

Bytes encode(const PublishPublic& pub, const PublishVerifierInputs& vin) {
  ByteWriter w;
  w.u64(pub.length);
  w.u32(pub.new_slots);
  w.u8(pub.anchored ? 1 : 0);
  w.fp(pub.anchor_digest);
  w.fps(vin.new_points);
  w.fp(vin.anchor_point);
  return w.take();
}

std::pair<PublishPublic, PublishVerifierInputs> decode_publish(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  PublishPublic pub;
  PublishVerifierInputs vin;
  pub.length = r.u64();
  pub.new_slots = r.u32();
  pub.anchored = r.u8() != 0;
  pub.anchor_digest = r.fp();
  vin.new_points = r.fps();
  vin.anchor_point = r.fp();
  r.expect_done();
  return {pub, vin};
}

Bytes encode(const DefensePublic& pub, const DefenseVerifierInputs& vin) {
  ByteWriter w;
  w.u64(pub.length);
  w.u8(pub.frac_bits);
  w.u32(pub.k);
  w.i64(pub.beta.num);
  w.i64(pub.beta.den);
  w.u32(pub.from_index);
  w.u32(pub.removed_index);
  w.u32(pub.bm_index);
  w.i64(pub.s_wm);
  w.i64(pub.s_bm);
  w.fps(pub.slot_digests);
  w.u32(pub.new_slots);
  w.u32(pub.freivalds_reps);
  w.fps(vin.slot_points);
  w.fps(vin.new_points);
  return w.take();
}

std::pair<DefensePublic, DefenseVerifierInputs> decode_defense(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  DefensePublic pub;
  DefenseVerifierInputs vin;
  pub.length = r.u64();
  pub.frac_bits = r.u8();
  pub.k = r.u32();
  pub.beta.num = r.i64();
  pub.beta.den = r.i64();
  pub.from_index = r.u32();
  pub.removed_index = r.u32();
  pub.bm_index = r.u32();
  pub.s_wm = r.i64();
  pub.s_bm = r.i64();
  pub.slot_digests = r.fps();
  pub.new_slots = r.u32();
  pub.freivalds_reps = r.u32();
  vin.slot_points = r.fps();
  vin.new_points = r.fps();
  r.expect_done();
  return {pub, vin};
}

Bytes encode(const FreivaldsPublic& pub) {
  ByteWriter w;
  w.u64(pub.length);
  w.u8(pub.frac_bits);
  w.u32(pub.reps);
  return w.take();
}

FreivaldsPublic decode_freivalds(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  FreivaldsPublic pub;
  pub.length = r.u64();
  pub.frac_bits = r.u8();
  pub.reps = r.u32();
  r.expect_done();
  return pub;
}

namespace {

ParamVector random_params(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = g(rng);
  return ParamVector::quantize(v);
}

}  // namespace

DefenseInstance synthetic_defense(std::uint64_t seed, std::size_t length, std::uint32_t k, std::uint32_t new_slots) {
  std::mt19937_64 rng(seed);
  DefenseInstance d;
  d.pub.length = length;
  d.pub.k = k;
  d.pub.from_index = static_cast<std::uint32_t>(rng() % k);
  d.pub.new_slots = new_slots;
  for (std::uint32_t t = 0; t < k; ++t) {
    d.w.models.push_back(random_params(rng, length, 0.3));
    // Scores vary by entry so the selection is rarely tied.
    d.w.updates.push_back(random_params(rng, length, 0.01 * double(1 + rng() % 20)));
    d.w.slot_blinds.push_back(random_fp(rng));
    d.vin.slot_points.push_back(random_fp(rng));
    d.pub.slot_digests.push_back(
        chain_digest(chain_vector(d.w.models[t], d.w.updates[t]), d.vin.slot_points[t], d.w.slot_blinds[t]));
  }
  ParamVector fresh = random_params(rng, length, 0.05);
  fresh.raw += d.w.models[d.pub.from_index].raw;
  d.w.models.push_back(fresh);
  for (std::uint32_t j = 0; j < new_slots; ++j) {
    d.w.new_blinds.push_back(random_fp(rng));
    d.vin.new_points.push_back(random_fp(rng));
  }
  prepare_defense_witness(d.pub, d.w);
  fill_outcome(d.pub, d.w);
  return d;
}

}  // namespace zksplit::zk
