#include "zksplit/protocol/messages.hpp"

#include <cstring>

#include "zksplit/zk/bytes.hpp"

namespace zksplit::proto {

namespace {

using zk::ByteReader;
using zk::ByteWriter;

void put_digest(ByteWriter& w, const Digest& d) { w.raw(d); }

Digest get_digest(ByteReader& r) {
  Digest d;
  const auto s = r.raw(d.size());
  std::copy(s.begin(), s.end(), d.begin());
  return d;
}

void put_matrix(ByteWriter& w, const Eigen::MatrixXd& m) {
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::uint64_t bits;
      const double v = m(i, j);
      std::memcpy(&bits, &v, sizeof bits);
      w.u64(bits);
    }
  }
}

Eigen::MatrixXd get_matrix(ByteReader& r) {
  const auto rows = r.u64();
  const auto cols = r.u64();
  if (rows > (1u << 24) || cols > (1u << 24) || rows * cols > (1u << 26)) throw ShapeError("matrix too large");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const std::uint64_t bits = r.u64();
      std::memcpy(&m(i, j), &bits, sizeof bits);
    }
  }
  return m;
}

void put_checkpoint(ByteWriter& w, const Checkpoint& c) {
  w.u64(c.id);
  w.i64(c.round);
  w.u32(static_cast<std::uint32_t>(c.origin_client));
  w.bytes(serialize(c.model));
  w.bytes(serialize(c.update));
  put_digest(w, c.model_hash);
  put_digest(w, c.update_hash);
  put_digest(w, c.dct_hash);
  put_digest(w, c.chain.seed);
}

Checkpoint get_checkpoint(ByteReader& r) {
  Checkpoint c;
  c.id = r.u64();
  c.round = r.i64();
  c.origin_client = static_cast<std::int32_t>(r.u32());
  c.model = deserialize(r.bytes());
  c.update = deserialize(r.bytes());
  c.model_hash = get_digest(r);
  c.update_hash = get_digest(r);
  c.dct_hash = get_digest(r);
  c.chain.seed = get_digest(r);
  return c;
}

struct Encoder {
  ByteWriter& w;
  void operator()(const ModelsAndPointer& m) const {
    w.u64(m.checkpoints.size());
    for (const auto& c : m.checkpoints) put_checkpoint(w, c);
    w.u64(m.bm_index);
    w.fp(m.handoff_blind);
  }
  void operator()(const HashBundle& h) const {
    w.u64(h.checkpoint_id);
    w.i64(h.checkpoint_round);
    put_digest(w, h.model_hash);
    put_digest(w, h.update_hash);
    put_digest(w, h.dct_hash);
  }
  void operator()(const TrainActivations& a) const { put_matrix(w, a.values); }
  void operator()(const TrainGradients& g) const { put_matrix(w, g.values); }
  void operator()(const ProofFrame& f) const { w.bytes(f.frame); }
  void operator()(const Abort& a) const {
    w.u32(static_cast<std::uint32_t>(a.culprit));
    w.str(a.reason);
  }
  void operator()(const UseBackbone& u) const { w.u64(u.checkpoint_id); }
  void operator()(const EndTraining&) const {}
};

}  // namespace

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::kModelsAndPointer: return "ModelsAndPointer";
    case MsgKind::kHashBundle: return "HashBundle";
    case MsgKind::kTrainActivations: return "TrainActivations";
    case MsgKind::kTrainGradients: return "TrainGradients";
    case MsgKind::kProofFrame: return "ProofFrame";
    case MsgKind::kAbort: return "Abort";
    case MsgKind::kUseBackbone: return "UseBackbone";
    case MsgKind::kEndTraining: return "EndTraining";
  }
  return "?";
}

Bytes encode(const RoundMessage& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(m.kind()));
  w.u64(m.header.round);
  w.u32(static_cast<std::uint32_t>(m.header.sender));
  w.u32(static_cast<std::uint32_t>(m.header.receiver));
  std::visit(Encoder{w}, m.body);
  return w.take();
}

RoundMessage decode_message(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto tag = r.u8();
  RoundMessage m;
  m.header.round = r.u64();
  m.header.sender = static_cast<std::int32_t>(r.u32());
  m.header.receiver = static_cast<std::int32_t>(r.u32());
  switch (static_cast<MsgKind>(tag)) {
    case MsgKind::kModelsAndPointer: {
      ModelsAndPointer mp;
      const auto n = r.u64();
      if (n > 4096) throw ShapeError("queue too long");
      for (std::uint64_t i = 0; i < n; ++i) mp.checkpoints.push_back(get_checkpoint(r));
      mp.bm_index = r.u64();
      mp.handoff_blind = r.fp();
      m.body = std::move(mp);
      break;
    }
    case MsgKind::kHashBundle: {
      HashBundle h;
      h.checkpoint_id = r.u64();
      h.checkpoint_round = r.i64();
      h.model_hash = get_digest(r);
      h.update_hash = get_digest(r);
      h.dct_hash = get_digest(r);
      m.body = h;
      break;
    }
    case MsgKind::kTrainActivations: m.body = TrainActivations{get_matrix(r)}; break;
    case MsgKind::kTrainGradients: m.body = TrainGradients{get_matrix(r)}; break;
    case MsgKind::kProofFrame: m.body = ProofFrame{r.bytes()}; break;
    case MsgKind::kAbort: {
      Abort a;
      a.culprit = static_cast<std::int32_t>(r.u32());
      a.reason = r.str();
      m.body = std::move(a);
      break;
    }
    case MsgKind::kUseBackbone: m.body = UseBackbone{r.u64()}; break;
    case MsgKind::kEndTraining: m.body = EndTraining{}; break;
    default: throw ShapeError("unknown message tag " + std::to_string(tag));
  }
  r.expect_done();
  return m;
}

void MessageChannel::send(MsgBody body) { ep_.send(encode(RoundMessage{{round_, self_, peer_}, std::move(body)})); }

RoundMessage MessageChannel::recv() {
  RoundMessage m = decode_message(ep_.recv());
  if (m.header.round != round_) {
    throw ProtocolStateError("message for round " + std::to_string(m.header.round) + " during round " +
                             std::to_string(round_));
  }
  if (m.header.sender != peer_ || m.header.receiver != self_) throw ProtocolStateError("misaddressed message");
  if (auto* a = std::get_if<Abort>(&m.body)) throw TransportError("peer aborted: " + a->reason);
  return m;
}

Bytes FramedEndpoint::do_recv(zk::Millis timeout) {
  inner_.set_timeout(timeout);
  try {
    return ch_.recv_as<ProofFrame>().frame;
  } catch (const ProtocolStateError& e) {
    throw TransportError(e.what());
  } catch (const ShapeError& e) {
    throw TransportError(e.what());
  }
}

}  // namespace zksplit::proto
