#include "zksplit/zk/transcript.hpp"

#include <fstream>
#include <iterator>

#include "zksplit/zk/bytes.hpp"

namespace zksplit::zk {

namespace {

constexpr std::uint8_t kMagic[4] = {'Z', 'K', 'T', 'R'};
constexpr std::uint8_t kVersion = 1;

class ReplayEndpoint : public Endpoint {
 public:
  explicit ReplayEndpoint(const Transcript& t) : t_(t) {}
  void close() override {}

  bool exhausted() const { return at_ == t_.frames.size(); }
  const std::string& mismatch() const { return mismatch_; }

 protected:
  void do_send(Bytes msg) override {
    if (at_ == t_.frames.size() || t_.frames[at_].first != Direction::kSent) {
      fail("verifier sent a frame the transcript does not have at position " + std::to_string(at_));
    }
    if (t_.frames[at_].second != msg) fail("verifier frame " + std::to_string(at_) + " differs from the record");
    ++at_;
  }

  Bytes do_recv(Millis) override {
    if (at_ == t_.frames.size()) fail("transcript ended while the verifier waited for the prover");
    if (t_.frames[at_].first != Direction::kReceived) {
      fail("transcript has a verifier frame where the verifier expected one from the prover");
    }
    return t_.frames[at_++].second;
  }

 private:
  [[noreturn]] void fail(std::string why) {
    if (mismatch_.empty()) mismatch_ = why;
    throw TransportError(why);
  }

  const Transcript& t_;
  std::size_t at_ = 0;
  std::string mismatch_;
};

}  // namespace

Bytes encode(const Transcript& t) {
  ByteWriter w;
  w.raw(kMagic);
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(t.kind));
  w.raw(t.id);
  w.fp(t.secrets.delta);
  w.u64(t.secrets.dealer_seed);
  w.u64(t.secrets.challenge_seed);
  w.u64(t.chunk);
  w.bytes(t.statement);
  w.u64(t.frames.size());
  for (const auto& [dir, f] : t.frames) {
    w.u8(static_cast<std::uint8_t>(dir));
    w.bytes(f);
  }
  return w.take();
}

Transcript decode_transcript(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw ShapeError("not a transcript file");
  if (r.u8() != kVersion) throw ShapeError("unsupported transcript version");
  Transcript t;
  const auto kind = r.u8();
  if (kind < 1 || kind > 3) throw ShapeError("unknown statement kind");
  t.kind = static_cast<StatementKind>(kind);
  const auto id = r.raw(16);
  std::copy(id.begin(), id.end(), t.id.begin());
  t.secrets.delta = r.fp();
  t.secrets.dealer_seed = r.u64();
  t.secrets.challenge_seed = r.u64();
  t.chunk = r.u64();
  if (t.chunk == 0) throw ShapeError("zero chunk size");
  t.statement = r.bytes();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto dir = r.u8();
    if (dir > 1) throw ShapeError("bad frame direction");
    t.frames.emplace_back(static_cast<Direction>(dir), r.bytes());
  }
  r.expect_done();
  return t;
}

void save_transcript(const Transcript& t, const std::filesystem::path& path) {
  const auto bytes = encode(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Transcript load_transcript(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_transcript(bytes);
}

void record_into(Endpoint& ep, Transcript& t) {
  ep.set_tap([&t](Direction d, std::span<const std::uint8_t> msg) { t.frames.emplace_back(d, Bytes(msg.begin(), msg.end())); });
}

ReplayResult replay_transcript(const Transcript& t) {
  ReplayEndpoint ep(t);
  ReplayResult res;
  try {
    switch (t.kind) {
      case StatementKind::kPublish: {
        const auto [pub, vin] = decode_publish(t.statement);
        verify_publish(ep, t.id, t.secrets, pub, vin, t.chunk);
        break;
      }
      case StatementKind::kDefense: {
        const auto [pub, vin] = decode_defense(t.statement);
        verify_defense(ep, t.id, t.secrets, pub, vin, t.chunk);
        break;
      }
      case StatementKind::kFreivalds:
        verify_freivalds(ep, t.id, t.secrets, decode_freivalds(t.statement), t.chunk);
        break;
    }
  } catch (const ProofRejected& e) {
    res.reason = e.what();
    return res;
  } catch (const TransportError& e) {
    res.reason = ep.mismatch().empty() ? e.what() : ep.mismatch();
    return res;
  } catch (const Error& e) {
    res.reason = e.what();
    return res;
  }
  if (!ep.exhausted()) {
    res.reason = "transcript has frames after the verifier finished";
    return res;
  }
  res.accepted = true;
  return res;
}

Transcript simulate_transcript(StatementKind kind, SessionId id, const VerifierSecrets& s, Bytes statement,
                               std::uint64_t sim_seed, std::size_t chunk) {
  Transcript t{kind, id, s, chunk, std::move(statement), {}};
  SimulatedFrames f;
  switch (kind) {
    case StatementKind::kPublish: {
      const auto [pub, vin] = decode_publish(t.statement);
      f = simulate_publish(id, s, pub, vin, sim_seed, chunk);
      break;
    }
    case StatementKind::kDefense: {
      const auto [pub, vin] = decode_defense(t.statement);
      f = simulate_defense(id, s, pub, vin, sim_seed, chunk);
      break;
    }
    case StatementKind::kFreivalds:
      f = simulate_freivalds(id, s, decode_freivalds(t.statement), sim_seed, chunk);
      break;
  }
  t.frames = std::move(f.frames);
  return t;
}

}  // namespace zksplit::zk
