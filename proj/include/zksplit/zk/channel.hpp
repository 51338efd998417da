#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zksplit/errors.hpp"

namespace zksplit::zk {

using Bytes = std::vector<std::uint8_t>;
using Millis = std::chrono::milliseconds;

inline constexpr Millis kDefaultTimeout{30'000};

enum class Direction : std::uint8_t { kSent = 0, kReceived = 1 };

/// Ordered, reliable message pipe between two parties. Messages are opaque byte strings; on the
/// wire each one is preceded by a 4-byte big-endian length, which the byte counters include.
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  void send(Bytes msg);
  /// Blocks until a message arrives. Throws TransportError on timeout or when the peer closed.
  Bytes recv();
  virtual void close() = 0;

  void set_timeout(Millis t) { timeout_ = t; }
  Millis timeout() const { return timeout_; }

  /// Observer for every message passing this endpoint, in either direction.
  void set_tap(std::function<void(Direction, std::span<const std::uint8_t>)> tap) { tap_ = std::move(tap); }

  std::uint64_t bytes_sent() const { return sent_; }
  std::uint64_t bytes_received() const { return received_; }

 protected:
  virtual void do_send(Bytes msg) = 0;
  virtual Bytes do_recv(Millis timeout) = 0;

 private:
  std::function<void(Direction, std::span<const std::uint8_t>)> tap_;
  Millis timeout_ = kDefaultTimeout;
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> received_{0};
};

/// Two connected in-process endpoints.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_pipe(Millis timeout = kDefaultTimeout);

/// Loopback TCP: a listener on 127.0.0.1 with an OS-chosen port.
class TcpListener {
 public:
  TcpListener();
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Endpoint> accept(Millis timeout = kDefaultTimeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Endpoint> tcp_connect(const std::string& host, std::uint16_t port, Millis timeout = kDefaultTimeout);

/// A connected endpoint pair over loopback TCP.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_tcp_pair(Millis timeout = kDefaultTimeout);

// ---------------------------------------------------------------------------
// Proof frames

using SessionId = std::array<std::uint8_t, 16>;

enum class FrameType : std::uint8_t {
  kCommitBatch = 1,
  kChallengeR = 2,
  kChallengeBatch = 3,
  kOpenBatch = 4,
  kAssertResult = 5,
  kAbort = 6,
};

const char* to_string(FrameType t);

struct Frame {
  SessionId session{};
  FrameType type = FrameType::kAbort;
  Bytes payload;
};

Bytes encode_frame(const Frame& f);
Frame decode_frame(std::span<const std::uint8_t> bytes);

}  // namespace zksplit::zk
