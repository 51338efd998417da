#include "zksplit/zk/channel.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

namespace zksplit::zk {

void Endpoint::send(Bytes msg) {
  if (tap_) tap_(Direction::kSent, msg);
  sent_ += msg.size() + 4;
  do_send(std::move(msg));
}

Bytes Endpoint::recv() {
  Bytes msg = do_recv(timeout_);
  received_ += msg.size() + 4;
  if (tap_) tap_(Direction::kReceived, msg);
  return msg;
}

namespace {

struct Mailbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> queue;
  bool closed = false;
};

class PipeEndpoint : public Endpoint {
 public:
  PipeEndpoint(std::shared_ptr<Mailbox> in, std::shared_ptr<Mailbox> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeEndpoint() override { close(); }

  void close() override {
    for (auto* box : {in_.get(), out_.get()}) {
      std::lock_guard lock(box->mu);
      box->closed = true;
      box->cv.notify_all();
    }
  }

 protected:
  void do_send(Bytes msg) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw TransportError("send on closed channel");
    out_->queue.push_back(std::move(msg));
    out_->cv.notify_one();
  }

  Bytes do_recv(Millis timeout) override {
    std::unique_lock lock(in_->mu);
    if (!in_->cv.wait_for(lock, timeout, [&] { return !in_->queue.empty() || in_->closed; })) {
      throw TransportError("receive timed out");
    }
    // Drain what was sent before the close.
    if (in_->queue.empty()) throw TransportError("peer closed the channel");
    Bytes msg = std::move(in_->queue.front());
    in_->queue.pop_front();
    return msg;
  }

 private:
  std::shared_ptr<Mailbox> in_;
  std::shared_ptr<Mailbox> out_;
};

class TcpEndpoint : public Endpoint {
 public:
  explicit TcpEndpoint(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpEndpoint() override {
    close();
    if (fd_ >= 0) ::close(fd_);
  }

  void close() override {
    std::lock_guard lock(mu_);
    if (!shut_ && fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      shut_ = true;
    }
  }

 protected:
  void do_send(Bytes msg) override {
    if (msg.size() > 0xffffffffu) throw TransportError("message too large");
    const auto n = static_cast<std::uint32_t>(msg.size());
    const std::uint8_t len[4] = {static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                                 static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
    write_all(len, 4);
    write_all(msg.data(), msg.size());
  }

  Bytes do_recv(Millis timeout) override {
    std::uint8_t len[4];
    read_all(len, 4, timeout);
    const std::uint32_t n = (std::uint32_t{len[0]} << 24) | (std::uint32_t{len[1]} << 16) |
                            (std::uint32_t{len[2]} << 8) | std::uint32_t{len[3]};
    Bytes msg(n);
    read_all(msg.data(), n, timeout);
    return msg;
  }

 private:
  void write_all(const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t w = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (w < 0 && errno == EINTR) continue;
      if (w <= 0) throw TransportError(std::string("tcp send: ") + std::strerror(errno));
      p += w;
      n -= static_cast<std::size_t>(w);
    }
  }

  void read_all(std::uint8_t* p, std::size_t n, Millis timeout) {
    while (n > 0) {
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (rc == 0) throw TransportError("receive timed out");
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("tcp poll: ") + std::strerror(errno));
      }
      const ssize_t r = ::recv(fd_, p, n, 0);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) throw TransportError("peer closed the channel");
      p += r;
      n -= static_cast<std::size_t>(r);
    }
  }

  int fd_;
  std::mutex mu_;
  bool shut_ = false;
};

}  // namespace

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_pipe(Millis timeout) {
  auto a_to_b = std::make_shared<Mailbox>();
  auto b_to_a = std::make_shared<Mailbox>();
  auto a = std::make_unique<PipeEndpoint>(b_to_a, a_to_b);
  auto b = std::make_unique<PipeEndpoint>(a_to_b, b_to_a);
  a->set_timeout(timeout);
  b->set_timeout(timeout);
  return {std::move(a), std::move(b)};
}

TcpListener::TcpListener() {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
    ::close(fd_);
    throw TransportError("bind/listen failed");
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Endpoint> TcpListener::accept(Millis timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  if (::poll(&pfd, 1, static_cast<int>(timeout.count())) <= 0) throw TransportError("accept timed out");
  const int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) throw TransportError("accept failed");
  auto ep = std::make_unique<TcpEndpoint>(c);
  ep->set_timeout(timeout);
  return ep;
}

std::unique_ptr<Endpoint> tcp_connect(const std::string& host, std::uint16_t port, Millis timeout) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw TransportError("bad address " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw TransportError("connect failed");
  }
  auto ep = std::make_unique<TcpEndpoint>(fd);
  ep->set_timeout(timeout);
  return ep;
}

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> make_tcp_pair(Millis timeout) {
  TcpListener listener;
  auto client = tcp_connect("127.0.0.1", listener.port(), timeout);
  auto server = listener.accept(timeout);
  return {std::move(client), std::move(server)};
}

const char* to_string(FrameType t) {
  switch (t) {
    case FrameType::kCommitBatch: return "COMMIT_BATCH";
    case FrameType::kChallengeR: return "CHALLENGE_R";
    case FrameType::kChallengeBatch: return "CHALLENGE_BATCH";
    case FrameType::kOpenBatch: return "OPEN_BATCH";
    case FrameType::kAssertResult: return "ASSERT_RESULT";
    case FrameType::kAbort: return "ABORT";
  }
  return "?";
}

Bytes encode_frame(const Frame& f) {
  Bytes out;
  out.reserve(17 + f.payload.size());
  out.insert(out.end(), f.session.begin(), f.session.end());
  out.push_back(static_cast<std::uint8_t>(f.type));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 17) throw ShapeError("frame shorter than its header");
  Frame f;
  std::copy_n(bytes.begin(), 16, f.session.begin());
  const std::uint8_t t = bytes[16];
  if (t < 1 || t > 6) throw ShapeError("unknown frame type");
  f.type = static_cast<FrameType>(t);
  f.payload.assign(bytes.begin() + 17, bytes.end());
  return f;
}

}  // namespace zksplit::zk
