#pragma once

// Line-oriented scoring protocol over TCP.
//
//   client                               server
//   INFO                                 OK info <max_order> <N>, then N lines "<id> <token>"
//   CTX <source ids...>                  (no reply)
//   REUSE <iteration>                    (no reply; applies to the next SCORE)
//   SCORE <batch> <count>                OK <batch> <count>, then count lines "<logp>"
//   <m> <l> <id_0> ... <id_m>  (x count) or ERR <batch> <message>
//
// Log-potentials use the same spelling as potential files ("-inf" allowed).

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cascade/error.hpp"
#include "cascade/provider.hpp"
#include "cascade/text.hpp"

namespace cascade {

namespace net {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

  void close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

/// Buffered line reader/writer over a connected socket.
class LineChannel {
 public:
  explicit LineChannel(Socket socket) : socket_(std::move(socket)) {}

  void set_timeout_ms(int ms) {
    timeval tv{};
    tv.tv_sec = ms / 1000;
    tv.tv_usec = (ms % 1000) * 1000;
    ::setsockopt(socket_.fd(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(socket_.fd(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  }

  void write(const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const auto n = ::send(socket_.fd(), data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  /// Next line without the trailing newline; empty optional on orderly EOF.
  std::optional<std::string> read_line() {
    while (true) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      char chunk[4096];
      const auto n = ::recv(socket_.fd(), chunk, sizeof chunk, 0);
      if (n == 0) {
        if (buffer_.empty()) return std::nullopt;
        throw TransportError("connection closed mid-line");
      }
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) throw TransportError("timed out waiting for scorer");
        throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string expect_line() {
    auto line = read_line();
    if (!line) throw TransportError("connection closed by peer");
    return *line;
  }

 private:
  Socket socket_;
  std::string buffer_;
};

/// "host:port" -> connected socket.
inline Socket connect_tcp(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) throw TransportError("endpoint must be host:port, got '" + endpoint + "'");
  const std::string host = endpoint.substr(0, colon);
  const std::string port = endpoint.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve " + endpoint + ": " + ::gai_strerror(rc));
  Socket sock;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      sock = std::move(s);
      break;
    }
  }
  ::freeaddrinfo(res);
  if (!sock.valid()) throw TransportError("cannot connect to " + endpoint);
  const int one = 1;
  ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return sock;
}

}  // namespace net

/// Client side: a PotentialProvider backed by a remote scorer. Wire access is
/// serialized internally, so concurrent score calls are safe.
class StreamScorer final : public PotentialProvider {
 public:
  explicit StreamScorer(const std::string& endpoint, int timeout_ms = 30000)
      : channel_(net::connect_tcp(endpoint)) {
    channel_.set_timeout_ms(timeout_ms);
    channel_.write("INFO\n");
    const auto head = split_ws(channel_.expect_line());
    if (head.size() != 4 || head[0] != "OK" || head[1] != "info") throw TransportError("bad INFO reply");
    const auto order = parse_int<int>(head[2]);
    const auto n = parse_int<std::size_t>(head[3]);
    if (!order || !n) throw TransportError("bad INFO reply");
    std::vector<std::string> tokens(*n);
    for (std::size_t i = 0; i < *n; ++i) {
      const auto line = channel_.expect_line();
      const auto f = split_ws(line);
      const auto id = f.size() == 2 ? parse_int<std::size_t>(f[0]) : std::nullopt;
      if (!id || *id != i) throw TransportError("bad vocabulary line in INFO reply");
      tokens[i] = std::string(f[1]);
    }
    vocab_ = Vocabulary::from_table(std::move(tokens));
    max_order_ = *order;
  }

  const Vocabulary& vocab() const override { return vocab_; }
  int max_order() const override { return max_order_; }

  double score(std::size_t position, std::span<const TokenId> span) const override {
    const SpanQuery q{position, Tokens(span.begin(), span.end())};
    return score_batch(std::span<const SpanQuery>(&q, 1)).front();
  }

  std::vector<double> score_batch(std::span<const SpanQuery> queries) const override {
    if (queries.empty()) return {};
    std::lock_guard lock(mutex_);
    const auto batch = next_batch_++;
    std::string frame;
    if (pending_reuse_) {
      frame += "REUSE " + std::to_string(*pending_reuse_) + "\n";
      pending_reuse_.reset();
    }
    frame += "SCORE " + std::to_string(batch) + " " + std::to_string(queries.size()) + "\n";
    for (const auto& q : queries) {
      if (q.tokens.empty()) throw Error("empty span query");
      frame += std::to_string(q.tokens.size() - 1) + " " + std::to_string(q.position);
      for (const auto t : q.tokens) frame += " " + std::to_string(t);
      frame += "\n";
    }
    channel_.write(frame);

    const auto head_line = channel_.expect_line();
    const auto head = split_ws(head_line);
    if (!head.empty() && head[0] == "ERR") throw TransportError("scorer error: " + head_line);
    if (head.size() != 3 || head[0] != "OK") throw TransportError("protocol violation: '" + head_line + "'");
    if (parse_int<std::uint64_t>(head[1]) != batch) throw TransportError("protocol violation: batch id mismatch");
    if (parse_int<std::size_t>(head[2]) != queries.size()) throw TransportError("protocol violation: count mismatch");
    std::vector<double> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto line = channel_.expect_line();
      const auto fields = split_ws(line);
      const auto v = fields.size() == 1 ? parse_double(fields[0]) : std::nullopt;
      if (!v || std::isnan(*v) || *v == std::numeric_limits<double>::infinity())
        throw TransportError("protocol violation: bad log-potential '" + line + "'");
      out.push_back(*v);
    }
    return out;
  }

  void set_context(std::span<const TokenId> source) override {
    std::lock_guard lock(mutex_);
    std::string frame = "CTX";
    for (const auto t : source) frame += " " + std::to_string(t);
    channel_.write(frame + "\n");
  }

  void begin_iteration(int iteration) override {
    std::lock_guard lock(mutex_);
    pending_reuse_ = iteration;
  }

 private:
  mutable net::LineChannel channel_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_batch_ = 1;
  mutable std::optional<int> pending_reuse_;
  Vocabulary vocab_;
  int max_order_ = 0;
};

inline std::unique_ptr<StreamScorer> stream_scorer(const std::string& endpoint, int timeout_ms = 30000) {
  return std::make_unique<StreamScorer>(endpoint, timeout_ms);
}

/// Server side: answers the protocol from an in-process provider. Used as a
/// differential-test double and by the `serve` CLI subcommand.
class StreamServer {
 public:
  /// Binds 127.0.0.1:port (0 picks a free port).
  StreamServer(PotentialProvider& provider, std::uint16_t port = 0) : provider_(&provider) {
    listener_ = net::Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener_.valid()) throw TransportError("socket() failed");
    const int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw TransportError("bind failed: " + std::string(std::strerror(errno)));
    if (::listen(listener_.fd(), 8) != 0) throw TransportError("listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  std::uint16_t port() const noexcept { return port_; }
  std::string endpoint() const { return "127.0.0.1:" + std::to_string(port_); }

  /// Number of REUSE hints seen so far.
  std::size_t reuse_hints() const noexcept { return reuse_hints_.load(); }

  /// Accepts connections one at a time until `max_connections` have been
  /// served (0 = forever) or stop() is called.
  void serve(std::size_t max_connections = 0) {
    for (std::size_t served = 0; max_connections == 0 || served < max_connections; ++served) {
      net::Socket client(::accept(listener_.fd(), nullptr, nullptr));
      if (!client.valid()) {
        if (stopping_) return;
        if (errno == EINTR) continue;
        throw TransportError("accept failed");
      }
      try {
        handle(net::LineChannel(std::move(client)));
      } catch (const TransportError&) {
        // client went away mid-frame
      }
    }
  }

  void stop() {
    stopping_ = true;
    listener_.shutdown();
  }

 private:
  void handle(net::LineChannel channel) {
    while (auto line = channel.read_line()) {
      const auto f = split_ws(*line);
      if (f.empty()) continue;
      if (f[0] == "INFO") {
        const auto& v = provider_->vocab();
        std::string out = "OK info " + std::to_string(provider_->max_order()) + " " + std::to_string(v.size()) + "\n";
        for (TokenId i = 0; i < v.size(); ++i) out += std::to_string(i) + " " + v.token(i) + "\n";
        channel.write(out);
      } else if (f[0] == "CTX") {
        Tokens ctx;
        for (std::size_t i = 1; i < f.size(); ++i)
          if (const auto id = parse_int<TokenId>(f[i])) ctx.push_back(*id);
        provider_->set_context(ctx);
      } else if (f[0] == "REUSE") {
        ++reuse_hints_;
        if (f.size() == 2)
          if (const auto it = parse_int<int>(f[1])) provider_->begin_iteration(*it);
      } else if (f[0] == "SCORE") {
        handle_score(channel, f);
      } else if (f[0] == "QUIT") {
        return;
      } else {
        channel.write("ERR 0 unknown command\n");
      }
    }
  }

  void handle_score(net::LineChannel& channel, const std::vector<std::string_view>& head) {
    const auto batch = head.size() == 3 ? parse_int<std::uint64_t>(head[1]) : std::nullopt;
    const auto count = head.size() == 3 ? parse_int<std::size_t>(head[2]) : std::nullopt;
    if (!batch || !count) {
      channel.write("ERR 0 malformed SCORE header\n");
      return;
    }
    std::vector<SpanQuery> queries;
    std::string problem;
    for (std::size_t i = 0; i < *count; ++i) {
      const auto line = channel.expect_line();
      const auto f = split_ws(line);
      const auto m = f.size() >= 3 ? parse_int<std::size_t>(f[0]) : std::nullopt;
      const auto l = f.size() >= 3 ? parse_int<std::size_t>(f[1]) : std::nullopt;
      if (!m || !l || f.size() != *m + 3) {
        problem = "malformed span line";
        continue;
      }
      if (static_cast<int>(*m) > provider_->max_order()) problem = "order " + std::to_string(*m) + " not supported";
      SpanQuery q{*l, {}};
      for (std::size_t j = 2; j < f.size(); ++j) {
        const auto id = parse_int<TokenId>(f[j]);
        if (!id || *id >= provider_->vocab().size()) problem = "unknown token id";
        q.tokens.push_back(id.value_or(0));
      }
      queries.push_back(std::move(q));
    }
    if (!problem.empty()) {
      channel.write("ERR " + std::to_string(*batch) + " " + problem + "\n");
      return;
    }
    std::vector<double> values;
    try {
      values = provider_->score_batch(queries);
    } catch (const std::exception& e) {
      channel.write("ERR " + std::to_string(*batch) + " " + e.what() + "\n");
      return;
    }
    std::string out = "OK " + std::to_string(*batch) + " " + std::to_string(values.size()) + "\n";
    for (const auto v : values) out += format_double(v) + "\n";
    channel.write(out);
  }

  PotentialProvider* provider_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> reuse_hints_{0};
};

}  // namespace cascade
