#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "magpos/error.hpp"

namespace magpos::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses `host:port`; a bare `:port` or `port` binds/connects to 127.0.0.1.
inline Endpoint parse_endpoint(std::string_view text) {
  Endpoint ep;
  const auto colon = text.rfind(':');
  std::string_view port_text = text;
  if (colon != std::string_view::npos) {
    if (colon > 0) ep.host = std::string(text.substr(0, colon));
    port_text = text.substr(colon + 1);
  }
  if (port_text.empty()) throw Error(ErrorCode::kConfig, "endpoint '" + std::string(text) + "' has no port");
  int port = 0;
  for (char c : port_text) {
    if (c < '0' || c > '9') throw Error(ErrorCode::kConfig, "endpoint '" + std::string(text) + "': bad port");
    port = port * 10 + (c - '0');
    if (port > 65535) throw Error(ErrorCode::kConfig, "endpoint '" + std::string(text) + "': port out of range");
  }
  ep.port = port;
  return ep;
}

/// Owning file-descriptor wrapper for a stream socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  explicit operator bool() const { return valid(); }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  /// Writes the whole buffer; false on any error (peer gone, reset, timeout).
  bool send_all(std::string_view data) const {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n > 0) {
        sent += static_cast<std::size_t>(n);
        continue;
      }
      if (n < 0 && errno == EINTR) continue;
      if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
        pollfd p{fd_, POLLOUT, 0};
        if (::poll(&p, 1, 200) <= 0) return false;
        continue;
      }
      return false;
    }
    return true;
  }

  /// True when the peer has closed or reset the connection. Pending inbound data is left alone.
  bool peer_closed() const {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 0);
    if (r <= 0) return false;
    if (p.revents & (POLLERR | POLLHUP | POLLNVAL)) return true;
    char c;
    const ssize_t n = ::recv(fd_, &c, 1, MSG_PEEK | MSG_DONTWAIT);
    return n == 0 || (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR);
  }

  /// Reads what is available within `timeout_ms`. Returns nullopt on EOF or error, an empty
  /// string on timeout.
  std::optional<std::string> receive(int timeout_ms) const {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, timeout_ms);
    if (r == 0) return std::string();
    if (r < 0) return errno == EINTR ? std::optional<std::string>(std::string()) : std::nullopt;
    char buf[4096];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n > 0) return std::string(buf, static_cast<std::size_t>(n));
    if (n < 0 && (errno == EAGAIN || errno == EINTR)) return std::string();
    return std::nullopt;
  }

 private:
  int fd_ = -1;
};

namespace detail {

inline bool resolve_ipv4(const std::string& host, int port, sockaddr_in& out) {
  std::memset(&out, 0, sizeof out);
  out.sin_family = AF_INET;
  out.sin_port = htons(static_cast<uint16_t>(port));
  const std::string h = host.empty() || host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &out.sin_addr) == 1) return true;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || !res) return false;
  out.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return true;
}

}  // namespace detail

/// Connects with a bounded wait. Returns an invalid socket on failure.
inline Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout) {
  sockaddr_in addr{};
  if (!detail::resolve_ipv4(ep.host, ep.port, addr)) return {};
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s) return {};
  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc < 0 && errno != EINPROGRESS) return {};
  if (rc < 0) {
    pollfd p{s.fd(), POLLOUT, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return {};
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) return {};
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

/// Listening TCP socket. Port 0 picks an ephemeral port; see port().
class TcpListener {
 public:
  explicit TcpListener(const Endpoint& ep, int backlog = 4) {
    sockaddr_in addr{};
    if (!detail::resolve_ipv4(ep.host, ep.port, addr))
      throw Error(ErrorCode::kNetwork, "cannot resolve listen address " + ep.str());
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_) throw Error(ErrorCode::kNetwork, "socket(): " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
      throw Error(ErrorCode::kNetwork, "bind " + ep.str() + ": " + std::strerror(errno));
    if (::listen(sock_.fd(), backlog) < 0)
      throw Error(ErrorCode::kNetwork, "listen " + ep.str() + ": " + std::strerror(errno));
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  int port() const { return port_; }
  int fd() const { return sock_.fd(); }

  /// Waits up to `timeout_ms` for a connection; invalid socket on timeout.
  Socket accept(int timeout_ms) const {
    pollfd p{sock_.fd(), POLLIN, 0};
    if (::poll(&p, 1, timeout_ms) <= 0) return {};
    return Socket(::accept(sock_.fd(), nullptr, nullptr));
  }

 private:
  Socket sock_;
  int port_ = 0;
};

}  // namespace magpos::net
