// Copyright 2026 The SplitFSS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// TCP transport (POSIX sockets).

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <string>
#include <thread>

#include "splitfss/net/channel.hpp"

namespace splitfss::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw ConfigError("endpoint '" + s + "' lacks a port");
  Endpoint e;
  e.host = s.substr(0, colon);
  const int port = std::stoi(s.substr(colon + 1));
  if (port <= 0 || port > 65535) throw ConfigError("endpoint '" + s + "': bad port");
  e.port = static_cast<std::uint16_t>(port);
  return e;
}

namespace detail {

inline std::string errno_str() { return std::strerror(errno); }

inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

inline sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw ChannelError("cannot resolve host '" + ep.host + "'");
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

}  // namespace detail

class TcpChannel : public Channel {
 public:
  TcpChannel(int fd, Party self, Party peer, std::shared_ptr<ByteMeter> meter)
      : Channel(self, peer, std::move(meter)), fd_(fd) {
    detail::set_nodelay(fd_);
  }
  ~TcpChannel() override { close(); }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 protected:
  void transmit(Bytes frame) override { write_all(frame.data(), frame.size()); }

  Bytes receive() override {
    Bytes frame(kHeaderSize);
    read_all(frame.data(), kHeaderSize);
    const FrameHeader h = decode_header(frame);
    frame.resize(kHeaderSize + h.payload_len);
    read_all(frame.data() + kHeaderSize, h.payload_len);
    return frame;
  }

 private:
  void write_all(const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw ChannelError("send to " + std::string(party_name(peer())) + " failed: " +
                           detail::errno_str());
      }
      p += k;
      n -= static_cast<std::size_t>(k);
    }
  }
  void read_all(std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t k = ::recv(fd_, p, n, 0);
      if (k == 0) throw ChannelError(std::string(party_name(peer())) + " closed the connection");
      if (k < 0) {
        if (errno == EINTR) continue;
        throw ChannelError("recv from " + std::string(party_name(peer())) + " failed: " +
                           detail::errno_str());
      }
      p += k;
      n -= static_cast<std::size_t>(k);
    }
  }

  int fd_;
};

/// Connects to ep, retrying refused connections until the deadline.
inline int tcp_connect(const Endpoint& ep, std::chrono::milliseconds deadline) {
  const auto addr = detail::resolve(ep);
  const auto until = std::chrono::steady_clock::now() + deadline;
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ChannelError("socket: " + detail::errno_str());
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) return fd;
    const int err = errno;
    ::close(fd);
    if (std::chrono::steady_clock::now() >= until) {
      throw ChannelError("connect to " + ep.str() + " failed: " + std::strerror(err));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& ep) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ChannelError("socket: " + detail::errno_str());
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    auto addr = detail::resolve(ep);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string err = detail::errno_str();
      ::close(fd_);
      throw ChannelError("bind " + ep.str() + " failed: " + err);
    }
    if (::listen(fd_, 16) != 0) {
      ::close(fd_);
      throw ChannelError("listen failed: " + detail::errno_str());
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }

  int accept_fd() {
    for (;;) {
      const int fd = ::accept(fd_, nullptr, nullptr);
      if (fd >= 0) return fd;
      if (errno != EINTR) throw ChannelError("accept failed: " + detail::errno_str());
    }
  }

  /// As accept_fd, giving up after `deadline` with a ChannelError.
  int accept_fd(std::chrono::milliseconds deadline) {
    const auto until = std::chrono::steady_clock::now() + deadline;
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        throw ChannelError("no connection on port " + std::to_string(port_) + " within " +
                           std::to_string(deadline.count()) + " ms");
      }
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno != EINTR) throw ChannelError("poll failed: " + detail::errno_str());
      if (r > 0) return accept_fd();
    }
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace splitfss::net
