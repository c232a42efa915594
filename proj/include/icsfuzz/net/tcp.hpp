// Copyright 2026 The icsfuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// POSIX TCP client and listener helpers.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <functional>
#include <memory>
#include <string>

#include "icsfuzz/capture/packet.hpp"
#include "icsfuzz/net/transport.hpp"

namespace icsfuzz::net {

using capture::Endpoint;

/// Parses "a.b.c.d:port".
inline Endpoint parse_endpoint(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos) throw ConfigError("endpoint '" + text + "' must be ip:port");
    in_addr addr{};
    if (inet_pton(AF_INET, text.substr(0, colon).c_str(), &addr) != 1) {
        throw ConfigError("endpoint '" + text + "' has an invalid IPv4 address");
    }
    std::string port = text.substr(colon + 1);
    if (port.empty() || port.size() > 5 || port.find_first_not_of("0123456789") != std::string::npos ||
        std::stoul(port) > 65535) {
        throw ConfigError("endpoint '" + text + "' has an invalid port");
    }
    return {ntohl(addr.s_addr), static_cast<std::uint16_t>(std::stoul(port))};
}

inline sockaddr_in to_sockaddr(const Endpoint& ep) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(ep.port);
    sa.sin_addr.s_addr = htonl(ep.ip);
    return sa;
}

inline int poll_ms(Nanos d) {
    if (d <= Nanos(0)) return 0;
    return static_cast<int>(std::min<Nanos::rep>((d.count() + 999'999) / 1'000'000, 60'000));
}

/// Owns a socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.release()) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) reset(o.release());
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { reset(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    int release() {
        int f = fd_;
        fd_ = -1;
        return f;
    }
    void reset(int fd = -1) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = fd;
    }

private:
    int fd_ = -1;
};

class TcpConnection final : public Connection {
public:
    explicit TcpConnection(Socket s) : sock_(std::move(s)) {}

    bool send(ByteView data) override {
        std::size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(sock_.fd(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                if (errno == EAGAIN || errno == EWOULDBLOCK) {
                    pollfd p{sock_.fd(), POLLOUT, 0};
                    ::poll(&p, 1, 1000);
                    continue;
                }
                return false;
            }
            off += static_cast<std::size_t>(n);
        }
        return true;
    }

    RecvResult receive(Nanos timeout) override {
        pollfd p{sock_.fd(), POLLIN, 0};
        int r;
        do {
            r = ::poll(&p, 1, poll_ms(timeout));
        } while (r < 0 && errno == EINTR);
        if (r == 0) return {TcpEvent::Timeout, {}};
        std::uint8_t buf[65536];
        ssize_t n = ::recv(sock_.fd(), buf, sizeof buf, 0);
        if (n > 0) return {TcpEvent::ResponseReceived, Bytes(buf, buf + n)};
        if (n == 0) return {TcpEvent::ConnectionClosed, {}};
        if (errno == EAGAIN || errno == EWOULDBLOCK) return {TcpEvent::Timeout, {}};
        return {TcpEvent::ConnectionReset, {}};
    }

    void close() override { sock_.reset(); }

private:
    Socket sock_;
};

/// Non-blocking connect bounded by timeout.
inline Socket tcp_connect(const Endpoint& ep, Nanos timeout) {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
    if (!s.valid()) throw ConnectFailed("socket(): " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto sa = to_sockaddr(ep);
    if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
        if (errno != EINPROGRESS) {
            throw ConnectFailed("connect to " + ep.to_string() + ": " + std::strerror(errno));
        }
        pollfd p{s.fd(), POLLOUT, 0};
        int r;
        do {
            r = ::poll(&p, 1, poll_ms(timeout));
        } while (r < 0 && errno == EINTR);
        if (r == 0) throw ConnectFailed("connect to " + ep.to_string() + ": timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) throw ConnectFailed("connect to " + ep.to_string() + ": " + std::strerror(err));
    }
    return s;
}

class TcpTarget final : public Target {
public:
    /// restart_hook, when set, brings a dead device back (e.g. a power
    /// switch script) and reports success.
    explicit TcpTarget(Endpoint ep, std::function<bool()> restart_hook = {}) : ep_(ep), restart_(std::move(restart_hook)) {}

    std::unique_ptr<Connection> connect(Nanos timeout) override {
        return std::make_unique<TcpConnection>(tcp_connect(ep_, timeout));
    }
    std::string describe() const override { return ep_.to_string(); }
    bool restart() override { return restart_ && restart_(); }
    Clock& clock() override { return clock_; }
    const Endpoint& endpoint() const { return ep_; }

private:
    Endpoint ep_;
    std::function<bool()> restart_;
    RealClock clock_;
};

/// Listening socket on addr:port; throws Error when the port is taken.
inline Socket tcp_listen(const std::string& addr, std::uint16_t port, int backlog = 8) {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) throw Error("socket(): " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (inet_pton(AF_INET, addr.c_str(), &sa.sin_addr) != 1) throw ConfigError("invalid bind address '" + addr + "'");
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
        throw Error("cannot bind " + addr + ":" + std::to_string(port) + ": " + std::strerror(errno));
    }
    if (::listen(s.fd(), backlog) < 0) throw Error("listen(): " + std::string(std::strerror(errno)));
    return s;
}

inline std::uint16_t local_port(const Socket& s) {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&sa), &len);
    return ntohs(sa.sin_port);
}

}  // namespace icsfuzz::net
