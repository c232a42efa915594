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

// TCP host for DeviceCore: one protocol connection at a time on listen_port,
// edge records for any number of readers on scope_port.

#include <sys/socket.h>

#include <atomic>
#include <mutex>
#include <thread>
#include <vector>

#include "icsfuzz/clock.hpp"
#include "icsfuzz/mockdevice/device.hpp"
#include "icsfuzz/net/tcp.hpp"

namespace icsfuzz::mock {

class DeviceServer {
public:
    /// Binds both ports; throws Error when either is taken. Port 0 picks a
    /// free port (see protocol_port()/scope_port()).
    explicit DeviceServer(DeviceConfig config, Clock* clock = nullptr)
        : config_(std::move(config)), clock_(clock ? clock : &real_clock_) {
        config_.validate();
        listener_ = net::tcp_listen(config_.bind_address, config_.listen_port);
        protocol_port_ = net::local_port(listener_);
        scope_listener_ = net::tcp_listen(config_.bind_address, config_.scope_port);
        scope_port_ = net::local_port(scope_listener_);
        core_ = std::make_unique<DeviceCore>(config_, clock_->now());
    }

    ~DeviceServer() { stop(); }

    DeviceServer(const DeviceServer&) = delete;
    DeviceServer& operator=(const DeviceServer&) = delete;

    std::uint16_t protocol_port() const { return protocol_port_; }
    std::uint16_t scope_port() const { return scope_port_; }

    void start() {
        if (running_.exchange(true)) return;
        protocol_thread_ = std::thread([this] { protocol_loop(); });
        edge_thread_ = std::thread([this] { edge_loop(); });
    }

    /// Stops both activities and flushes the edges due so far.
    void stop() {
        if (!running_.exchange(false)) return;
        if (protocol_thread_.joinable()) protocol_thread_.join();
        if (edge_thread_.joinable()) edge_thread_.join();
        flush_edges();
        scope_clients_.clear();
    }

    Phase phase() const {
        std::lock_guard lock(mu_);
        return core_->phase();
    }

    std::size_t edges_sent() const { return edges_sent_; }

private:
    void protocol_loop() {
        net::Socket client;
        Bytes buf(65536);
        while (running_) {
            Phase ph = phase();
            bool down = ph == Phase::Rebooting || ph == Phase::Crashed;
            if (down && listener_.valid()) {
                listener_.reset();
                if (client.valid()) client.reset();
            } else if (!down && !listener_.valid()) {
                try {
                    listener_ = net::tcp_listen(config_.bind_address, protocol_port_);
                } catch (const Error&) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(10));
                    continue;
                }
            }
            if (!client.valid()) {
                if (!listener_.valid()) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(5));
                    continue;
                }
                pollfd p{listener_.fd(), POLLIN, 0};
                if (::poll(&p, 1, 20) <= 0) continue;
                net::Socket s(::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC));
                if (!s.valid()) continue;
                std::lock_guard lock(mu_);
                if (core_->connect(clock_->now())) client = std::move(s);
                continue;
            }
            int wait_ms = 20;
            {
                std::lock_guard lock(mu_);
                if (auto d = core_->rx_deadline()) wait_ms = std::min(wait_ms, net::poll_ms(*d - clock_->now()));
            }
            pollfd p{client.fd(), POLLIN, 0};
            int r = ::poll(&p, 1, wait_ms);
            DeviceOutput out;
            bool gone = false;
            if (r > 0) {
                ssize_t n = ::recv(client.fd(), buf.data(), buf.size(), 0);
                std::lock_guard lock(mu_);
                if (n > 0) {
                    out = core_->receive(clock_->now(), ByteView(buf.data(), static_cast<std::size_t>(n)));
                } else {
                    core_->disconnect(clock_->now());
                    gone = true;
                }
            } else {
                std::lock_guard lock(mu_);
                out = core_->poll(clock_->now());
            }
            if (gone) {
                client.reset();
                continue;
            }
            if (out.reset) {
                linger lg{1, 0};
                ::setsockopt(client.fd(), SOL_SOCKET, SO_LINGER, &lg, sizeof lg);
                client.reset();
                continue;
            }
            for (const auto& rep : out.replies) {
                if (::send(client.fd(), rep.data(), rep.size(), MSG_NOSIGNAL) < 0) break;
            }
            if (out.close) {
                ::shutdown(client.fd(), SHUT_RDWR);
                client.reset();
            }
        }
    }

    void edge_loop() {
        while (running_) {
            accept_scope_clients();
            std::optional<Nanos> next;
            {
                std::lock_guard lock(mu_);
                next = core_->next_deadline();
            }
            flush_edges();
            Nanos wait = std::chrono::milliseconds(10);
            if (next) wait = std::clamp(*next - clock_->now(), Nanos(0), wait);
            if (wait > Nanos(0)) std::this_thread::sleep_for(wait);
        }
    }

    void accept_scope_clients() {
        pollfd p{scope_listener_.fd(), POLLIN, 0};
        while (::poll(&p, 1, 0) > 0) {
            net::Socket s(::accept4(scope_listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC));
            if (!s.valid()) break;
            scope_clients_.push_back(std::move(s));
        }
    }

    void flush_edges() {
        std::vector<monitor::Edge> edges;
        {
            std::lock_guard lock(mu_);
            core_->advance_to(clock_->now());
            edges = core_->take_edges();
        }
        if (edges.empty()) return;
        std::string text;
        for (const auto& e : edges) text += monitor::format_edge(e);
        edges_sent_ += edges.size();
        for (auto it = scope_clients_.begin(); it != scope_clients_.end();) {
            if (::send(it->fd(), text.data(), text.size(), MSG_NOSIGNAL) < 0) {
                it = scope_clients_.erase(it);
            } else {
                ++it;
            }
        }
    }

    DeviceConfig config_;
    RealClock real_clock_;
    Clock* clock_;
    mutable std::mutex mu_;
    std::unique_ptr<DeviceCore> core_;
    net::Socket listener_;
    net::Socket scope_listener_;
    std::uint16_t protocol_port_ = 0;
    std::uint16_t scope_port_ = 0;
    std::vector<net::Socket> scope_clients_;
    std::atomic<bool> running_{false};
    std::atomic<std::size_t> edges_sent_{0};
    std::thread protocol_thread_;
    std::thread edge_thread_;
};

}  // namespace icsfuzz::mock
