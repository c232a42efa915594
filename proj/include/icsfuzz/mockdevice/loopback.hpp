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

// In-process target: the device core behind a virtual clock. Every connect,
// send and receive costs one link latency of virtual time, so campaigns run
// deterministically and much faster than real time.

#include <deque>
#include <memory>

#include "icsfuzz/clock.hpp"
#include "icsfuzz/mockdevice/device.hpp"
#include "icsfuzz/net/transport.hpp"

namespace icsfuzz::mock {

inline constexpr Nanos kLoopbackLatency = std::chrono::milliseconds(1);

/// Device instance shared by the loopback connections and edge source.
class LoopbackDevice {
public:
    LoopbackDevice(DeviceConfig config, VirtualClock& clock)
        : config_(std::move(config)), clock_(clock), core_(std::make_unique<DeviceCore>(config_, clock.now())) {}

    DeviceCore& core() { return *core_; }
    VirtualClock& clock() { return clock_; }
    std::uint64_t generation() const { return generation_; }
    std::size_t restarts() const { return restarts_; }

    /// Process restart: a fresh core booting now. Open connections die.
    void restart() {
        auto pending = core_->take_edges();
        stash_.insert(stash_.end(), pending.begin(), pending.end());
        core_ = std::make_unique<DeviceCore>(config_, clock_.now());
        ++generation_;
        ++restarts_;
    }

    bool connect() {
        if (!core_->connect(clock_.now())) return false;
        ++generation_;
        return true;
    }

    std::vector<monitor::Edge> take_edges(Nanos now) {
        core_->advance_to(now);
        auto e = core_->take_edges();
        if (!stash_.empty()) {
            e.insert(e.begin(), stash_.begin(), stash_.end());
            stash_.clear();
        }
        return e;
    }

private:
    DeviceConfig config_;
    VirtualClock& clock_;
    std::unique_ptr<DeviceCore> core_;
    std::uint64_t generation_ = 0;
    std::size_t restarts_ = 0;
    std::vector<monitor::Edge> stash_;
};

class LoopbackConnection final : public net::Connection {
public:
    LoopbackConnection(LoopbackDevice& dev) : dev_(dev), gen_(dev.generation()) {}
    ~LoopbackConnection() override { close(); }

    bool send(ByteView data) override {
        auto& clk = dev_.clock();
        clk.advance(kLoopbackLatency);
        if (!alive()) return false;
        absorb(dev_.core().receive(clk.now(), data));
        return true;
    }

    net::RecvResult receive(Nanos timeout) override {
        auto& clk = dev_.clock();
        Nanos deadline = clk.now() + timeout;
        for (;;) {
            if (!inbox_.empty()) {
                clk.advance(kLoopbackLatency);
                net::RecvResult r{net::TcpEvent::ResponseReceived, std::move(inbox_.front())};
                inbox_.pop_front();
                return r;
            }
            if (reset_) return {net::TcpEvent::ConnectionReset, {}};
            if (closed_ || !alive()) return {net::TcpEvent::ConnectionClosed, {}};
            auto rx = dev_.core().rx_deadline();
            if (!rx || *rx > deadline) {
                clk.advance_to(deadline);
                return {net::TcpEvent::Timeout, {}};
            }
            clk.advance_to(*rx);
            absorb(dev_.core().poll(clk.now()));
        }
    }

    void close() override {
        if (alive()) dev_.core().disconnect(dev_.clock().now());
        closed_ = true;
    }

private:
    bool alive() const { return !closed_ && !reset_ && gen_ == dev_.generation() && dev_.core().connected(); }

    void absorb(DeviceOutput out) {
        for (auto& r : out.replies) inbox_.push_back(std::move(r));
        if (out.reset) {
            reset_ = true;
            inbox_.clear();
        }
        if (out.close) closed_ = true;
    }

    LoopbackDevice& dev_;
    std::uint64_t gen_;
    std::deque<Bytes> inbox_;
    bool closed_ = false;
    bool reset_ = false;
};

class LoopbackTarget final : public net::Target {
public:
    /// With allow_restart false the target behaves like hardware without a
    /// reset hook: once crashed it stays down.
    LoopbackTarget(DeviceConfig config, VirtualClock& clock, bool allow_restart = true)
        : dev_(std::move(config), clock), allow_restart_(allow_restart) {}

    std::unique_ptr<net::Connection> connect(Nanos) override {
        dev_.clock().advance(kLoopbackLatency);
        if (!dev_.connect()) throw ConnectFailed("virtual device refused the connection");
        return std::make_unique<LoopbackConnection>(dev_);
    }
    std::string describe() const override { return "virtual"; }
    bool restart() override {
        if (!allow_restart_) return false;
        dev_.restart();
        return true;
    }
    Clock& clock() override { return dev_.clock(); }
    LoopbackDevice& device() { return dev_; }

private:
    LoopbackDevice dev_;
    bool allow_restart_;
};

class LoopbackEdgeSource final : public net::EdgeSource {
public:
    explicit LoopbackEdgeSource(LoopbackDevice& dev) : dev_(dev) {}
    std::vector<monitor::Edge> poll(Nanos now) override { return dev_.take_edges(now); }

private:
    LoopbackDevice& dev_;
};

}  // namespace icsfuzz::mock
