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

// Shared fixtures for the test suites.

#include <memory>
#include <vector>

#include "icsfuzz/capture/pcap.hpp"
#include "icsfuzz/fuzz/campaign.hpp"
#include "icsfuzz/inference/analyze.hpp"
#include "icsfuzz/mockdevice/ide.hpp"
#include "icsfuzz/mockdevice/loopback.hpp"

namespace support {

using namespace icsfuzz;

/// Model learned from one IDE session per token value.
inline inference::ProtocolModel learn_model(std::vector<std::uint8_t> tokens = {0x48, 0x7C}) {
    std::vector<mock::DeviceConfig> devices;
    for (auto t : tokens) {
        mock::DeviceConfig c;
        c.token = t;
        devices.push_back(c);
    }
    return inference::analyze_captures({capture::write_capture(mock::record_ide_sessions(devices))});
}

inline mock::DeviceConfig device(std::set<mock::Vulnerability> v, std::uint8_t token = 0x48) {
    mock::DeviceConfig c;
    c.vulnerabilities = std::move(v);
    c.token = token;
    return c;
}

inline fuzz::CampaignConfig quick_config(std::uint64_t budget, std::uint64_t seed = 7) {
    fuzz::CampaignConfig c;
    c.target = "virtual";
    c.budget = budget;
    c.seed = seed;
    return c;
}

struct Exchange {
    Direction direction;
    Bytes bytes;
};

/// Target wrapper that logs all traffic, one list per connection.
class RecordingTarget final : public net::Target {
public:
    explicit RecordingTarget(net::Target& inner) : inner_(inner) {}

    std::unique_ptr<net::Connection> connect(Nanos timeout) override {
        auto c = inner_.connect(timeout);
        log.emplace_back();
        return std::make_unique<Conn>(std::move(c), log, log.size() - 1);
    }
    std::string describe() const override { return inner_.describe(); }
    bool restart() override { return inner_.restart(); }
    Clock& clock() override { return inner_.clock(); }

    std::vector<std::vector<Exchange>> log;

private:
    class Conn final : public net::Connection {
    public:
        Conn(std::unique_ptr<net::Connection> c, std::vector<std::vector<Exchange>>& log, std::size_t idx)
            : c_(std::move(c)), log_(log), idx_(idx) {}
        bool send(ByteView d) override {
            log_[idx_].push_back({Direction::ClientToServer, Bytes(d.begin(), d.end())});
            return c_->send(d);
        }
        net::RecvResult receive(Nanos t) override {
            auto r = c_->receive(t);
            if (r.event == net::TcpEvent::ResponseReceived) log_[idx_].push_back({Direction::ServerToClient, r.data});
            return r;
        }
        void close() override { c_->close(); }

    private:
        std::unique_ptr<net::Connection> c_;
        std::vector<std::vector<Exchange>>& log_;
        std::size_t idx_;
    };

    net::Target& inner_;
};

}  // namespace support
