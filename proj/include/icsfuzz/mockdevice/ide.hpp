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

// Reference client standing in for the engineering workstation: performs the
// handshake, issues a scripted command list and records the exchange as
// packet records.

#include <vector>

#include "icsfuzz/capture/synth.hpp"
#include "icsfuzz/mockdevice/device.hpp"

namespace icsfuzz::mock {

struct IdeCommand {
    std::uint16_t subcode = wire::kSubStatus;
    std::uint16_t address = 0;
    std::uint16_t value = 0;
};

/// Status poll, variable read, variable write, reset.
inline std::vector<IdeCommand> default_ide_script() {
    return {{wire::kSubStatus, 0, 0}, {wire::kSubRead, 0x0001, 0}, {wire::kSubWrite, 0x0001, 0x002a}, {wire::kSubReset, 0, 0}};
}

inline constexpr Nanos kIdeStep = std::chrono::milliseconds(5);

/// Runs one session against a fresh device and returns its packets.
/// Throws Error when the device does not answer as the script expects.
inline std::vector<capture::PacketRecord> record_ide_session(const DeviceConfig& config,
                                                             const std::vector<IdeCommand>& script, Nanos start,
                                                             capture::Endpoint client, capture::Endpoint server) {
    DeviceCore dev(config, start);
    Nanos t = start;
    capture::ConversationBuilder conv(client, server, t);
    if (!dev.connect(t)) throw Error("device refused the recording session");
    auto exchange = [&](const Bytes& req) -> std::vector<Bytes> {
        t += kIdeStep;
        conv.send(Direction::ClientToServer, req, t);
        auto out = dev.receive(t, req);
        for (const auto& r : out.replies) {
            t += kIdeStep;
            conv.send(Direction::ServerToClient, r, t);
        }
        return out.replies;
    };
    auto resp = exchange(wire::init_request());
    if (resp.size() != 1 || resp[0].size() != wire::kInitResponseLen) throw Error("init was not answered");
    std::uint8_t token = resp[0][wire::kInitTokenOffset];
    resp = exchange(wire::ack(token));
    if (resp.size() != 1 || wire::reply_status(resp[0]) != wire::kStatusOk) throw Error("ack was rejected");
    for (const auto& c : script) {
        resp = exchange(wire::command(c.subcode, token, c.address, c.value));
        if (resp.size() != 1 || wire::reply_status(resp[0]) != wire::kStatusOk) throw Error("scripted command failed");
        if (c.subcode == wire::kSubReset) break;
    }
    t += kIdeStep;
    conv.close(t);
    return conv.records();
}

/// One session per config, each from its own client port, one second apart.
inline std::vector<capture::PacketRecord> record_ide_sessions(const std::vector<DeviceConfig>& configs,
                                                              const std::vector<IdeCommand>& script = default_ide_script(),
                                                              Nanos start = std::chrono::seconds(1'700'000'000)) {
    std::vector<capture::PacketRecord> all;
    capture::Endpoint server{0xc0a80002, 1962};
    for (std::size_t i = 0; i < configs.size(); ++i) {
        server.port = configs[i].listen_port;
        capture::Endpoint client{0xc0a80064, static_cast<std::uint16_t>(50000 + i)};
        auto recs = record_ide_session(configs[i], script, start + std::chrono::seconds(i), client, server);
        all.insert(all.end(), recs.begin(), recs.end());
    }
    return all;
}

}  // namespace icsfuzz::mock
