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

// Connection abstractions shared by the fuzzer, the replayer and the
// in-process device target.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icsfuzz/bytes.hpp"
#include "icsfuzz/capture/framing.hpp"
#include "icsfuzz/clock.hpp"
#include "icsfuzz/error.hpp"
#include "icsfuzz/monitor/edges.hpp"

namespace icsfuzz::net {

enum class TcpEvent : std::uint8_t { ResponseReceived, Timeout, ConnectionReset, ConnectionClosed };

inline std::string to_string(TcpEvent e) {
    switch (e) {
        case TcpEvent::ResponseReceived: return "ResponseReceived";
        case TcpEvent::Timeout: return "Timeout";
        case TcpEvent::ConnectionReset: return "ConnectionReset";
        case TcpEvent::ConnectionClosed: return "ConnectionClosed";
    }
    return "?";
}

struct RecvResult {
    TcpEvent event = TcpEvent::Timeout;
    Bytes data;  // non-empty iff event == ResponseReceived
};

class Connection {
public:
    virtual ~Connection() = default;
    /// Returns false when the peer has already gone away.
    virtual bool send(ByteView data) = 0;
    /// Waits up to timeout for at least one byte.
    virtual RecvResult receive(Nanos timeout) = 0;
    virtual void close() = 0;
};

class Target {
public:
    virtual ~Target() = default;
    /// Throws ConnectFailed.
    virtual std::unique_ptr<Connection> connect(Nanos timeout) = 0;
    virtual std::string describe() const = 0;
    /// Brings a dead target back; false when no restart mechanism exists.
    virtual bool restart() { return false; }
    virtual Clock& clock() = 0;
};

/// Stream of output edges observed from the target.
class EdgeSource {
public:
    virtual ~EdgeSource() = default;
    /// Edges that became available up to now, in order.
    virtual std::vector<monitor::Edge> poll(Nanos now) = 0;
};

/// Reads one message. With a length field, bytes accumulate until a full
/// frame is present; without one, the first chunk received is the message.
/// Bytes past the frame end are kept in `pending` for the next call.
inline RecvResult read_message(Connection& conn, Clock& clock, const std::optional<capture::LengthFieldSpec>& framing,
                               Nanos timeout, Bytes& pending) {
    Nanos deadline = clock.now() + timeout;
    auto complete = [&]() -> std::optional<std::size_t> {
        if (pending.empty()) return std::nullopt;
        if (!framing) return pending.size();
        if (pending.size() < framing->end()) return std::nullopt;
        auto declared = static_cast<std::size_t>(framing->decode(pending));
        if (declared < framing->end()) return pending.size();  // unparseable, hand back as is
        if (pending.size() >= declared) return declared;
        return std::nullopt;
    };
    for (;;) {
        if (auto n = complete()) {
            RecvResult r{TcpEvent::ResponseReceived, Bytes(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(*n))};
            pending.erase(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(*n));
            return r;
        }
        Nanos left = deadline - clock.now();
        if (left <= Nanos(0)) {
            if (!pending.empty()) {
                RecvResult r{TcpEvent::ResponseReceived, std::move(pending)};
                pending.clear();
                return r;
            }
            return {};
        }
        auto r = conn.receive(left);
        if (r.event != TcpEvent::ResponseReceived) {
            if (!pending.empty()) {
                RecvResult partial{TcpEvent::ResponseReceived, std::move(pending)};
                pending.clear();
                return partial;
            }
            return r;
        }
        pending.insert(pending.end(), r.data.begin(), r.data.end());
    }
}

}  // namespace icsfuzz::net
