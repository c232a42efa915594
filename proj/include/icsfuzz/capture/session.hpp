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

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "icsfuzz/bytes.hpp"
#include "icsfuzz/capture/packet.hpp"

namespace icsfuzz {

enum class Direction : std::uint8_t { ClientToServer = 0, ServerToClient = 1 };

inline std::string_view to_string(Direction d) {
    return d == Direction::ClientToServer ? "c2s" : "s2c";
}

/// One application-layer request or response.
struct Message {
    Direction direction = Direction::ClientToServer;
    Nanos timestamp{0};
    Bytes payload;
    std::size_t index = 0;

    friend bool operator==(const Message&, const Message&) = default;
};

}  // namespace icsfuzz

namespace icsfuzz::capture {

/// Contiguous new payload contributed by one TCP segment, in stream order.
struct StreamChunk {
    Nanos timestamp{0};
    std::uint64_t stream_offset = 0;
    Bytes data;
};

struct TcpSession {
    std::uint64_t session_id = 0;
    Endpoint client;
    Endpoint server;
    /// False when no SYN was observed and roles came from the port heuristic.
    bool roles_from_syn = false;
    std::vector<Message> messages;
    std::array<std::vector<StreamChunk>, 2> chunks;

    const std::vector<StreamChunk>& chunks_for(Direction d) const { return chunks[static_cast<std::size_t>(d)]; }

    Bytes stream(Direction d) const {
        Bytes out;
        for (const auto& c : chunks_for(d)) out.insert(out.end(), c.data.begin(), c.data.end());
        return out;
    }
};

}  // namespace icsfuzz::capture
