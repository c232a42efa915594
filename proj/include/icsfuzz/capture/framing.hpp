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

// Message boundary recovery inside a TCP byte stream.

#include <algorithm>
#include <optional>
#include <string>

#include "icsfuzz/capture/session.hpp"
#include "icsfuzz/error.hpp"

namespace icsfuzz::capture {

/// A length field that encodes the total message length (header included).
struct LengthFieldSpec {
    std::size_t offset = 0;
    std::size_t width = 2;
    Endian endian = Endian::Big;

    friend bool operator==(const LengthFieldSpec&, const LengthFieldSpec&) = default;

    std::size_t end() const { return offset + width; }
    bool covers(std::size_t pos) const { return pos >= offset && pos < end(); }
    std::uint64_t decode(ByteView message) const { return read_uint(message, offset, width, endian); }
    std::uint64_t max_value() const { return width >= 8 ? ~std::uint64_t{0} : (std::uint64_t{1} << (8 * width)) - 1; }
};

namespace detail {

inline void split_direction(const TcpSession& session, Direction dir, const LengthFieldSpec& spec,
                            std::vector<Message>& out) {
    const auto& chunks = session.chunks_for(dir);
    Bytes stream = session.stream(dir);
    // Timestamp of the chunk holding a given stream position.
    auto timestamp_at = [&](std::size_t pos) {
        std::size_t acc = 0;
        for (const auto& c : chunks) {
            if (pos < acc + c.data.size()) return c.timestamp;
            acc += c.data.size();
        }
        return chunks.empty() ? Nanos{0} : chunks.back().timestamp;
    };
    std::size_t pos = 0;
    while (pos < stream.size()) {
        std::size_t remaining = stream.size() - pos;
        if (remaining < spec.end()) {
            throw FramingViolation("stream ends inside a length field at offset " + std::to_string(pos));
        }
        std::uint64_t declared = spec.decode(ByteView(stream).subspan(pos));
        if (declared < spec.end()) {
            throw FramingViolation("declared length " + std::to_string(declared) + " shorter than the length field at offset " +
                                   std::to_string(pos));
        }
        if (declared > remaining) {
            throw FramingViolation("declared length " + std::to_string(declared) + " exceeds the " +
                                   std::to_string(remaining) + " bytes remaining at offset " + std::to_string(pos));
        }
        Message m;
        m.direction = dir;
        m.timestamp = timestamp_at(pos);
        m.payload.assign(stream.begin() + static_cast<std::ptrdiff_t>(pos),
                         stream.begin() + static_cast<std::ptrdiff_t>(pos + declared));
        out.push_back(std::move(m));
        pos += static_cast<std::size_t>(declared);
    }
}

inline void order_and_index(std::vector<Message>& msgs) {
    std::stable_sort(msgs.begin(), msgs.end(),
                     [](const Message& a, const Message& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 0; i < msgs.size(); ++i) msgs[i].index = i;
}

}  // namespace detail

/// Rebuilds the session's message list. Without a spec every stream chunk is
/// one message; with a spec each direction's stream is cut at the declared
/// lengths. Messages of both directions are merged by timestamp; within a
/// direction stream order is kept.
inline TcpSession segment_messages(TcpSession session, const std::optional<LengthFieldSpec>& framing = std::nullopt) {
    std::vector<Message> msgs;
    for (Direction dir : {Direction::ClientToServer, Direction::ServerToClient}) {
        if (framing) {
            detail::split_direction(session, dir, *framing, msgs);
        } else {
            for (const auto& c : session.chunks_for(dir)) {
                if (c.data.empty()) continue;
                msgs.push_back(Message{dir, c.timestamp, c.data, 0});
            }
        }
    }
    detail::order_and_index(msgs);
    session.messages = std::move(msgs);
    return session;
}

}  // namespace icsfuzz::capture
