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

// Synthesizes packet records for an application-level TCP conversation, so
// recorded request/response exchanges can be written as pcap files.

#include <vector>

#include "icsfuzz/capture/packet.hpp"
#include "icsfuzz/capture/pcap.hpp"
#include "icsfuzz/capture/session.hpp"

namespace icsfuzz::capture {

class ConversationBuilder {
public:
    ConversationBuilder(Endpoint client, Endpoint server, Nanos start, std::uint32_t client_isn = 1000,
                        std::uint32_t server_isn = 5000)
        : client_(client), server_(server), now_(start), client_seq_(client_isn), server_seq_(server_isn) {
        emit(Direction::ClientToServer, tcp_flags::kSyn, {});
        ++client_seq_;
        emit(Direction::ServerToClient, tcp_flags::kSyn | tcp_flags::kAck, {});
        ++server_seq_;
        emit(Direction::ClientToServer, tcp_flags::kAck, {});
    }

    /// One data segment; the peer's ACK is emitted right after it.
    ConversationBuilder& send(Direction dir, ByteView payload, Nanos at) {
        now_ = at;
        emit(dir, tcp_flags::kPsh | tcp_flags::kAck, payload);
        (dir == Direction::ClientToServer ? client_seq_ : server_seq_) += static_cast<std::uint32_t>(payload.size());
        emit(dir == Direction::ClientToServer ? Direction::ServerToClient : Direction::ClientToServer, tcp_flags::kAck, {});
        return *this;
    }

    ConversationBuilder& close(Nanos at) {
        now_ = at;
        emit(Direction::ClientToServer, tcp_flags::kFin | tcp_flags::kAck, {});
        ++client_seq_;
        emit(Direction::ServerToClient, tcp_flags::kFin | tcp_flags::kAck, {});
        ++server_seq_;
        emit(Direction::ClientToServer, tcp_flags::kAck, {});
        return *this;
    }

    const std::vector<PacketRecord>& records() const { return records_; }

private:
    void emit(Direction dir, std::uint8_t flags, ByteView payload) {
        TcpSegment seg;
        bool c2s = dir == Direction::ClientToServer;
        seg.src = c2s ? client_ : server_;
        seg.dst = c2s ? server_ : client_;
        seg.seq = c2s ? client_seq_ : server_seq_;
        seg.ack = (flags & tcp_flags::kAck) ? (c2s ? server_seq_ : client_seq_) : 0;
        seg.flags = flags;
        seg.payload.assign(payload.begin(), payload.end());
        records_.push_back(PacketRecord{now_, LinkType::Ethernet, build_frame(seg)});
    }

    Endpoint client_;
    Endpoint server_;
    Nanos now_;
    std::uint32_t client_seq_;
    std::uint32_t server_seq_;
    std::vector<PacketRecord> records_;
};

}  // namespace icsfuzz::capture
