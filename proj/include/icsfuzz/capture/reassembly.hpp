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

// TCP session reconstruction from decoded packet records.

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "icsfuzz/capture/framing.hpp"
#include "icsfuzz/capture/packet.hpp"
#include "icsfuzz/capture/pcap.hpp"
#include "icsfuzz/capture/session.hpp"

namespace icsfuzz::capture {

struct ReassemblyStats {
    std::size_t frames = 0;
    std::size_t tcp_segments = 0;
    std::size_t non_ipv4 = 0;
    std::size_t non_tcp = 0;
    std::size_t fragments = 0;
    std::size_t unparseable = 0;
    std::size_t duplicate_bytes = 0;
    std::size_t missing_bytes = 0;
};

struct ReassemblyResult {
    std::vector<TcpSession> sessions;
    ReassemblyStats stats;
};

namespace detail {

struct RawSegment {
    Nanos timestamp;
    std::uint32_t seq;
    std::size_t arrival;
    Bytes payload;
};

struct DirectionState {
    std::optional<std::uint32_t> isn;  // sequence number of the SYN
    std::vector<RawSegment> segments;
};

struct FlowState {
    std::size_t first_seen = 0;
    Endpoint a;  // lower endpoint of the canonical key
    Endpoint b;
    std::optional<Endpoint> syn_initiator;
    DirectionState from_a;
    DirectionState from_b;
};

/// Orders one direction's segments by sequence number and removes bytes that
/// were already delivered (retransmissions and overlaps).
inline std::vector<StreamChunk> build_stream(DirectionState& st, ReassemblyStats& stats) {
    std::vector<StreamChunk> out;
    if (st.segments.empty()) return out;
    // Relative sequence numbers; with a SYN the first data byte is isn + 1.
    std::uint32_t base = st.isn ? *st.isn + 1 : st.segments.front().seq;
    if (!st.isn) {
        for (const auto& s : st.segments) {
            if (static_cast<std::int32_t>(s.seq - base) < 0) base = s.seq;
        }
    }
    std::vector<std::pair<std::int64_t, const RawSegment*>> ordered;
    for (const auto& s : st.segments) {
        ordered.emplace_back(static_cast<std::int32_t>(s.seq - base), &s);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first < y.first;
        return x.second->arrival < y.second->arrival;
    });
    std::int64_t next = 0;
    Nanos last_ts{std::numeric_limits<std::int64_t>::min()};
    for (const auto& [rel, seg] : ordered) {
        std::int64_t end = rel + static_cast<std::int64_t>(seg->payload.size());
        if (end <= next) {
            stats.duplicate_bytes += seg->payload.size();
            continue;
        }
        std::int64_t skip = 0;
        if (rel < next) {
            skip = next - rel;
            stats.duplicate_bytes += static_cast<std::size_t>(skip);
        } else if (rel > next) {
            stats.missing_bytes += static_cast<std::size_t>(rel - next);
        }
        StreamChunk c;
        c.timestamp = std::max(seg->timestamp, last_ts);
        c.stream_offset = static_cast<std::uint64_t>(std::max(rel, next));
        c.data.assign(seg->payload.begin() + skip, seg->payload.end());
        last_ts = c.timestamp;
        next = end;
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace detail

/// Groups TCP segments into sessions keyed by their 4-tuple. The client is
/// the sender of a bare SYN; without one, the endpoint with the lower port is
/// taken as the server. Messages use per-segment framing.
inline ReassemblyResult reassemble(const std::vector<PacketRecord>& records) {
    ReassemblyResult result;
    std::map<std::pair<Endpoint, Endpoint>, detail::FlowState> flows;
    std::size_t arrival = 0;
    for (const auto& rec : records) {
        ++result.stats.frames;
        auto dec = decode_frame(rec.data);
        switch (dec.status) {
            case DecodeStatus::Ok: break;
            case DecodeStatus::NotIpv4: ++result.stats.non_ipv4; continue;
            case DecodeStatus::Fragment: ++result.stats.fragments; continue;
            case DecodeStatus::NotTcp: ++result.stats.non_tcp; continue;
            case DecodeStatus::Malformed: ++result.stats.unparseable; continue;
        }
        ++result.stats.tcp_segments;
        auto& seg = dec.segment;
        auto key = seg.src < seg.dst ? std::make_pair(seg.src, seg.dst) : std::make_pair(seg.dst, seg.src);
        auto [it, inserted] = flows.try_emplace(key);
        auto& flow = it->second;
        if (inserted) {
            flow.first_seen = flows.size() - 1;
            flow.a = key.first;
            flow.b = key.second;
        }
        auto& dir = seg.src == flow.a ? flow.from_a : flow.from_b;
        if (seg.flags & tcp_flags::kSyn) {
            dir.isn = seg.seq;
            if (!(seg.flags & tcp_flags::kAck) && !flow.syn_initiator) flow.syn_initiator = seg.src;
        }
        if (!seg.payload.empty()) {
            std::uint32_t seq = seg.seq + ((seg.flags & tcp_flags::kSyn) ? 1u : 0u);
            dir.segments.push_back({rec.timestamp, seq, arrival++, std::move(seg.payload)});
        }
    }

    std::vector<detail::FlowState*> order;
    for (auto& [k, f] : flows) order.push_back(&f);
    std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return x->first_seen < y->first_seen; });

    std::uint64_t next_id = 0;
    for (auto* flow : order) {
        TcpSession s;
        s.session_id = next_id++;
        bool a_is_client;
        if (flow->syn_initiator) {
            s.roles_from_syn = true;
            a_is_client = *flow->syn_initiator == flow->a;
        } else {
            // Lower port is the server; equal ports fall back to the lower address.
            a_is_client = flow->a.port != flow->b.port ? flow->a.port > flow->b.port : false;
        }
        s.client = a_is_client ? flow->a : flow->b;
        s.server = a_is_client ? flow->b : flow->a;
        auto& c2s = a_is_client ? flow->from_a : flow->from_b;
        auto& s2c = a_is_client ? flow->from_b : flow->from_a;
        s.chunks[static_cast<std::size_t>(Direction::ClientToServer)] = detail::build_stream(c2s, result.stats);
        s.chunks[static_cast<std::size_t>(Direction::ServerToClient)] = detail::build_stream(s2c, result.stats);
        result.sessions.push_back(segment_messages(std::move(s)));
    }
    return result;
}

}  // namespace icsfuzz::capture
