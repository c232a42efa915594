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

// Ethernet / IPv4 / TCP header decoding and frame synthesis.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "icsfuzz/bytes.hpp"

namespace icsfuzz::capture {

struct Endpoint {
    std::uint32_t ip = 0;  // host order
    std::uint16_t port = 0;

    friend auto operator<=>(const Endpoint&, const Endpoint&) = default;

    std::string to_string() const {
        return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
               std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff) + ":" + std::to_string(port);
    }
};

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

struct TcpSegment {
    Endpoint src;
    Endpoint dst;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint8_t flags = 0;
    Bytes payload;
};

enum class DecodeStatus : std::uint8_t { Ok, NotIpv4, Fragment, NotTcp, Malformed };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::Malformed;
    TcpSegment segment;
};

/// Decodes an Ethernet II frame (optionally 802.1Q tagged) carrying IPv4/TCP.
inline DecodeResult decode_frame(ByteView frame) {
    DecodeResult r;
    if (frame.size() < 14) return r;
    std::size_t off = 12;
    std::uint16_t ethertype = be16(frame, off);
    off += 2;
    while (ethertype == 0x8100 || ethertype == 0x88a8) {
        if (frame.size() < off + 4) return r;
        ethertype = be16(frame, off + 2);
        off += 4;
    }
    if (ethertype != 0x0800) {
        r.status = DecodeStatus::NotIpv4;
        return r;
    }
    if (frame.size() < off + 20) return r;
    std::uint8_t vihl = frame[off];
    if ((vihl >> 4) != 4) {
        r.status = DecodeStatus::NotIpv4;
        return r;
    }
    std::size_t ihl = static_cast<std::size_t>(vihl & 0x0f) * 4;
    std::uint16_t total = be16(frame, off + 2);
    if (ihl < 20 || total < ihl || frame.size() < off + total) return r;
    std::uint16_t frag = be16(frame, off + 6);
    if ((frag & 0x2000) || (frag & 0x1fff)) {
        r.status = DecodeStatus::Fragment;
        return r;
    }
    if (frame[off + 9] != 6) {
        r.status = DecodeStatus::NotTcp;
        return r;
    }
    r.segment.src.ip = be32(frame, off + 12);
    r.segment.dst.ip = be32(frame, off + 16);
    std::size_t t = off + ihl;
    std::size_t ip_end = off + total;
    if (ip_end < t + 20) return r;
    r.segment.src.port = be16(frame, t);
    r.segment.dst.port = be16(frame, t + 2);
    r.segment.seq = be32(frame, t + 4);
    r.segment.ack = be32(frame, t + 8);
    std::size_t doff = static_cast<std::size_t>(frame[t + 12] >> 4) * 4;
    r.segment.flags = frame[t + 13];
    if (doff < 20 || t + doff > ip_end) return r;
    r.segment.payload.assign(frame.begin() + static_cast<std::ptrdiff_t>(t + doff),
                             frame.begin() + static_cast<std::ptrdiff_t>(ip_end));
    r.status = DecodeStatus::Ok;
    return r;
}

namespace detail {

inline std::uint16_t ones_complement(ByteView data, std::uint32_t sum = 0) {
    for (std::size_t i = 0; i + 1 < data.size(); i += 2) sum += be16(data, i);
    if (data.size() % 2) sum += static_cast<std::uint32_t>(data.back()) << 8;
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

}  // namespace detail

/// Builds an Ethernet/IPv4/TCP frame with valid IP and TCP checksums.
inline Bytes build_frame(const TcpSegment& seg) {
    Bytes f;
    const std::array<std::uint8_t, 6> dst_mac{0x02, 0x00, 0x00, 0x00, 0x00, static_cast<std::uint8_t>(seg.dst.ip)};
    const std::array<std::uint8_t, 6> src_mac{0x02, 0x00, 0x00, 0x00, 0x00, static_cast<std::uint8_t>(seg.src.ip)};
    f.insert(f.end(), dst_mac.begin(), dst_mac.end());
    f.insert(f.end(), src_mac.begin(), src_mac.end());
    put_be16(f, 0x0800);

    const std::size_t ip_off = f.size();
    const auto total = static_cast<std::uint16_t>(20 + 20 + seg.payload.size());
    f.push_back(0x45);
    f.push_back(0);
    put_be16(f, total);
    put_be16(f, 0);       // id
    put_be16(f, 0x4000);  // DF
    f.push_back(64);
    f.push_back(6);
    put_be16(f, 0);
    put_be32(f, seg.src.ip);
    put_be32(f, seg.dst.ip);
    std::uint16_t ipsum = detail::ones_complement(ByteView(f).subspan(ip_off, 20));
    f[ip_off + 10] = static_cast<std::uint8_t>(ipsum >> 8);
    f[ip_off + 11] = static_cast<std::uint8_t>(ipsum);

    const std::size_t tcp_off = f.size();
    put_be16(f, seg.src.port);
    put_be16(f, seg.dst.port);
    put_be32(f, seg.seq);
    put_be32(f, seg.ack);
    f.push_back(0x50);
    f.push_back(seg.flags);
    put_be16(f, 65535);
    put_be16(f, 0);
    put_be16(f, 0);
    f.insert(f.end(), seg.payload.begin(), seg.payload.end());

    Bytes pseudo;
    put_be32(pseudo, seg.src.ip);
    put_be32(pseudo, seg.dst.ip);
    put_be16(pseudo, 6);
    put_be16(pseudo, static_cast<std::uint16_t>(20 + seg.payload.size()));
    std::uint32_t partial = 0;
    for (std::size_t i = 0; i < pseudo.size(); i += 2) partial += be16(pseudo, i);
    std::uint16_t tcpsum = detail::ones_complement(ByteView(f).subspan(tcp_off), partial);
    f[tcp_off + 16] = static_cast<std::uint8_t>(tcpsum >> 8);
    f[tcp_off + 17] = static_cast<std::uint8_t>(tcpsum);
    return f;
}

}  // namespace icsfuzz::capture
