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

// Classic pcap and minimal pcap-ng ingestion.
//
// Classic pcap: 24-byte global header followed by 16-byte record headers.
// Both byte orders and both the microsecond (0xA1B2C3D4) and nanosecond
// (0xA1B23C4D) magics are accepted. pcap-ng: Section Header, Interface
// Description and Enhanced Packet blocks are decoded; every other block type
// is skipped. Only Ethernet (link type 1) is accepted.

#include <cstdint>
#include <optional>
#include <vector>

#include "icsfuzz/bytes.hpp"
#include "icsfuzz/error.hpp"

namespace icsfuzz::capture {

enum class LinkType : std::uint16_t { Ethernet = 1 };

inline constexpr std::size_t kEthernetHeaderLen = 14;

struct PacketRecord {
    Nanos timestamp{0};
    LinkType link_type{LinkType::Ethernet};
    Bytes data;

    friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

namespace detail {

inline constexpr std::uint32_t kPcapMagicMicros = 0xA1B2C3D4;
inline constexpr std::uint32_t kPcapMagicNanos = 0xA1B23C4D;
inline constexpr std::uint32_t kNgSectionHeader = 0x0A0D0D0A;
inline constexpr std::uint32_t kNgInterfaceDescription = 0x00000001;
inline constexpr std::uint32_t kNgEnhancedPacket = 0x00000006;
inline constexpr std::uint32_t kNgByteOrderMagic = 0x1A2B3C4D;
inline constexpr std::uint32_t kMaxFrameLen = 256 * 1024;

class Cursor {
public:
    Cursor(ByteView data, Endian endian) : data_(data), endian_(endian) {}

    void set_endian(Endian e) { endian_ = e; }
    Endian endian() const { return endian_; }

    std::uint32_t u32(std::size_t off) const {
        need(off, 4);
        return static_cast<std::uint32_t>(read_uint(data_, off, 4, endian_));
    }
    std::uint16_t u16(std::size_t off) const {
        need(off, 2);
        return static_cast<std::uint16_t>(read_uint(data_, off, 2, endian_));
    }
    void need(std::size_t off, std::size_t len) const {
        if (off > data_.size() || data_.size() - off < len) {
            throw MalformedCapture("truncated capture", off);
        }
    }

private:
    ByteView data_;
    Endian endian_;
};

inline void check_frame(const PacketRecord& rec, std::size_t offset) {
    if (rec.data.size() < kEthernetHeaderLen) {
        throw MalformedCapture("frame shorter than an Ethernet header", offset);
    }
}

inline std::vector<PacketRecord> read_classic(ByteView file) {
    std::uint32_t raw = static_cast<std::uint32_t>(read_uint(file, 0, 4, Endian::Little));
    Endian endian = Endian::Little;
    bool nanos = false;
    if (raw == kPcapMagicMicros || raw == kPcapMagicNanos) {
        endian = Endian::Little;
        nanos = raw == kPcapMagicNanos;
    } else {
        endian = Endian::Big;
        nanos = static_cast<std::uint32_t>(read_uint(file, 0, 4, Endian::Big)) == kPcapMagicNanos;
    }
    Cursor cur(file, endian);
    cur.need(0, 24);
    std::uint32_t link = cur.u32(20);
    if (link != static_cast<std::uint32_t>(LinkType::Ethernet)) throw UnsupportedLinkType(link);

    std::vector<PacketRecord> out;
    std::size_t off = 24;
    while (off < file.size()) {
        cur.need(off, 16);
        std::uint64_t sec = cur.u32(off);
        std::uint64_t frac = cur.u32(off + 4);
        std::uint32_t incl = cur.u32(off + 8);
        if (incl > kMaxFrameLen) throw MalformedCapture("record length exceeds maximum frame size", off + 8);
        if ((!nanos && frac >= 1'000'000) || (nanos && frac >= 1'000'000'000)) {
            throw MalformedCapture("sub-second timestamp field out of range", off + 4);
        }
        cur.need(off + 16, incl);
        PacketRecord rec;
        rec.timestamp = Nanos(static_cast<std::int64_t>(sec * 1'000'000'000ULL + (nanos ? frac : frac * 1000)));
        rec.data.assign(file.begin() + static_cast<std::ptrdiff_t>(off + 16),
                        file.begin() + static_cast<std::ptrdiff_t>(off + 16 + incl));
        check_frame(rec, off);
        out.push_back(std::move(rec));
        off += 16 + incl;
    }
    return out;
}

struct NgInterface {
    std::uint16_t link_type;
    // Ticks per second of the timestamp unit (if_tsresol), default microseconds.
    std::uint64_t ticks_per_second = 1'000'000;
};

inline std::uint64_t parse_tsresol(const Cursor& cur, ByteView file, std::size_t opt_off, std::size_t opt_end) {
    std::uint64_t ticks = 1'000'000;
    while (opt_off + 4 <= opt_end) {
        std::uint16_t code = cur.u16(opt_off);
        std::uint16_t len = cur.u16(opt_off + 2);
        if (code == 0) break;
        std::size_t padded = (static_cast<std::size_t>(len) + 3u) & ~std::size_t{3};
        if (opt_off + 4 + padded > opt_end) break;
        if (code == 9 && len == 1) {
            std::uint8_t v = file[opt_off + 4];
            std::uint64_t base = (v & 0x80) ? 2 : 10;
            unsigned exp = v & 0x7f;
            if ((base == 10 && exp <= 18) || (base == 2 && exp <= 63)) {
                ticks = 1;
                for (unsigned i = 0; i < exp; ++i) ticks *= base;
            }
        }
        opt_off += 4 + padded;
    }
    return ticks;
}

inline std::vector<PacketRecord> read_pcapng(ByteView file) {
    Cursor cur(file, Endian::Little);
    std::vector<NgInterface> interfaces;
    std::vector<PacketRecord> out;
    std::size_t off = 0;
    bool in_section = false;
    while (off < file.size()) {
        cur.need(off, 12);
        std::uint32_t type = static_cast<std::uint32_t>(read_uint(file, off, 4, cur.endian()));
        if (type == kNgSectionHeader) {
            cur.need(off, 12);
            std::uint32_t bom_le = static_cast<std::uint32_t>(read_uint(file, off + 8, 4, Endian::Little));
            if (bom_le == kNgByteOrderMagic) {
                cur.set_endian(Endian::Little);
            } else if (static_cast<std::uint32_t>(read_uint(file, off + 8, 4, Endian::Big)) == kNgByteOrderMagic) {
                cur.set_endian(Endian::Big);
            } else {
                throw MalformedCapture("bad pcap-ng byte-order magic", off + 8);
            }
            interfaces.clear();
            in_section = true;
        } else if (!in_section) {
            throw MalformedCapture("pcap-ng block before section header", off);
        }
        std::uint32_t len = cur.u32(off + 4);
        if (len < 12 || len % 4 != 0) throw MalformedCapture("invalid pcap-ng block length", off + 4);
        cur.need(off, len);
        if (cur.u32(off + len - 4) != len) throw MalformedCapture("inconsistent pcap-ng block lengths", off + len - 4);

        if (type == kNgInterfaceDescription) {
            if (len < 20) throw MalformedCapture("interface description block too short", off);
            NgInterface itf{cur.u16(off + 8)};
            itf.ticks_per_second = parse_tsresol(cur, file, off + 16, off + len - 4);
            interfaces.push_back(itf);
        } else if (type == kNgEnhancedPacket) {
            if (len < 32) throw MalformedCapture("enhanced packet block too short", off);
            std::uint32_t iface = cur.u32(off + 8);
            if (iface >= interfaces.size()) throw MalformedCapture("packet references unknown interface", off + 8);
            const auto& itf = interfaces[iface];
            if (itf.link_type != static_cast<std::uint16_t>(LinkType::Ethernet)) throw UnsupportedLinkType(itf.link_type);
            std::uint64_t ticks = (static_cast<std::uint64_t>(cur.u32(off + 12)) << 32) | cur.u32(off + 16);
            std::uint32_t caplen = cur.u32(off + 20);
            if (caplen > kMaxFrameLen || 28 + static_cast<std::size_t>(caplen) + 4 > len) {
                throw MalformedCapture("captured length exceeds block", off + 20);
            }
            PacketRecord rec;
            std::uint64_t tps = itf.ticks_per_second;
            std::uint64_t secs = ticks / tps;
            std::uint64_t rem = ticks % tps;
            rec.timestamp = Nanos(static_cast<std::int64_t>(
                secs * 1'000'000'000ULL +
                static_cast<std::uint64_t>(static_cast<unsigned __int128>(rem) * 1'000'000'000ULL / tps)));
            rec.data.assign(file.begin() + static_cast<std::ptrdiff_t>(off + 28),
                            file.begin() + static_cast<std::ptrdiff_t>(off + 28 + caplen));
            check_frame(rec, off);
            out.push_back(std::move(rec));
        }
        off += len;
    }
    return out;
}

}  // namespace detail

/// Decodes a classic pcap or pcap-ng file into packet records in file order.
inline std::vector<PacketRecord> read_capture(ByteView file) {
    if (file.size() < 4) throw MalformedCapture("file too short for a capture magic", 0);
    auto le = static_cast<std::uint32_t>(read_uint(file, 0, 4, Endian::Little));
    auto be = static_cast<std::uint32_t>(read_uint(file, 0, 4, Endian::Big));
    if (le == detail::kNgSectionHeader) return detail::read_pcapng(file);
    for (auto magic : {detail::kPcapMagicMicros, detail::kPcapMagicNanos}) {
        if (le == magic || be == magic) return detail::read_classic(file);
    }
    throw MalformedCapture("unrecognized capture magic", 0);
}

/// Encodes records as a classic microsecond pcap (version 2.4, link type 1).
/// Sub-microsecond timestamp digits are truncated.
inline Bytes write_capture(const std::vector<PacketRecord>& records) {
    Bytes out;
    put_le32(out, detail::kPcapMagicMicros);
    put_le16(out, 2);
    put_le16(out, 4);
    put_le32(out, 0);  // thiszone
    put_le32(out, 0);  // sigfigs
    put_le32(out, 65535);
    put_le32(out, static_cast<std::uint32_t>(LinkType::Ethernet));
    for (const auto& rec : records) {
        if (rec.link_type != LinkType::Ethernet) throw PreconditionViolation("write_capture: non-Ethernet record");
        if (rec.timestamp.count() < 0) throw PreconditionViolation("write_capture: negative timestamp");
        auto ns = static_cast<std::uint64_t>(rec.timestamp.count());
        put_le32(out, static_cast<std::uint32_t>(ns / 1'000'000'000ULL));
        put_le32(out, static_cast<std::uint32_t>((ns % 1'000'000'000ULL) / 1000));
        put_le32(out, static_cast<std::uint32_t>(rec.data.size()));
        put_le32(out, static_cast<std::uint32_t>(rec.data.size()));
        out.insert(out.end(), rec.data.begin(), rec.data.end());
    }
    return out;
}

}  // namespace icsfuzz::capture
