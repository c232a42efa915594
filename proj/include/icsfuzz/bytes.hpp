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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icsfuzz {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Timestamps and durations share one representation. Timestamps count from
/// the Unix epoch for real captures and from an arbitrary origin under a
/// virtual clock.
using Nanos = std::chrono::nanoseconds;

enum class Endian : std::uint8_t { Big, Little };

inline std::string to_hex(ByteView data) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

/// Accepts upper or lower case, ignores spaces.
inline Bytes from_hex(std::string_view text) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    int hi = -1;
    for (char c : text) {
        if (c == ' ') continue;
        int v = nibble(c);
        if (v < 0) throw std::invalid_argument("invalid hex digit in '" + std::string(text) + "'");
        if (hi < 0) {
            hi = v;
        } else {
            out.push_back(static_cast<std::uint8_t>((hi << 4) | v));
            hi = -1;
        }
    }
    if (hi >= 0) throw std::invalid_argument("odd number of hex digits");
    return out;
}

inline std::uint64_t read_uint(ByteView data, std::size_t offset, std::size_t width, Endian endian) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
        std::size_t idx = endian == Endian::Big ? offset + i : offset + width - 1 - i;
        v = (v << 8) | data[idx];
    }
    return v;
}

inline void write_uint(std::span<std::uint8_t> data, std::size_t offset, std::size_t width, Endian endian,
                       std::uint64_t value) {
    for (std::size_t i = 0; i < width; ++i) {
        std::size_t idx = endian == Endian::Big ? offset + width - 1 - i : offset + i;
        data[idx] = static_cast<std::uint8_t>(value & 0xff);
        value >>= 8;
    }
}

inline std::uint16_t be16(ByteView d, std::size_t off) {
    return static_cast<std::uint16_t>(read_uint(d, off, 2, Endian::Big));
}
inline std::uint32_t be32(ByteView d, std::size_t off) {
    return static_cast<std::uint32_t>(read_uint(d, off, 4, Endian::Big));
}

inline void put_be16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}
inline void put_be32(Bytes& out, std::uint32_t v) {
    put_be16(out, static_cast<std::uint16_t>(v >> 16));
    put_be16(out, static_cast<std::uint16_t>(v));
}
inline void put_le16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_le32(Bytes& out, std::uint32_t v) {
    put_le16(out, static_cast<std::uint16_t>(v));
    put_le16(out, static_cast<std::uint16_t>(v >> 16));
}

}  // namespace icsfuzz
