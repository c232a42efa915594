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

// Wire format of the emulated controller protocol.
//
// Every frame starts with a 4-byte header: direction (0x01 request, 0x81
// reply), command class, and the big-endian total frame length. Requests of
// class 0x05 carry a subcode at bytes 4-5 and the session token at byte 11.
// Replies carry the echoed subcode at bytes 4-5 and a status at bytes 6-7.

#include <cstdint>
#include <string>

#include "icsfuzz/bytes.hpp"

namespace icsfuzz::mock::wire {

inline constexpr std::uint8_t kRequest = 0x01;
inline constexpr std::uint8_t kReply = 0x81;

inline constexpr std::uint8_t kClassInit = 0x01;
inline constexpr std::uint8_t kClassCommand = 0x05;
inline constexpr std::uint8_t kClassUnknown = 0xff;

inline constexpr std::uint16_t kSubStatus = 0x0001;
inline constexpr std::uint16_t kSubReset = 0x0010;
inline constexpr std::uint16_t kSubRead = 0x0020;
inline constexpr std::uint16_t kSubWrite = 0x0021;

inline constexpr std::size_t kHeaderLen = 4;
inline constexpr std::size_t kLengthOffset = 2;
inline constexpr std::size_t kInitLen = 26;
inline constexpr std::size_t kInitResponseLen = 20;
inline constexpr std::size_t kCommandLen = 22;
inline constexpr std::size_t kInitTokenOffset = 17;
inline constexpr std::size_t kCommandTokenOffset = 11;
inline constexpr std::size_t kAddressOffset = 12;
inline constexpr std::size_t kValueOffset = 14;

inline constexpr std::uint16_t kStatusOk = 0x0000;
inline constexpr std::uint16_t kStatusMalformed = 0x0001;
inline constexpr std::uint16_t kStatusBadToken = 0x0002;
inline constexpr std::uint16_t kStatusIncomplete = 0x0003;
inline constexpr std::uint16_t kStatusUnknownCommand = 0x0004;
inline constexpr std::uint16_t kStatusWrongPhase = 0x0005;

inline constexpr const char* kDefaultIdentification = "IBETH01N0_M";

// Reference exchange recorded from an engineering workstation talking to a
// controller whose token is 0x48.
inline constexpr const char* kInitRequestHex = "0101001a0000008064150003000c494245544830314e305f4d00";
inline constexpr const char* kInitResponseHex = "8101001400000001000000000002000000480000";
inline constexpr const char* kAckHex = "0105001600010000e8e900480000001c000402950000";
inline constexpr const char* kResetHex = "0105001600100000e8c800480000000000040aba0000";

inline Bytes init_request() { return from_hex(kInitRequestHex); }

inline Bytes init_response(std::uint8_t token) {
    Bytes b = from_hex(kInitResponseHex);
    b[kInitTokenOffset] = token;
    return b;
}

inline Bytes ack(std::uint8_t token) {
    Bytes b = from_hex(kAckHex);
    b[kCommandTokenOffset] = token;
    return b;
}

inline Bytes reset(std::uint8_t token) {
    Bytes b = from_hex(kResetHex);
    b[kCommandTokenOffset] = token;
    return b;
}

/// Class-0x05 request in the 22-byte layout of the reference commands.
/// Status and reset reproduce the reference bytes exactly.
inline Bytes command(std::uint16_t subcode, std::uint8_t token, std::uint16_t address = 0, std::uint16_t value = 0) {
    if (subcode == kSubStatus) return ack(token);
    if (subcode == kSubReset) return reset(token);
    Bytes b = from_hex(kAckHex);
    b[4] = static_cast<std::uint8_t>(subcode >> 8);
    b[5] = static_cast<std::uint8_t>(subcode);
    b[9] = static_cast<std::uint8_t>(0xd0 + (subcode & 0x0f));
    b[kCommandTokenOffset] = token;
    write_uint(b, kAddressOffset, 2, Endian::Big, address);
    write_uint(b, kValueOffset, 2, Endian::Big, value);
    b[18] = 0;
    b[19] = 0;
    return b;
}

inline Bytes reply(std::uint8_t cls, std::uint16_t subcode, std::uint16_t status, ByteView payload = {}) {
    Bytes b{kReply, cls};
    put_be16(b, static_cast<std::uint16_t>(8 + payload.size()));
    put_be16(b, subcode);
    put_be16(b, status);
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

inline Bytes status_reply() {
    static const std::uint8_t kPayload[4] = {0, 0, 0, 0};
    return reply(kClassCommand, kSubStatus, kStatusOk, kPayload);
}

inline std::uint16_t reply_status(ByteView r) { return r.size() >= 8 ? be16(r, 6) : 0xffff; }

}  // namespace icsfuzz::mock::wire
