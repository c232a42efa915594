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

// Handshake template recovery and session-token correlation.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "icsfuzz/capture/session.hpp"
#include "icsfuzz/error.hpp"
#include "icsfuzz/inference/model.hpp"

namespace icsfuzz::inference {

/// Aligns the first prefix_len messages of every session. A byte is Constant
/// when all sessions agree on it and Variable otherwise; bytes covered by the
/// framing length field are marked LengthField.
inline std::vector<HandshakeStep> align_handshake(const std::vector<capture::TcpSession>& sessions,
                                                  std::size_t prefix_len,
                                                  const std::optional<LengthFieldSpec>& framing = std::nullopt) {
    if (sessions.size() < 2) throw PreconditionViolation("handshake alignment needs at least two sessions");
    if (prefix_len == 0) throw PreconditionViolation("handshake prefix length must be at least 1");
    for (const auto& s : sessions) {
        if (s.messages.size() < prefix_len) {
            throw StructureMismatch("session " + std::to_string(s.session_id) + " has only " +
                                        std::to_string(s.messages.size()) + " messages, handshake needs " +
                                        std::to_string(prefix_len),
                                    s.messages.size());
        }
    }
    std::vector<HandshakeStep> steps;
    for (std::size_t k = 0; k < prefix_len; ++k) {
        const auto& ref = sessions.front().messages[k];
        HandshakeStep step{ref.direction, ref.payload, ByteMask(ref.payload.size())};
        for (const auto& s : sessions) {
            const auto& m = s.messages[k];
            if (m.direction != ref.direction) {
                throw StructureMismatch("handshake step " + std::to_string(k) + " direction differs across sessions", k);
            }
            if (m.payload.size() != ref.payload.size()) {
                throw StructureMismatch("handshake step " + std::to_string(k) + " length differs across sessions (" +
                                            std::to_string(ref.payload.size()) + " vs " +
                                            std::to_string(m.payload.size()) + ")",
                                        k);
            }
            for (std::size_t i = 0; i < m.payload.size(); ++i) {
                if (m.payload[i] != ref.payload[i]) step.mask.set(i, ByteClass::Variable);
            }
        }
        if (framing) {
            for (std::size_t i = framing->offset; i < framing->end() && i < step.mask.size(); ++i) {
                step.mask.set(i, ByteClass::LengthField);
            }
        }
        steps.push_back(std::move(step));
    }
    return steps;
}

struct TokenAnalysis {
    std::vector<TokenBinding> bindings;
    std::vector<UnexplainedField> unexplained;
};

namespace detail {

inline std::vector<EchoSite> find_echoes(const std::vector<HandshakeStep>& hs,
                                         const std::vector<capture::TcpSession>& sessions, std::size_t src_step,
                                         std::size_t src_off, std::size_t width) {
    std::vector<EchoSite> echoes;
    for (std::size_t c = src_step + 1; c < hs.size(); ++c) {
        if (hs[c].direction != Direction::ClientToServer || hs[c].bytes.size() < width) continue;
        for (std::size_t p = 0; p + width <= hs[c].bytes.size(); ++p) {
            bool variable = true;
            for (std::size_t i = 0; i < width; ++i) variable = variable && hs[c].mask.is_variable(p + i);
            if (!variable) continue;
            bool echoed = true;
            for (const auto& s : sessions) {
                const auto& src = s.messages[src_step].payload;
                const auto& dst = s.messages[c].payload;
                if (!std::equal(src.begin() + static_cast<std::ptrdiff_t>(src_off),
                                src.begin() + static_cast<std::ptrdiff_t>(src_off + width),
                                dst.begin() + static_cast<std::ptrdiff_t>(p))) {
                    echoed = false;
                    break;
                }
            }
            if (echoed) echoes.push_back({TemplateRef::handshake(c), p});
        }
    }
    return echoes;
}

/// Client offsets outside `skip` where every client message after `step`, in
/// every session, carries `value`.
inline std::vector<std::size_t> common_offsets(const std::vector<capture::TcpSession>& sessions, std::size_t step,
                                               std::uint8_t value, const std::optional<LengthFieldSpec>& skip) {
    std::optional<std::vector<std::size_t>> common;
    std::size_t later = 0;
    for (const auto& s : sessions) {
        for (std::size_t m = step + 1; m < s.messages.size(); ++m) {
            const auto& msg = s.messages[m];
            if (msg.direction != Direction::ClientToServer) continue;
            ++later;
            std::vector<std::size_t> here;
            for (std::size_t q = 0; q < msg.payload.size(); ++q) {
                if (skip && q >= skip->offset && q < skip->end()) continue;
                if (msg.payload[q] == value && (!common || std::count(common->begin(), common->end(), q))) here.push_back(q);
            }
            common = std::move(here);
            if (common->empty()) return {};
        }
    }
    if (later < 2 * sessions.size() || !common) return {};
    return *common;
}

}  // namespace detail

/// Finds session keys that never varied in the captures: a nonzero byte that
/// occurs once in a server handshake step and is repeated at one fixed offset
/// in every later client message of every session, with at least one command
/// after the handshake. Bytes already bound, Variable, or inside the length
/// field are not considered.
inline std::vector<TokenBinding> detect_constant_keys(const std::vector<HandshakeStep>& handshake,
                                                      const std::vector<capture::TcpSession>& sessions,
                                                      const std::vector<TokenBinding>& known,
                                                      const std::optional<LengthFieldSpec>& framing = std::nullopt) {
    std::vector<TokenBinding> out;
    if (!known.empty()) return out;
    for (const auto& s : sessions)
        if (s.messages.size() <= handshake.size()) return out;
    for (std::size_t step = 0; step < handshake.size(); ++step) {
        const auto& hs = handshake[step];
        if (hs.direction != Direction::ServerToClient) continue;
        for (std::size_t i = 0; i < hs.bytes.size(); ++i) {
            std::uint8_t v = hs.bytes[i];
            if (v == 0 || hs.mask[i] != ByteClass::Constant) continue;
            if (std::count(hs.bytes.begin(), hs.bytes.end(), v) != 1) continue;
            auto qs = detail::common_offsets(sessions, step, v, framing);
            if (qs.size() != 1) continue;
            TokenBinding b{step, i, 1, {}};
            for (std::size_t c = step + 1; c < handshake.size(); ++c)
                if (handshake[c].direction == Direction::ClientToServer) b.echoes.push_back({TemplateRef::handshake(c), qs[0]});
            out.push_back(std::move(b));
        }
    }
    return out;
}

/// Marks token sources and their handshake echoes Variable.
inline void mark_token_positions(std::vector<HandshakeStep>& handshake, const std::vector<TokenBinding>& tokens) {
    for (const auto& t : tokens) {
        for (std::size_t i = 0; i < t.width; ++i) handshake[t.source_step].mask.set(t.source_offset + i, ByteClass::Variable);
        for (const auto& e : t.echoes) {
            if (e.where.is_command()) continue;
            for (std::size_t i = 0; i < t.width; ++i) handshake[e.where.step].mask.set(e.offset + i, ByteClass::Variable);
        }
    }
}

/// Correlates variable server-to-client runs with later client-to-server
/// bytes carrying the same value in every session. A whole run is tried
/// first, then its single bytes. Variable bytes left without an explanation
/// (server runs with no echo, client bytes that echo nothing) are reported.
inline TokenAnalysis detect_tokens(const std::vector<HandshakeStep>& handshake,
                                   const std::vector<capture::TcpSession>& sessions) {
    TokenAnalysis out;
    for (const auto& s : sessions) {
        if (s.messages.size() < handshake.size()) {
            throw PreconditionViolation("session shorter than the aligned handshake");
        }
    }
    for (std::size_t step = 0; step < handshake.size(); ++step) {
        if (handshake[step].direction != Direction::ServerToClient) continue;
        for (auto [start, len] : handshake[step].mask.variable_runs()) {
            auto echoes = detail::find_echoes(handshake, sessions, step, start, len);
            if (!echoes.empty()) {
                out.bindings.push_back({step, start, len, std::move(echoes)});
                continue;
            }
            if (len == 1) {
                out.unexplained.push_back({TemplateRef::handshake(step), start, 1});
                continue;
            }
            for (std::size_t i = start; i < start + len; ++i) {
                auto single = detail::find_echoes(handshake, sessions, step, i, 1);
                if (single.empty()) {
                    out.unexplained.push_back({TemplateRef::handshake(step), i, 1});
                } else {
                    out.bindings.push_back({step, i, 1, std::move(single)});
                }
            }
        }
    }
    // Client-side variable bytes that are not token echoes.
    for (std::size_t step = 0; step < handshake.size(); ++step) {
        if (handshake[step].direction != Direction::ClientToServer) continue;
        std::vector<bool> echoed(handshake[step].bytes.size(), false);
        for (const auto& b : out.bindings)
            for (const auto& e : b.echoes)
                if (e.where == TemplateRef::handshake(step))
                    for (std::size_t i = 0; i < b.width; ++i) echoed[e.offset + i] = true;
        for (auto [start, len] : handshake[step].mask.variable_runs()) {
            std::size_t i = start;
            while (i < start + len) {
                if (echoed[i]) {
                    ++i;
                    continue;
                }
                std::size_t j = i;
                while (j < start + len && !echoed[j]) ++j;
                out.unexplained.push_back({TemplateRef::handshake(step), i, j - i});
                i = j;
            }
        }
    }
    return out;
}

}  // namespace icsfuzz::inference
