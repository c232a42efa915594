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

// Capture-to-model pipeline: framing, handshake alignment, token
// correlation and command identification.

#include <map>
#include <optional>
#include <vector>

#include "icsfuzz/capture/framing.hpp"
#include "icsfuzz/capture/reassembly.hpp"
#include "icsfuzz/inference/commands.hpp"
#include "icsfuzz/inference/handshake.hpp"
#include "icsfuzz/inference/length_field.hpp"
#include "icsfuzz/inference/model.hpp"

namespace icsfuzz::inference {

inline constexpr std::size_t kDefaultHandshakeLen = 3;
inline constexpr SimilarityScore kDefaultThreshold{9, 10};

struct AnalyzeOptions {
    std::size_t handshake_len = kDefaultHandshakeLen;
    SimilarityScore threshold = kDefaultThreshold;
    /// Forces a framing; otherwise it is inferred from the messages.
    std::optional<LengthFieldSpec> framing;
    bool infer_framing = true;
    /// Restricts analysis to sessions with this server port.
    std::optional<std::uint16_t> server_port;
};

/// Sessions that carry application data, filtered by server port (given, or
/// the most common one).
inline std::vector<capture::TcpSession> select_sessions(const std::vector<capture::TcpSession>& all,
                                                        std::optional<std::uint16_t> port) {
    std::vector<capture::TcpSession> out;
    if (!port) {
        std::map<std::uint16_t, std::size_t> counts;
        for (const auto& s : all)
            if (!s.messages.empty()) ++counts[s.server.port];
        std::size_t best = 0;
        for (auto [p, n] : counts) {
            if (n > best) {
                best = n;
                port = p;
            }
        }
    }
    for (const auto& s : all)
        if (!s.messages.empty() && port && s.server.port == *port) out.push_back(s);
    return out;
}

inline ProtocolModel analyze_sessions(std::vector<capture::TcpSession> sessions, const AnalyzeOptions& opts = {}) {
    ProtocolModel model;
    sessions = select_sessions(sessions, opts.server_port);
    if (sessions.size() < 2) throw PreconditionViolation("analysis needs at least two sessions with payload");
    model.server_port = sessions.front().server.port;

    model.framing = opts.framing;
    if (!model.framing && opts.infer_framing) {
        std::vector<Message> all;
        for (const auto& s : sessions) all.insert(all.end(), s.messages.begin(), s.messages.end());
        model.framing = infer_length_field(all);
    }
    if (model.framing) {
        for (auto& s : sessions) s = capture::segment_messages(std::move(s), model.framing);
    }

    model.handshake = align_handshake(sessions, opts.handshake_len, model.framing);
    auto tokens = detect_tokens(model.handshake, sessions);
    auto keys = detect_constant_keys(model.handshake, sessions, tokens.bindings, model.framing);
    tokens.bindings.insert(tokens.bindings.end(), keys.begin(), keys.end());
    mark_token_positions(model.handshake, tokens.bindings);
    auto cmds = identify_commands(sessions, opts.handshake_len, opts.threshold, tokens.bindings, model.framing);
    for (std::size_t t = 0; t < tokens.bindings.size(); ++t) {
        auto& echoes = tokens.bindings[t].echoes;
        echoes.insert(echoes.end(), cmds.token_echoes[t].begin(), cmds.token_echoes[t].end());
    }
    model.tokens = std::move(tokens.bindings);
    model.unexplained = std::move(tokens.unexplained);
    model.unexplained.insert(model.unexplained.end(), cmds.unexplained.begin(), cmds.unexplained.end());
    model.commands = std::move(cmds.templates);
    return model;
}

/// Reads, reassembles and analyzes capture files given as raw bytes.
inline ProtocolModel analyze_captures(const std::vector<Bytes>& files, const AnalyzeOptions& opts = {}) {
    std::vector<capture::TcpSession> sessions;
    for (const auto& f : files) {
        auto res = capture::reassemble(capture::read_capture(f));
        for (auto& s : res.sessions) {
            s.session_id = sessions.size();
            sessions.push_back(std::move(s));
        }
    }
    return analyze_sessions(std::move(sessions), opts);
}

/// Structural checks run before a model drives live traffic.
inline void validate_model(const ProtocolModel& m) {
    if (m.handshake.empty()) throw ConfigError("model has an empty handshake");
    for (const auto& s : m.handshake)
        if (s.bytes.empty() || s.mask.size() != s.bytes.size()) throw ConfigError("malformed handshake step");
    auto length_of = [&](const TemplateRef& r) -> std::size_t {
        if (r.is_command()) {
            auto* c = m.find_command(r.command);
            if (!c) throw ConfigError("token echo references unknown command " + r.command);
            return c->bytes.size();
        }
        if (r.step >= m.handshake.size()) throw ConfigError("token echo references unknown step");
        return m.handshake[r.step].bytes.size();
    };
    for (const auto& t : m.tokens) {
        if (t.width == 0) throw ConfigError("token width must be at least 1");
        if (t.source_step >= m.handshake.size() || m.handshake[t.source_step].direction != Direction::ServerToClient ||
            t.source_offset + t.width > m.handshake[t.source_step].bytes.size()) {
            throw ConfigError("token source must lie inside a server-to-client handshake step");
        }
        for (const auto& e : t.echoes)
            if (e.offset + t.width > length_of(e.where)) throw ConfigError("token echo offset out of range");
    }
    for (const auto& c : m.commands)
        if (c.bytes.empty() || c.mask.size() != c.bytes.size()) throw ConfigError("malformed command template " + c.id);
}

}  // namespace icsfuzz::inference
