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

// Live sessions: handshake replay with token substitution, command exchange.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icsfuzz/capture/session.hpp"
#include "icsfuzz/inference/model.hpp"
#include "icsfuzz/net/transport.hpp"

namespace icsfuzz::fuzz {

using inference::ProtocolModel;
using inference::TemplateRef;
using net::TcpEvent;

enum class SessionState : std::uint8_t { TcpConnected, HandshakeDone, Failed };

inline std::string to_string(SessionState s) {
    switch (s) {
        case SessionState::TcpConnected: return "TcpConnected";
        case SessionState::HandshakeDone: return "HandshakeDone";
        case SessionState::Failed: return "Failed";
    }
    return "?";
}

struct NetworkObservation {
    std::uint64_t case_id = 0;
    std::optional<Bytes> response;
    TcpEvent tcp_event = TcpEvent::Timeout;
    Nanos latency{0};
    Nanos sent_at{0};

    friend bool operator==(const NetworkObservation&, const NetworkObservation&) = default;
};

/// Writes each learned token value at its echo sites inside `where`. Sites
/// beyond the end of a shortened message are skipped.
inline void substitute_tokens(Bytes& bytes, const ProtocolModel& model, const TemplateRef& where,
                              const std::vector<Bytes>& tokens) {
    for (auto [t, off] : model.echo_offsets(where)) {
        if (t >= tokens.size()) continue;
        const auto& v = tokens[t];
        if (off + v.size() <= bytes.size()) std::copy(v.begin(), v.end(), bytes.begin() + static_cast<std::ptrdiff_t>(off));
    }
}

class Session {
public:
    Session(std::unique_ptr<net::Connection> conn, Clock& clock, const ProtocolModel& model, std::string endpoint)
        : conn_(std::move(conn)), clock_(&clock), model_(&model), endpoint_(std::move(endpoint)) {}

    Session(Session&&) = default;
    Session& operator=(Session&&) = default;
    ~Session() { close(); }

    SessionState state() const { return state_; }
    const std::string& endpoint() const { return endpoint_; }
    /// One value per model token binding, read from the live handshake.
    const std::vector<Bytes>& learned_tokens() const { return tokens_; }
    const std::optional<Bytes>& handshake_reply() const { return handshake_reply_; }

    /// Replays the model handshake. Client steps are sent as recorded except
    /// at token echo sites, which carry the values read from the live server
    /// steps. The last client step must be answered. On error the session is
    /// left Failed and the error is rethrown.
    void handshake(Nanos timeout) {
        const auto& model = *model_;
        if (model.handshake.empty()) throw PreconditionViolation("model has no handshake");
        if (state_ != SessionState::TcpConnected) throw PreconditionViolation("handshake already attempted");
        auto& clock = *clock_;
        tokens_.assign(model.tokens.size(), {});
        auto fail = [&]() { state_ = SessionState::Failed; };
        for (std::size_t k = 0; k < model.handshake.size(); ++k) {
            const auto& step = model.handshake[k];
            if (step.direction == Direction::ClientToServer) {
                Bytes wire = render(TemplateRef::handshake(k), step.bytes);
                if (!conn_->send(wire)) {
                    fail();
                    throw HandshakeStepTimeout(k);
                }
                continue;
            }
            auto r = net::read_message(*conn_, clock, model.framing, timeout, pending_);
            if (r.event != TcpEvent::ResponseReceived) {
                fail();
                throw HandshakeStepTimeout(k);
            }
            if (r.data.size() != step.bytes.size()) {
                fail();
                throw HandshakeShapeMismatch("handshake step " + std::to_string(k) + ": expected " +
                                                 std::to_string(step.bytes.size()) + " bytes, got " +
                                                 std::to_string(r.data.size()),
                                             k);
            }
            for (std::size_t i = 0; i < r.data.size(); ++i) {
                if (step.mask[i] == inference::ByteClass::Constant && r.data[i] != step.bytes[i]) {
                    fail();
                    throw HandshakeShapeMismatch(
                        "handshake step " + std::to_string(k) + ": constant byte " + std::to_string(i) + " differs", k);
                }
            }
            for (std::size_t t = 0; t < model.tokens.size(); ++t) {
                const auto& b = model.tokens[t];
                if (b.source_step != k) continue;
                tokens_[t].assign(r.data.begin() + static_cast<std::ptrdiff_t>(b.source_offset),
                                  r.data.begin() + static_cast<std::ptrdiff_t>(b.source_offset + b.width));
            }
        }
        if (model.handshake.back().direction == Direction::ClientToServer) {
            auto r = net::read_message(*conn_, clock, model.framing, timeout, pending_);
            if (r.event != TcpEvent::ResponseReceived) {
                fail();
                throw HandshakeStepTimeout(model.handshake.size() - 1);
            }
            handshake_reply_ = std::move(r.data);
        }
        state_ = SessionState::HandshakeDone;
    }

    /// Sends one message and waits for one framed reply.
    NetworkObservation exchange(ByteView wire, std::uint64_t case_id, Nanos timeout) {
        if (state_ != SessionState::HandshakeDone) {
            throw PreconditionViolation("commands may only be sent after the handshake");
        }
        return raw_exchange(wire, case_id, timeout);
    }

    /// Template bytes with live token values substituted.
    Bytes render(const TemplateRef& where, ByteView bytes) const {
        Bytes out(bytes.begin(), bytes.end());
        substitute_tokens(out, *model_, where, tokens_);
        return out;
    }

    void close() {
        if (conn_) conn_->close();
    }

    bool alive() const { return alive_; }

private:
    NetworkObservation raw_exchange(ByteView wire, std::uint64_t case_id, Nanos timeout) {
        NetworkObservation obs;
        obs.case_id = case_id;
        obs.sent_at = clock_->now();
        if (!alive_ || !conn_->send(wire)) {
            alive_ = false;
            obs.tcp_event = TcpEvent::ConnectionReset;
            return obs;
        }
        auto r = net::read_message(*conn_, *clock_, model_->framing, timeout, pending_);
        obs.latency = clock_->now() - obs.sent_at;
        obs.tcp_event = r.event;
        if (r.event == TcpEvent::ResponseReceived) {
            obs.response = std::move(r.data);
        } else if (r.event != TcpEvent::Timeout) {
            alive_ = false;
        }
        return obs;
    }

    std::unique_ptr<net::Connection> conn_;
    Clock* clock_;
    const ProtocolModel* model_;
    std::string endpoint_;
    SessionState state_ = SessionState::TcpConnected;
    std::vector<Bytes> tokens_;
    std::optional<Bytes> handshake_reply_;
    Bytes pending_;
    bool alive_ = true;
};

/// Connects and replays the handshake (see Session::handshake).
inline Session connect_and_handshake(net::Target& target, const ProtocolModel& model, Nanos timeout) {
    if (model.handshake.empty()) throw PreconditionViolation("model has no handshake");
    Session s(target.connect(timeout), target.clock(), model, target.describe());
    s.handshake(timeout);
    return s;
}

/// Template of the model that a raw message instantiates: same length and
/// equal at every Constant position.
inline const inference::CommandTemplate* match_command(const ProtocolModel& model, ByteView msg) {
    for (const auto& c : model.commands) {
        if (c.bytes.size() != msg.size()) continue;
        bool ok = true;
        for (std::size_t i = 0; i < msg.size() && ok; ++i)
            ok = c.mask[i] != inference::ByteClass::Constant || c.bytes[i] == msg[i];
        if (ok) return &c;
    }
    return nullptr;
}

/// Sends each message on an established session; token echo sites of the
/// matching command template carry the live token values.
inline std::vector<NetworkObservation> replay(Session& session, const ProtocolModel& model,
                                              const std::vector<Bytes>& messages, Nanos timeout,
                                              std::uint64_t first_id = 0) {
    if (session.state() != SessionState::HandshakeDone) {
        throw PreconditionViolation("replay needs a session in HandshakeDone");
    }
    std::vector<NetworkObservation> out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        Bytes wire = messages[i];
        if (auto* c = match_command(model, wire)) wire = session.render(TemplateRef::of_command(c->id), wire);
        out.push_back(session.exchange(wire, first_id + i, timeout));
    }
    return out;
}

/// Replays the client side of a recorded conversation byte for byte, with no
/// handshake logic and no token substitution. One observation per client
/// message.
inline std::vector<NetworkObservation> replay_verbatim(net::Target& target, const std::vector<Message>& conversation,
                                                       const std::optional<capture::LengthFieldSpec>& framing, Nanos timeout,
                                                       std::uint64_t first_id = 0) {
    auto& clock = target.clock();
    auto conn = target.connect(timeout);
    Bytes pending;
    std::vector<NetworkObservation> out;
    bool alive = true;
    for (const auto& m : conversation) {
        if (m.direction != Direction::ClientToServer) continue;
        NetworkObservation obs;
        obs.case_id = first_id + out.size();
        obs.sent_at = clock.now();
        if (!alive || !conn->send(m.payload)) {
            alive = false;
            obs.tcp_event = TcpEvent::ConnectionReset;
            out.push_back(obs);
            continue;
        }
        auto r = net::read_message(*conn, clock, framing, timeout, pending);
        obs.latency = clock.now() - obs.sent_at;
        obs.tcp_event = r.event;
        if (r.event == TcpEvent::ResponseReceived) {
            obs.response = std::move(r.data);
        } else if (r.event != TcpEvent::Timeout) {
            alive = false;
        }
        out.push_back(std::move(obs));
    }
    conn->close();
    return out;
}

}  // namespace icsfuzz::fuzz
