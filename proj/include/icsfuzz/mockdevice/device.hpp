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

// Emulated controller: session state machine plus square-wave output.
//
// DeviceCore is a pure state machine driven by timestamps. It never reads a
// clock; callers pass `now` on every event, which lets the same core run
// under a virtual clock in tests and under the wall clock in the TCP server.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icsfuzz/bytes.hpp"
#include "icsfuzz/error.hpp"
#include "icsfuzz/keydoc.hpp"
#include "icsfuzz/mockdevice/protocol.hpp"
#include "icsfuzz/monitor/edges.hpp"
#include "icsfuzz/rng.hpp"
#include "json.hpp"

namespace icsfuzz::mock {

enum class Vulnerability : std::uint8_t { ReplayAccepted, LengthCrash, UnauthReset, LoadDelay };

inline std::string to_string(Vulnerability v) {
    switch (v) {
        case Vulnerability::ReplayAccepted: return "V1";
        case Vulnerability::LengthCrash: return "V2";
        case Vulnerability::UnauthReset: return "V3";
        case Vulnerability::LoadDelay: return "V4";
    }
    return "?";
}

/// Accepts "V1".."V4" or the long names ("V1_ReplayAccepted", ...).
inline Vulnerability parse_vulnerability(const std::string& s) {
    static const std::array<std::pair<const char*, Vulnerability>, 4> kNames{{
        {"ReplayAccepted", Vulnerability::ReplayAccepted},
        {"LengthCrash", Vulnerability::LengthCrash},
        {"UnauthReset", Vulnerability::UnauthReset},
        {"LoadDelay", Vulnerability::LoadDelay},
    }};
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        std::string shortname = "V" + std::to_string(i + 1);
        if (s == shortname || s == shortname + "_" + kNames[i].first) return kNames[i].second;
    }
    throw ConfigError("unknown vulnerability '" + s + "'");
}

/// Comma-separated list; "none" or an empty string selects no vulnerability.
inline std::set<Vulnerability> parse_vulnerability_list(const std::string& s) {
    std::set<Vulnerability> out;
    if (s.empty() || s == "none") return out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        auto item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        out.insert(parse_vulnerability(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline constexpr std::array<KeyDoc, 10> kDeviceConfigKeys{{
    {"listen_port", "int", "1962", "TCP port of the controller protocol"},
    {"scope_port", "int", "1963", "TCP port streaming output edges"},
    {"bind_address", "string", "127.0.0.1", "address both listeners bind to"},
    {"token", "int", "72", "session token returned at offset 17 of the init response"},
    {"cycle_period_ms", "number", "100", "period of the output square wave"},
    {"reboot_duration_ms", "number", "400", "output silence after a reset; at least two cycle periods"},
    {"rx_timeout_ms", "number", "200", "wait for the rest of a frame whose declared length exceeds the bytes received"},
    {"identification", "string", "IBETH01N0_M", "identification string the init request must contain"},
    {"vulnerabilities", "list", "[\"V1\",\"V2\",\"V3\"]", "seeded flaws: V1 replay, V2 length crash, V3 unauthenticated reset, V4 load delay"},
    {"seed", "int", "0", "seed for per-session tokens when V1 is disabled"},
}};

struct DeviceConfig {
    std::uint16_t listen_port = 1962;
    std::uint16_t scope_port = 1963;
    std::string bind_address = "127.0.0.1";
    std::uint8_t token = 0x48;
    Nanos cycle_period = std::chrono::milliseconds(100);
    Nanos reboot_duration = std::chrono::milliseconds(400);
    Nanos rx_timeout = std::chrono::milliseconds(200);
    std::string identification = wire::kDefaultIdentification;
    std::set<Vulnerability> vulnerabilities{Vulnerability::ReplayAccepted, Vulnerability::LengthCrash,
                                            Vulnerability::UnauthReset};
    std::uint64_t seed = 0;

    bool has(Vulnerability v) const { return vulnerabilities.count(v) != 0; }

    void validate() const {
        if (cycle_period <= Nanos(0)) throw ConfigError("cycle_period must be positive");
        if (cycle_period.count() % 2 != 0) throw ConfigError("cycle_period must be an even number of nanoseconds");
        if (reboot_duration < 2 * cycle_period) throw ConfigError("reboot_duration must be at least two cycle periods");
        if (rx_timeout <= Nanos(0)) throw ConfigError("rx_timeout must be positive");
        if (identification.empty() || identification.size() > 12) {
            throw ConfigError("identification must be 1 to 12 characters");
        }
    }
};

inline DeviceConfig device_config_from_json(const nlohmann::json& j) {
    const std::string sec = "mock_device";
    reject_unknown_keys(j, kDeviceConfigKeys, sec);
    DeviceConfig c;
    read_key(j, "listen_port", c.listen_port, sec);
    read_key(j, "scope_port", c.scope_port, sec);
    read_key(j, "bind_address", c.bind_address, sec);
    int token = c.token;
    read_key(j, "token", token, sec);
    if (token < 0 || token > 255) throw ConfigError("token must fit in one byte");
    c.token = static_cast<std::uint8_t>(token);
    double ms = 0;
    if (j.contains("cycle_period_ms")) {
        read_key(j, "cycle_period_ms", ms, sec);
        c.cycle_period = millis_to_nanos(ms);
    }
    if (j.contains("reboot_duration_ms")) {
        read_key(j, "reboot_duration_ms", ms, sec);
        c.reboot_duration = millis_to_nanos(ms);
    }
    if (j.contains("rx_timeout_ms")) {
        read_key(j, "rx_timeout_ms", ms, sec);
        c.rx_timeout = millis_to_nanos(ms);
    }
    read_key(j, "identification", c.identification, sec);
    if (j.contains("vulnerabilities")) {
        std::vector<std::string> names;
        read_key(j, "vulnerabilities", names, sec);
        c.vulnerabilities.clear();
        for (const auto& n : names) c.vulnerabilities.insert(parse_vulnerability(n));
    }
    read_key(j, "seed", c.seed, sec);
    c.validate();
    return c;
}

enum class Phase : std::uint8_t { AwaitInit, AwaitAck, Ready, Rebooting, Crashed };

inline std::string to_string(Phase p) {
    switch (p) {
        case Phase::AwaitInit: return "AwaitInit";
        case Phase::AwaitAck: return "AwaitAck";
        case Phase::Ready: return "Ready";
        case Phase::Rebooting: return "Rebooting";
        case Phase::Crashed: return "Crashed";
    }
    return "?";
}

/// Result of feeding the core: replies to write, then an optional close.
struct DeviceOutput {
    std::vector<Bytes> replies;
    bool close = false;  // orderly close after the replies
    bool reset = false;  // connection torn down without replies

    void append(DeviceOutput&& o) {
        for (auto& r : o.replies) replies.push_back(std::move(r));
        close = close || o.close;
        reset = reset || o.reset;
    }
};

/// Number of stretched half-cycles after a V4 trigger (five full cycles).
inline constexpr int kLoadDelayHalfCycles = 10;

class DeviceCore {
public:
    explicit DeviceCore(DeviceConfig config, Nanos boot = Nanos(0))
        : config_(std::move(config)), rng_(splitmix64(config_.seed)) {
        config_.validate();
        next_edge_ = boot + half_period();
        last_edge_ = boot;
    }

    const DeviceConfig& config() const { return config_; }
    Phase phase() const { return phase_; }
    bool connected() const { return connected_; }
    monitor::Level output_level() const { return level_; }
    std::uint8_t session_token() const { return session_token_; }
    const std::map<std::uint16_t, std::uint16_t>& variables() const { return variables_; }

    /// Accepts a new connection unless one is open or the device is down.
    bool connect(Nanos now) {
        advance_to(now);
        if (connected_ || phase_ == Phase::Rebooting || phase_ == Phase::Crashed) return false;
        connected_ = true;
        phase_ = Phase::AwaitInit;
        buffer_.clear();
        session_token_ = config_.has(Vulnerability::ReplayAccepted)
                             ? config_.token
                             : static_cast<std::uint8_t>(config_.token + 1 + rng_.below(255));
        return true;
    }

    void disconnect(Nanos now) {
        advance_to(now);
        if (!connected_) return;
        connected_ = false;
        buffer_.clear();
        if (phase_ == Phase::AwaitAck || phase_ == Phase::Ready) phase_ = Phase::AwaitInit;
    }

    DeviceOutput receive(Nanos now, ByteView data) {
        advance_to(now);
        DeviceOutput out;
        if (!connected_ || data.empty()) return out;
        if (buffer_.empty()) rx_started_ = now;
        buffer_.insert(buffer_.end(), data.begin(), data.end());
        drain(now, out);
        return out;
    }

    /// Fires an expired frame timeout, if any.
    DeviceOutput poll(Nanos now) {
        advance_to(now);
        DeviceOutput out;
        if (!connected_ || buffer_.empty() || now < rx_started_ + config_.rx_timeout) return out;
        std::size_t received = buffer_.size();
        std::size_t declared = received >= wire::kHeaderLen ? be16(buffer_, wire::kLengthOffset) : 0;
        if (declared > received && phase_ == Phase::Ready && config_.has(Vulnerability::LengthCrash) &&
            declared - received > 16) {
            crash();
            out.reset = true;
            return out;
        }
        out.replies.push_back(error_reply(buffer_, wire::kStatusIncomplete));
        buffer_.clear();
        return out;
    }

    /// Earliest time at which poll() or advance_to() has work to do.
    std::optional<Nanos> next_deadline() const {
        std::optional<Nanos> d;
        auto take = [&](Nanos t) {
            if (!d || t < *d) d = t;
        };
        if (auto rx = rx_deadline()) take(*rx);
        if (phase_ == Phase::Rebooting) take(reboot_end_);
        if (auto e = next_edge_time()) take(*e);
        return d;
    }

    /// When a partially received frame times out.
    std::optional<Nanos> rx_deadline() const {
        if (!connected_ || buffer_.empty()) return std::nullopt;
        return rx_started_ + config_.rx_timeout;
    }

    std::optional<Nanos> next_edge_time() const {
        if (phase_ == Phase::Crashed || phase_ == Phase::Rebooting) return std::nullopt;
        return next_edge_;
    }

    /// Emits every edge due at or before now and completes a due reboot.
    void advance_to(Nanos now) {
        for (;;) {
            if (phase_ == Phase::Crashed) return;
            if (phase_ == Phase::Rebooting) {
                if (reboot_end_ > now) return;
                phase_ = Phase::AwaitInit;
                variables_.clear();
                stretch_ = 0;
                next_edge_ = reboot_end_;
                last_edge_ = reboot_end_;
                continue;
            }
            if (next_edge_ > now) return;
            level_ = level_ == monitor::Level::High ? monitor::Level::Low : monitor::Level::High;
            edges_.push_back({next_edge_, level_});
            last_edge_ = next_edge_;
            Nanos step = half_period();
            if (stretch_ > 0) {
                step = step * 3 / 2;
                --stretch_;
            }
            next_edge_ += step;
        }
    }

    std::vector<monitor::Edge> take_edges() {
        std::vector<monitor::Edge> out;
        out.swap(edges_);
        return out;
    }

private:
    Nanos half_period() const { return config_.cycle_period / 2; }

    static Bytes error_reply(ByteView frame, std::uint16_t status) {
        std::uint8_t cls = frame.size() >= 2 && frame[0] == wire::kRequest ? frame[1] : wire::kClassUnknown;
        std::uint16_t sub = cls == wire::kClassCommand && frame.size() >= 6 ? be16(frame, 4) : 0;
        return wire::reply(cls, sub, status);
    }

    void crash() {
        phase_ = Phase::Crashed;
        connected_ = false;
        buffer_.clear();
    }

    void drain(Nanos now, DeviceOutput& out) {
        while (connected_ && buffer_.size() >= wire::kHeaderLen) {
            std::size_t declared = be16(buffer_, wire::kLengthOffset);
            if (buffer_[0] != wire::kRequest || declared < 8) {
                out.replies.push_back(wire::reply(wire::kClassUnknown, 0, wire::kStatusMalformed));
                buffer_.clear();
                return;
            }
            if (declared > buffer_.size()) return;
            Bytes frame(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(declared));
            buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(declared));
            rx_started_ = now;
            dispatch(now, frame, out);
        }
    }

    bool token_ok(ByteView f) const { return f[wire::kCommandTokenOffset] == session_token_; }

    bool is_init(ByteView f) const {
        if (f[1] != wire::kClassInit || f.size() != wire::kInitLen) return false;
        const auto& id = config_.identification;
        return std::search(f.begin() + wire::kHeaderLen, f.end(), id.begin(), id.end()) != f.end();
    }

    void dispatch(Nanos now, ByteView f, DeviceOutput& out) {
        switch (phase_) {
            case Phase::AwaitInit:
                if (is_init(f)) {
                    out.replies.push_back(wire::init_response(session_token_));
                    phase_ = Phase::AwaitAck;
                } else {
                    out.replies.push_back(
                        error_reply(f, f[1] == wire::kClassInit ? wire::kStatusMalformed : wire::kStatusWrongPhase));
                }
                return;
            case Phase::AwaitAck:
                if (f[1] != wire::kClassCommand || f.size() < wire::kCommandTokenOffset + 1 ||
                    be16(f, 4) != wire::kSubStatus) {
                    out.replies.push_back(error_reply(f, wire::kStatusWrongPhase));
                } else if (!token_ok(f)) {
                    out.replies.push_back(error_reply(f, wire::kStatusBadToken));
                } else {
                    out.replies.push_back(wire::status_reply());
                    phase_ = Phase::Ready;
                }
                return;
            case Phase::Ready: ready(now, f, out); return;
            case Phase::Rebooting:
            case Phase::Crashed: return;
        }
    }

    void ready(Nanos now, ByteView f, DeviceOutput& out) {
        if (f[1] == wire::kClassInit) {
            out.replies.push_back(error_reply(f, wire::kStatusWrongPhase));
            return;
        }
        if (f[1] != wire::kClassCommand) {
            out.replies.push_back(error_reply(f, wire::kStatusUnknownCommand));
            return;
        }
        if (f.size() < wire::kCommandTokenOffset + 1) {
            out.replies.push_back(error_reply(f, wire::kStatusMalformed));
            return;
        }
        std::uint16_t sub = be16(f, 4);
        if (!token_ok(f) && !(sub == wire::kSubReset && config_.has(Vulnerability::UnauthReset))) {
            out.replies.push_back(error_reply(f, wire::kStatusBadToken));
            return;
        }
        switch (sub) {
            case wire::kSubStatus: out.replies.push_back(wire::status_reply()); return;
            case wire::kSubReset:
                out.replies.push_back(wire::reply(wire::kClassCommand, sub, wire::kStatusOk));
                out.close = true;
                connected_ = false;
                buffer_.clear();
                phase_ = Phase::Rebooting;
                reboot_end_ = now + config_.reboot_duration;
                return;
            case wire::kSubRead: {
                if (f.size() < wire::kAddressOffset + 2) break;
                auto it = variables_.find(be16(f, wire::kAddressOffset));
                Bytes value;
                put_be16(value, it == variables_.end() ? 0 : it->second);
                out.replies.push_back(wire::reply(wire::kClassCommand, sub, wire::kStatusOk, value));
                return;
            }
            case wire::kSubWrite: {
                if (f.size() < wire::kValueOffset + 2) break;
                std::uint16_t addr = be16(f, wire::kAddressOffset);
                variables_[addr] = be16(f, wire::kValueOffset);
                if (addr == 0xffff && config_.has(Vulnerability::LoadDelay)) {
                    // The pending transition is the first one to slip.
                    next_edge_ = last_edge_ + half_period() * 3 / 2;
                    stretch_ = kLoadDelayHalfCycles - 1;
                }
                out.replies.push_back(wire::reply(wire::kClassCommand, sub, wire::kStatusOk));
                return;
            }
            default: out.replies.push_back(error_reply(f, wire::kStatusUnknownCommand)); return;
        }
        out.replies.push_back(error_reply(f, wire::kStatusMalformed));
    }

    DeviceConfig config_;
    Rng rng_;
    Phase phase_ = Phase::AwaitInit;
    bool connected_ = false;
    std::uint8_t session_token_ = 0;
    std::map<std::uint16_t, std::uint16_t> variables_;
    Bytes buffer_;
    Nanos rx_started_{0};
    Nanos reboot_end_{0};
    monitor::Level level_ = monitor::Level::Low;
    Nanos next_edge_{0};
    Nanos last_edge_{0};
    int stretch_ = 0;
    std::vector<monitor::Edge> edges_;
};

}  // namespace icsfuzz::mock
