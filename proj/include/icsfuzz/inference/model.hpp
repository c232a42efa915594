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

// Protocol model recovered from captures, and its text serialization.
//
// The model document is JSON with a fixed key order:
//
//   {
//     "format": "icsfuzz-protocol-model",
//     "version": 1,
//     "server_port": 1962,
//     "framing": {"offset": 2, "width": 2, "endian": "big"} | null,
//     "handshake": [{"direction": "c2s", "bytes": "<hex>", "mask": "CCLL..."}, ...],
//     "tokens": [{"source": {"step": 1, "offset": 17, "width": 1},
//                 "echoes": [{"step": 2, "offset": 11}, {"command": "cmd0", "offset": 11}]}],
//     "unexplained": [{"step": 1, "offset": 4, "width": 2} | {"command": "cmd1", ...}],
//     "commands": [{"id": "cmd0", "direction": "c2s", "bytes": "<hex>", "mask": "...",
//                   "label": null, "family": 0, "support": 2, "response": "<hex>" | null}]
//   }
//
// Mask characters: C constant (byte as in "bytes"), V variable, L length field.

#include <optional>
#include <string>
#include <vector>

#include "icsfuzz/bytes.hpp"
#include "icsfuzz/capture/framing.hpp"
#include "icsfuzz/capture/session.hpp"
#include "icsfuzz/error.hpp"
#include "json.hpp"

namespace icsfuzz::inference {

using capture::LengthFieldSpec;

enum class ByteClass : std::uint8_t { Constant, Variable, LengthField };

class ByteMask {
public:
    ByteMask() = default;
    explicit ByteMask(std::size_t n, ByteClass fill = ByteClass::Constant) : classes_(n, fill) {}

    std::size_t size() const { return classes_.size(); }
    ByteClass operator[](std::size_t i) const { return classes_[i]; }
    void set(std::size_t i, ByteClass c) { classes_[i] = c; }
    bool is_variable(std::size_t i) const { return i < classes_.size() && classes_[i] == ByteClass::Variable; }

    std::vector<std::size_t> variable_positions() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < classes_.size(); ++i)
            if (classes_[i] == ByteClass::Variable) out.push_back(i);
        return out;
    }

    /// Maximal runs [start, start+len) of Variable positions.
    std::vector<std::pair<std::size_t, std::size_t>> variable_runs() const {
        std::vector<std::pair<std::size_t, std::size_t>> runs;
        for (std::size_t i = 0; i < classes_.size();) {
            if (classes_[i] != ByteClass::Variable) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < classes_.size() && classes_[j] == ByteClass::Variable) ++j;
            runs.emplace_back(i, j - i);
            i = j;
        }
        return runs;
    }

    std::string to_string() const {
        std::string s;
        for (auto c : classes_) s.push_back(c == ByteClass::Constant ? 'C' : c == ByteClass::Variable ? 'V' : 'L');
        return s;
    }

    static ByteMask from_string(const std::string& s) {
        ByteMask m(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            switch (s[i]) {
                case 'C': m.classes_[i] = ByteClass::Constant; break;
                case 'V': m.classes_[i] = ByteClass::Variable; break;
                case 'L': m.classes_[i] = ByteClass::LengthField; break;
                default: throw ConfigError("invalid mask character '" + std::string(1, s[i]) + "'");
            }
        }
        return m;
    }

    friend bool operator==(const ByteMask&, const ByteMask&) = default;

private:
    std::vector<ByteClass> classes_;
};

struct HandshakeStep {
    Direction direction = Direction::ClientToServer;
    Bytes bytes;
    ByteMask mask;

    friend bool operator==(const HandshakeStep&, const HandshakeStep&) = default;
};

/// A place in the model: a handshake step or a command template.
struct TemplateRef {
    enum class Kind : std::uint8_t { HandshakeStep, Command };
    Kind kind = Kind::HandshakeStep;
    std::size_t step = 0;
    std::string command;

    static TemplateRef handshake(std::size_t step) { return {Kind::HandshakeStep, step, {}}; }
    static TemplateRef of_command(std::string id) { return {Kind::Command, 0, std::move(id)}; }
    bool is_command() const { return kind == Kind::Command; }

    friend bool operator==(const TemplateRef&, const TemplateRef&) = default;
};

struct EchoSite {
    TemplateRef where;
    std::size_t offset = 0;

    friend bool operator==(const EchoSite&, const EchoSite&) = default;
};

/// A server-issued value that the client must send back.
struct TokenBinding {
    std::size_t source_step = 0;
    std::size_t source_offset = 0;
    std::size_t width = 1;
    std::vector<EchoSite> echoes;

    friend bool operator==(const TokenBinding&, const TokenBinding&) = default;
};

/// Variable bytes that no token binding or length field explains.
struct UnexplainedField {
    TemplateRef where;
    std::size_t offset = 0;
    std::size_t width = 1;

    friend bool operator==(const UnexplainedField&, const UnexplainedField&) = default;
};

struct CommandTemplate {
    std::string id;
    Direction direction = Direction::ClientToServer;
    Bytes bytes;
    ByteMask mask;
    std::optional<std::string> label;
    /// Similarity cluster the command came from.
    std::size_t family = 0;
    /// Number of distinct captured sessions holding an exact copy.
    std::size_t support = 0;
    /// Server reply observed right after the first copy.
    std::optional<Bytes> response;

    friend bool operator==(const CommandTemplate&, const CommandTemplate&) = default;
};

struct ProtocolModel {
    std::uint16_t server_port = 0;
    std::optional<LengthFieldSpec> framing;
    std::vector<HandshakeStep> handshake;
    std::vector<TokenBinding> tokens;
    std::vector<UnexplainedField> unexplained;
    std::vector<CommandTemplate> commands;

    const CommandTemplate* find_command(const std::string& id) const {
        for (const auto& c : commands)
            if (c.id == id) return &c;
        return nullptr;
    }

    /// Token echo offsets inside a given template, with the binding index.
    std::vector<std::pair<std::size_t, std::size_t>> echo_offsets(const TemplateRef& where) const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t t = 0; t < tokens.size(); ++t)
            for (const auto& e : tokens[t].echoes)
                if (e.where == where) out.emplace_back(t, e.offset);
        return out;
    }

    friend bool operator==(const ProtocolModel&, const ProtocolModel&) = default;
};

inline constexpr int kModelVersion = 1;
inline constexpr const char* kModelFormat = "icsfuzz-protocol-model";

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson ref_to_json(const TemplateRef& r) {
    ojson j;
    if (r.is_command()) {
        j["command"] = r.command;
    } else {
        j["step"] = r.step;
    }
    return j;
}

inline TemplateRef ref_from_json(const ojson& j) {
    if (j.contains("command")) return TemplateRef::of_command(j.at("command").get<std::string>());
    return TemplateRef::handshake(j.at("step").get<std::size_t>());
}

inline Direction direction_from(const std::string& s) {
    if (s == "c2s") return Direction::ClientToServer;
    if (s == "s2c") return Direction::ServerToClient;
    throw ConfigError("invalid direction '" + s + "'");
}

}  // namespace detail

inline std::string serialize_model(const ProtocolModel& m) {
    using detail::ojson;
    ojson j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["server_port"] = m.server_port;
    if (m.framing) {
        j["framing"] = ojson{{"offset", m.framing->offset},
                             {"width", m.framing->width},
                             {"endian", m.framing->endian == Endian::Big ? "big" : "little"}};
    } else {
        j["framing"] = nullptr;
    }
    j["handshake"] = ojson::array();
    for (const auto& s : m.handshake) {
        j["handshake"].push_back(
            ojson{{"direction", to_string(s.direction)}, {"bytes", to_hex(s.bytes)}, {"mask", s.mask.to_string()}});
    }
    j["tokens"] = ojson::array();
    for (const auto& t : m.tokens) {
        ojson tj;
        tj["source"] = ojson{{"step", t.source_step}, {"offset", t.source_offset}, {"width", t.width}};
        tj["echoes"] = ojson::array();
        for (const auto& e : t.echoes) {
            ojson ej = detail::ref_to_json(e.where);
            ej["offset"] = e.offset;
            tj["echoes"].push_back(ej);
        }
        j["tokens"].push_back(tj);
    }
    j["unexplained"] = ojson::array();
    for (const auto& u : m.unexplained) {
        ojson uj = detail::ref_to_json(u.where);
        uj["offset"] = u.offset;
        uj["width"] = u.width;
        j["unexplained"].push_back(uj);
    }
    j["commands"] = ojson::array();
    for (const auto& c : m.commands) {
        ojson cj;
        cj["id"] = c.id;
        cj["direction"] = to_string(c.direction);
        cj["bytes"] = to_hex(c.bytes);
        cj["mask"] = c.mask.to_string();
        cj["label"] = c.label ? ojson(*c.label) : ojson(nullptr);
        cj["family"] = c.family;
        cj["support"] = c.support;
        cj["response"] = c.response ? ojson(to_hex(*c.response)) : ojson(nullptr);
        j["commands"].push_back(cj);
    }
    return j.dump(2) + "\n";
}

inline ProtocolModel parse_model(const std::string& text) {
    using detail::ojson;
    ProtocolModel m;
    try {
        auto j = ojson::parse(text);
        if (j.at("format").get<std::string>() != kModelFormat) throw ConfigError("not a protocol model document");
        if (j.at("version").get<int>() != kModelVersion) {
            throw ConfigError("unsupported model version " + std::to_string(j.at("version").get<int>()));
        }
        m.server_port = j.at("server_port").get<std::uint16_t>();
        if (!j.at("framing").is_null()) {
            const auto& f = j.at("framing");
            m.framing = LengthFieldSpec{f.at("offset").get<std::size_t>(), f.at("width").get<std::size_t>(),
                                        f.at("endian").get<std::string>() == "little" ? Endian::Little : Endian::Big};
        }
        for (const auto& s : j.at("handshake")) {
            HandshakeStep step{detail::direction_from(s.at("direction").get<std::string>()),
                               from_hex(s.at("bytes").get<std::string>()),
                               ByteMask::from_string(s.at("mask").get<std::string>())};
            if (step.mask.size() != step.bytes.size()) throw ConfigError("handshake mask length mismatch");
            m.handshake.push_back(std::move(step));
        }
        for (const auto& t : j.at("tokens")) {
            TokenBinding b;
            b.source_step = t.at("source").at("step").get<std::size_t>();
            b.source_offset = t.at("source").at("offset").get<std::size_t>();
            b.width = t.at("source").at("width").get<std::size_t>();
            for (const auto& e : t.at("echoes")) b.echoes.push_back({detail::ref_from_json(e), e.at("offset").get<std::size_t>()});
            m.tokens.push_back(std::move(b));
        }
        for (const auto& u : j.at("unexplained")) {
            m.unexplained.push_back(
                {detail::ref_from_json(u), u.at("offset").get<std::size_t>(), u.at("width").get<std::size_t>()});
        }
        for (const auto& c : j.at("commands")) {
            CommandTemplate t;
            t.id = c.at("id").get<std::string>();
            t.direction = detail::direction_from(c.at("direction").get<std::string>());
            t.bytes = from_hex(c.at("bytes").get<std::string>());
            t.mask = ByteMask::from_string(c.at("mask").get<std::string>());
            if (t.mask.size() != t.bytes.size()) throw ConfigError("command mask length mismatch");
            if (!c.at("label").is_null()) t.label = c.at("label").get<std::string>();
            t.family = c.at("family").get<std::size_t>();
            t.support = c.at("support").get<std::size_t>();
            if (!c.at("response").is_null()) t.response = from_hex(c.at("response").get<std::string>());
            m.commands.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid protocol model: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid protocol model: ") + e.what());
    }
    return m;
}

}  // namespace icsfuzz::inference
