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

// Configuration file: one JSON object with a section per subcommand.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "icsfuzz/fuzz/campaign.hpp"
#include "icsfuzz/inference/analyze.hpp"
#include "icsfuzz/keydoc.hpp"
#include "icsfuzz/mockdevice/device.hpp"

namespace icsfuzz {

inline constexpr KeyDoc kAnalyzeConfigKeys[] = {
    {"pcap", "array of string", "[]", "capture files (pcap or pcap-ng) to analyze"},
    {"out", "string", "\"model.json\"", "where the protocol model is written"},
    {"handshake_len", "uint", "3", "number of leading messages that form the handshake"},
    {"threshold", "number", "0.9", "similarity at or above which messages share a template"},
    {"server_port", "uint", "0", "server port to analyze; 0 picks the most common one"},
};

inline constexpr KeyDoc kReplayConfigKeys[] = {
    {"model", "string", "\"\"", "protocol model file"},
    {"target", "string", "\"\"", "device endpoint ip:port, or \"virtual\""},
    {"monitor", "string", "\"\"", "edge stream endpoint ip:port; empty disables the monitor"},
    {"command", "string", "\"\"", "command template id to send"},
    {"pcap", "string", "\"\"", "capture whose client commands are sent after the handshake"},
    {"handshake_only", "bool", "false", "stop after the handshake"},
    {"timeout_ms", "number", "500", "wait for one reply"},
    {"observe_ms", "number", "2000", "time the monitor watches the output after the last message"},
};

inline constexpr KeyDoc kReportConfigKeys[] = {
    {"dir", "string", "\"report\"", "report directory read by verify"},
    {"finding", "string", "\"\"", "finding id to verify, e.g. F001"},
    {"timeout_ms", "number", "500", "wait for one reply during verification"},
};

struct ConfigSection {
    const char* name;
    std::span<const KeyDoc> keys;
};

inline std::vector<ConfigSection> config_sections() {
    return {{"analyze", kAnalyzeConfigKeys},
            {"fuzz", fuzz::kCampaignConfigKeys},
            {"mock_device", mock::kDeviceConfigKeys},
            {"replay", kReplayConfigKeys},
            {"report", kReportConfigKeys}};
}

struct AnalyzeConfig {
    std::vector<std::string> pcaps;
    std::string out = "model.json";
    inference::AnalyzeOptions options;
};

struct ReplayConfig {
    std::string model_path;
    std::string target;
    std::string monitor;
    std::string command;
    std::string pcap;
    bool handshake_only = false;
    Nanos timeout = std::chrono::milliseconds(500);
    Nanos observe = std::chrono::milliseconds(2000);
};

struct ReportConfig {
    std::string dir = "report";
    std::string finding;
    Nanos timeout = std::chrono::milliseconds(500);
};

struct GlobalConfig {
    AnalyzeConfig analyze;
    fuzz::CampaignConfig fuzz;
    mock::DeviceConfig mock_device;
    ReplayConfig replay;
    ReportConfig report;
};

namespace detail {

inline void read_ms(const nlohmann::json& j, const char* key, Nanos& out, const std::string& sec) {
    if (!j.contains(key)) return;
    double v = 0;
    read_key(j, key, v, sec);
    if (v < 0) throw ConfigError("key '" + std::string(key) + "' in section '" + sec + "' must not be negative");
    out = millis_to_nanos(v);
}

}  // namespace detail

/// Parses and validates every section. Throws ConfigError naming the
/// offending section and key.
inline GlobalConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    GlobalConfig g;
    for (const auto& [name, v] : j.items()) {
        bool known = false;
        for (const auto& s : config_sections()) known = known || name == s.name;
        if (!known) throw ConfigError("unknown configuration section '" + name + "'");
    }
    if (j.contains("analyze")) {
        const auto& a = j.at("analyze");
        const std::string sec = "analyze";
        reject_unknown_keys(a, kAnalyzeConfigKeys, sec);
        read_key(a, "pcap", g.analyze.pcaps, sec);
        read_key(a, "out", g.analyze.out, sec);
        read_key(a, "handshake_len", g.analyze.options.handshake_len, sec);
        if (a.contains("threshold")) {
            double t = 0;
            read_key(a, "threshold", t, sec);
            if (!(t > 0 && t <= 1)) throw ConfigError("threshold must lie in (0, 1]");
            g.analyze.options.threshold = inference::SimilarityScore::from_double(t);
        }
        if (a.contains("server_port")) {
            std::uint16_t p = 0;
            read_key(a, "server_port", p, sec);
            if (p) g.analyze.options.server_port = p;
        }
        if (g.analyze.options.handshake_len == 0) throw ConfigError("handshake_len must be at least 1");
    }
    if (j.contains("fuzz")) {
        g.fuzz = fuzz::campaign_config_from_json(j.at("fuzz"));
        g.fuzz.validate();
    }
    if (j.contains("mock_device")) g.mock_device = mock::device_config_from_json(j.at("mock_device"));
    g.mock_device.validate();
    if (j.contains("replay")) {
        const auto& r = j.at("replay");
        const std::string sec = "replay";
        reject_unknown_keys(r, kReplayConfigKeys, sec);
        read_key(r, "model", g.replay.model_path, sec);
        read_key(r, "target", g.replay.target, sec);
        read_key(r, "monitor", g.replay.monitor, sec);
        read_key(r, "command", g.replay.command, sec);
        read_key(r, "pcap", g.replay.pcap, sec);
        read_key(r, "handshake_only", g.replay.handshake_only, sec);
        detail::read_ms(r, "timeout_ms", g.replay.timeout, sec);
        detail::read_ms(r, "observe_ms", g.replay.observe, sec);
    }
    if (j.contains("report")) {
        const auto& r = j.at("report");
        const std::string sec = "report";
        reject_unknown_keys(r, kReportConfigKeys, sec);
        read_key(r, "dir", g.report.dir, sec);
        read_key(r, "finding", g.report.finding, sec);
        detail::read_ms(r, "timeout_ms", g.report.timeout, sec);
    }
    return g;
}

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline Bytes read_binary_file(const std::filesystem::path& p) {
    auto s = read_text_file(p);
    return Bytes(s.begin(), s.end());
}

inline GlobalConfig load_config(const std::filesystem::path& p) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(p));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    return parse_config(j);
}

/// Key reference for --help: one block per section.
inline std::string config_help(const std::vector<ConfigSection>& sections) {
    std::ostringstream o;
    o << "Configuration keys (JSON file given with --config):\n";
    for (const auto& s : sections) {
        o << "  [" << s.name << "]\n";
        for (const auto& k : s.keys) {
            o << "    " << k.name << " (" << k.type << ", default " << k.default_value << "): " << k.description << "\n";
        }
    }
    return o.str();
}

}  // namespace icsfuzz
