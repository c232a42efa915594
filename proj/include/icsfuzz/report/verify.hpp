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

// Re-running a finding's reproducer against a target, and reading findings
// back from a record stream.

#include <fstream>
#include <sstream>

#include "icsfuzz/fuzz/observer.hpp"
#include "icsfuzz/fuzz/session.hpp"
#include "icsfuzz/report/report.hpp"

namespace icsfuzz::report {

struct VerifyOptions {
    Nanos timeout = std::chrono::milliseconds(500);
    std::size_t baseline_edges = 16;
    Nanos baseline_timeout = std::chrono::milliseconds(5000);
    double stall_confirm_periods = 10;
    monitor::MonitorOptions monitor_options;
    /// Fallback observation time when no monitor baseline exists.
    Nanos observe_without_monitor = std::chrono::seconds(2);
};

struct VerifyResult {
    bool confirmed = false;
    CaseRecord replayed;
    std::vector<Episode> episodes;
    std::set<FindingClass> classes;
};

/// Sends the reproducer once, watches the target for two verdict windows and
/// classifies the outcome with the finding's own context. Confirmed iff the
/// finding's class recurs. Throws TargetUnreachable when no connection can be
/// made for the reproducer.
inline VerifyResult verify_finding_detail(const Finding& f, const fuzz::ProtocolModel& model, net::Target& target,
                                          net::EdgeSource* edges, const VerifyOptions& opts = {}) {
    if (!f.reproducer) throw PreconditionViolation("finding " + f.finding_id + " has no reproducer");
    const auto& r = *f.reproducer;
    if (r.messages.empty()) throw PreconditionViolation("finding " + f.finding_id + " has an empty reproducer");
    auto& clock = target.clock();
    fuzz::Observer obs(clock, edges, opts.monitor_options, opts.stall_confirm_periods);
    obs.establish_baseline(opts.baseline_edges, opts.baseline_timeout);

    VerifyResult out;
    auto& c = out.replayed;
    c.fuzz_case.case_id = r.case_id;
    c.fuzz_case.template_id = r.template_id;
    c.fuzz_case.mutations = r.mutations;
    try {
        if (r.precondition == "none") {
            c.kind = CaseKind::Replay;
            std::vector<Message> conv;
            for (const auto& m : r.messages) conv.push_back({Direction::ClientToServer, Nanos(0), m, 0});
            c.preamble.assign(r.messages.begin(), r.messages.end() - 1);
            c.wire = r.messages.back();
            c.fuzz_case.bytes = c.wire;
            auto seen = fuzz::replay_verbatim(target, conv, model.framing, opts.timeout, r.case_id);
            c.observation = seen.back();
        } else if (r.precondition == "handshake") {
            c.kind = CaseKind::Fuzz;
            auto s = fuzz::connect_and_handshake(target, model, opts.timeout);
            c.fuzz_case.bytes = r.messages.back();
            for (std::size_t i = 0; i < r.messages.size(); ++i) {
                Bytes wire = s.render(inference::TemplateRef::of_command(r.template_id), r.messages[i]);
                fuzz::apply_token_corruption(wire, r.mutations);
                if (i + 1 < r.messages.size()) {
                    s.exchange(wire, r.case_id, opts.timeout);
                    c.preamble.push_back(wire);
                } else {
                    c.wire = wire;
                    c.observation = s.exchange(wire, r.case_id, opts.timeout);
                }
            }
            s.close();
        } else {
            throw PreconditionViolation("unknown reproducer precondition '" + r.precondition + "'");
        }
    } catch (const ConnectFailed& e) {
        throw TargetUnreachable(std::string("cannot reach target for verification: ") + e.what());
    } catch (const HandshakeStepTimeout& e) {
        throw TargetUnreachable(std::string("handshake failed during verification: ") + e.what());
    } catch (const HandshakeShapeMismatch& e) {
        throw TargetUnreachable(std::string("handshake failed during verification: ") + e.what());
    }

    if (auto b = obs.baseline()) {
        double periods = 2 * opts.monitor_options.window_periods;
        obs.wait(Nanos(static_cast<Nanos::rep>(static_cast<double>(b->period.count()) * periods)));
    } else {
        obs.wait(opts.observe_without_monitor);
    }
    try {
        auto conn = target.connect(opts.timeout);
        conn->close();
    } catch (const ConnectFailed&) {
        c.target_lost = true;
        obs.confirm_down();
    }
    obs.finish();

    ClassificationContext ctx;
    ctx.monitor = obs.enabled();
    if (f.reboot_expected) ctx.reboot_expected.insert(f.template_id);
    if (f.reference_response) ctx.reference[f.template_id] = *f.reference_response;
    for (const auto& e : obs.episodes())
        if (e.onset >= c.send_time()) out.episodes.push_back(e);
    std::vector<const Episode*> eps;
    for (const auto& e : out.episodes) eps.push_back(&e);
    out.classes = classify_case(c, eps, ctx);
    out.confirmed = out.classes.count(f.cls) != 0;
    return out;
}

inline bool verify_finding(const Finding& f, const fuzz::ProtocolModel& model, net::Target& target,
                           net::EdgeSource* edges, const VerifyOptions& opts = {}) {
    return verify_finding_detail(f, model, target, edges, opts).confirmed;
}

// Reading findings back --------------------------------------------------

namespace detail {

inline FindingClass parse_finding_class(const std::string& s) {
    for (auto c : {FindingClass::CrashStall, FindingClass::RebootTriggered, FindingClass::DelayAnomaly, FindingClass::AuthBypass,
                   FindingClass::ReplayAccepted, FindingClass::ProtocolError}) {
        if (to_string(c) == s) return c;
    }
    throw ConfigError("unknown finding class '" + s + "'");
}

inline fuzz::Mutation mutation_from_json(const nlohmann::json& j) {
    fuzz::Mutation m;
    m.strategy = fuzz::parse_strategy(j.at("strategy").get<std::string>());
    m.offset = j.at("offset").get<std::size_t>();
    m.payload = from_hex(j.at("payload").get<std::string>());
    m.value = j.at("value").get<std::uint64_t>();
    return m;
}

inline std::optional<Bytes> hex_opt(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return from_hex(j.get<std::string>());
}

}  // namespace detail

inline Finding finding_from_json(const nlohmann::json& j) {
    try {
        Finding f;
        f.finding_id = j.at("finding_id").get<std::string>();
        f.cls = detail::parse_finding_class(j.at("class").get<std::string>());
        if (!j.at("case_ref").is_null()) f.case_ref = j.at("case_ref").get<std::uint64_t>();
        f.template_id = j.at("template_id").get<std::string>();
        f.strategies = j.at("strategies").get<std::vector<std::string>>();
        f.occurrences = j.at("occurrences").get<std::size_t>();
        f.case_ids = j.at("case_ids").get<std::vector<std::uint64_t>>();
        f.reboot_expected = j.at("reboot_expected").get<bool>();
        f.reference_response = detail::hex_opt(j.at("reference_response"));
        const auto& ev = j.at("evidence");
        if (!ev.at("observation").is_null()) {
            const auto& o = ev.at("observation");
            NetworkObservation n;
            n.case_id = f.case_ref.value_or(0);
            n.response = detail::hex_opt(o.at("response"));
            auto ev_name = o.at("tcp_event").get<std::string>();
            for (auto e : {net::TcpEvent::ResponseReceived, net::TcpEvent::Timeout, net::TcpEvent::ConnectionReset,
                           net::TcpEvent::ConnectionClosed})
                if (net::to_string(e) == ev_name) n.tcp_event = e;
            n.latency = Nanos(o.at("latency_ns").get<std::int64_t>());
            n.sent_at = Nanos(o.at("sent_at_ns").get<std::int64_t>());
            f.observation = n;
        }
        if (!ev.at("verdict").is_null()) {
            const auto& v = ev.at("verdict");
            Episode e;
            auto name = v.at("class").get<std::string>();
            for (auto c : {VerdictClass::Normal, VerdictClass::Delayed, VerdictClass::Stalled, VerdictClass::RebootSignature,
                           VerdictClass::InsufficientData})
                if (monitor::to_string(c) == name) e.cls = c;
            e.onset = Nanos(v.at("onset_ns").get<std::int64_t>());
            e.end = Nanos(v.at("end_ns").get<std::int64_t>());
            e.deviation = v.at("deviation").get<double>();
            e.silence = Nanos(v.at("silence_ns").get<std::int64_t>());
            e.open = v.at("open").get<bool>();
            f.verdict = e;
        }
        if (!j.at("reproducer").is_null()) {
            const auto& rj = j.at("reproducer");
            Reproducer r;
            r.precondition = rj.at("precondition").get<std::string>();
            r.template_id = rj.at("template_id").get<std::string>();
            for (const auto& m : rj.at("messages")) r.messages.push_back(from_hex(m.get<std::string>()));
            for (const auto& m : rj.at("mutations")) r.mutations.push_back(detail::mutation_from_json(m));
            r.seed = rj.at("seed").get<std::uint64_t>();
            r.case_id = rj.at("case_id").get<std::uint64_t>();
            f.reproducer = r;
        }
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed finding record: ") + e.what());
    }
}

/// Finding records of a records.jsonl stream.
inline std::vector<Finding> read_findings(std::istream& in) {
    std::vector<Finding> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("records line " + std::to_string(n) + " is not valid JSON");
        }
        if (j.value("record", "") == "finding") out.push_back(finding_from_json(j));
    }
    return out;
}

}  // namespace icsfuzz::report
