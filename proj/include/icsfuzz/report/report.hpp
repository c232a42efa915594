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

// Findings: attribution of anomalies to cases, classification,
// de-duplication and the record stream / summary writers.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "icsfuzz/fuzz/mutation.hpp"
#include "icsfuzz/fuzz/session.hpp"
#include "icsfuzz/monitor/classify.hpp"
#include "json.hpp"

namespace icsfuzz::report {

using fuzz::NetworkObservation;
using monitor::Episode;
using monitor::VerdictClass;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSchemaName = "icsfuzz-report";

enum class FindingClass : std::uint8_t { CrashStall, RebootTriggered, DelayAnomaly, AuthBypass, ReplayAccepted, ProtocolError };

inline std::string to_string(FindingClass c) {
    switch (c) {
        case FindingClass::CrashStall: return "CrashStall";
        case FindingClass::RebootTriggered: return "RebootTriggered";
        case FindingClass::DelayAnomaly: return "DelayAnomaly";
        case FindingClass::AuthBypass: return "AuthBypass";
        case FindingClass::ReplayAccepted: return "ReplayAccepted";
        case FindingClass::ProtocolError: return "ProtocolError";
    }
    return "?";
}

enum class CaseKind : std::uint8_t { Baseline, Replay, Fuzz };

inline std::string to_string(CaseKind k) {
    switch (k) {
        case CaseKind::Baseline: return "baseline";
        case CaseKind::Replay: return "replay";
        case CaseKind::Fuzz: return "fuzz";
    }
    return "?";
}

/// A sent case merged with its observation.
struct CaseRecord {
    fuzz::FuzzCase fuzz_case;  // replay and baseline cases carry no mutations
    CaseKind kind = CaseKind::Fuzz;
    /// Client messages sent before the case on the same connection without
    /// handshake logic (replay cases only).
    std::vector<Bytes> preamble;
    Bytes wire;  // bytes written for the case itself
    NetworkObservation observation;
    /// The target stopped accepting connections after this case.
    bool target_lost = false;

    Nanos send_time() const { return observation.sent_at; }
};

struct AnomalyRecord {
    Episode episode;
    std::optional<std::uint64_t> case_id;
    Nanos ambiguity{0};
};

/// What is needed to send the case again.
struct Reproducer {
    /// "handshake": run the model handshake, then send `messages` with live
    /// tokens substituted and token corruption re-applied.
    /// "none": send `messages` verbatim on a fresh connection.
    std::string precondition = "handshake";
    std::string template_id;
    std::vector<fuzz::Mutation> mutations;
    std::vector<Bytes> messages;
    std::uint64_t seed = 0;
    std::uint64_t case_id = 0;
};

struct Finding {
    std::string finding_id;
    FindingClass cls = FindingClass::ProtocolError;
    std::optional<std::uint64_t> case_ref;
    std::string template_id;
    std::vector<std::string> strategies;
    std::size_t occurrences = 0;
    std::vector<std::uint64_t> case_ids;
    std::optional<NetworkObservation> observation;
    std::optional<Episode> verdict;
    std::optional<Reproducer> reproducer;
    /// Classification context the finding was judged with.
    bool reboot_expected = false;
    std::optional<Bytes> reference_response;
};

/// Knowledge used to tell findings from expected behavior.
struct ClassificationContext {
    /// Templates whose authentic form reboots the target.
    std::set<std::string> reboot_expected;
    /// Authentic response per template.
    std::map<std::string, Bytes> reference;
    bool monitor = true;
};

inline bool has_token_corruption(const std::vector<fuzz::Mutation>& ms) {
    return std::any_of(ms.begin(), ms.end(), [](const fuzz::Mutation& m) { return m.strategy == fuzz::Strategy::TokenCorrupt; });
}

inline int severity(const Episode& e) {
    switch (e.cls) {
        case VerdictClass::Stalled: return 3;
        case VerdictClass::RebootSignature: return 2;
        case VerdictClass::Delayed: return 1;
        default: return 0;
    }
}

/// Finding classes a case earns from its attributed episodes and its
/// network evidence. Empty when its behavior is expected.
inline std::set<FindingClass> classify_case(const CaseRecord& c, const std::vector<const Episode*>& episodes,
                                            const ClassificationContext& ctx) {
    std::set<FindingClass> out;
    const auto& tid = c.fuzz_case.template_id;
    auto ref = ctx.reference.find(tid);
    bool matches_reference = ref != ctx.reference.end() && c.observation.response && *c.observation.response == ref->second;
    bool corrupt = has_token_corruption(c.fuzz_case.mutations);

    for (const auto* e : episodes) {
        switch (e->cls) {
            case VerdictClass::Stalled: out.insert(FindingClass::CrashStall); break;
            case VerdictClass::Delayed: out.insert(FindingClass::DelayAnomaly); break;
            case VerdictClass::RebootSignature: {
                if (c.kind == CaseKind::Replay) {
                    out.insert(FindingClass::ReplayAccepted);
                } else if (corrupt) {
                    out.insert(FindingClass::AuthBypass);
                } else if (c.kind == CaseKind::Baseline || ctx.reboot_expected.count(tid)) {
                    // authentic reboot command
                } else {
                    bool acknowledged_reset = false;
                    for (const auto& t : ctx.reboot_expected) {
                        auto r = ctx.reference.find(t);
                        acknowledged_reset = acknowledged_reset ||
                                             (r != ctx.reference.end() && c.observation.response && *c.observation.response == r->second);
                    }
                    if (!acknowledged_reset) out.insert(FindingClass::RebootTriggered);
                }
                break;
            }
            default: break;
        }
    }
    if (c.kind == CaseKind::Replay && matches_reference) out.insert(FindingClass::ReplayAccepted);
    if (c.kind == CaseKind::Fuzz && corrupt && matches_reference) out.insert(FindingClass::AuthBypass);
    if (!ctx.monitor && c.target_lost) out.insert(FindingClass::CrashStall);
    return out;
}

/// Attributes each episode to the latest case sent at or before its onset.
inline std::vector<AnomalyRecord> attribute(const std::vector<Episode>& episodes, const std::vector<CaseRecord>& cases) {
    std::vector<monitor::CaseTime> times;
    for (const auto& c : cases) times.push_back({c.fuzz_case.case_id, c.send_time()});
    std::stable_sort(times.begin(), times.end(),
                     [](const monitor::CaseTime& a, const monitor::CaseTime& b) { return a.send_time < b.send_time; });
    std::vector<AnomalyRecord> out;
    for (const auto& e : episodes) {
        AnomalyRecord a{e, std::nullopt, Nanos(0)};
        auto it = std::upper_bound(times.begin(), times.end(), e.onset,
                                   [](Nanos t, const monitor::CaseTime& c) { return t < c.send_time; });
        if (it != times.begin()) {
            auto hit = std::prev(it);
            a.case_id = hit->case_id;
            if (hit != times.begin()) a.ambiguity = hit->send_time - std::prev(hit)->send_time;
        }
        out.push_back(a);
    }
    return out;
}

struct CampaignMeta {
    std::uint64_t seed = 0;
    std::uint64_t budget = 0;
    std::string target;
    bool aborted = false;
    std::string stop_reason = "budget exhausted";
    std::size_t restarts = 0;
    std::optional<monitor::SignalBaseline> baseline;
};

struct CampaignReport {
    CampaignMeta meta;
    std::vector<CaseRecord> cases;
    std::vector<AnomalyRecord> anomalies;
    std::vector<Finding> findings;
    ClassificationContext context;

    std::map<FindingClass, std::size_t> counts() const {
        std::map<FindingClass, std::size_t> m;
        for (const auto& f : findings) ++m[f.cls];
        return m;
    }
    bool has(FindingClass c) const {
        return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.cls == c; });
    }
};

inline Reproducer make_reproducer(const CaseRecord& c, std::uint64_t seed) {
    Reproducer r;
    r.template_id = c.fuzz_case.template_id;
    r.mutations = c.fuzz_case.mutations;
    r.seed = seed;
    r.case_id = c.fuzz_case.case_id;
    if (c.kind == CaseKind::Replay) {
        r.precondition = "none";
        r.messages = c.preamble;
        r.messages.push_back(c.wire);
    } else {
        r.messages = {c.fuzz_case.bytes};
    }
    return r;
}

/// Groups per-case classes into findings keyed by (class, template,
/// strategy signature). Occurrences count distinct cases.
inline CampaignReport build_report(CampaignMeta meta, std::vector<CaseRecord> cases, const std::vector<Episode>& episodes,
                                   ClassificationContext ctx) {
    CampaignReport rep;
    rep.meta = std::move(meta);
    rep.context = std::move(ctx);
    rep.anomalies = attribute(episodes, cases);
    rep.cases = std::move(cases);

    std::map<std::uint64_t, std::size_t> index;
    for (std::size_t i = 0; i < rep.cases.size(); ++i) index[rep.cases[i].fuzz_case.case_id] = i;
    std::map<std::uint64_t, std::vector<const Episode*>> by_case;
    std::vector<const AnomalyRecord*> unattributed;
    for (const auto& a : rep.anomalies) {
        if (a.case_id) {
            by_case[*a.case_id].push_back(&a.episode);
        } else {
            unattributed.push_back(&a);
        }
    }

    using Key = std::tuple<FindingClass, std::string, std::vector<std::string>>;
    std::map<Key, std::size_t> slot;
    std::vector<Finding> found;
    std::vector<std::uint64_t> first_seen;
    for (const auto& c : rep.cases) {
        auto eps = by_case.count(c.fuzz_case.case_id) ? by_case[c.fuzz_case.case_id] : std::vector<const Episode*>{};
        for (auto cls : classify_case(c, eps, rep.context)) {
            auto sig = c.kind == CaseKind::Replay ? std::vector<std::string>{"Replay"}
                                                   : fuzz::strategy_signature(c.fuzz_case.mutations);
            Key key{cls, c.fuzz_case.template_id, sig};
            auto it = slot.find(key);
            if (it == slot.end()) {
                Finding f;
                f.cls = cls;
                f.case_ref = c.fuzz_case.case_id;
                f.template_id = c.fuzz_case.template_id;
                f.strategies = sig;
                f.observation = c.observation;
                for (const auto* e : eps) {
                    if (!f.verdict || severity(*e) > severity(*f.verdict)) f.verdict = *e;
                }
                f.reproducer = make_reproducer(c, rep.meta.seed);
                f.reboot_expected = rep.context.reboot_expected.count(c.fuzz_case.template_id) != 0;
                if (auto r = rep.context.reference.find(c.fuzz_case.template_id); r != rep.context.reference.end()) {
                    f.reference_response = r->second;
                }
                slot.emplace(key, found.size());
                found.push_back(std::move(f));
                it = slot.find(key);
            }
            auto& f = found[it->second];
            if (f.case_ids.empty() || f.case_ids.back() != c.fuzz_case.case_id) f.case_ids.push_back(c.fuzz_case.case_id);
            f.occurrences = f.case_ids.size();
        }
    }
    if (!unattributed.empty()) {
        Finding f;
        f.cls = FindingClass::ProtocolError;
        f.verdict = unattributed.front()->episode;
        f.occurrences = unattributed.size();
        found.push_back(std::move(f));
    }
    for (std::size_t i = 0; i < found.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "F%03zu", i + 1);
        found[i].finding_id = id;
    }
    rep.findings = std::move(found);
    return rep;
}

// Record stream ----------------------------------------------------------

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson hex_or_null(const std::optional<Bytes>& b) { return b ? ojson(to_hex(*b)) : ojson(nullptr); }

inline ojson mutation_json(const fuzz::Mutation& m) {
    return ojson{{"strategy", fuzz::to_string(m.strategy)}, {"offset", m.offset}, {"payload", to_hex(m.payload)}, {"value", m.value}};
}

inline ojson observation_json(const NetworkObservation& o) {
    return ojson{{"tcp_event", net::to_string(o.tcp_event)},
                 {"response", hex_or_null(o.response)},
                 {"latency_ns", o.latency.count()},
                 {"sent_at_ns", o.sent_at.count()}};
}

inline ojson episode_json(const Episode& e) {
    return ojson{{"class", monitor::to_string(e.cls)}, {"onset_ns", e.onset.count()},   {"end_ns", e.end.count()},
                 {"deviation", e.deviation},             {"silence_ns", e.silence.count()}, {"open", e.open}};
}

inline ojson case_json(const CaseRecord& c) {
    ojson j;
    j["record"] = "case";
    j["case_id"] = c.fuzz_case.case_id;
    j["kind"] = to_string(c.kind);
    j["template_id"] = c.fuzz_case.template_id;
    j["mutations"] = ojson::array();
    for (const auto& m : c.fuzz_case.mutations) j["mutations"].push_back(mutation_json(m));
    j["bytes"] = to_hex(c.fuzz_case.bytes);
    j["wire"] = to_hex(c.wire);
    if (!c.preamble.empty()) {
        j["preamble"] = ojson::array();
        for (const auto& p : c.preamble) j["preamble"].push_back(to_hex(p));
    }
    j["rng_seed"] = c.fuzz_case.rng_seed;
    j["observation"] = observation_json(c.observation);
    j["target_lost"] = c.target_lost;
    return j;
}

inline ojson finding_json(const Finding& f) {
    ojson j;
    j["record"] = "finding";
    j["finding_id"] = f.finding_id;
    j["class"] = to_string(f.cls);
    j["case_ref"] = f.case_ref ? ojson(*f.case_ref) : ojson(nullptr);
    j["template_id"] = f.template_id;
    j["strategies"] = f.strategies;
    j["occurrences"] = f.occurrences;
    j["case_ids"] = f.case_ids;
    j["evidence"] = ojson{{"observation", f.observation ? observation_json(*f.observation) : ojson(nullptr)},
                          {"verdict", f.verdict ? episode_json(*f.verdict) : ojson(nullptr)}};
    if (f.reproducer) {
        const auto& r = *f.reproducer;
        ojson rj;
        rj["precondition"] = r.precondition;
        rj["template_id"] = r.template_id;
        rj["messages"] = ojson::array();
        for (const auto& m : r.messages) rj["messages"].push_back(to_hex(m));
        rj["mutations"] = ojson::array();
        for (const auto& m : r.mutations) rj["mutations"].push_back(mutation_json(m));
        rj["seed"] = r.seed;
        rj["case_id"] = r.case_id;
        j["reproducer"] = rj;
    } else {
        j["reproducer"] = nullptr;
    }
    j["reboot_expected"] = f.reboot_expected;
    j["reference_response"] = hex_or_null(f.reference_response);
    return j;
}

}  // namespace detail

/// One JSON object per line: header, cases and anomalies merged by time
/// (case first on ties), findings, summary.
inline std::string to_jsonl(const CampaignReport& rep) {
    using detail::ojson;
    std::string out;
    auto line = [&](const ojson& j) { out += j.dump() + "\n"; };

    ojson h;
    h["record"] = "header";
    h["schema"] = kSchemaName;
    h["schema_version"] = kSchemaVersion;
    h["seed"] = rep.meta.seed;
    h["budget"] = rep.meta.budget;
    h["target"] = rep.meta.target;
    if (rep.meta.baseline) {
        h["baseline"] = ojson{{"period_ns", rep.meta.baseline->period.count()},
                              {"duty", rep.meta.baseline->duty},
                              {"jitter_tolerance", rep.meta.baseline->jitter_tolerance}};
    } else {
        h["baseline"] = nullptr;
    }
    h["reboot_expected"] = rep.context.reboot_expected;
    line(h);

    std::vector<std::size_t> order(rep.cases.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rep.cases[a].send_time() < rep.cases[b].send_time(); });
    std::vector<std::size_t> aorder(rep.anomalies.size());
    for (std::size_t i = 0; i < aorder.size(); ++i) aorder[i] = i;
    std::stable_sort(aorder.begin(), aorder.end(), [&](std::size_t a, std::size_t b) {
        return rep.anomalies[a].episode.onset < rep.anomalies[b].episode.onset;
    });
    std::size_t ci = 0, ai = 0;
    while (ci < order.size() || ai < aorder.size()) {
        bool take_case = ai == aorder.size() ||
                         (ci < order.size() && rep.cases[order[ci]].send_time() <= rep.anomalies[aorder[ai]].episode.onset);
        if (take_case) {
            line(detail::case_json(rep.cases[order[ci++]]));
        } else {
            const auto& a = rep.anomalies[aorder[ai++]];
            ojson j = detail::episode_json(a.episode);
            j["record"] = "anomaly";
            j["case_id"] = a.case_id ? ojson(*a.case_id) : ojson(nullptr);
            j["ambiguity_ns"] = a.ambiguity.count();
            line(j);
        }
    }
    for (const auto& f : rep.findings) line(detail::finding_json(f));

    ojson s;
    s["record"] = "summary";
    s["cases"] = rep.cases.size();
    s["anomalies"] = rep.anomalies.size();
    s["findings"] = rep.findings.size();
    ojson counts = ojson::object();
    for (auto [cls, n] : rep.counts()) counts[to_string(cls)] = n;
    s["counts"] = counts;
    s["aborted"] = rep.meta.aborted;
    s["stop_reason"] = rep.meta.stop_reason;
    s["restarts"] = rep.meta.restarts;
    line(s);
    return out;
}

inline std::string summary_text(const CampaignReport& rep) {
    std::ostringstream o;
    std::size_t fuzz_cases = 0;
    for (const auto& c : rep.cases) fuzz_cases += c.kind == CaseKind::Fuzz;
    o << "campaign seed " << rep.meta.seed << ", target " << rep.meta.target << "\n";
    o << "cases sent: " << rep.cases.size() << " (" << fuzz_cases << " fuzz, " << rep.cases.size() - fuzz_cases
      << " probes), budget " << rep.meta.budget << "\n";
    o << "stop: " << rep.meta.stop_reason << (rep.meta.aborted ? " (aborted)" : "") << ", target restarts "
      << rep.meta.restarts << "\n";
    o << "anomalies: " << rep.anomalies.size() << "\n";
    o << "findings: " << rep.findings.size() << "\n";
    for (auto [cls, n] : rep.counts()) o << "  " << to_string(cls) << ": " << n << "\n";
    for (const auto& f : rep.findings) {
        o << "\n" << f.finding_id << " " << to_string(f.cls);
        if (!f.template_id.empty()) o << " template " << f.template_id;
        if (!f.strategies.empty()) {
            o << " [";
            for (std::size_t i = 0; i < f.strategies.size(); ++i) o << (i ? "," : "") << f.strategies[i];
            o << "]";
        }
        o << ", " << f.occurrences << " occurrence" << (f.occurrences == 1 ? "" : "s") << "\n";
        if (!f.reproducer) {
            o << "  no case precedes the anomaly; nothing to reproduce\n";
            continue;
        }
        const auto& r = *f.reproducer;
        o << "  first case " << r.case_id << "\n";
        if (r.precondition == "none") {
            o << "  reproduce: connect and send verbatim, waiting for each reply:\n";
        } else {
            o << "  reproduce: complete the handshake, then send (token sites carry the live token";
            o << (has_token_corruption(r.mutations) ? ", then XOR the recorded mask" : "") << "):\n";
        }
        for (const auto& m : r.messages) o << "    " << to_hex(m) << "\n";
        o << "  re-run: icsfuzz verify --report <dir> --finding " << f.finding_id << " --model <model> --target <target>\n";
    }
    return o.str();
}

inline void write_report(const CampaignReport& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "records.jsonl", std::ios::binary) << to_jsonl(rep);
    std::ofstream(dir / "summary.txt", std::ios::binary) << summary_text(rep);
}

}  // namespace icsfuzz::report
