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

// Campaign driver: probes, fuzz loop, reconnect and restart handling.

#include <functional>
#include <string>
#include <vector>

#include "icsfuzz/fuzz/mutation.hpp"
#include "icsfuzz/fuzz/observer.hpp"
#include "icsfuzz/fuzz/session.hpp"
#include "icsfuzz/keydoc.hpp"
#include "icsfuzz/report/report.hpp"

namespace icsfuzz::fuzz {

inline constexpr KeyDoc kCampaignConfigKeys[] = {
    {"model", "string", "\"\"", "protocol model file written by analyze"},
    {"target", "string", "\"\"", "device endpoint ip:port, or \"virtual\" for the in-process mock device"},
    {"monitor", "string", "\"\"", "edge stream endpoint ip:port; empty disables the monitor"},
    {"seed", "uint64", "1", "campaign seed; every random choice derives from it"},
    {"budget", "uint64", "1000", "number of fuzz cases to send (at least 1)"},
    {"response_timeout_ms", "number", "500", "wait for one reply"},
    {"inter_case_delay_ms", "number", "50", "pause after each case while the monitor is polled"},
    {"reconnect_delay_ms", "number", "100", "pause between failed connection attempts"},
    {"max_connect_failures", "uint", "20", "consecutive connect or handshake failures before the target counts as down"},
    {"settle_ms", "number", "1000", "pause after the probe phases"},
    {"baseline_edges", "uint", "16", "edges watched before the campaign starts"},
    {"baseline_timeout_ms", "number", "5000", "give up on the edge baseline after this long"},
    {"stall_confirm_periods", "number", "10", "silence, in periods, reported as a stall while the target still answers"},
    {"jitter_tolerance", "number", "0.2", "accepted edge deviation as a fraction of the period"},
    {"window_periods", "number", "10", "monitor verdict window in periods"},
    {"stop_on_first_finding", "bool", "false", "stop once any finding exists"},
    {"reuse_session", "bool", "false", "keep one session across cases until it fails"},
    {"replay_probes", "bool", "true", "replay every recorded command verbatim before fuzzing"},
    {"templates", "array of string", "[]", "command templates to fuzz; empty means all"},
    {"weights", "object", "{}", "strategy name to relative weight, e.g. {\"TokenCorrupt\": 10}"},
    {"report", "string", "\"report\"", "directory for records.jsonl and summary.txt"},
    {"restart_cmd", "string", "\"\"", "shell command run to bring a dead target back"},
};

struct CampaignConfig {
    std::string model_path;
    std::string target;
    std::string monitor;
    std::uint64_t seed = 1;
    std::uint64_t budget = 1000;
    Nanos response_timeout = std::chrono::milliseconds(500);
    Nanos inter_case_delay = std::chrono::milliseconds(50);
    Nanos reconnect_delay = std::chrono::milliseconds(100);
    std::size_t max_connect_failures = 20;
    Nanos settle = std::chrono::milliseconds(1000);
    std::size_t baseline_edges = 16;
    Nanos baseline_timeout = std::chrono::milliseconds(5000);
    double stall_confirm_periods = 10;
    monitor::MonitorOptions monitor_options;
    bool stop_on_first_finding = false;
    bool reuse_session = false;
    bool replay_probes = true;
    std::vector<std::string> templates;
    StrategyWeights weights;
    std::string report_dir = "report";
    std::string restart_cmd;

    void validate() const {
        if (budget < 1) throw ConfigError("budget must be at least 1");
        if (response_timeout <= Nanos(0)) throw ConfigError("response_timeout_ms must be positive");
        if (inter_case_delay < Nanos(0) || reconnect_delay < Nanos(0) || settle < Nanos(0)) {
            throw ConfigError("delays must not be negative");
        }
        if (max_connect_failures < 1) throw ConfigError("max_connect_failures must be at least 1");
        if (baseline_edges < monitor::kMinBaselineEdges) {
            throw ConfigError("baseline_edges must be at least " + std::to_string(monitor::kMinBaselineEdges));
        }
        if (stall_confirm_periods <= monitor_options.reboot_min_periods) {
            throw ConfigError("stall_confirm_periods must exceed the reboot minimum");
        }
        if (monitor_options.jitter_tolerance <= 0 || monitor_options.jitter_tolerance >= 0.5) {
            throw ConfigError("jitter_tolerance must lie in (0, 0.5)");
        }
        if (monitor_options.window_periods <= 0) throw ConfigError("window_periods must be positive");
        std::uint64_t total = 0;
        for (auto w : weights.w) total += w;
        if (total == 0) throw ConfigError("at least one strategy weight must be positive");
    }
};

inline CampaignConfig campaign_config_from_json(const nlohmann::json& j) {
    const std::string sec = "fuzz";
    reject_unknown_keys(j, kCampaignConfigKeys, sec);
    CampaignConfig c;
    read_key(j, "model", c.model_path, sec);
    read_key(j, "target", c.target, sec);
    read_key(j, "monitor", c.monitor, sec);
    read_key(j, "seed", c.seed, sec);
    read_key(j, "budget", c.budget, sec);
    auto ms = [&](const char* key, Nanos& out) {
        if (!j.contains(key)) return;
        double v = 0;
        read_key(j, key, v, sec);
        out = millis_to_nanos(v);
    };
    ms("response_timeout_ms", c.response_timeout);
    ms("inter_case_delay_ms", c.inter_case_delay);
    ms("reconnect_delay_ms", c.reconnect_delay);
    ms("settle_ms", c.settle);
    ms("baseline_timeout_ms", c.baseline_timeout);
    read_key(j, "max_connect_failures", c.max_connect_failures, sec);
    read_key(j, "baseline_edges", c.baseline_edges, sec);
    read_key(j, "stall_confirm_periods", c.stall_confirm_periods, sec);
    read_key(j, "jitter_tolerance", c.monitor_options.jitter_tolerance, sec);
    read_key(j, "window_periods", c.monitor_options.window_periods, sec);
    read_key(j, "stop_on_first_finding", c.stop_on_first_finding, sec);
    read_key(j, "reuse_session", c.reuse_session, sec);
    read_key(j, "replay_probes", c.replay_probes, sec);
    read_key(j, "templates", c.templates, sec);
    read_key(j, "report", c.report_dir, sec);
    read_key(j, "restart_cmd", c.restart_cmd, sec);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        if (!w.is_object()) throw ConfigError("key 'weights' in section 'fuzz' must be an object");
        for (const auto& [name, v] : w.items()) {
            if (!v.is_number_unsigned()) throw ConfigError("weight of " + name + " must be a non-negative integer");
            c.weights[parse_strategy(name)] = v.get<std::uint32_t>();
        }
    }
    return c;
}

namespace detail {

class Campaign {
public:
    Campaign(const CampaignConfig& cfg, const ProtocolModel& model, net::Target& target, net::EdgeSource* edges)
        : cfg_(cfg),
          model_(model),
          target_(target),
          clock_(target.clock()),
          observer_(clock_, edges, cfg.monitor_options, cfg.stall_confirm_periods) {}

    report::CampaignReport run() {
        cfg_.validate();
        select_templates();
        meta_.seed = cfg_.seed;
        meta_.budget = cfg_.budget;
        meta_.target = target_.describe();
        ctx_.monitor = observer_.enabled();

        // Fail early on a dead target before watching the output.
        {
            auto probe = target_.connect(cfg_.response_timeout);
            probe->close();
        }
        observer_.establish_baseline(cfg_.baseline_edges, cfg_.baseline_timeout);
        meta_.baseline = observer_.baseline();

        try {
            baseline_probes();
            if (!stopped_ && cfg_.replay_probes) replay_probes();
            fuzz_loop();
        } catch (const AbortedTargetUnreachable&) {
            if (cases_.empty()) throw;
            meta_.aborted = true;
            meta_.stop_reason = "target unreachable";
        }
        if (!meta_.aborted) observer_.wait(cfg_.settle);
        close_session();
        observer_.finish();
        return report::build_report(meta_, std::move(cases_), observer_.episodes(), std::move(ctx_));
    }

private:
    void select_templates() {
        for (const auto& t : model_.commands) {
            if (t.direction != Direction::ClientToServer) continue;
            if (!cfg_.templates.empty() &&
                std::find(cfg_.templates.begin(), cfg_.templates.end(), t.id) == cfg_.templates.end()) {
                continue;
            }
            templates_.push_back(&t);
        }
        for (const auto& id : cfg_.templates) {
            if (!model_.find_command(id)) throw ConfigError("model has no command template '" + id + "'");
        }
        if (templates_.empty()) throw PreconditionViolation("model has no client command template to fuzz");
    }

    /// Connects and completes the handshake, retrying until the failure
    /// limit. At the limit the target is judged down and restarted if
    /// possible; otherwise AbortedTargetUnreachable is thrown.
    Session& session() {
        if (session_ && session_->alive()) return *session_;
        close_session();
        std::size_t failures = 0;
        for (;;) {
            try {
                session_.emplace(connect_and_handshake(target_, model_, cfg_.response_timeout));
                return *session_;
            } catch (const ConnectFailed&) {
            } catch (const HandshakeStepTimeout&) {
            } catch (const HandshakeShapeMismatch&) {
            }
            session_.reset();
            if (++failures < cfg_.max_connect_failures) {
                observer_.wait(cfg_.reconnect_delay);
                continue;
            }
            observer_.confirm_down();
            if (!cases_.empty()) cases_.back().target_lost = true;
            if (!target_.restart()) throw AbortedTargetUnreachable("no session after " + std::to_string(cfg_.max_connect_failures) +
                                                                      " consecutive attempts");
            ++meta_.restarts;
            observer_.reset_history();
            failures = 0;
        }
    }

    void close_session() {
        if (session_) session_->close();
        session_.reset();
    }

    void after_case() {
        if (!cfg_.reuse_session) close_session();
        observer_.wait(cfg_.inter_case_delay);
        if (cfg_.stop_on_first_finding && has_finding()) {
            stopped_ = true;
            meta_.stop_reason = "first finding";
        }
    }

    bool has_finding() {
        const auto& last = cases_.back();
        if (!report::classify_case(last, {}, ctx_).empty()) return true;
        if (observer_.episode_count() == checked_episodes_) return false;
        checked_episodes_ = observer_.episode_count();
        auto rep = report::build_report(meta_, cases_, observer_.episodes(), ctx_);
        return !rep.findings.empty();
    }

    void baseline_probes() {
        for (const auto* t : templates_) {
            auto& s = session();
            report::CaseRecord rec;
            rec.kind = report::CaseKind::Baseline;
            rec.fuzz_case.case_id = next_id_++;
            rec.fuzz_case.template_id = t->id;
            rec.fuzz_case.bytes = t->bytes;
            rec.wire = s.render(TemplateRef::of_command(t->id), t->bytes);
            rec.observation = s.exchange(rec.wire, rec.fuzz_case.case_id, cfg_.response_timeout);
            if (rec.observation.response) ctx_.reference[t->id] = *rec.observation.response;
            cases_.push_back(std::move(rec));
            close_session();
            observer_.wait(cfg_.inter_case_delay);
            // Let a reboot run its course so it lands on this probe.
            observer_.wait(cfg_.settle);
        }
        learn_reboot_templates();
    }

    void learn_reboot_templates() {
        auto anomalies = report::attribute(observer_.episodes(), cases_);
        for (const auto& a : anomalies) {
            if (!a.case_id || a.episode.cls != monitor::VerdictClass::RebootSignature) continue;
            for (const auto& c : cases_)
                if (c.fuzz_case.case_id == *a.case_id) ctx_.reboot_expected.insert(c.fuzz_case.template_id);
        }
    }

    void replay_probes() {
        std::vector<Message> conversation;
        for (const auto& step : model_.handshake) {
            if (step.direction == Direction::ClientToServer) conversation.push_back({step.direction, Nanos(0), step.bytes, 0});
        }
        for (const auto* t : templates_) {
            if (stopped_) return;
            auto conv = conversation;
            conv.push_back({Direction::ClientToServer, Nanos(0), t->bytes, 0});
            session();
            close_session();
            std::uint64_t id = next_id_++;
            std::vector<NetworkObservation> obs;
            try {
                obs = replay_verbatim(target_, conv, model_.framing, cfg_.response_timeout, id);
            } catch (const ConnectFailed&) {
                continue;
            }
            report::CaseRecord rec;
            rec.kind = report::CaseKind::Replay;
            rec.fuzz_case.case_id = id;
            rec.fuzz_case.template_id = t->id;
            rec.fuzz_case.bytes = t->bytes;
            for (std::size_t i = 0; i + 1 < conv.size(); ++i) rec.preamble.push_back(conv[i].payload);
            rec.wire = t->bytes;
            rec.observation = obs.back();
            rec.observation.case_id = id;
            cases_.push_back(std::move(rec));
            after_case();
            observer_.wait(cfg_.settle);
        }
    }

    void fuzz_loop() {
        for (std::uint64_t k = 0; k < cfg_.budget && !stopped_; ++k) {
            const auto& t = *templates_[k % templates_.size()];
            auto& s = session();
            report::CaseRecord rec;
            rec.kind = report::CaseKind::Fuzz;
            rec.fuzz_case = make_case(t, model_, cfg_.seed, next_id_++, cfg_.weights);
            rec.wire = s.render(TemplateRef::of_command(t.id), rec.fuzz_case.bytes);
            apply_token_corruption(rec.wire, rec.fuzz_case.mutations);
            rec.observation = s.exchange(rec.wire, rec.fuzz_case.case_id, cfg_.response_timeout);
            cases_.push_back(std::move(rec));
            after_case();
        }
        if (stopped_) return;
        meta_.stop_reason = "budget exhausted";
    }

    const CampaignConfig& cfg_;
    const ProtocolModel& model_;
    net::Target& target_;
    Clock& clock_;
    Observer observer_;
    std::vector<const CommandTemplate*> templates_;
    std::optional<Session> session_;
    std::vector<report::CaseRecord> cases_;
    report::CampaignMeta meta_;
    report::ClassificationContext ctx_;
    std::uint64_t next_id_ = 0;
    std::size_t checked_episodes_ = 0;
    bool stopped_ = false;
};

}  // namespace detail

/// Runs probes and fuzz cases against the target. `edges` may be null to run
/// without a monitor. Throws AbortedTargetUnreachable when the target cannot
/// be reached before any case was sent; later loss ends the campaign with an
/// aborted report.
inline report::CampaignReport run_campaign(const CampaignConfig& cfg, const ProtocolModel& model, net::Target& target,
                                           net::EdgeSource* edges) {
    try {
        detail::Campaign c(cfg, model, target, edges);
        return c.run();
    } catch (const ConnectFailed& e) {
        throw AbortedTargetUnreachable(std::string("target unreachable: ") + e.what());
    }
}

}  // namespace icsfuzz::fuzz
