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

// Monitor side of a campaign: pulls edges from the target's output stream,
// feeds the detector and keeps every episode it reports.

#include <optional>
#include <vector>

#include "icsfuzz/clock.hpp"
#include "icsfuzz/monitor/classify.hpp"
#include "icsfuzz/net/transport.hpp"

namespace icsfuzz::fuzz {

inline constexpr Nanos kObserverStep = std::chrono::milliseconds(10);

class Observer {
public:
    /// source may be null: the monitor is then disabled and every call is a
    /// plain wait.
    Observer(Clock& clock, net::EdgeSource* source, monitor::MonitorOptions opts = {}, double stall_confirm_periods = 10)
        : clock_(clock), source_(source), opts_(opts), confirm_periods_(stall_confirm_periods) {}

    bool enabled() const { return source_ != nullptr; }
    const std::optional<monitor::SignalBaseline>& baseline() const { return baseline_; }
    const std::vector<monitor::Edge>& edges() const { return edges_; }
    const std::vector<monitor::Episode>& episodes() const { return episodes_; }

    /// Watches the output until min_edges edges arrived, then fixes the
    /// baseline. Throws InsufficientData on timeout.
    void establish_baseline(std::size_t min_edges, Nanos timeout) {
        if (!source_) return;
        Nanos deadline = clock_.now() + timeout;
        std::vector<monitor::Edge> seen;
        for (;;) {
            auto fresh = source_->poll(clock_.now());
            edges_.insert(edges_.end(), fresh.begin(), fresh.end());
            seen.insert(seen.end(), fresh.begin(), fresh.end());
            if (seen.size() >= min_edges) break;
            if (clock_.now() >= deadline) {
                throw InsufficientData("monitor saw " + std::to_string(seen.size()) + " edges, baseline needs " +
                                       std::to_string(min_edges));
            }
            clock_.sleep_for(kObserverStep);
        }
        baseline_ = monitor::estimate_baseline(seen, opts_.jitter_tolerance);
        detector_.emplace(*baseline_, opts_);
        for (const auto& e : seen) detector_->push(e);
        collect();
    }

    /// Ingests available edges and reports silences longer than the
    /// confirmation threshold.
    void pump() {
        if (!source_) return;
        auto fresh = source_->poll(clock_.now());
        edges_.insert(edges_.end(), fresh.begin(), fresh.end());
        if (!detector_) return;
        for (const auto& e : fresh) detector_->push(e);
        detector_->check_silence(clock_.now(), confirm_threshold());
        collect();
    }

    void wait(Nanos d) {
        Nanos end = clock_.now() + d;
        while (clock_.now() < end) {
            clock_.sleep_for(std::min(kObserverStep, end - clock_.now()));
            pump();
        }
    }

    /// The target is known to be down: watch until the silence reaches the
    /// plain stall threshold, then judge it.
    void confirm_down() {
        pump();
        if (!detector_) return;
        Nanos stall(static_cast<Nanos::rep>(static_cast<double>(baseline_->period.count()) * opts_.stall_periods));
        Nanos since = edges_.empty() ? clock_.now() : edges_.back().timestamp;
        Nanos left = std::clamp(since + stall - clock_.now(), Nanos(0), stall);
        if (left > Nanos(0)) wait(left + kObserverStep);
        detector_->check_silence(clock_.now());
        collect();
    }

    /// Forgets signal history, e.g. after the target was restarted.
    void reset_history() {
        if (detector_) {
            detector_->finish();
            collect();
            detector_->reset();
        }
    }

    void finish() {
        pump();
        if (!detector_) return;
        detector_->finish();
        collect();
    }

    std::size_t episode_count() const { return episodes_.size(); }

private:
    Nanos confirm_threshold() const {
        return Nanos(static_cast<Nanos::rep>(static_cast<double>(baseline_->period.count()) * confirm_periods_));
    }

    void collect() {
        auto eps = detector_->take();
        episodes_.insert(episodes_.end(), eps.begin(), eps.end());
    }

    Clock& clock_;
    net::EdgeSource* source_;
    monitor::MonitorOptions opts_;
    double confirm_periods_;
    std::optional<monitor::SignalBaseline> baseline_;
    std::optional<monitor::AnomalyDetector> detector_;
    std::vector<monitor::Edge> edges_;
    std::vector<monitor::Episode> episodes_;
};

}  // namespace icsfuzz::fuzz
