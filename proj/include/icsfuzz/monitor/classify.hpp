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

// Square-wave timing analysis: baseline estimation, anomaly episodes and
// per-window verdicts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icsfuzz/error.hpp"
#include "icsfuzz/monitor/edges.hpp"

namespace icsfuzz::monitor {

struct MonitorOptions {
    double jitter_tolerance = 0.2;  // fraction of the period
    double stall_periods = 3.0;
    double reboot_min_periods = 2.0;
    double window_periods = 10.0;
};

struct SignalBaseline {
    Nanos period{0};
    double duty = 0.5;
    double jitter_tolerance = 0.2;

    Nanos high_time() const { return Nanos(std::llround(static_cast<double>(period.count()) * duty)); }
    Nanos low_time() const { return period - high_time(); }
    /// How long the output is expected to stay at a level once entered.
    Nanos hold_time(Level l) const { return l == Level::High ? high_time() : low_time(); }

    bool valid() const { return period > Nanos(0) && duty > 0 && duty < 1 && jitter_tolerance > 0 && jitter_tolerance < 1; }
};

inline constexpr std::size_t kMinBaselineEdges = 8;

namespace detail {

inline Nanos median(std::vector<Nanos> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return (v[n / 2 - 1] + v[n / 2]) / 2;
}

}  // namespace detail

/// Period is the median rising-to-rising interval, duty the median high time
/// over that period.
inline SignalBaseline estimate_baseline(const std::vector<Edge>& edges, double jitter_tolerance = 0.2) {
    if (edges.size() < kMinBaselineEdges) {
        throw InsufficientData("baseline needs at least " + std::to_string(kMinBaselineEdges) + " edges, got " +
                               std::to_string(edges.size()));
    }
    std::vector<Nanos> periods, highs;
    std::optional<Nanos> last_rise;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (edges[i].level != Level::High) continue;
        if (last_rise) periods.push_back(edges[i].timestamp - *last_rise);
        last_rise = edges[i].timestamp;
        if (i + 1 < edges.size() && edges[i + 1].level == Level::Low) highs.push_back(edges[i + 1].timestamp - edges[i].timestamp);
    }
    if (periods.empty() || highs.empty()) throw InsufficientData("no complete cycle in edge series");
    SignalBaseline b;
    b.period = detail::median(periods);
    b.duty = static_cast<double>(detail::median(highs).count()) / static_cast<double>(b.period.count());
    b.jitter_tolerance = jitter_tolerance;
    if (!b.valid()) throw InsufficientData("edge series does not describe a square wave");
    return b;
}

inline SignalBaseline estimate_baseline(const EdgeSeries& s, double jitter_tolerance = 0.2) {
    return estimate_baseline(s.edges, jitter_tolerance);
}

enum class VerdictClass : std::uint8_t { Normal, Delayed, Stalled, RebootSignature, InsufficientData };

inline std::string to_string(VerdictClass c) {
    switch (c) {
        case VerdictClass::Normal: return "Normal";
        case VerdictClass::Delayed: return "Delayed";
        case VerdictClass::Stalled: return "Stalled";
        case VerdictClass::RebootSignature: return "RebootSignature";
        case VerdictClass::InsufficientData: return "InsufficientData";
    }
    return "?";
}

inline bool is_anomaly(VerdictClass c) {
    return c == VerdictClass::Delayed || c == VerdictClass::Stalled || c == VerdictClass::RebootSignature;
}

/// One anomalous stretch of the output signal.
struct Episode {
    VerdictClass cls = VerdictClass::Delayed;
    Nanos onset{0};       // when the output first departed from the expected timing
    Nanos end{0};         // last edge of the episode, or observation end for open stalls
    double deviation = 0;  // max |actual - expected| / period (Delayed)
    Nanos silence{0};     // longest edge-free interval (Stalled, RebootSignature)
    bool open = false;    // stall with no resumption observed yet

    friend bool operator==(const Episode&, const Episode&) = default;
};

/// Online detector. Each edge is compared with the time expected from the
/// previous edge and the nominal hold time of its level.
///
/// A silence of at least reboot_min periods is judged once the next interval
/// is seen: a nominal interval marks a reboot, otherwise a silence above the
/// stall threshold is a stall and a shorter one a delay.
class AnomalyDetector {
public:
    AnomalyDetector(SignalBaseline baseline, MonitorOptions opts = {}) : b_(baseline), opts_(opts) {
        if (!b_.valid()) throw PreconditionViolation("invalid signal baseline");
    }

    const SignalBaseline& baseline() const { return b_; }
    const MonitorOptions& options() const { return opts_; }
    Nanos stall_threshold() const { return periods(opts_.stall_periods); }
    Nanos reboot_min() const { return periods(opts_.reboot_min_periods); }
    std::optional<Edge> last_edge() const { return last_; }
    bool stall_open() const { return stall_reported_; }

    void push(const Edge& e) {
        if (!last_) {
            last_ = e;
            return;
        }
        if (e.timestamp <= last_->timestamp || e.level == last_->level) return;
        Nanos expected = last_->timestamp + b_.hold_time(last_->level);
        Nanos interval = e.timestamp - last_->timestamp;
        double dev = fraction(e.timestamp - expected);
        bool deviant = std::abs(dev) > b_.jitter_tolerance;

        if (gap_) {
            // Interval right after a closed silence decides its class.
            resolve_gap(!deviant, e);
            if (!deviant) {
                last_ = e;
                return;
            }
        }
        if (stall_reported_) {
            // Edges resumed after a stall that was already reported.
            stall_reported_ = false;
            last_ = e;
            return;
        }
        if (interval >= reboot_min()) {
            close_delay();
            gap_ = Episode{VerdictClass::RebootSignature, expected, e.timestamp, std::abs(dev), interval, false};
        } else if (deviant) {
            if (!delay_) delay_ = Episode{VerdictClass::Delayed, std::min(expected, e.timestamp), e.timestamp, 0, Nanos(0), false};
            delay_->deviation = std::max(delay_->deviation, std::abs(dev));
            delay_->end = e.timestamp;
        } else {
            close_delay();
        }
        last_ = e;
    }

    /// Reports an open silence longer than the threshold (stall threshold by
    /// default) as Stalled, once per silence.
    void check_silence(Nanos now, std::optional<Nanos> threshold = std::nullopt) {
        if (!last_ || stall_reported_) return;
        Nanos limit = threshold.value_or(stall_threshold());
        if (now - last_->timestamp <= limit) return;
        if (gap_) {
            out_.push_back(*gap_);
            gap_.reset();
        }
        close_delay();
        Nanos onset = last_->timestamp + b_.hold_time(last_->level);
        out_.push_back({VerdictClass::Stalled, onset, now, 0, now - last_->timestamp, true});
        stall_reported_ = true;
    }

    /// Settles pending judgments at the end of an observation.
    void finish(std::optional<Nanos> observed_until = std::nullopt) {
        if (gap_) {
            out_.push_back(*gap_);
            gap_.reset();
        }
        close_delay();
        if (observed_until) check_silence(*observed_until);
    }

    std::vector<Episode> take() {
        std::vector<Episode> out;
        out.swap(out_);
        return out;
    }

    /// Forgets all history (e.g. after the target was restarted).
    void reset() {
        last_.reset();
        gap_.reset();
        delay_.reset();
        stall_reported_ = false;
    }

private:
    Nanos periods(double k) const { return Nanos(std::llround(static_cast<double>(b_.period.count()) * k)); }
    double fraction(Nanos d) const { return static_cast<double>(d.count()) / static_cast<double>(b_.period.count()); }

    void close_delay() {
        if (delay_) {
            out_.push_back(*delay_);
            delay_.reset();
        }
    }

    void resolve_gap(bool confirmed, const Edge& next) {
        Episode g = *gap_;
        gap_.reset();
        if (!confirmed) {
            g.cls = g.silence > stall_threshold() ? VerdictClass::Stalled : VerdictClass::Delayed;
            g.end = next.timestamp;
        }
        out_.push_back(g);
    }

    SignalBaseline b_;
    MonitorOptions opts_;
    std::optional<Edge> last_;
    std::optional<Episode> gap_;
    std::optional<Episode> delay_;
    bool stall_reported_ = false;
    std::vector<Episode> out_;
};

/// Runs the detector over a complete series.
inline std::vector<Episode> detect_episodes(const std::vector<Edge>& edges, const SignalBaseline& b,
                                            const MonitorOptions& opts, std::optional<Nanos> observed_until) {
    AnomalyDetector d(b, opts);
    for (const auto& e : edges) d.push(e);
    d.finish(observed_until);
    return d.take();
}

struct Verdict {
    Nanos window_start{0};
    Nanos window_end{0};
    VerdictClass cls = VerdictClass::Normal;
    double deviation = 0;  // Delayed: max deviation as a fraction of the period
    Nanos silence{0};      // Stalled, RebootSignature: silence duration
    Nanos onset{0};        // anomalies: start of the underlying episode

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

namespace detail {

inline int severity(VerdictClass c) {
    switch (c) {
        case VerdictClass::Stalled: return 4;
        case VerdictClass::RebootSignature: return 3;
        case VerdictClass::Delayed: return 2;
        default: return 0;
    }
}

}  // namespace detail

/// Tumbling windows of opts.window_periods periods anchored at the first
/// edge. A window takes the most severe episode whose onset lies inside it;
/// windows spanned by an earlier silence episode inherit it.
inline std::vector<Verdict> classify(const std::vector<Edge>& edges, const SignalBaseline& b,
                                     const MonitorOptions& opts = {},
                                     std::optional<Nanos> observed_until = std::nullopt) {
    if (!b.valid()) throw PreconditionViolation("invalid signal baseline");
    std::vector<Verdict> out;
    if (edges.empty()) return out;
    Nanos t0 = edges.front().timestamp;
    Nanos until = std::max(observed_until.value_or(edges.back().timestamp), edges.back().timestamp);
    Nanos width = Nanos(std::llround(static_cast<double>(b.period.count()) * opts.window_periods));
    if (width <= Nanos(0)) throw PreconditionViolation("window must be positive");

    auto episodes = detect_episodes(edges, b, opts, observed_until);
    std::size_t e = 0;
    for (Nanos ws = t0; ws == t0 || ws < until; ws += width) {
        Nanos we = ws + width;
        // The last window is closed on the right so it takes the final edge.
        bool last = we >= until;
        auto before_end = [&](Nanos t) { return t < we || (last && t <= we); };
        Verdict v{ws, we, VerdictClass::Normal, 0, Nanos(0), Nanos(0)};
        const Episode* pick = nullptr;
        for (const auto& ep : episodes) {
            bool inside = ep.onset >= ws && before_end(ep.onset);
            bool spans = ep.onset < ws && ep.end >= ws &&
                         (ep.cls == VerdictClass::Stalled || ep.cls == VerdictClass::RebootSignature);
            if (!inside && !spans) continue;
            if (!pick || detail::severity(ep.cls) > detail::severity(pick->cls)) pick = &ep;
        }
        std::size_t count = 0;
        while (e < edges.size() && edges[e].timestamp < ws) ++e;
        for (std::size_t k = e; k < edges.size() && before_end(edges[k].timestamp); ++k) ++count;
        if (pick) {
            v.cls = pick->cls;
            v.deviation = pick->deviation;
            v.silence = pick->silence;
            v.onset = pick->onset;
        } else if (count < 2) {
            v.cls = VerdictClass::InsufficientData;
        }
        out.push_back(v);
    }
    return out;
}

inline std::vector<Verdict> classify(const EdgeSeries& s, const SignalBaseline& b, const MonitorOptions& opts = {},
                                     std::optional<Nanos> observed_until = std::nullopt) {
    return classify(s.edges, b, opts, observed_until);
}

struct Attribution {
    std::optional<std::uint64_t> case_id;
    Verdict verdict;
    Nanos ambiguity{0};  // spacing to the case sent before the attributed one

    friend bool operator==(const Attribution&, const Attribution&) = default;
};

struct CaseTime {
    std::uint64_t case_id = 0;
    Nanos send_time{0};
};

/// Attributes each anomaly to the latest case sent at or before its onset.
/// Windows sharing one episode are reported once.
inline std::vector<Attribution> correlate(const std::vector<Verdict>& verdicts, const std::vector<CaseTime>& cases) {
    std::vector<Attribution> out;
    for (const auto& v : verdicts) {
        if (!is_anomaly(v.cls)) continue;
        bool dup = std::any_of(out.begin(), out.end(), [&](const Attribution& a) {
            return a.verdict.cls == v.cls && a.verdict.onset == v.onset;
        });
        if (dup) continue;
        auto it = std::upper_bound(cases.begin(), cases.end(), v.onset,
                                   [](Nanos t, const CaseTime& c) { return t < c.send_time; });
        Attribution a{std::nullopt, v, Nanos(0)};
        if (it != cases.begin()) {
            auto hit = std::prev(it);
            a.case_id = hit->case_id;
            if (hit != cases.begin()) a.ambiguity = hit->send_time - std::prev(hit)->send_time;
        }
        out.push_back(a);
    }
    return out;
}

}  // namespace icsfuzz::monitor
