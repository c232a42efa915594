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

#include <gtest/gtest.h>

#include <random>

#include "icsfuzz/monitor/classify.hpp"

using namespace icsfuzz;
using namespace icsfuzz::monitor;
using std::chrono::milliseconds;
using std::chrono::seconds;

namespace {

constexpr Nanos kUnit = seconds(1);
constexpr Nanos kPeriod = 2 * kUnit;

// n alternating edges every half period, first one High at t0.
std::vector<Edge> wave(Nanos t0, std::size_t n, Nanos period = kPeriod) {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({t0 + static_cast<std::int64_t>(i) * period / 2, i % 2 == 0 ? Level::High : Level::Low});
    return out;
}

void append_wave(std::vector<Edge>& v, Nanos t0, std::size_t n, Nanos period = kPeriod) {
    Level first = v.empty() || v.back().level == Level::Low ? Level::High : Level::Low;
    for (std::size_t i = 0; i < n; ++i) {
        Level l = (i % 2 == 0) == (first == Level::High) ? Level::High : Level::Low;
        v.push_back({t0 + static_cast<std::int64_t>(i) * period / 2, l});
    }
}

SignalBaseline nominal(Nanos period = kPeriod) {
    SignalBaseline b;
    b.period = period;
    b.duty = 0.5;
    b.jitter_tolerance = 0.2;
    return b;
}

std::vector<VerdictClass> classes(const std::vector<Verdict>& v) {
    std::vector<VerdictClass> out;
    for (const auto& x : v) out.push_back(x.cls);
    return out;
}

std::size_t count(const std::vector<Verdict>& v, VerdictClass c) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](const Verdict& x) { return x.cls == c; }));
}

// Series that shifts every edge from index k onward by `late`.
std::vector<Edge> late_from(std::size_t k, Nanos late, std::size_t n = 41) {
    auto e = wave(Nanos(0), n);
    for (std::size_t i = k; i < e.size(); ++i) e[i].timestamp += late;
    return e;
}

}  // namespace

TEST(Ingest, Examples) {
    auto s = ingest_edges("0,H\n500000000,L\n1000000000,H");
    ASSERT_EQ(s.edges.size(), 3u);
    EXPECT_EQ(s.edges[1], (Edge{milliseconds(500), Level::Low}));
    EXPECT_EQ(s.edges[2], (Edge{seconds(1), Level::High}));
    EXPECT_EQ(s.rejected(), 0u);

    auto twice = ingest_edges("0,H\n5,H\n10,L\n");
    EXPECT_EQ(twice.edges.size(), 2u);
    EXPECT_EQ(twice.non_alternating, 1u);

    auto back = ingest_edges("10,H\n5,L\n10,L\n20,L\n");
    EXPECT_EQ(back.edges.size(), 2u);
    EXPECT_EQ(back.non_monotonic, 2u);

    EXPECT_TRUE(ingest_edges("").edges.empty());
}

TEST(Ingest, GrammarIsStrict) {
    for (const char* bad : {"1,h\n", " 1,H\n", "1,H \n", "-1,H\n", ",H\n", "1;H\n", "1,HL\n", "1\n", "x,L\n",
                            "99999999999999999999999,H\n"}) {
        auto s = ingest_edges(bad);
        EXPECT_TRUE(s.edges.empty()) << bad;
        EXPECT_EQ(s.malformed, 1u) << bad;
    }
    auto mixed = ingest_edges("0,H\ngarbage\n7,L\n");
    EXPECT_EQ(mixed.edges.size(), 2u);
    EXPECT_EQ(mixed.malformed, 1u);
}

TEST(Ingest, SplitAcrossReads) {
    EdgeIngestor ing;
    EXPECT_TRUE(ing.feed("12").empty());
    EXPECT_TRUE(ing.feed("3,").empty());
    auto got = ing.feed("H\n200,L\n3");
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].timestamp, Nanos(123));
    EXPECT_TRUE(ing.feed("00,H").empty());
    auto s = ing.take();
    EXPECT_EQ(s.edges.size(), 3u);
    EXPECT_EQ(s.edges.back(), (Edge{Nanos(300), Level::High}));
    EXPECT_EQ(s.non_monotonic, 0u);
}

TEST(Ingest, FormatRoundTrip) {
    std::string text;
    auto e = wave(Nanos(17), 30, milliseconds(20));
    for (const auto& x : e) text += format_edge(x);
    EXPECT_EQ(ingest_edges(text).edges, e);
}

TEST(Baseline, Examples) {
    auto b = estimate_baseline(wave(Nanos(0), 20, seconds(1)));
    EXPECT_EQ(b.period, seconds(1));
    EXPECT_DOUBLE_EQ(b.duty, 0.5);
    EXPECT_DOUBLE_EQ(b.jitter_tolerance, 0.2);
    EXPECT_THROW(estimate_baseline(wave(Nanos(0), 6, seconds(1))), InsufficientData);
}

TEST(Baseline, MedianIgnoresOutlier) {
    auto e = wave(Nanos(0), 20, seconds(1));
    for (std::size_t i = 10; i < e.size(); ++i) e[i].timestamp += milliseconds(100);
    auto b = estimate_baseline(e);
    EXPECT_EQ(b.period, seconds(1));
}

TEST(Baseline, Duty) {
    std::vector<Edge> e;
    for (int i = 0; i < 10; ++i) {
        e.push_back({milliseconds(100 * i), Level::High});
        e.push_back({milliseconds(100 * i + 30), Level::Low});
    }
    auto b = estimate_baseline(e);
    EXPECT_EQ(b.period, milliseconds(100));
    EXPECT_NEAR(b.duty, 0.3, 1e-12);
    EXPECT_EQ(b.high_time(), milliseconds(30));
    EXPECT_EQ(b.low_time(), milliseconds(70));
}

TEST(Classify, LateTransitionOfThreeQuartersPeriodIsDelayed) {
    // Period of 2 units; the rising edge at index 10 (t = 10) arrives 1.5 units late.
    auto e = late_from(10, kUnit * 3 / 2);
    auto v = classify(e, nominal());
    ASSERT_EQ(count(v, VerdictClass::Delayed), 1u);
    const auto& d = *std::find_if(v.begin(), v.end(), [](const Verdict& x) { return x.cls == VerdictClass::Delayed; });
    EXPECT_DOUBLE_EQ(d.deviation, 0.75);
    EXPECT_EQ(d.onset, 10 * kUnit);
    EXPECT_EQ(count(v, VerdictClass::Normal), v.size() - 1);
}

TEST(Classify, QuarterPeriodLagIsDelayed) {
    // High from t=4, falls at 5.5 instead of 5, so
    // every later edge lags by 0.25 of the period.
    auto e = late_from(9, kUnit / 2);
    auto v = classify(e, nominal());
    ASSERT_EQ(count(v, VerdictClass::Delayed), 1u);
    EXPECT_DOUBLE_EQ(std::find_if(v.begin(), v.end(), [](const Verdict& x) { return x.cls == VerdictClass::Delayed; })->deviation,
                     0.25);
}

TEST(Classify, JitterWithinToleranceIsNormal) {
    auto e = late_from(9, kUnit / 5, 40);  // 0.1 period
    auto v = classify(e, nominal());
    for (auto c : classes(v)) EXPECT_EQ(c, VerdictClass::Normal);
}

TEST(Classify, SilenceWithoutResumptionIsStalled) {
    auto e = wave(Nanos(0), 21);
    Nanos last = e.back().timestamp;
    auto v = classify(e, nominal(), {}, last + 5 * kPeriod);
    ASSERT_EQ(count(v, VerdictClass::Stalled), 1u);
    EXPECT_EQ(count(v, VerdictClass::RebootSignature), 0u);
    const auto& s = *std::find_if(v.begin(), v.end(), [](const Verdict& x) { return x.cls == VerdictClass::Stalled; });
    EXPECT_EQ(s.silence, 5 * kPeriod);
    EXPECT_GT(s.silence, 3 * kPeriod);
}

TEST(Classify, ShortSilenceNotStalled) {
    auto e = wave(Nanos(0), 21);
    auto v = classify(e, nominal(), {}, e.back().timestamp + 2 * kPeriod);
    EXPECT_EQ(count(v, VerdictClass::Stalled), 0u);
}

TEST(Classify, SilenceThenCleanWaveIsRebootSignature) {
    auto e = wave(Nanos(0), 21);
    append_wave(e, e.back().timestamp + 4 * kPeriod, 20);
    auto v = classify(e, nominal());
    ASSERT_EQ(count(v, VerdictClass::RebootSignature), 1u);
    EXPECT_EQ(count(v, VerdictClass::Stalled), 0u);
    EXPECT_EQ(count(v, VerdictClass::Delayed), 0u);
    const auto& r = *std::find_if(v.begin(), v.end(), [](const Verdict& x) { return x.cls == VerdictClass::RebootSignature; });
    EXPECT_EQ(r.silence, 4 * kPeriod);
}

TEST(Classify, SilenceThenIrregularResumptionIsNotReboot) {
    auto e = wave(Nanos(0), 21);
    Nanos t = e.back().timestamp + 4 * kPeriod;
    e.push_back({t, Level::High});
    e.push_back({t + kPeriod / 10, Level::Low});  // far too early
    append_wave(e, t + kPeriod, 10);
    auto v = classify(e, nominal());
    EXPECT_EQ(count(v, VerdictClass::RebootSignature), 0u);
    EXPECT_EQ(count(v, VerdictClass::Stalled), 1u);
}

TEST(Classify, PureSquareWaveAllNormal) {
    for (double tol : {0.01, 0.2, 0.5, 0.99}) {
        auto b = nominal();
        b.jitter_tolerance = tol;
        for (std::size_t n : {2u, 20u, 21u, 41u, 200u}) {
            auto v = classify(wave(Nanos(0), n), b);
            ASSERT_FALSE(v.empty());
            for (auto c : classes(v)) EXPECT_EQ(c, VerdictClass::Normal) << tol << " " << n;
        }
    }
}

TEST(Classify, WindowsTileTheObservation) {
    auto e = wave(Nanos(0), 41);
    auto v = classify(e, nominal());
    ASSERT_EQ(v.size(), 2u);  // [0, 20) and [20, 40]
    EXPECT_EQ(v[0].window_start, Nanos(0));
    EXPECT_EQ(v[0].window_end, v[1].window_start);
    EXPECT_EQ(v[1].window_end - v[1].window_start, 10 * kPeriod);
}

TEST(Classify, SparseWindowIsInsufficientData) {
    std::vector<Edge> e{{Nanos(0), Level::High}, {kUnit, Level::Low}, {2 * kUnit, Level::High}};
    auto b = nominal();
    MonitorOptions o;
    o.window_periods = 0.5;
    auto v = classify(e, b, o);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0].cls, VerdictClass::InsufficientData);
    EXPECT_EQ(v[1].cls, VerdictClass::Normal);
}

TEST(Classify, TranslationAndScaleInvariance) {
    std::vector<std::vector<Edge>> series;
    series.push_back(late_from(10, kUnit * 3 / 2));
    auto reboot = wave(Nanos(0), 21);
    append_wave(reboot, reboot.back().timestamp + 4 * kPeriod, 20);
    series.push_back(reboot);
    series.push_back(wave(Nanos(0), 33));
    for (const auto& e : series) {
        auto base = classes(classify(e, nominal()));
        for (std::int64_t shift : {1LL, 12345LL, 7000000000LL}) {
            auto moved = e;
            for (auto& x : moved) x.timestamp += Nanos(shift);
            EXPECT_EQ(classes(classify(moved, nominal())), base);
        }
        for (std::int64_t k : {3, 1000}) {
            auto scaled = e;
            for (auto& x : scaled) x.timestamp *= k;
            EXPECT_EQ(classes(classify(scaled, nominal(kPeriod * k))), base);
        }
    }
}

TEST(Classify, DeterministicAndInvariantsHold) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Edge> e;
        Nanos t{0};
        Level l = Level::High;
        for (int i = 0; i < 60; ++i) {
            e.push_back({t, l});
            l = l == Level::High ? Level::Low : Level::High;
            auto r = rng() % 100;
            if (r < 85) {
                t += kUnit;
            } else if (r < 95) {
                t += kUnit * static_cast<std::int64_t>(1 + rng() % 3) / 2;
            } else {
                t += kUnit * static_cast<std::int64_t>(2 + rng() % 12);
            }
        }
        auto v1 = classify(e, nominal(), {}, t);
        EXPECT_EQ(v1, classify(e, nominal(), {}, t));
        for (const auto& v : v1) {
            if (v.cls == VerdictClass::Delayed) {
                EXPECT_GT(v.deviation, 0.2);
            } else if (v.cls == VerdictClass::Stalled) {
                EXPECT_GT(v.silence, 3 * kPeriod);
            } else if (v.cls == VerdictClass::RebootSignature) {
                EXPECT_GE(v.silence, 2 * kPeriod);
            }
        }
    }
}

TEST(Detector, StreamingMatchesBatch) {
    auto e = wave(Nanos(0), 21);
    append_wave(e, e.back().timestamp + 4 * kPeriod, 20);
    auto batch = detect_episodes(e, nominal(), {}, std::nullopt);
    AnomalyDetector d(nominal());
    std::vector<Episode> streamed;
    for (const auto& x : e) {
        d.push(x);
        auto got = d.take();
        streamed.insert(streamed.end(), got.begin(), got.end());
    }
    d.finish();
    auto tail = d.take();
    streamed.insert(streamed.end(), tail.begin(), tail.end());
    EXPECT_EQ(streamed, batch);
}

TEST(Detector, StallReportedOnceWhileSilent) {
    AnomalyDetector d(nominal());
    for (const auto& x : wave(Nanos(0), 10)) d.push(x);
    Nanos last = 9 * kUnit;
    d.check_silence(last + 2 * kPeriod);
    EXPECT_TRUE(d.take().empty());
    d.check_silence(last + 4 * kPeriod);
    d.check_silence(last + 8 * kPeriod);
    auto eps = d.take();
    ASSERT_EQ(eps.size(), 1u);
    EXPECT_EQ(eps[0].cls, VerdictClass::Stalled);
    EXPECT_TRUE(eps[0].open);
    EXPECT_EQ(eps[0].onset, last + kUnit);
}

TEST(Correlate, Examples) {
    Verdict stalled{seconds(10) + milliseconds(200), seconds(30), VerdictClass::Stalled, 0, seconds(8),
                    seconds(10) + milliseconds(200)};
    auto a = correlate({stalled}, {{1, seconds(5)}, {2, seconds(10)}});
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].case_id, 2u);

    auto none = correlate({stalled}, {{1, seconds(11)}});
    ASSERT_EQ(none.size(), 1u);
    EXPECT_FALSE(none[0].case_id);

    auto two = correlate({stalled}, {{1, seconds(10) - milliseconds(50)}, {2, seconds(10)}});
    EXPECT_EQ(two[0].case_id, 2u);
    EXPECT_EQ(two[0].ambiguity, milliseconds(50));
}

TEST(Correlate, SkipsNormalAndMergesSpanningWindows) {
    Verdict normal{Nanos(0), seconds(20), VerdictClass::Normal, 0, Nanos(0), Nanos(0)};
    Verdict s1{seconds(20), seconds(40), VerdictClass::Stalled, 0, seconds(30), seconds(25)};
    Verdict s2{seconds(40), seconds(60), VerdictClass::Stalled, 0, seconds(30), seconds(25)};
    auto a = correlate({normal, s1, s2}, {{0, seconds(1)}, {1, seconds(24)}});
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].case_id, 1u);
}
