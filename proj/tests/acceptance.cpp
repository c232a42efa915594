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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "icsfuzz/capture/pcap.hpp"
#include "icsfuzz/config.hpp"
#include "icsfuzz/fuzz/campaign.hpp"
#include "icsfuzz/inference/analyze.hpp"
#include "icsfuzz/mockdevice/ide.hpp"
#include "icsfuzz/mockdevice/loopback.hpp"
#include "icsfuzz/report/verify.hpp"
#include "oracles.hpp"

using namespace icsfuzz;
using std::chrono::milliseconds;
using std::chrono::seconds;
namespace fs = std::filesystem;
namespace wire = icsfuzz::mock::wire;

namespace {

struct Check {
    std::ostringstream why;
    bool ok = true;
    void expect(bool c, const std::string& what) {
        if (!c && ok) why << what;
        ok = ok && c;
    }
};

int failures = 0;

void criterion(int n, const char* name, double limit_s, const std::function<void(Check&)>& body) {
    Check c;
    auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(s < limit_s, "runtime " + std::to_string(s) + " s over " + std::to_string(limit_s) + " s");
    std::printf("%s criterion %d: %s (%.2f s)%s%s\n", c.ok ? "PASS" : "FAIL", n, name, s, c.ok ? "" : ": ",
                c.why.str().c_str());
    std::fflush(stdout);
    failures += !c.ok;
}

const std::set<mock::Vulnerability> kV123{mock::Vulnerability::ReplayAccepted, mock::Vulnerability::LengthCrash,
                                          mock::Vulnerability::UnauthReset};

mock::DeviceConfig device(std::set<mock::Vulnerability> v) {
    mock::DeviceConfig c;
    c.vulnerabilities = std::move(v);
    return c;
}

std::string run_cli(const std::string& args) {
    std::string cmd = std::string(ICSFUZZ_CLI) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return rc == 0 ? "" : "'" + args + "' exited " + std::to_string(WEXITSTATUS(rc));
}

inference::ProtocolModel reference_model() {
    std::vector<mock::DeviceConfig> d(2);
    d[0].token = 0x48;
    d[1].token = 0x7C;
    return inference::analyze_captures({capture::write_capture(mock::record_ide_sessions(d))});
}

report::CampaignReport campaign(const inference::ProtocolModel& model) {
    VirtualClock clock;
    mock::LoopbackTarget dev(device(kV123), clock);
    mock::LoopbackEdgeSource edges(dev.device());
    fuzz::CampaignConfig cfg;
    cfg.target = "virtual";
    cfg.budget = 5000;
    cfg.seed = 20161108;
    return fuzz::run_campaign(cfg, model, dev, &edges);
}

std::string mask_positions(const inference::ByteMask& m) {
    std::string out;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i] == inference::ByteClass::Variable) out += (out.empty() ? "" : ",") + std::to_string(i);
    return out;
}

}  // namespace

int main() {
    criterion(1, "golden protocol conformance", 1.0, [](Check& c) {
        mock::DeviceCore d(mock::DeviceConfig{});
        Nanos t{0};
        c.expect(d.connect(t), "connect refused; ");
        auto send = [&](const char* hex) {
            t += milliseconds(1);
            return d.receive(t, from_hex(hex));
        };
        auto init = send("0101001a0000008064150003000c494245544830314e305f4d00");
        c.expect(init.replies.size() == 1 && to_hex(init.replies[0]) == "8101001400000001000000000002000000480000",
                 "init response differs; ");
        c.expect(!init.replies.empty() && init.replies[0].size() > 17 && init.replies[0][17] == 0x48, "token not at 17; ");
        auto ack = send("0105001600010000e8e900480000001c000402950000");
        c.expect(ack.replies.size() == 1 && to_hex(ack.replies[0]) == "8105000c0001000000000000", "ack reply differs; ");
        c.expect(d.phase() == mock::Phase::Ready, "ack not accepted; ");
        d.advance_to(t + seconds(2));
        auto edges = d.take_edges();
        t += seconds(2);
        auto reset = send("0105001600100000e8c800480000000000040aba0000");
        c.expect(reset.replies.size() == 1 && to_hex(reset.replies[0]) == "8105000800100000", "reset reply differs; ");
        c.expect(d.phase() == mock::Phase::Rebooting, "reset did not reboot; ");
        Nanos sent = t;
        d.advance_to(t + seconds(3));
        auto after = d.take_edges();
        edges.insert(edges.end(), after.begin(), after.end());
        monitor::SignalBaseline b;
        b.period = d.config().cycle_period;
        auto v = monitor::classify(edges, b, {}, t + seconds(3));
        bool reboot = false;
        for (const auto& x : v) reboot = reboot || (x.cls == monitor::VerdictClass::RebootSignature && x.onset >= sent - b.period);
        c.expect(reboot, "no reboot signature after reset; ");
        c.expect(d.phase() == mock::Phase::AwaitInit, "device did not come back; ");
    });

    criterion(2, "inference correctness", 5.0, [](Check& c) {
        auto dir = fs::temp_directory_path() / ("icsfuzz_accept_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        auto cap = (dir / "ref.pcap").string(), model_path = (dir / "model.json").string();
        auto e = run_cli("record --out " + cap + " --token 72 --token 124");
        c.expect(e.empty(), e);
        e = run_cli("analyze --pcap " + cap + " --out " + model_path);
        c.expect(e.empty(), e);
        auto m = inference::parse_model(read_text_file(model_path));
        fs::remove_all(dir);
        c.expect(m.handshake.size() == 3, "handshake has " + std::to_string(m.handshake.size()) + " steps; ");
        std::string want[] = {"", "17", "11"};
        for (std::size_t k = 0; k < m.handshake.size() && k < 3; ++k) {
            auto got = mask_positions(m.handshake[k].mask);
            c.expect(got == want[k], "step " + std::to_string(k) + " variable at {" + got + "}; ");
        }
        c.expect(m.tokens.size() == 1, std::to_string(m.tokens.size()) + " token bindings; ");
        if (!m.tokens.empty()) {
            const auto& t = m.tokens[0];
            c.expect(t.source_step == 1 && t.source_offset == 17 && t.width == 1, "binding source differs; ");
            bool echo = false;
            for (const auto& x : t.echoes) echo = echo || (!x.where.is_command() && x.where.step == 2 && x.offset == 11);
            c.expect(echo, "binding does not reach the client step; ");
        }
        c.expect(m.framing && m.framing->offset == 2 && m.framing->width == 2 && m.framing->endian == Endian::Big,
                 "length field differs; ");
    });

    criterion(3, "similarity oracle equivalence", 60.0, [](Check& c) {
        auto strs = oracle::all_strings(3, 6);
        std::size_t bad = 0;
        for (const auto& a : strs) {
            for (const auto& b : strs) {
                auto s = inference::similarity(a, b);
                std::size_t k = oracle::gestalt_matches(a, b);
                inference::SimilarityScore want = a.empty() && b.empty() ? inference::SimilarityScore{1, 1}
                                                                         : inference::SimilarityScore{2 * k, a.size() + b.size()};
                bad += !(s == want);
            }
        }
        c.expect(bad == 0, std::to_string(bad) + " alphabet pairs differ; ");
        std::mt19937_64 rng(3);
        bad = 0;
        for (int i = 0; i < 10000; ++i) {
            Bytes a(rng() % 13), b(rng() % 13);
            for (auto& x : a) x = static_cast<std::uint8_t>(rng() % 4);
            for (auto& x : b) x = static_cast<std::uint8_t>(rng() % (i % 2 ? 256 : 4));
            auto s = inference::similarity(a, b);
            std::size_t k = oracle::gestalt_matches(a, b);
            inference::SimilarityScore want = a.empty() && b.empty() ? inference::SimilarityScore{1, 1}
                                                                     : inference::SimilarityScore{2 * k, a.size() + b.size()};
            bad += !(s == want);
        }
        c.expect(bad == 0, std::to_string(bad) + " random pairs differ; ");
    });

    auto model = reference_model();
    std::string first_report;

    criterion(4, "end-to-end fuzz discovery", 120.0, [&](Check& c) {
        auto rep = campaign(model);
        first_report = report::to_jsonl(rep);
        c.expect(rep.meta.budget <= 10000, "budget too large; ");
        c.expect(rep.has(report::FindingClass::ReplayAccepted), "no ReplayAccepted; ");
        c.expect(rep.has(report::FindingClass::CrashStall), "no CrashStall; ");
        c.expect(rep.has(report::FindingClass::AuthBypass) || rep.has(report::FindingClass::RebootTriggered),
                 "no AuthBypass or RebootTriggered; ");
        for (const auto& f : rep.findings) {
            VirtualClock clock;
            mock::LoopbackTarget dev(device(kV123), clock);
            mock::LoopbackEdgeSource edges(dev.device());
            c.expect(report::verify_finding(f, model, dev, &edges), f.finding_id + " " + report::to_string(f.cls) + " not confirmed; ");
        }
        std::cout << "  " << rep.cases.size() << " cases, " << rep.findings.size() << " findings:";
        for (auto [cls, n] : rep.counts()) std::cout << " " << report::to_string(cls) << "=" << n;
        std::cout << "\n";
    });

    criterion(5, "robust-mode survival", 120.0, [](Check& c) {
        mock::DeviceCore d(device({}));
        std::mt19937_64 rng(5);
        Nanos t{0};
        d.connect(t);
        std::uint8_t token = 0;
        std::size_t crashed = 0;
        for (int i = 0; i < 100000; ++i) {
            t += milliseconds(1);
            Bytes f;
            switch (rng() % 4) {
                case 0: f = wire::init_request(); break;
                case 1: f = wire::ack(token); break;
                case 2:
                    f = wire::command(static_cast<std::uint16_t>(rng() % 0x30), token, static_cast<std::uint16_t>(rng()),
                                      static_cast<std::uint16_t>(rng()));
                    break;
                default:
                    f.resize(rng() % 40);
                    for (auto& x : f) x = static_cast<std::uint8_t>(rng());
            }
            if (!f.empty() && rng() % 3 == 0) f[rng() % f.size()] = static_cast<std::uint8_t>(rng());
            if (f.size() >= 4 && rng() % 5 == 0) write_uint(f, 2, 2, Endian::Big, static_cast<std::uint16_t>(rng() % 80));
            // An authenticated reset reboots any controller; keep it out of the stream.
            if (f.size() > 11 && be16(f, 4) == wire::kSubReset && f[11] == token) f[11] ^= 0x01;
            if (!d.connected()) d.connect(t);
            auto out = d.receive(t, f);
            for (const auto& r : out.replies)
                if (r.size() == wire::kInitResponseLen) token = r[17];
            if (auto dl = d.rx_deadline(); dl && rng() % 2) {
                t = *dl;
                d.poll(t);
            }
            crashed += d.phase() == mock::Phase::Crashed;
            if (d.phase() == mock::Phase::Crashed) break;
        }
        d.advance_to(t);
        auto edges = d.take_edges();
        monitor::SignalBaseline b;
        b.period = d.config().cycle_period;
        std::size_t off = 0;
        for (const auto& v : monitor::classify(edges, b, {}, t)) off += v.cls != monitor::VerdictClass::Normal;
        c.expect(crashed == 0, "device crashed; ");
        c.expect(off == 0, std::to_string(off) + " windows outside tolerance; ");
        c.expect(edges.size() > 1000, "too few edges; ");
    });

    criterion(6, "monitor classification", 1.0, [](Check& c) {
        using monitor::Edge;
        using monitor::Level;
        using monitor::VerdictClass;
        const Nanos p = seconds(2);
        auto wave = [&](Nanos t0, std::size_t n, Level first) {
            std::vector<Edge> out;
            for (std::size_t i = 0; i < n; ++i) {
                bool hi = (i % 2 == 0) == (first == Level::High);
                out.push_back({t0 + static_cast<std::int64_t>(i) * p / 2, hi ? Level::High : Level::Low});
            }
            return out;
        };
        monitor::SignalBaseline b;
        b.period = p;
        auto has = [](const std::vector<monitor::Verdict>& v, VerdictClass cls) {
            return std::any_of(v.begin(), v.end(), [&](const monitor::Verdict& x) { return x.cls == cls; });
        };
        auto only = [](const std::vector<monitor::Verdict>& v, std::set<VerdictClass> ok) {
            return std::all_of(v.begin(), v.end(), [&](const monitor::Verdict& x) { return ok.count(x.cls) != 0; });
        };

        auto late = wave(Nanos(0), 41, Level::High);
        for (std::size_t i = 10; i < late.size(); ++i) late[i].timestamp += p * 3 / 4;
        auto v = monitor::classify(late, b);
        c.expect(has(v, VerdictClass::Delayed) && only(v, {VerdictClass::Normal, VerdictClass::Delayed}), "late trace; ");

        auto stall = wave(Nanos(0), 21, Level::High);
        v = monitor::classify(stall, b, {}, stall.back().timestamp + 5 * p);
        c.expect(has(v, VerdictClass::Stalled) && !has(v, VerdictClass::RebootSignature), "silence; ");

        auto reboot = wave(Nanos(0), 21, Level::High);
        auto tail = wave(reboot.back().timestamp + 4 * p, 20, Level::Low);
        reboot.insert(reboot.end(), tail.begin(), tail.end());
        v = monitor::classify(reboot, b);
        c.expect(has(v, VerdictClass::RebootSignature) && !has(v, VerdictClass::Stalled) && !has(v, VerdictClass::Delayed),
                 "reboot; ");

        v = monitor::classify(wave(Nanos(0), 41, Level::High), b);
        c.expect(!v.empty() && only(v, {VerdictClass::Normal}), "square wave; ");
    });

    criterion(7, "capture round trip", 30.0, [](Check& c) {
        std::mt19937_64 rng(7);
        std::size_t bad = 0;
        for (int n = 0; n < 1000; ++n) {
            std::vector<capture::PacketRecord> recs(rng() % 20);
            for (auto& r : recs) {
                r.timestamp = Nanos(static_cast<std::int64_t>(rng() % 4'000'000'000'000'000ULL) * 1000);
                r.data.resize(capture::kEthernetHeaderLen + rng() % 300);
                for (auto& x : r.data) x = static_cast<std::uint8_t>(rng());
            }
            bad += capture::read_capture(capture::write_capture(recs)) != recs;
        }
        c.expect(bad == 0, std::to_string(bad) + " lists differ; ");
    });

    criterion(8, "reproducibility", 120.0, [&](Check& c) {
        auto again = report::to_jsonl(campaign(model));
        c.expect(!first_report.empty(), "criterion 4 produced no report; ");
        c.expect(again == first_report, "reports differ; ");
    });

    return failures == 0 ? 0 : 1;
}
