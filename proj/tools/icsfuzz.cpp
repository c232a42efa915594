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

// icsfuzz command line: analyze captures, fuzz a device, host the mock
// device, replay commands, record reference captures and verify findings.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "icsfuzz/capture/pcap.hpp"
#include "icsfuzz/capture/reassembly.hpp"
#include "icsfuzz/config.hpp"
#include "icsfuzz/fuzz/campaign.hpp"
#include "icsfuzz/mockdevice/ide.hpp"
#include "icsfuzz/mockdevice/loopback.hpp"
#include "icsfuzz/mockdevice/server.hpp"
#include "icsfuzz/monitor/listener.hpp"
#include "icsfuzz/net/tcp.hpp"
#include "icsfuzz/report/verify.hpp"

namespace {

using namespace icsfuzz;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitError = 2;

class UsageError : public Error {
public:
    using Error::Error;
};

/// Device under test plus its optional edge stream.
struct Rig {
    std::unique_ptr<VirtualClock> clock;
    std::unique_ptr<net::Target> target;
    std::unique_ptr<net::EdgeSource> edges;
};

Rig make_rig(const std::string& target, const std::string& monitor, const mock::DeviceConfig& virtual_device,
             bool no_monitor, const std::string& restart_cmd) {
    Rig r;
    if (target.empty()) throw UsageError("a target is required (--target ip:port or --target virtual)");
    if (target == "virtual") {
        r.clock = std::make_unique<VirtualClock>(std::chrono::seconds(1'700'000'000));
        auto t = std::make_unique<mock::LoopbackTarget>(virtual_device, *r.clock);
        if (!no_monitor) r.edges = std::make_unique<mock::LoopbackEdgeSource>(t->device());
        r.target = std::move(t);
        return r;
    }
    std::function<bool()> hook;
    if (!restart_cmd.empty()) hook = [restart_cmd] { return std::system(restart_cmd.c_str()) == 0; };
    r.target = std::make_unique<net::TcpTarget>(net::parse_endpoint(target), hook);
    if (!monitor.empty() && !no_monitor) {
        r.edges = std::make_unique<monitor::TcpEdgeSource>(net::parse_endpoint(monitor));
    }
    return r;
}

inference::ProtocolModel load_model(const std::string& path) {
    if (path.empty()) throw UsageError("a model is required (--model)");
    auto m = inference::parse_model(read_text_file(path));
    inference::validate_model(m);
    return m;
}

void print_model(const inference::ProtocolModel& m, std::ostream& o) {
    o << "server port " << m.server_port << "\n";
    if (m.framing) {
        o << "length field: offset " << m.framing->offset << ", width " << m.framing->width << ", "
          << (m.framing->endian == Endian::Big ? "big" : "little") << "-endian\n";
    } else {
        o << "length field: none\n";
    }
    o << "handshake: " << m.handshake.size() << " steps\n";
    for (std::size_t k = 0; k < m.handshake.size(); ++k) {
        const auto& s = m.handshake[k];
        o << "  " << k << " " << to_string(s.direction) << " " << to_hex(s.bytes) << "\n";
    }
    o << "tokens: " << m.tokens.size() << "\n";
    for (const auto& t : m.tokens) {
        o << "  step " << t.source_step << " offset " << t.source_offset << " width " << t.width << ", echoed at";
        for (const auto& e : t.echoes) {
            o << " " << (e.where.is_command() ? e.where.command : "step " + std::to_string(e.where.step)) << "+" << e.offset;
        }
        o << "\n";
    }
    o << "commands: " << m.commands.size() << "\n";
    for (const auto& c : m.commands) {
        o << "  " << c.id << " " << to_string(c.direction) << " " << to_hex(c.bytes) << " (support " << c.support << ")";
        if (c.label) o << " " << *c.label;
        o << "\n";
    }
}

GlobalConfig config_or_default(const std::string& path) { return path.empty() ? GlobalConfig{} : load_config(path); }

// analyze ----------------------------------------------------------------

int cmd_analyze(const std::string& config, std::vector<std::string> pcaps, std::string out, std::optional<std::size_t> hs_len,
                std::optional<double> threshold) {
    auto g = config_or_default(config);
    auto& a = g.analyze;
    if (!pcaps.empty()) a.pcaps = pcaps;
    if (!out.empty()) a.out = out;
    if (hs_len) a.options.handshake_len = *hs_len;
    if (threshold) {
        if (!(*threshold > 0 && *threshold <= 1)) throw UsageError("--threshold must lie in (0, 1]");
        a.options.threshold = inference::SimilarityScore::from_double(*threshold);
    }
    if (a.pcaps.empty()) throw UsageError("at least one capture is required (--pcap)");
    std::vector<Bytes> files;
    for (const auto& p : a.pcaps) {
        files.push_back(read_binary_file(p));
        try {
            capture::read_capture(files.back());
        } catch (const Error& e) {
            throw Error(p + ": " + e.what());
        }
    }
    auto model = inference::analyze_captures(files, a.options);
    std::ofstream(a.out, std::ios::binary) << inference::serialize_model(model);
    std::cout << "model written to " << a.out << "\n";
    print_model(model, std::cout);
    return kExitOk;
}

// fuzz -------------------------------------------------------------------

struct FuzzFlags {
    std::string config, model, target, monitor, report, mock_config, restart_cmd;
    std::optional<std::uint64_t> budget, seed;
    bool stop_on_first = false, reuse = false, no_monitor = false;
};

int cmd_fuzz(const FuzzFlags& f) {
    auto g = config_or_default(f.config);
    auto& c = g.fuzz;
    if (!f.model.empty()) c.model_path = f.model;
    if (!f.target.empty()) c.target = f.target;
    if (!f.monitor.empty()) c.monitor = f.monitor;
    if (!f.report.empty()) c.report_dir = f.report;
    if (!f.restart_cmd.empty()) c.restart_cmd = f.restart_cmd;
    if (f.budget) c.budget = *f.budget;
    if (f.seed) c.seed = *f.seed;
    c.stop_on_first_finding = c.stop_on_first_finding || f.stop_on_first;
    c.reuse_session = c.reuse_session || f.reuse;
    c.validate();
    auto device = f.mock_config.empty() ? g.mock_device : load_config(f.mock_config).mock_device;
    auto model = load_model(c.model_path);
    auto rig = make_rig(c.target, c.monitor, device, f.no_monitor, c.restart_cmd);
    if (!rig.edges) std::cerr << "monitor disabled: only network evidence is used\n";

    report::CampaignReport rep;
    try {
        rep = fuzz::run_campaign(c, model, *rig.target, rig.edges.get());
    } catch (const AbortedTargetUnreachable& e) {
        std::cerr << "campaign aborted: " << e.what() << "\n";
        return kExitError;
    }
    report::write_report(rep, c.report_dir);
    std::cout << report::summary_text(rep);
    std::cout << "report written to " << c.report_dir << "\n";
    if (rep.meta.aborted) return kExitError;
    return rep.findings.empty() ? kExitOk : kExitFindings;
}

// mock-device ------------------------------------------------------------

struct MockFlags {
    std::string config, vulns, bind;
    std::optional<std::uint16_t> port, scope_port;
    std::optional<int> token;
    std::optional<std::uint64_t> seed;
};

int cmd_mock_device(const MockFlags& f) {
    auto g = config_or_default(f.config);
    auto& d = g.mock_device;
    if (f.port) d.listen_port = *f.port;
    if (f.scope_port) d.scope_port = *f.scope_port;
    if (!f.bind.empty()) d.bind_address = f.bind;
    if (f.token) {
        if (*f.token < 0 || *f.token > 255) throw UsageError("--token must be a byte value");
        d.token = static_cast<std::uint8_t>(*f.token);
    }
    if (f.seed) d.seed = *f.seed;
    if (!f.vulns.empty()) d.vulnerabilities = mock::parse_vulnerability_list(f.vulns);
    d.validate();

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    mock::DeviceServer server(d);
    server.start();
    std::string vl;
    for (auto v : d.vulnerabilities) vl += (vl.empty() ? "" : ",") + mock::to_string(v);
    std::cout << "mock device listening on " << d.bind_address << ":" << server.protocol_port() << ", edges on port "
              << server.scope_port() << ", vulnerabilities " << (vl.empty() ? "none" : vl) << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    std::cout << "stopped on signal " << sig << ", " << server.edges_sent() << " edges sent" << std::endl;
    return kExitOk;
}

// replay -----------------------------------------------------------------

struct ReplayFlags {
    std::string config, model, target, monitor, command, pcap, mock_config;
    bool handshake_only = false, no_monitor = false;
};

int cmd_replay(const ReplayFlags& f) {
    auto g = config_or_default(f.config);
    auto& r = g.replay;
    if (!f.model.empty()) r.model_path = f.model;
    if (!f.target.empty()) r.target = f.target;
    if (!f.monitor.empty()) r.monitor = f.monitor;
    if (!f.command.empty()) r.command = f.command;
    if (!f.pcap.empty()) r.pcap = f.pcap;
    r.handshake_only = r.handshake_only || f.handshake_only;
    if (!r.handshake_only && r.command.empty() == r.pcap.empty()) {
        throw UsageError("give exactly one of --command and --pcap, or --handshake-only");
    }
    auto model = load_model(r.model_path);
    std::vector<Bytes> messages;
    std::vector<std::string> template_ids;
    if (!r.command.empty()) {
        const auto* c = model.find_command(r.command);
        if (!c) throw UsageError("unknown command id '" + r.command + "'");
        messages.push_back(c->bytes);
        template_ids.push_back(c->id);
    } else if (!r.pcap.empty()) {
        auto res = capture::reassemble(capture::read_capture(read_binary_file(r.pcap)));
        for (auto& s : res.sessions) {
            if (s.server.port != model.server_port) continue;
            if (model.framing) s = capture::segment_messages(std::move(s), model.framing);
            std::size_t seen = 0;
            for (const auto& m : s.messages) {
                if (seen++ < model.handshake.size() || m.direction != Direction::ClientToServer) continue;
                const auto* c = fuzz::match_command(model, m.payload);
                messages.push_back(m.payload);
                template_ids.push_back(c ? c->id : "");
            }
        }
        if (messages.empty()) throw UsageError("capture holds no client commands for port " + std::to_string(model.server_port));
    }
    auto device = f.mock_config.empty() ? g.mock_device : load_config(f.mock_config).mock_device;
    auto rig = make_rig(r.target, r.monitor, device, f.no_monitor, "");
    auto& clock = rig.target->clock();
    fuzz::Observer obs(clock, rig.edges.get());
    obs.establish_baseline(16, std::chrono::seconds(5));

    auto session = fuzz::connect_and_handshake(*rig.target, model, r.timeout);
    std::cout << "session " << fuzz::to_string(session.state()) << "\n";
    if (r.handshake_only) return kExitOk;
    auto seen = fuzz::replay(session, model, messages, r.timeout);
    session.close();
    std::vector<report::CaseRecord> cases;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        report::CaseRecord c;
        c.kind = report::CaseKind::Fuzz;
        c.fuzz_case.case_id = i;
        c.fuzz_case.template_id = template_ids[i];
        c.fuzz_case.bytes = messages[i];
        c.observation = seen[i];
        cases.push_back(c);
        std::cout << "message " << i << " " << (template_ids[i].empty() ? "?" : template_ids[i]) << ": "
                  << net::to_string(seen[i].tcp_event);
        if (seen[i].response) std::cout << " " << to_hex(*seen[i].response);
        std::cout << "\n";
    }
    obs.wait(r.observe);
    obs.finish();
    report::ClassificationContext ctx;
    ctx.monitor = obs.enabled();
    auto anomalies = report::attribute(obs.episodes(), cases);
    bool any = false;
    for (const auto& c : cases) {
        std::vector<const monitor::Episode*> eps;
        for (const auto& a : anomalies) {
            if (a.case_id == c.fuzz_case.case_id) {
                eps.push_back(&a.episode);
                std::cout << "verdict " << monitor::to_string(a.episode.cls) << " after message " << c.fuzz_case.case_id << "\n";
            }
        }
        for (auto cls : report::classify_case(c, eps, ctx)) {
            std::cout << "finding " << report::to_string(cls) << " message " << c.fuzz_case.case_id << "\n";
            any = true;
        }
    }
    if (!obs.enabled()) std::cout << "monitor disabled\n";
    return any ? kExitFindings : kExitOk;
}

// record -----------------------------------------------------------------

int cmd_record(const std::string& config, const std::string& out, const std::vector<int>& tokens) {
    auto g = config_or_default(config);
    if (out.empty()) throw UsageError("--out is required");
    std::vector<mock::DeviceConfig> devices;
    for (int t : tokens) {
        if (t < 0 || t > 255) throw UsageError("--token must be a byte value");
        auto d = g.mock_device;
        d.token = static_cast<std::uint8_t>(t);
        devices.push_back(d);
    }
    if (devices.empty()) devices.push_back(g.mock_device);
    auto recs = mock::record_ide_sessions(devices);
    auto bytes = capture::write_capture(recs);
    std::ofstream(out, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    std::cout << recs.size() << " packets from " << devices.size() << " sessions written to " << out << "\n";
    return kExitOk;
}

// verify -----------------------------------------------------------------

struct VerifyFlags {
    std::string config, report_dir, finding, model, target, monitor, mock_config;
    bool no_monitor = false;
};

int cmd_verify(const VerifyFlags& f) {
    auto g = config_or_default(f.config);
    auto& r = g.report;
    if (!f.report_dir.empty()) r.dir = f.report_dir;
    if (!f.finding.empty()) r.finding = f.finding;
    if (r.finding.empty()) throw UsageError("--finding is required");
    std::ifstream in(fs::path(r.dir) / "records.jsonl");
    if (!in) throw UsageError("no records.jsonl in " + r.dir);
    auto findings = report::read_findings(in);
    auto it = std::find_if(findings.begin(), findings.end(), [&](const report::Finding& x) { return x.finding_id == r.finding; });
    if (it == findings.end()) throw UsageError("report has no finding " + r.finding);
    auto model = load_model(f.model.empty() ? g.fuzz.model_path : f.model);
    auto device = f.mock_config.empty() ? g.mock_device : load_config(f.mock_config).mock_device;
    auto rig = make_rig(f.target.empty() ? g.fuzz.target : f.target, f.monitor.empty() ? g.fuzz.monitor : f.monitor, device,
                        f.no_monitor, "");
    report::VerifyOptions opts;
    opts.timeout = r.timeout;
    auto res = report::verify_finding_detail(*it, model, *rig.target, rig.edges.get(), opts);
    std::cout << it->finding_id << " " << report::to_string(it->cls) << ": " << (res.confirmed ? "confirmed" : "not confirmed")
              << "\n";
    for (auto cls : res.classes) std::cout << "  observed " << report::to_string(cls) << "\n";
    return res.confirmed ? kExitOk : kExitFindings;
}

std::string section_help(const char* name) {
    for (const auto& s : config_sections())
        if (std::string(s.name) == name) return config_help({s});
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"icsfuzz: capture-driven fuzzing of proprietary controller protocols"};
    app.require_subcommand(1);
    app.footer(config_help(config_sections()));

    std::string config;
    auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config, "JSON configuration file"); };

    // analyze
    std::vector<std::string> pcaps;
    std::string analyze_out;
    std::optional<std::size_t> hs_len;
    std::optional<double> threshold;
    auto* analyze = app.add_subcommand("analyze", "infer a protocol model from captures");
    add_config(analyze);
    analyze->add_option("--pcap", pcaps, "capture file (repeatable)");
    analyze->add_option("--out", analyze_out, "model output path");
    analyze->add_option("--handshake-len", hs_len, "messages forming the handshake");
    analyze->add_option("--threshold", threshold, "template similarity threshold in (0, 1]");
    analyze->footer(section_help("analyze"));

    // fuzz
    FuzzFlags ff;
    auto* fuzz_cmd = app.add_subcommand("fuzz", "run a fuzzing campaign");
    add_config(fuzz_cmd);
    fuzz_cmd->add_option("--model", ff.model, "protocol model");
    fuzz_cmd->add_option("--target", ff.target, "device ip:port, or virtual");
    fuzz_cmd->add_option("--budget", ff.budget, "number of fuzz cases");
    fuzz_cmd->add_option("--seed", ff.seed, "campaign seed");
    fuzz_cmd->add_option("--monitor", ff.monitor, "edge stream ip:port");
    fuzz_cmd->add_option("--report", ff.report, "report directory");
    fuzz_cmd->add_option("--mock-config", ff.mock_config, "configuration whose mock_device section the virtual target uses");
    fuzz_cmd->add_option("--restart-cmd", ff.restart_cmd, "shell command that restarts a dead target");
    fuzz_cmd->add_flag("--stop-on-first-finding", ff.stop_on_first, "stop once a finding exists");
    fuzz_cmd->add_flag("--reuse-session", ff.reuse, "keep one session across cases");
    fuzz_cmd->add_flag("--no-monitor", ff.no_monitor, "ignore the output edges");
    fuzz_cmd->footer(section_help("fuzz") + section_help("mock_device"));

    // mock-device
    MockFlags mf;
    auto* mock_cmd = app.add_subcommand("mock-device", "serve the simulated controller until SIGINT or SIGTERM");
    add_config(mock_cmd);
    mock_cmd->add_option("--port", mf.port, "protocol port");
    mock_cmd->add_option("--scope-port", mf.scope_port, "edge stream port");
    mock_cmd->add_option("--bind", mf.bind, "bind address");
    mock_cmd->add_option("--token", mf.token, "session token byte");
    mock_cmd->add_option("--seed", mf.seed, "seed for per-session tokens");
    mock_cmd->add_option("--vulns", mf.vulns, "comma-separated V1..V4, or none");
    mock_cmd->footer(section_help("mock_device"));

    // replay
    ReplayFlags rf;
    auto* replay_cmd = app.add_subcommand("replay", "send recorded commands on a live session");
    add_config(replay_cmd);
    replay_cmd->add_option("--model", rf.model, "protocol model");
    replay_cmd->add_option("--target", rf.target, "device ip:port, or virtual");
    replay_cmd->add_option("--monitor", rf.monitor, "edge stream ip:port");
    replay_cmd->add_option("--command", rf.command, "command template id");
    replay_cmd->add_option("--pcap", rf.pcap, "capture whose client commands are sent");
    replay_cmd->add_option("--mock-config", rf.mock_config, "configuration for the virtual target");
    replay_cmd->add_flag("--handshake-only", rf.handshake_only, "stop after the handshake");
    replay_cmd->add_flag("--no-monitor", rf.no_monitor, "ignore the output edges");
    replay_cmd->footer(section_help("replay"));

    // record
    std::string record_out;
    std::vector<int> record_tokens;
    auto* record_cmd = app.add_subcommand("record", "write a capture of reference sessions with the mock device");
    add_config(record_cmd);
    record_cmd->add_option("--out", record_out, "capture output path");
    record_cmd->add_option("--token", record_tokens, "device token per session (repeatable)");
    record_cmd->footer(section_help("mock_device"));

    // verify
    VerifyFlags vf;
    auto* verify_cmd = app.add_subcommand("verify", "re-run a finding's reproducer against a target");
    add_config(verify_cmd);
    verify_cmd->add_option("--report", vf.report_dir, "report directory");
    verify_cmd->add_option("--finding", vf.finding, "finding id");
    verify_cmd->add_option("--model", vf.model, "protocol model");
    verify_cmd->add_option("--target", vf.target, "device ip:port, or virtual");
    verify_cmd->add_option("--monitor", vf.monitor, "edge stream ip:port");
    verify_cmd->add_option("--mock-config", vf.mock_config, "configuration for the virtual target");
    verify_cmd->add_flag("--no-monitor", vf.no_monitor, "ignore the output edges");
    verify_cmd->footer(section_help("report"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitError;
    }

    ff.config = mf.config = rf.config = vf.config = config;
    try {
        if (*analyze) return cmd_analyze(config, pcaps, analyze_out, hs_len, threshold);
        if (*fuzz_cmd) return cmd_fuzz(ff);
        if (*mock_cmd) return cmd_mock_device(mf);
        if (*replay_cmd) return cmd_replay(rf);
        if (*record_cmd) return cmd_record(config, record_out, record_tokens);
        if (*verify_cmd) return cmd_verify(vf);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
