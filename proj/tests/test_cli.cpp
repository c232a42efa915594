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
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <thread>

#include "icsfuzz/config.hpp"
#include "icsfuzz/net/tcp.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace icsfuzz;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("icsfuzz_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    std::vector<std::string> spawn_args(const std::vector<std::string>& args) const {
        std::vector<std::string> v{ICSFUZZ_CLI};
        v.insert(v.end(), args.begin(), args.end());
        return v;
    }

    pid_t spawn(const std::vector<std::string>& args, const std::string& out, const std::string& err) const {
        posix_spawn_file_actions_t fa;
        posix_spawn_file_actions_init(&fa);
        posix_spawn_file_actions_addopen(&fa, 1, out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        posix_spawn_file_actions_addopen(&fa, 2, err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        auto all = spawn_args(args);
        std::vector<char*> argv;
        for (auto& a : all) argv.push_back(a.data());
        argv.push_back(nullptr);
        pid_t pid = 0;
        int rc = posix_spawn(&pid, argv[0], &fa, nullptr, argv.data(), environ);
        posix_spawn_file_actions_destroy(&fa);
        if (rc != 0) return -1;
        return pid;
    }

    static int wait_exit(pid_t pid) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    }

    Outcome run(const std::vector<std::string>& args) const {
        auto out = path("stdout.txt"), err = path("stderr.txt");
        pid_t pid = spawn(args, out, err);
        Outcome r;
        if (pid < 0) return r;
        r.code = wait_exit(pid);
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name), std::ios::binary) << text;
        return path(name);
    }

    std::string model() const {
        auto cap = path("ref.pcap");
        auto m = path("model.json");
        EXPECT_EQ(run({"record", "--out", cap, "--token", "72", "--token", "124"}).code, 0);
        EXPECT_EQ(run({"analyze", "--pcap", cap, "--out", m}).code, 0);
        return m;
    }

    std::string mock_config(const std::string& vulns) const {
        return write("mock_" + std::to_string(std::hash<std::string>{}(vulns)) + ".json",
                     "{\"mock_device\": {\"vulnerabilities\": " + vulns + "}}");
    }

    fs::path dir_;
};

std::uint16_t free_port() {
    auto l = net::tcp_listen("127.0.0.1", 0);
    return net::local_port(l);
}

}  // namespace

TEST_F(Cli, HelpDocumentsEveryConfigKey) {
    auto r = run({"--help"});
    EXPECT_EQ(r.code, 0);
    for (const auto& s : config_sections()) {
        EXPECT_NE(r.out.find(std::string("[") + s.name + "]"), std::string::npos) << s.name;
        for (const auto& k : s.keys) {
            EXPECT_NE(r.out.find(std::string("    ") + k.name + " ("), std::string::npos) << s.name << "." << k.name;
        }
    }
    for (const char* sub : {"analyze", "fuzz", "mock-device", "replay", "record", "verify"}) {
        EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
        EXPECT_EQ(run({sub, "--help"}).code, 0) << sub;
    }
}

TEST_F(Cli, ConfigKeysAreCheckedAgainstTheDocumentation) {
    for (const auto& s : config_sections()) {
        auto bad = write("bad.json", std::string("{\"") + s.name + "\": {\"no_such_key\": 1}}");
        auto r = run({"record", "--config", bad, "--out", path("x.pcap")});
        EXPECT_EQ(r.code, 2) << s.name;
        EXPECT_NE(r.err.find("no_such_key"), std::string::npos) << r.err;
    }
    auto bad_section = write("sec.json", "{\"fuzzz\": {}}");
    EXPECT_EQ(run({"record", "--config", bad_section, "--out", path("x.pcap")}).code, 2);
    EXPECT_FALSE(fs::exists(path("x.pcap")));
}

TEST_F(Cli, AnalyzeTwoCapturesGivesOneTokenBinding) {
    auto m = model();
    auto j = nlohmann::json::parse(slurp(m));
    EXPECT_EQ(j["tokens"].size(), 1u);
    EXPECT_GE(j["commands"].size(), 2u);
    auto r = run({"analyze", "--pcap", path("ref.pcap"), "--out", path("m2.json")});
    EXPECT_NE(r.out.find("length field: offset 2, width 2, big-endian"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("tokens: 1"), std::string::npos);
}

TEST_F(Cli, AnalyzeUsageAndCorruptCapture) {
    auto r = run({"analyze", "--out", path("m.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--pcap"), std::string::npos);
    ASSERT_EQ(run({"record", "--out", path("ref.pcap")}).code, 0);
    auto bytes = slurp(path("ref.pcap"));
    write("cut.pcap", bytes.substr(0, bytes.size() - 7));
    r = run({"analyze", "--pcap", path("cut.pcap"), "--out", path("m.json")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("cut.pcap"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("offset"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("m.json")));
}

TEST_F(Cli, FuzzExitCodes) {
    auto m = model();
    auto full = run({"fuzz", "--model", m, "--target", "virtual", "--budget", "2000", "--seed", "7", "--report",
                     path("full"), "--mock-config", mock_config("[\"V1\",\"V2\",\"V3\",\"V4\"]")});
    EXPECT_EQ(full.code, 1) << full.err;
    std::set<std::string> classes;
    for (auto& line : {std::string("CrashStall"), std::string("ReplayAccepted"), std::string("AuthBypass"),
                       std::string("RebootTriggered"), std::string("DelayAnomaly")}) {
        if (full.out.find("  " + line + ": ") != std::string::npos) classes.insert(line);
    }
    EXPECT_GE(classes.size(), 3u) << full.out;
    EXPECT_TRUE(fs::exists(path("full") + "/records.jsonl"));
    EXPECT_TRUE(fs::exists(path("full") + "/summary.txt"));

    auto clean = run({"fuzz", "--model", m, "--target", "virtual", "--budget", "1000", "--seed", "7", "--report",
                      path("clean"), "--mock-config", mock_config("[]")});
    EXPECT_EQ(clean.code, 0) << clean.out << clean.err;
    EXPECT_NE(clean.out.find("findings: 0"), std::string::npos);

    auto bad = run({"fuzz", "--model", m, "--target", "127.0.0.1:" + std::to_string(free_port()), "--budget", "10",
                    "--report", path("bad")});
    EXPECT_EQ(bad.code, 2);
    auto garbage = run({"fuzz", "--model", m, "--target", "not-an-endpoint", "--budget", "10"});
    EXPECT_EQ(garbage.code, 2);
}

TEST_F(Cli, FuzzRunsAreReproducible) {
    auto m = model();
    for (const char* d : {"a", "b"}) {
        run({"fuzz", "--model", m, "--target", "virtual", "--budget", "300", "--seed", "11", "--report", path(d)});
    }
    auto a = slurp(path("a") + "/records.jsonl");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(path("b") + "/records.jsonl"));
}

TEST_F(Cli, VerifyFindingFromReport) {
    auto m = model();
    ASSERT_EQ(run({"fuzz", "--model", m, "--target", "virtual", "--budget", "500", "--report", path("rep")}).code, 1);
    auto ok = run({"verify", "--report", path("rep"), "--finding", "F001", "--model", m, "--target", "virtual"});
    EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
    EXPECT_NE(ok.out.find("confirmed"), std::string::npos);
    EXPECT_EQ(run({"verify", "--report", path("rep"), "--finding", "F999", "--model", m, "--target", "virtual"}).code, 2);
}

TEST_F(Cli, ReplayCommands) {
    auto m = model();
    auto j = nlohmann::json::parse(slurp(m));
    std::string reset_id;
    for (const auto& c : j["commands"])
        if (c["bytes"].get<std::string>().substr(8, 4) == "0010") reset_id = c["id"];
    ASSERT_FALSE(reset_id.empty());

    auto r = run({"replay", "--model", m, "--target", "virtual", "--command", reset_id});
    EXPECT_EQ(r.code, 1) << r.out << r.err;
    EXPECT_NE(r.out.find("verdict RebootSignature"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("finding RebootTriggered"), std::string::npos) << r.out;

    r = run({"replay", "--model", m, "--target", "virtual", "--command", "cmd99"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("cmd99"), std::string::npos);

    r = run({"replay", "--model", m, "--target", "virtual", "--handshake-only"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("session HandshakeDone"), std::string::npos);
    EXPECT_EQ(r.out.find("message 0"), std::string::npos);

    EXPECT_EQ(run({"replay", "--model", m, "--target", "virtual"}).code, 2);
}

TEST_F(Cli, MockDeviceServesAndStopsOnSigterm) {
    auto out = path("mock.out"), err = path("mock.err");
    pid_t pid = spawn({"mock-device", "--port", "0", "--scope-port", "0"}, out, err);
    ASSERT_GT(pid, 0);
    std::smatch sm;
    std::string text;
    std::regex re("listening on 127\\.0\\.0\\.1:(\\d+), edges on port (\\d+)");
    for (int i = 0; i < 200 && !std::regex_search(text, sm, re); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        text = slurp(out);
    }
    ASSERT_TRUE(std::regex_search(text, sm, re)) << text;
    auto proto = static_cast<std::uint16_t>(std::stoi(sm[1]));
    auto scope = static_cast<std::uint16_t>(std::stoi(sm[2]));

    auto conn = net::tcp_connect(capture::Endpoint{0x7f000001, scope}, std::chrono::seconds(1));
    std::this_thread::sleep_for(std::chrono::milliseconds(350));

    auto busy = run({"mock-device", "--port", std::to_string(proto), "--scope-port", "0"});
    EXPECT_EQ(busy.code, 2);
    EXPECT_FALSE(busy.err.empty());

    ::kill(pid, SIGTERM);
    EXPECT_EQ(wait_exit(pid), 0);
    text = slurp(out);
    std::regex stopped("stopped on signal \\d+, (\\d+) edges sent");
    ASSERT_TRUE(std::regex_search(text, sm, stopped)) << text;
    EXPECT_GE(std::stoi(sm[1]), 5);

    std::string edges;
    char buf[4096];
    for (;;) {
        auto n = ::recv(conn.fd(), buf, sizeof buf, 0);
        if (n <= 0) break;
        edges.append(buf, static_cast<std::size_t>(n));
    }
    auto lines = static_cast<int>(std::count(edges.begin(), edges.end(), '\n'));
    EXPECT_GE(lines, 3);
    EXPECT_LE(lines, std::stoi(sm[1]));
    EXPECT_EQ(edges.back(), '\n');
}
