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

#include <fstream>
#include <random>

#include "icsfuzz/capture/framing.hpp"
#include "icsfuzz/capture/pcap.hpp"
#include "icsfuzz/capture/reassembly.hpp"
#include "icsfuzz/capture/synth.hpp"
#include "icsfuzz/mockdevice/protocol.hpp"
#include "icsfuzz/net/tcp.hpp"
#include "json.hpp"

using namespace icsfuzz;
using namespace icsfuzz::capture;

namespace {

Bytes slurp(const std::string& name) {
    std::ifstream in(std::string(ICSFUZZ_TEST_DATA) + "/" + name, std::ios::binary);
    return Bytes(std::istreambuf_iterator<char>(in), {});
}

nlohmann::json fixtures() {
    std::ifstream in(std::string(ICSFUZZ_TEST_DATA) + "/fixtures.json");
    return nlohmann::json::parse(in);
}

Bytes ethernet_frame(std::size_t n, std::uint8_t fill) { return Bytes(n, fill); }

const Endpoint kClient{0xc0a80064, 50000};
const Endpoint kServer{0xc0a80002, 1962};

}  // namespace

TEST(ReadCapture, ClassicMicrosecondUnitConversion) {
    PacketRecord r{Nanos(1'000'500'000), LinkType::Ethernet, ethernet_frame(60, 0xab)};
    auto file = write_capture({r});
    auto back = read_capture(file);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].timestamp, Nanos(1'000'500'000));
    EXPECT_EQ(back[0].data, r.data);
}

TEST(ReadCapture, PcapNgFixtureMatchesIndependentReader) {
    auto exp = fixtures()["ide_session.pcapng"];
    auto recs = read_capture(slurp("ide_session.pcapng"));
    ASSERT_EQ(recs.size(), exp.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(recs[i].timestamp.count(), exp[i]["ts_ns"].get<std::int64_t>()) << i;
        EXPECT_EQ(to_hex(recs[i].data), exp[i]["hex"].get<std::string>()) << i;
    }
}

TEST(ReadCapture, BigEndianNanosecondClassicMatchesIndependentReader) {
    auto exp = fixtures()["big_nanos.pcap"];
    auto recs = read_capture(slurp("big_nanos.pcap"));
    ASSERT_EQ(recs.size(), exp.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(recs[i].timestamp.count(), exp[i]["ts_ns"].get<std::int64_t>()) << i;
        EXPECT_EQ(to_hex(recs[i].data), exp[i]["hex"].get<std::string>()) << i;
    }
}

TEST(ReadCapture, BadMagic) {
    Bytes f = from_hex("deadbeef00000000");
    EXPECT_THROW(read_capture(f), MalformedCapture);
    EXPECT_THROW(read_capture(Bytes{}), MalformedCapture);
}

TEST(ReadCapture, TruncatedRecordReportsOffset) {
    auto file = write_capture({PacketRecord{Nanos(0), LinkType::Ethernet, ethernet_frame(60, 1)}});
    file.resize(file.size() - 5);
    try {
        read_capture(file);
        FAIL() << "expected MalformedCapture";
    } catch (const MalformedCapture& e) {
        EXPECT_GE(e.offset(), 24u);
        EXPECT_LE(e.offset(), file.size());
    }
}

TEST(ReadCapture, UnsupportedLinkType) {
    auto file = write_capture({});
    file[20] = 101;  // raw IP
    EXPECT_THROW(read_capture(file), UnsupportedLinkType);
}

TEST(ReadCapture, InconsistentPcapNgBlockLength) {
    auto f = slurp("ide_session.pcapng");
    ASSERT_GT(f.size(), 40u);
    // Trailing length of the section header block.
    auto len = read_uint(f, 4, 4, Endian::Little);
    f[len - 4] ^= 0x04;
    EXPECT_THROW(read_capture(f), MalformedCapture);
}

TEST(WriteCapture, Layout) {
    EXPECT_EQ(write_capture({}).size(), 24u);
    auto one = write_capture({PacketRecord{Nanos(5), LinkType::Ethernet, ethernet_frame(60, 2)}});
    EXPECT_EQ(one.size(), 24u + 16u + 60u);
}

TEST(WriteCapture, RoundTripRandomRecords) {
    std::mt19937_64 rng(42);
    std::vector<PacketRecord> recs;
    for (int i = 0; i < 100; ++i) {
        PacketRecord r;
        r.timestamp = Nanos(static_cast<std::int64_t>(rng() % 4'000'000'000ULL) * 1000);
        r.data.resize(14 + rng() % 200);
        for (auto& b : r.data) b = static_cast<std::uint8_t>(rng());
        recs.push_back(r);
    }
    EXPECT_EQ(read_capture(write_capture(recs)), recs);
}

TEST(WriteCapture, SubMicrosecondDigitsTruncated) {
    auto back = read_capture(write_capture({PacketRecord{Nanos(1'234'567'891), LinkType::Ethernet, ethernet_frame(20, 0)}}));
    EXPECT_EQ(back[0].timestamp, Nanos(1'234'567'000));
}

TEST(Reassemble, FixtureRetransmissionAndReordering) {
    auto fx = fixtures();
    auto res = reassemble(read_capture(slurp("ide_session.pcapng")));
    ASSERT_EQ(res.sessions.size(), 1u);
    const auto& s = res.sessions[0];
    EXPECT_EQ(s.client.to_string(), fx["client"].get<std::string>());
    EXPECT_EQ(s.server.to_string(), fx["server"].get<std::string>());
    EXPECT_TRUE(s.roles_from_syn);
    EXPECT_EQ(to_hex(s.stream(Direction::ClientToServer)), fx["c2s"].get<std::string>());
    EXPECT_EQ(to_hex(s.stream(Direction::ServerToClient)), fx["s2c"].get<std::string>());
    EXPECT_EQ(res.stats.duplicate_bytes, mock::wire::init_request().size());

    auto framed = segment_messages(s, LengthFieldSpec{2, 2, Endian::Big});
    ASSERT_EQ(framed.messages.size(), 3u);
    EXPECT_EQ(framed.messages[0].payload, mock::wire::init_request());
    EXPECT_EQ(framed.messages[1].payload, mock::wire::init_response(0x48));
    EXPECT_EQ(framed.messages[2].payload, mock::wire::ack(0x48));
    for (std::size_t i = 0; i < framed.messages.size(); ++i) EXPECT_EQ(framed.messages[i].index, i);
}

TEST(Reassemble, MinimalSession) {
    ConversationBuilder b(kClient, kServer, Nanos(1000));
    b.send(Direction::ClientToServer, from_hex("0102"), Nanos(2000));
    b.send(Direction::ServerToClient, from_hex("8182"), Nanos(3000));
    auto res = reassemble(b.records());
    ASSERT_EQ(res.sessions.size(), 1u);
    const auto& m = res.sessions[0].messages;
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0].direction, Direction::ClientToServer);
    EXPECT_EQ(m[0].payload, from_hex("0102"));
    EXPECT_EQ(m[1].direction, Direction::ServerToClient);
    EXPECT_EQ(m[1].timestamp, Nanos(3000));
}

TEST(Reassemble, OutOfOrderSegments) {
    ConversationBuilder b(kClient, kServer, Nanos(0));
    b.send(Direction::ClientToServer, from_hex("aaaa"), Nanos(10));
    b.send(Direction::ClientToServer, from_hex("bbbb"), Nanos(20));
    auto recs = b.records();
    // Data segments are at 3 and 5; swap them.
    std::swap(recs[3], recs[5]);
    auto res = reassemble(recs);
    ASSERT_EQ(res.sessions.size(), 1u);
    EXPECT_EQ(res.sessions[0].stream(Direction::ClientToServer), from_hex("aaaabbbb"));
}

TEST(Reassemble, InterleavedFlowsGiveTwoSessions) {
    ConversationBuilder a(kClient, kServer, Nanos(0));
    ConversationBuilder b(Endpoint{kClient.ip, 50001}, kServer, Nanos(5));
    a.send(Direction::ClientToServer, from_hex("01"), Nanos(10));
    b.send(Direction::ClientToServer, from_hex("02"), Nanos(11));
    std::vector<PacketRecord> recs;
    for (std::size_t i = 0; i < std::max(a.records().size(), b.records().size()); ++i) {
        if (i < a.records().size()) recs.push_back(a.records()[i]);
        if (i < b.records().size()) recs.push_back(b.records()[i]);
    }
    auto res = reassemble(recs);
    ASSERT_EQ(res.sessions.size(), 2u);
    EXPECT_EQ(res.sessions[0].client.port, 50000);
    EXPECT_EQ(res.sessions[1].client.port, 50001);
}

TEST(Reassemble, NoSynLowerPortIsServer) {
    ConversationBuilder b(kClient, kServer, Nanos(0));
    b.send(Direction::ServerToClient, from_hex("81"), Nanos(10));
    b.send(Direction::ClientToServer, from_hex("01"), Nanos(20));
    auto recs = b.records();
    recs.erase(recs.begin(), recs.begin() + 3);
    auto res = reassemble(recs);
    ASSERT_EQ(res.sessions.size(), 1u);
    EXPECT_FALSE(res.sessions[0].roles_from_syn);
    EXPECT_EQ(res.sessions[0].server, kServer);
    EXPECT_EQ(res.sessions[0].client, kClient);
}

TEST(Reassemble, NonIpFramesCounted) {
    Bytes arp(60, 0);
    arp[12] = 0x08;
    arp[13] = 0x06;
    auto res = reassemble({PacketRecord{Nanos(0), LinkType::Ethernet, arp}});
    EXPECT_TRUE(res.sessions.empty());
    EXPECT_EQ(res.stats.non_ipv4, 1u);
}

TEST(Reassemble, VlanTaggedFrame) {
    TcpSegment seg{kClient, kServer, 7, 0, tcp_flags::kPsh | tcp_flags::kAck, from_hex("0102")};
    Bytes f = build_frame(seg);
    Bytes tagged(f.begin(), f.begin() + 12);
    for (std::uint8_t b : {0x81, 0x00, 0x00, 0x05}) tagged.push_back(b);
    tagged.insert(tagged.end(), f.begin() + 12, f.end());
    auto dec = decode_frame(tagged);
    ASSERT_EQ(dec.status, DecodeStatus::Ok);
    EXPECT_EQ(dec.segment.payload, from_hex("0102"));
    EXPECT_EQ(dec.segment.src, kClient);
}

TEST(SegmentMessages, DefaultFramingPerSegment) {
    ConversationBuilder b(kClient, kServer, Nanos(0));
    b.send(Direction::ClientToServer, from_hex("0101"), Nanos(10));
    b.send(Direction::ClientToServer, from_hex("0202"), Nanos(20));
    auto s = reassemble(b.records()).sessions.at(0);
    ASSERT_EQ(s.messages.size(), 2u);
    EXPECT_EQ(s.messages[1].payload, from_hex("0202"));
}

TEST(SegmentMessages, ReferenceDumpsInOneSegment) {
    Bytes all;
    for (const auto& m : {mock::wire::init_request(), mock::wire::init_response(0x48), mock::wire::ack(0x48),
                          mock::wire::reset(0x48)})
        all.insert(all.end(), m.begin(), m.end());
    ConversationBuilder b(kClient, kServer, Nanos(0));
    b.send(Direction::ClientToServer, all, Nanos(10));
    auto s = segment_messages(reassemble(b.records()).sessions.at(0), LengthFieldSpec{2, 2, Endian::Big});
    std::vector<std::size_t> lens;
    Bytes concat;
    for (const auto& m : s.messages) {
        lens.push_back(m.payload.size());
        EXPECT_EQ(be16(m.payload, 2), m.payload.size());
        concat.insert(concat.end(), m.payload.begin(), m.payload.end());
    }
    EXPECT_EQ(lens, (std::vector<std::size_t>{26, 20, 22, 22}));
    EXPECT_EQ(concat, all);
}

TEST(SegmentMessages, DeclaredLengthBeyondStream) {
    Bytes m(30, 0);
    m[0] = 0x01;
    m[2] = 0x01;  // declares 0x0100
    ConversationBuilder b(kClient, kServer, Nanos(0));
    b.send(Direction::ClientToServer, m, Nanos(10));
    auto s = reassemble(b.records()).sessions.at(0);
    EXPECT_THROW(segment_messages(s, LengthFieldSpec{2, 2, Endian::Big}), FramingViolation);
}

TEST(Endpoint, ParseAndFormat) {
    auto ep = net::parse_endpoint("192.168.0.2:1962");
    EXPECT_EQ(ep, kServer);
    EXPECT_EQ(ep.to_string(), "192.168.0.2:1962");
    EXPECT_THROW(net::parse_endpoint("192.168.0.2"), ConfigError);
    EXPECT_THROW(net::parse_endpoint("host:1962"), ConfigError);
    EXPECT_THROW(net::parse_endpoint("1.2.3.4:70000"), ConfigError);
}
