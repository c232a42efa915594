#!/usr/bin/env python3
# Copyright 2026 The icsfuzz Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the capture fixtures and their expectations.

ide_session.pcapng: little-endian pcap-ng, two interfaces (microsecond and
nanosecond resolution), an unknown block, a retransmitted and an out of
order segment.
big_nanos.pcap: big-endian classic pcap with the nanosecond magic.

Expectations come from scapy reading the written files back, not from the
values used to write them.
"""

import json
import os
import struct

from scapy.all import IP, TCP, Ether, Raw, PcapNgReader, PcapReader

HERE = os.path.dirname(os.path.abspath(__file__))

CLIENT = ("192.168.0.100", 50123)
SERVER = ("192.168.0.2", 1962)

INIT = bytes.fromhex("0101001a0000008064150003000c494245544830314e305f4d00")
RESP = bytes.fromhex("8101001400000001000000000002000000480000")
ACK = bytes.fromhex("0105001600010000e8e900480000001c000402950000")


def frame(src, dst, seq, ack, flags, payload=b""):
    pkt = Ether(src="02:00:00:00:00:01", dst="02:00:00:00:00:02") / IP(src=src[0], dst=dst[0]) / TCP(
        sport=src[1], dport=dst[1], seq=seq, ack=ack, flags=flags, window=8192)
    if payload:
        pkt = pkt / Raw(payload)
    return bytes(pkt)


def conversation():
    c, s = 1000, 5000
    out = []
    out.append(frame(CLIENT, SERVER, c, 0, "S"))
    out.append(frame(SERVER, CLIENT, s, c + 1, "SA"))
    c += 1
    s += 1
    out.append(frame(CLIENT, SERVER, c, s, "A"))
    out.append(frame(CLIENT, SERVER, c, s, "PA", INIT))
    out.append(frame(CLIENT, SERVER, c, s, "PA", INIT))  # retransmission
    c += len(INIT)
    # Response split in two, second half captured first.
    out.append(frame(SERVER, CLIENT, s + 8, c, "PA", RESP[8:]))
    out.append(frame(SERVER, CLIENT, s, c, "PA", RESP[:8]))
    s += len(RESP)
    out.append(frame(CLIENT, SERVER, c, s, "PA", ACK))
    c += len(ACK)
    out.append(frame(CLIENT, SERVER, c, s, "FA"))
    out.append(frame(SERVER, CLIENT, s, c + 1, "FA"))
    return out


def pad4(b):
    return b + b"\0" * (-len(b) % 4)


def block(btype, body):
    total = 12 + len(body)
    return struct.pack("<II", btype, total) + body + struct.pack("<I", total)


def option(code, value):
    return struct.pack("<HH", code, len(value)) + pad4(value)


def write_pcapng(path, frames):
    shb = block(0x0A0D0D0A, struct.pack("<IHHq", 0x1A2B3C4D, 1, 0, -1) + option(0, b""))
    idb_us = block(1, struct.pack("<HHI", 1, 0, 65535) + option(9, b"\x06") + option(0, b""))
    idb_ns = block(1, struct.pack("<HHI", 1, 0, 65535) + option(9, b"\x09") + option(0, b""))
    unknown = block(0x00000BAD, b"ignored!")
    out = shb + idb_us + idb_ns + unknown
    base_s = 1_700_000_000
    for i, f in enumerate(frames):
        iface = i % 2
        if iface == 0:
            ts = base_s * 1_000_000 + i * 1_500 + 7  # microseconds
        else:
            ts = base_s * 1_000_000_000 + i * 1_500_000 + 123  # nanoseconds
        body = struct.pack("<IIIII", iface, ts >> 32, ts & 0xFFFFFFFF, len(f), len(f)) + pad4(f)
        out += block(6, body)
    with open(path, "wb") as fh:
        fh.write(out)


def write_big_nanos(path, frames):
    out = struct.pack(">IHHiIII", 0xA1B23C4D, 2, 4, 0, 0, 65535, 1)
    for i, f in enumerate(frames):
        out += struct.pack(">IIII", 1_700_000_100 + i, 999_999_000 + i, len(f), len(f)) + f
    with open(path, "wb") as fh:
        fh.write(out)


def expectations(reader_cls, path):
    recs = []
    with reader_cls(path) as r:
        for pkt in r:
            t = pkt.time
            ns = int(t * 1_000_000_000)
            recs.append({"ts_ns": ns, "hex": bytes(pkt).hex()})
    return recs


def main():
    frames = conversation()
    ng = os.path.join(HERE, "ide_session.pcapng")
    big = os.path.join(HERE, "big_nanos.pcap")
    write_pcapng(ng, frames)
    write_big_nanos(big, frames)
    exp = {
        "ide_session.pcapng": expectations(PcapNgReader, ng),
        "big_nanos.pcap": expectations(PcapReader, big),
        "client": "%s:%d" % CLIENT,
        "server": "%s:%d" % SERVER,
        "c2s": (INIT + ACK).hex(),
        "s2c": RESP.hex(),
    }
    with open(os.path.join(HERE, "fixtures.json"), "w") as fh:
        json.dump(exp, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
