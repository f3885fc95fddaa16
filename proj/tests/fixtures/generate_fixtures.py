#!/usr/bin/env python3
"""Writes the parser fixture captures and their expected events.

Built with struct only so the wire bytes do not depend on the C++ builders.
Run from this directory; the outputs are committed.
"""
import json
import struct

ETH_IPV4 = 0x0800
ETH_IPV6 = 0x86DD
ETH_VLAN = 0x8100
CLIENT_MAC = bytes.fromhex("020000000001")
SERVER_MAC = bytes.fromhex("020000000002")


def u8(v):
    return struct.pack("!B", v)


def u16(v):
    return struct.pack("!H", v)


def u24(v):
    return struct.pack("!I", v)[1:]


def ext(kind, body):
    return u16(kind) + u16(len(body)) + body


def sni_ext(name):
    entry = u8(0) + u16(len(name)) + name.encode()
    return ext(0x0000, u16(len(entry)) + entry)


def client_hello(name=None, legacy=0x0303, versions=None, ext_len_delta=0):
    exts = b""
    if name is not None:
        exts += sni_ext(name)
    if versions is not None:
        body = b"".join(u16(v) for v in versions)
        exts += ext(0x002B, u8(len(body)) + body)
    exts += ext(0x000A, u16(4) + u16(0x001D) + u16(0x0017))
    body = u16(legacy) + bytes(range(32)) + u8(32) + bytes(32)
    body += u16(4) + u16(0x1301) + u16(0xC02F) + u8(1) + u8(0)
    body += u16(len(exts) + ext_len_delta) + exts
    return u8(1) + u24(len(body)) + body


def record(payload, content_type=22, version=0x0301):
    return u8(content_type) + u16(version) + u16(len(payload)) + payload


def tcp(sport, dport, seq, payload, flags=0x18):
    return u16(sport) + u16(dport) + struct.pack("!II", seq, 0) + u8(5 << 4) + u8(flags) + u16(65535) + u16(0) + u16(0) + payload


def ipv4(src, dst, segment):
    total = 20 + len(segment)
    header = u8(0x45) + u8(0) + u16(total) + u16(0) + u16(0x4000) + u8(64) + u8(6) + u16(0)
    return header + bytes(src) + bytes(dst) + segment


def ipv6(src, dst, segment):
    return struct.pack("!IHBB", 6 << 28, len(segment), 6, 64) + bytes(src) + bytes(dst) + segment


def ether(ethertype, payload, vlan=None):
    head = SERVER_MAC + CLIENT_MAC
    if vlan is not None:
        head += u16(ETH_VLAN) + u16(vlan)
    return head + u16(ethertype) + payload


class Flow:
    def __init__(self, sport, server=(203, 0, 113, 7), dport=443, isn=1000, v6=False, vlan=None):
        self.sport, self.dport, self.isn, self.v6, self.vlan = sport, dport, isn, v6, vlan
        self.server = server

    def frame(self, offset, payload):
        seg = tcp(self.sport, self.dport, (self.isn + 1 + offset) & 0xFFFFFFFF, payload)
        if self.v6:
            src = bytes.fromhex("20010db8000000000000000000000002")
            dst = bytes.fromhex("20010db8000000000000000000000443")
            return ether(ETH_IPV6, ipv6(src, dst, seg), self.vlan)
        return ether(ETH_IPV4, ipv4((10, 0, 0, 2), self.server, seg), self.vlan)


def pcap(packets, nanos=False, big_endian=False):
    """packets: list of (seconds, fraction_units, frame)."""
    e = ">" if big_endian else "<"
    magic = 0xA1B23C4D if nanos else 0xA1B2C3D4
    out = struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, 65535, 1)
    for sec, frac, frame in packets:
        out += struct.pack(e + "IIII", sec, frac, len(frame), len(frame)) + frame
    return out


T0 = 1_700_000_000


def fixtures():
    fx = {}

    f = Flow(40001)
    fx["minimal_client_hello"] = (pcap([(T0, 0, f.frame(0, record(client_hello("example.com"))))]),
                                  [("example.com", "1.2", T0)])

    f = Flow(40002)
    fx["sni_absent"] = (pcap([(T0, 0, f.frame(0, record(client_hello(None))))]), [])

    hello = client_hello("split.example.org")
    f = Flow(40003)
    recs = record(hello[:40]) + record(hello[40:])
    fx["multi_record_coalescing"] = (pcap([(T0, 0, f.frame(0, recs[:30])), (T0, 500, f.frame(30, recs[30:]))]),
                                     [("split.example.org", "1.2", T0)])

    f = Flow(40004)
    fx["tls13_supported_versions"] = (
        pcap([(T0, 0, f.frame(0, record(client_hello("new.example.net", versions=[0x0A0A, 0x0304, 0x0303]))))]),
        [("new.example.net", "1.3", T0)])

    bad = Flow(40005)
    good = Flow(40006)
    fx["malformed_lengths"] = (pcap([(T0, 0, bad.frame(0, record(client_hello("bad.example.com", ext_len_delta=9)))),
                                     (T0 + 1, 0, good.frame(0, record(client_hello("good.example.com"))))]),
                               [("good.example.com", "1.2", T0 + 1)])

    f = Flow(40007, vlan=100)
    fx["vlan_tagged"] = (pcap([(T0, 0, f.frame(0, record(client_hello("vlan.example.com"))))]),
                         [("vlan.example.com", "1.2", T0)])

    f = Flow(40008, v6=True)
    fx["ipv6"] = (pcap([(T0, 0, f.frame(0, record(client_hello("v6.example.com"))))]), [("v6.example.com", "1.2", T0)])

    a = Flow(40009)
    b = Flow(40010, server=(203, 0, 113, 8))
    fx["nanosecond_pcap"] = (pcap([(T0, 250, a.frame(0, record(client_hello("late.example.com")))),
                                   (T0, 100, b.frame(0, record(client_hello("early.example.com"))))], nanos=True),
                             [("early.example.com", "1.2", T0 + 100e-9), ("late.example.com", "1.2", T0 + 250e-9)])

    f = Flow(40011)
    fx["byte_swapped_pcap"] = (pcap([(T0, 42, f.frame(0, record(client_hello("swapped.example.com"))))], big_endian=True),
                               [("swapped.example.com", "1.2", T0 + 42e-6)])

    f = Flow(40012)
    data = record(client_hello("dup.example.com"))
    fx["duplicate_segment"] = (pcap([(T0, 0, f.frame(0, data[:50])), (T0, 10, f.frame(0, data[:50])),
                                     (T0, 20, f.frame(50, data[50:]))]),
                               [("dup.example.com", "1.2", T0)])

    f = Flow(40013, isn=0xFFFFFFF0)
    data = record(client_hello("reorder.example.com"))
    fx["out_of_order_segments"] = (pcap([(T0, 0, f.frame(60, data[60:])), (T0, 5, f.frame(0, data[:60]))]),
                                   [("reorder.example.com", "1.2", T0 + 5e-6)])

    f = Flow(40014, dport=80)
    http = b"GET / HTTP/1.1\r\nHost: plain.example.com\r\n\r\n"
    fx["non_tls_flow"] = (pcap([(T0, 0, f.frame(0, http))]), [])

    return fx


def main():
    expected = {}
    for name, (data, events) in fixtures().items():
        with open(name + ".pcap", "wb") as fh:
            fh.write(data)
        expected[name] = [{"sni": s, "ver": v, "ts": ts} for s, v, ts in events]
    with open("expected.json", "w") as fh:
        json.dump(expected, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
