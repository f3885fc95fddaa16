#include <doctest.h>

#include <string>

#include "frames.hpp"
#include "sni_sight/error.hpp"
#include "sni_sight/pcap_io.hpp"
#include "sni_sight/tls_sni.hpp"
#include "support.hpp"

using namespace sni_sight;
using namespace sni_sight::testing;

namespace {

Bytes hello_record(const std::string& name, std::vector<std::uint16_t> versions = {}, std::uint16_t legacy = 0x0303) {
    tls::ClientHelloSpec spec;
    spec.server_name = name;
    spec.supported_versions = std::move(versions);
    spec.legacy_version = legacy;
    const auto hs = tls::build_client_hello(spec);
    return tls::wrap_records(hs, 22, 0x0301);
}

/// Body of a ClientHello handshake (after its 4-byte header).
Bytes hello_body(const std::string& name, std::vector<std::uint16_t> versions = {}, std::uint16_t legacy = 0x0303) {
    tls::ClientHelloSpec spec;
    spec.server_name = name;
    spec.supported_versions = std::move(versions);
    spec.legacy_version = legacy;
    auto hs = tls::build_client_hello(spec);
    return Bytes(hs.begin() + 4, hs.end());
}

pcap::StitchedFlow flow_of(const Bytes& bytes) {
    pcap::StitchedFlow f;
    f.bytes = bytes;
    f.chunks.push_back({0, {1, 0}, 0});
    return f;
}

std::vector<SniEvent> extract(const PcapImage& img, tls::ExtractOptions opts = {}, tls::ExtractStats* stats = nullptr) {
    return tls::extract_events(pcap::read_pcap_bytes(img.bytes), opts, stats);
}

}  // namespace

TEST_CASE("parser fixture suite") {
    const auto outcomes = run_parser_fixtures();
    CHECK(outcomes.size() >= 12);
    for (const auto& o : outcomes) {
        INFO(o.name << ": " << o.detail);
        CHECK(o.pass);
    }
}

TEST_CASE("built ClientHello parses back") {
    const auto h = tls::parse_client_hello(hello_body("Shop.Example.com", {0x0304, 0x0303}));
    REQUIRE(h.sni);
    CHECK(*h.sni == "Shop.Example.com");
    CHECK(h.legacy_version == 0x0303);
    CHECK(h.supported_versions == std::vector<std::uint16_t>{0x0304, 0x0303});
    CHECK(h.cipher_suite_count > 0);
    CHECK(tls::classify_version(h) == TlsVersion::Tls13);
}

TEST_CASE("version classification") {
    auto version_of = [](std::vector<std::uint16_t> sv, std::uint16_t legacy) {
        return tls::classify_version(tls::parse_client_hello(hello_body("a.example", std::move(sv), legacy)));
    };
    CHECK(version_of({}, 0x0303) == TlsVersion::Tls12);
    CHECK(version_of({0x0a0a, 0x0304}, 0x0303) == TlsVersion::Tls13);
    CHECK(version_of({0x0303}, 0x0301) == TlsVersion::Tls12);
    CHECK(version_of({0x0304}, 0x0301) == TlsVersion::Tls13);
    CHECK_FALSE(version_of({}, 0x0301));
    CHECK_FALSE(version_of({}, 0x0300));
    CHECK_FALSE(version_of({0x0302}, 0x0303));
}

TEST_CASE("extensions_length overrun is reported by field name") {
    auto body = hello_body("x.example");
    // extensions_length sits right before the extension block; find it from the tail.
    const auto h = tls::parse_client_hello(body);
    std::size_t ext_total = 0;
    for (const auto& e : h.extensions) ext_total += 4 + e.body.size();
    const std::size_t at = body.size() - ext_total - 2;
    const std::uint16_t bumped = static_cast<std::uint16_t>(ext_total + 5);
    body[at] = static_cast<std::uint8_t>(bumped >> 8);
    body[at + 1] = static_cast<std::uint8_t>(bumped);
    try {
        (void)tls::parse_client_hello(body);
        FAIL("expected Malformed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Malformed);
        CHECK(std::string(e.what()).find("extensions_length") != std::string::npos);
    }
}

TEST_CASE("truncated ClientHellos fail cleanly") {
    const auto body = hello_body("truncate.example.org", {0x0304});
    std::size_t ext_total = 0;
    for (const auto& e : tls::parse_client_hello(body).extensions) ext_total += 4 + e.body.size();
    // A hello that ends before extensions_length is a valid extension-less hello.
    const std::size_t bare = body.size() - ext_total - 2;
    for (std::size_t n = 0; n < body.size(); ++n) {
        const Bytes prefix(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(n));
        if (n == bare) {
            const auto h = tls::parse_client_hello(prefix);
            CHECK_FALSE(h.sni);
            CHECK(h.extensions.empty());
            continue;
        }
        INFO("prefix " << n);
        CHECK_THROWS_AS((void)tls::parse_client_hello(prefix), Error);
    }
}

TEST_CASE("record layer") {
    SUBCASE("plain HTTP is not TLS") {
        const auto rs = tls::parse_records(flow_of(text_bytes("GET / HTTP/1.1\r\n\r\n")));
        CHECK_FALSE(rs.is_tls);
        CHECK(rs.records.empty());
    }
    SUBCASE("handshake split across records is coalesced") {
        tls::ClientHelloSpec spec;
        spec.server_name = "coalesce.example.com";
        const auto hs = tls::build_client_hello(spec);
        const auto rs = tls::parse_records(flow_of(tls::wrap_records(hs, 22, 0x0301, 37)));
        CHECK(rs.is_tls);
        CHECK(rs.records.size() > 2);
        REQUIRE(rs.handshakes.size() == 1);
        CHECK(rs.handshakes[0].type == 1);
        CHECK(rs.handshakes[0].body.size() + 4 == hs.size());
    }
    SUBCASE("garbage after a valid start is flagged") {
        auto bytes = hello_record("ok.example.com");
        const auto extra = text_bytes("\x99garbage");
        bytes.insert(bytes.end(), extra.begin(), extra.end());
        const auto rs = tls::parse_records(flow_of(bytes));
        CHECK(rs.is_tls);
        CHECK(rs.malformed);
        CHECK(rs.handshakes.size() == 1);
    }
}

TEST_CASE("extraction merges flows chronologically") {
    PcapImage img;
    img.add(20, 0, tcp_frame(1001, 0, hello_record("second.example.com")));
    img.add(10, 0, tcp_frame(1002, 0, hello_record("first.example.com", {0x0304})));
    img.add(30, 0, tcp_frame(1003, 0, text_bytes("GET / HTTP/1.1\r\n\r\n"), 80));
    const auto events = extract(img);
    REQUIRE(events.size() == 2);
    CHECK(events[0].server_name == "first.example.com");
    CHECK(events[0].version == TlsVersion::Tls13);
    CHECK(events[1].server_name == "second.example.com");
    CHECK(events[0].ts <= events[1].ts);
}

TEST_CASE("names are normalised") {
    PcapImage img;
    img.add(1, 0, tcp_frame(1001, 0, hello_record("WWW.Example.COM.")));
    const auto events = extract(img);
    REQUIRE(events.size() == 1);
    CHECK(events[0].server_name == "www.example.com");
}

TEST_CASE("repeated ClientHellos on one flow") {
    const auto rec = hello_record("again.example.com");
    Bytes twice = rec;
    append(twice, rec);
    PcapImage img;
    img.add(1, 0, tcp_frame(1001, 0, twice));
    img.add(1, 10, tcp_frame(1002, 0, rec));  // other flow: always kept
    tls::ExtractStats stats;
    CHECK(extract(img, {}, &stats).size() == 2);
    CHECK(stats.deduplicated == 1);
    tls::ExtractOptions keep;
    keep.dedup = false;
    CHECK(extract(img, keep).size() == 3);
}

TEST_CASE("legacy-only hellos are dropped and counted") {
    PcapImage img;
    img.add(1, 0, tcp_frame(1001, 0, hello_record("old.example.com", {}, 0x0301)));
    tls::ExtractStats stats;
    CHECK(extract(img, {}, &stats).empty());
    CHECK(stats.dropped_version == 1);
}

TEST_CASE("an inconsistent packet does not sink the capture") {
    PcapImage img;
    img.add(1, 0, ethernet(0x0800, ipv4_packet(tcp_header(1, 443, 0, text_bytes("x"), 2))));
    img.add(2, 0, tcp_frame(1001, 0, hello_record("fine.example.com")));
    tls::ExtractStats stats;
    const auto events = extract(img, {}, &stats);
    CHECK(events.size() == 1);
    CHECK(stats.malformed_packets == 1);
}

TEST_CASE("extraction is a pure function of the bytes") {
    const auto path = fixture_dir() / "out_of_order_segments.pcap";
    CHECK(tls::extract_trace(path) == tls::extract_trace(path));
}
