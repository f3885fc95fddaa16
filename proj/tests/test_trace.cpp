#include <doctest.h>

#include <fstream>

#include "sni_sight/error.hpp"
#include "sni_sight/trace.hpp"
#include "support.hpp"

using namespace sni_sight;

TEST_CASE("trace JSON line round trip") {
    Trace t;
    t.label = {"ebay.com", "quora.com"};
    t.events = {{"www.ebay.com", 1700000000.123456, TlsVersion::Tls12, std::nullopt},
                {"cdn.example.net", 1700000000.75, TlsVersion::Tls13, std::nullopt}};
    t.source = "captures/a.pcap";
    const auto line = trace_to_json_line(t);
    CHECK(line.find('\n') == std::string::npos);
    const auto back = trace_from_json_line(line);
    CHECK(back == t);
    CHECK(back.source == t.source);
    CHECK(back.events[0].ts == t.events[0].ts);
}

TEST_CASE("trace lines without source or with unknown keys") {
    const auto t = trace_from_json_line(R"({"label":["a.com"],"events":[{"sni":"x.a.com","ts":1.5,"ver":"1.3"}],"extra":1})");
    CHECK(t.label == std::vector<std::string>{"a.com"});
    REQUIRE(t.events.size() == 1);
    CHECK(t.events[0].version == TlsVersion::Tls13);
    CHECK(t.source.empty());
}

TEST_CASE("bad trace lines") {
    CHECK_THROWS_AS(trace_from_json_line("not json"), Error);
    CHECK_THROWS_AS(trace_from_json_line(R"({"label":[],"events":[{"sni":"a","ts":1,"ver":"1.1"}]})"), Error);
    CHECK_THROWS_AS(trace_from_json_line(R"({"events":[]})"), Error);
}

TEST_CASE("trace files name the failing line") {
    const auto dir = testing::scratch_dir("trace_files");
    {
        std::ofstream f(dir / "t.jsonl");
        f << R"({"label":["a.com"],"events":[]})" << "\n" << "{broken\n";
    }
    try {
        (void)read_traces(dir / "t.jsonl");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadTraceFile);
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    std::vector<Trace> ts(3);
    ts[1].label = {"b.com"};
    write_traces(dir / "w.jsonl", ts);
    CHECK(read_traces(dir / "w.jsonl") == ts);
}

TEST_CASE("server name normalisation") {
    CHECK(normalize_server_name("WWW.Example.COM.") == "www.example.com");
    CHECK(normalize_server_name("a.b") == "a.b");
    CHECK_FALSE(normalize_server_name(""));
    CHECK_FALSE(normalize_server_name("."));
    CHECK_FALSE(normalize_server_name(std::string("a\0b", 3)));
    CHECK_FALSE(normalize_server_name("caf\xc3\xa9.com"));
}

TEST_CASE("TLS version strings") {
    CHECK(to_string(TlsVersion::Tls12) == "1.2");
    CHECK(parse_tls_version("1.3") == TlsVersion::Tls13);
    CHECK_THROWS_AS(parse_tls_version("1.0"), Error);
}
