#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sni_sight/pcap_io.hpp"

namespace sni_sight {

enum class TlsVersion { Tls12, Tls13 };

std::string_view to_string(TlsVersion v);  // "1.2" / "1.3"
TlsVersion parse_tls_version(std::string_view s);

struct SniEvent {
    std::string server_name;
    double ts = 0.0;  // capture clock, seconds
    TlsVersion version = TlsVersion::Tls12;
    std::optional<pcap::FlowKey> flow;  // absent for traces read back from JSON

    bool operator==(const SniEvent& o) const {
        return server_name == o.server_name && ts == o.ts && version == o.version;
    }
};

/// One labeled capture: the chronological server names seen in one .pcap.
struct Trace {
    std::vector<std::string> label;  // website identifiers
    std::vector<SniEvent> events;
    std::string source;              // optional provenance (pcap path)

    bool operator==(const Trace& o) const { return label == o.label && events == o.events; }
};

// Trace files are JSON lines:
//   {"label": [..], "events": [{"sni": str, "ts": float, "ver": "1.2"|"1.3"}]}
// An optional "source" key is written when set and ignored otherwise.
std::string trace_to_json_line(const Trace& trace);
Trace trace_from_json_line(std::string_view line);

void write_traces(const std::filesystem::path& path, const std::vector<Trace>& traces);
std::vector<Trace> read_traces(const std::filesystem::path& path);

/// Canonical server-name form: lowercase, one trailing dot removed. Returns
/// nullopt when the result would be empty, non-ASCII, or contain NUL/control bytes.
std::optional<std::string> normalize_server_name(std::string_view raw);

}  // namespace sni_sight
