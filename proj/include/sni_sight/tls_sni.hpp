#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sni_sight/pcap_io.hpp"
#include "sni_sight/trace.hpp"

namespace sni_sight::tls {

inline constexpr std::uint8_t kContentHandshake = 22;
inline constexpr std::uint8_t kHandshakeClientHello = 1;
inline constexpr std::uint16_t kExtServerName = 0x0000;
inline constexpr std::uint16_t kExtSupportedVersions = 0x002b;
inline constexpr std::uint8_t kNameTypeHostName = 0;

struct TlsRecord {
    std::uint8_t type = 0;
    std::uint16_t version = 0;
    std::vector<std::uint8_t> body;
    pcap::Timestamp ts;
    std::uint64_t packet_index = 0;
};

/// A handshake message reassembled from one or more handshake records; it
/// inherits the timestamp of the record that carried its first byte.
struct HandshakeMessage {
    std::uint8_t type = 0;
    std::vector<std::uint8_t> body;
    pcap::Timestamp ts;
    std::uint64_t packet_index = 0;
};

struct RecordStream {
    std::vector<TlsRecord> records;
    std::vector<HandshakeMessage> handshakes;
    bool is_tls = false;     // first bytes formed a plausible record header
    bool malformed = false;  // stream went bad after a valid start
};

/// Splits stitched flow bytes into TLS records and coalesces handshake
/// messages. A flow whose first bytes are not a record header yields nothing.
RecordStream parse_records(const pcap::StitchedFlow& flow);

struct Extension {
    std::uint16_t type = 0;
    std::vector<std::uint8_t> body;
};

struct ClientHelloSummary {
    std::uint16_t legacy_version = 0;
    std::size_t cipher_suite_count = 0;
    std::vector<Extension> extensions;
    std::optional<std::string> sni;             // raw host_name bytes of the first entry
    std::size_t extra_host_names = 0;           // host_name entries after the first
    std::vector<std::uint16_t> supported_versions;
};

/// Walks a ClientHello body (the bytes after the 4-byte handshake header).
/// Throws Error{Malformed} naming the inconsistent field and its offset.
ClientHelloSummary parse_client_hello(std::span<const std::uint8_t> body);

/// TLS12/TLS13 per supported_versions when present, else legacy_version;
/// nullopt for hellos that are neither.
std::optional<TlsVersion> classify_version(const ClientHelloSummary& hello);

struct ExtractOptions {
    bool dedup = true;
    double dedup_window_s = 1.0;  // same flow, same name, closer than this: collapsed
};

struct ExtractStats {
    std::size_t packets = 0;
    std::size_t malformed_packets = 0;  // claimed TCP but inconsistent; skipped
    std::size_t tcp_segments = 0;
    std::size_t flows = 0;
    std::size_t tls_flows = 0;
    std::size_t client_hellos = 0;
    std::size_t malformed_hellos = 0;
    std::size_t dropped_version = 0;
    std::size_t dropped_no_sni = 0;
    std::size_t deduplicated = 0;
    std::size_t flows_with_gap = 0;
};

/// Chronological SNI events of a capture (ties keep file order).
std::vector<SniEvent> extract_events(const pcap::PcapFile& file, const ExtractOptions& options = {},
                                     ExtractStats* stats = nullptr);
std::vector<SniEvent> extract_trace(const std::filesystem::path& path, const ExtractOptions& options = {},
                                    ExtractStats* stats = nullptr);

// Builders for well-formed wire bytes; used by the synthetic emitter and tests.
struct ClientHelloSpec {
    std::string server_name;
    std::uint16_t legacy_version = 0x0303;
    std::uint16_t record_version = 0x0301;
    std::vector<std::uint16_t> supported_versions;  // empty: no extension
    std::uint64_t random_seed = 0;
};

/// Handshake message (type byte, 3-byte length, body).
std::vector<std::uint8_t> build_client_hello(const ClientHelloSpec& spec);
/// Wraps bytes in TLS records of at most max_fragment body bytes each.
std::vector<std::uint8_t> wrap_records(std::span<const std::uint8_t> payload, std::uint8_t type,
                                       std::uint16_t version, std::size_t max_fragment = 16384);

}  // namespace sni_sight::tls
