#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sni_sight::pcap {

inline constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicMicrosSwapped = 0xd4c3b2a1;
inline constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;
inline constexpr std::uint32_t kMagicNanosSwapped = 0x4d3cb2a1;

inline constexpr std::uint32_t kLinkEthernet = 1;
inline constexpr std::uint32_t kLinkRawIp = 101;
inline constexpr std::uint32_t kLinkLinuxCooked = 113;

inline constexpr std::size_t kGlobalHeaderSize = 24;
inline constexpr std::size_t kRecordHeaderSize = 16;

/// Capture clock value. Nanosecond resolution covers both pcap flavours.
struct Timestamp {
    std::int64_t sec = 0;
    std::uint32_t nsec = 0;

    [[nodiscard]] double seconds() const { return static_cast<double>(sec) + nsec * 1e-9; }
    static Timestamp from_seconds(double s);

    auto operator<=>(const Timestamp&) const = default;
};

struct PcapHeader {
    std::uint32_t magic = kMagicMicros;
    std::uint16_t version_major = 2;
    std::uint16_t version_minor = 4;
    std::uint32_t snaplen = 65535;
    std::uint32_t linktype = kLinkEthernet;

    [[nodiscard]] bool swapped() const { return magic == kMagicMicrosSwapped || magic == kMagicNanosSwapped; }
    [[nodiscard]] bool nanosecond() const { return magic == kMagicNanos || magic == kMagicNanosSwapped; }
};

struct PacketRecord {
    Timestamp ts;
    std::uint32_t orig_len = 0;
    std::vector<std::uint8_t> data;
    std::uint64_t file_offset = 0;  // offset of the 16-byte record header
    std::uint64_t index = 0;        // position in file order
};

/// Streaming reader over an in-memory classic pcap image.
class PcapReader {
public:
    explicit PcapReader(std::vector<std::uint8_t> bytes);
    static PcapReader open(const std::filesystem::path& path);

    [[nodiscard]] const PcapHeader& header() const { return header_; }

    /// Next record in file order, or nullopt at a clean end of file. A partial
    /// record at the tail raises TruncatedRecord with its byte offset.
    std::optional<PacketRecord> next();

private:
    std::uint32_t u32(std::size_t at) const;
    std::uint16_t u16(std::size_t at) const;

    std::vector<std::uint8_t> bytes_;
    PcapHeader header_;
    std::size_t pos_ = kGlobalHeaderSize;
    std::uint64_t count_ = 0;
};

struct PcapFile {
    PcapHeader header;
    std::vector<PacketRecord> records;
};

PcapFile read_pcap(const std::filesystem::path& path);
PcapFile read_pcap_bytes(std::vector<std::uint8_t> bytes);

struct IpAddress {
    std::uint8_t family = 4;  // 4 or 6
    std::array<std::uint8_t, 16> bytes{};

    [[nodiscard]] std::string to_string() const;
    auto operator<=>(const IpAddress&) const = default;
};

/// Directional TCP 5-tuple; the protocol is implicitly TCP.
struct FlowKey {
    IpAddress src;
    IpAddress dst;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;

    [[nodiscard]] std::string to_string() const;
    auto operator<=>(const FlowKey&) const = default;
};

struct TcpSegment {
    FlowKey flow;
    std::uint32_t seq = 0;
    std::uint8_t flags = 0;
    Timestamp ts;
    std::uint64_t packet_index = 0;
    std::vector<std::uint8_t> payload;
};

/// Ethernet (optionally one 802.1Q tag) or raw IP, then IPv4/IPv6, then TCP.
/// Non-IP and non-TCP packets yield nullopt; a packet that claims TCP but is
/// internally inconsistent raises MalformedLayer.
std::optional<TcpSegment> decode_tcp(const PacketRecord& record, std::uint32_t linktype);

/// Byte range of a stitched stream that originated from one segment.
struct StreamChunk {
    std::size_t offset = 0;
    Timestamp ts;
    std::uint64_t packet_index = 0;
};

struct StitchedFlow {
    FlowKey flow;
    std::vector<std::uint8_t> bytes;
    std::vector<StreamChunk> chunks;  // ascending offset
    bool gap = false;                 // true when bytes stop at a sequence hole

    [[nodiscard]] Timestamp first_ts() const { return chunks.empty() ? Timestamp{} : chunks.front().ts; }
    /// Chunk whose range contains the byte at offset.
    [[nodiscard]] const StreamChunk& chunk_at(std::size_t offset) const;
};

/// Groups payload-bearing segments by flow and concatenates them in sequence
/// order. Exact duplicates (and bytes already covered) are dropped; a hole
/// truncates the flow and sets gap. Flows come back ordered by the file
/// position of their first segment.
std::vector<StitchedFlow> stitch_flows(std::span<const TcpSegment> segments);

/// All decodable TCP segments of a capture, in file order.
std::vector<TcpSegment> decode_all(const PcapFile& file);

// Writer used by the synthetic emitter and the fixture tests.
class PcapWriter {
public:
    explicit PcapWriter(PcapHeader header = {});
    void add(const Timestamp& ts, std::span<const std::uint8_t> frame);
    [[nodiscard]] const std::vector<std::uint8_t>& bytes() const { return bytes_; }

private:
    PcapHeader header_;
    std::vector<std::uint8_t> bytes_;
};

/// Rewrites a classic pcap in the opposite byte order.
std::vector<std::uint8_t> byte_swap_pcap(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace sni_sight::pcap
