#include "sni_sight/pcap_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>

#include "sni_sight/error.hpp"

namespace sni_sight::pcap {
namespace {

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherIpv6 = 0x86DD;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint8_t kProtoTcp = 6;

std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

[[noreturn]] void malformed(const char* layer, std::size_t offset, const char* what) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s at offset %zu: %s", layer, offset, what);
    throw Error(ErrorCode::MalformedLayer, buf);
}

}  // namespace

Timestamp Timestamp::from_seconds(double s) {
    const auto total_ns = static_cast<std::int64_t>(std::llround(s * 1e9));
    Timestamp ts;
    ts.sec = total_ns / 1'000'000'000;
    std::int64_t rem = total_ns % 1'000'000'000;
    if (rem < 0) {
        rem += 1'000'000'000;
        ts.sec -= 1;
    }
    ts.nsec = static_cast<std::uint32_t>(rem);
    return ts;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PcapReader::PcapReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
    if (bytes_.size() < kGlobalHeaderSize) {
        throw Error(ErrorCode::TruncatedHeader,
                    "global header needs 24 bytes, file has " + std::to_string(bytes_.size()));
    }
    const std::uint32_t raw = std::uint32_t{bytes_[0]} | (std::uint32_t{bytes_[1]} << 8) |
                              (std::uint32_t{bytes_[2]} << 16) | (std::uint32_t{bytes_[3]} << 24);
    switch (raw) {
        case kMagicMicros:
        case kMagicMicrosSwapped:
        case kMagicNanos:
        case kMagicNanosSwapped:
            header_.magic = raw;
            break;
        default: {
            char buf[64];
            std::snprintf(buf, sizeof buf, "unrecognised magic 0x%08x", raw);
            throw Error(ErrorCode::BadMagic, buf);
        }
    }
    header_.version_major = u16(4);
    header_.version_minor = u16(6);
    header_.snaplen = u32(16);
    header_.linktype = u32(20);
    if (header_.linktype == kLinkLinuxCooked) {
        throw Error(ErrorCode::UnsupportedLinkType,
                    "linktype 113 (Linux cooked capture) is not decoded; re-capture with Ethernet framing "
                    "(e.g. tcpdump -i <interface> instead of -i any)");
    }
    if (header_.linktype != kLinkEthernet && header_.linktype != kLinkRawIp) {
        throw Error(ErrorCode::UnsupportedLinkType,
                    "linktype " + std::to_string(header_.linktype) + " (supported: 1 Ethernet, 101 raw IP)");
    }
}

PcapReader PcapReader::open(const std::filesystem::path& path) { return PcapReader(read_file(path)); }

std::uint32_t PcapReader::u32(std::size_t at) const {
    std::uint32_t le = std::uint32_t{bytes_[at]} | (std::uint32_t{bytes_[at + 1]} << 8) |
                       (std::uint32_t{bytes_[at + 2]} << 16) | (std::uint32_t{bytes_[at + 3]} << 24);
    if (!header_.swapped()) return le;
    return ((le & 0xff) << 24) | ((le & 0xff00) << 8) | ((le >> 8) & 0xff00) | (le >> 24);
}

std::uint16_t PcapReader::u16(std::size_t at) const {
    std::uint16_t le = static_cast<std::uint16_t>(bytes_[at] | (bytes_[at + 1] << 8));
    if (!header_.swapped()) return le;
    return static_cast<std::uint16_t>((le >> 8) | (le << 8));
}

std::optional<PacketRecord> PcapReader::next() {
    if (pos_ == bytes_.size()) return std::nullopt;
    const std::size_t remaining = bytes_.size() - pos_;
    if (remaining < kRecordHeaderSize) {
        throw Error(ErrorCode::TruncatedRecord, "record header at byte offset " + std::to_string(pos_) + " has only " +
                                                    std::to_string(remaining) + " of 16 bytes");
    }
    PacketRecord rec;
    rec.file_offset = pos_;
    rec.index = count_;
    const std::uint32_t ts_sec = u32(pos_);
    const std::uint32_t ts_frac = u32(pos_ + 4);
    const std::uint32_t incl_len = u32(pos_ + 8);
    rec.orig_len = u32(pos_ + 12);
    if (header_.snaplen != 0 && incl_len > header_.snaplen) {
        throw Error(ErrorCode::TruncatedRecord, "record at byte offset " + std::to_string(pos_) + " claims " +
                                                    std::to_string(incl_len) + " bytes, above snaplen " +
                                                    std::to_string(header_.snaplen));
    }
    if (remaining - kRecordHeaderSize < incl_len) {
        throw Error(ErrorCode::TruncatedRecord, "record at byte offset " + std::to_string(pos_) + " claims " +
                                                    std::to_string(incl_len) + " bytes, file has " +
                                                    std::to_string(remaining - kRecordHeaderSize));
    }
    rec.ts.sec = ts_sec;
    rec.ts.nsec = header_.nanosecond() ? ts_frac : ts_frac * 1000u;
    const auto begin = bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + kRecordHeaderSize);
    rec.data.assign(begin, begin + incl_len);
    pos_ += kRecordHeaderSize + incl_len;
    ++count_;
    return rec;
}

PcapFile read_pcap_bytes(std::vector<std::uint8_t> bytes) {
    PcapReader reader(std::move(bytes));
    PcapFile file;
    file.header = reader.header();
    while (auto rec = reader.next()) file.records.push_back(std::move(*rec));
    return file;
}

PcapFile read_pcap(const std::filesystem::path& path) { return read_pcap_bytes(read_file(path)); }

std::string IpAddress::to_string() const {
    char buf[64];
    if (family == 4) {
        std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", bytes[0], bytes[1], bytes[2], bytes[3]);
        return buf;
    }
    std::string out;
    for (int i = 0; i < 16; i += 2) {
        std::snprintf(buf, sizeof buf, "%x", (bytes[i] << 8) | bytes[i + 1]);
        if (i) out += ':';
        out += buf;
    }
    return out;
}

std::string FlowKey::to_string() const {
    return src.to_string() + ":" + std::to_string(src_port) + " > " + dst.to_string() + ":" + std::to_string(dst_port);
}

std::optional<TcpSegment> decode_tcp(const PacketRecord& record, std::uint32_t linktype) {
    std::span<const std::uint8_t> frame(record.data);
    const bool snapped = record.data.size() < record.orig_len;
    std::size_t off = 0;

    std::uint16_t ethertype = 0;
    if (linktype == kLinkEthernet) {
        if (frame.size() < 14) return std::nullopt;
        ethertype = be16(frame, 12);
        off = 14;
        if (ethertype == kEtherVlan) {
            if (frame.size() < 18) return std::nullopt;
            ethertype = be16(frame, 16);
            off = 18;
        }
    } else if (linktype == kLinkRawIp) {
        if (frame.empty()) return std::nullopt;
        ethertype = (frame[0] >> 4) == 6 ? kEtherIpv6 : kEtherIpv4;
    } else {
        throw Error(ErrorCode::UnsupportedLinkType, "linktype " + std::to_string(linktype));
    }

    TcpSegment seg;
    seg.ts = record.ts;
    seg.packet_index = record.index;
    std::size_t l4 = 0;
    std::size_t l4_end = 0;

    if (ethertype == kEtherIpv4) {
        if (frame.size() < off + 20) return std::nullopt;
        const std::uint8_t vihl = frame[off];
        if ((vihl >> 4) != 4) return std::nullopt;
        if (frame[off + 9] != kProtoTcp) return std::nullopt;
        const std::size_t ihl = std::size_t{vihl & 0x0fu} * 4;
        const std::size_t total = be16(frame, off + 2);
        if (ihl < 20) malformed("ipv4", off, "header length below 20");
        if (total < ihl) malformed("ipv4", off + 2, "total length shorter than header");
        if (frame.size() < off + ihl) malformed("ipv4", off, "header extends past captured bytes");
        const std::uint16_t frag = be16(frame, off + 6);
        if ((frag & 0x1fff) != 0 || (frag & 0x2000) != 0) return std::nullopt;  // fragments are not reassembled
        seg.flow.src.family = seg.flow.dst.family = 4;
        std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(off + 12), 4, seg.flow.src.bytes.begin());
        std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(off + 16), 4, seg.flow.dst.bytes.begin());
        l4 = off + ihl;
        l4_end = off + total;
        if (l4_end > frame.size()) {
            if (!snapped) malformed("ipv4", off + 2, "total length exceeds frame");
            l4_end = frame.size();
        }
    } else if (ethertype == kEtherIpv6) {
        if (frame.size() < off + 40) return std::nullopt;
        if ((frame[off] >> 4) != 6) return std::nullopt;
        if (frame[off + 6] != kProtoTcp) return std::nullopt;  // extension headers are not walked
        const std::size_t plen = be16(frame, off + 4);
        seg.flow.src.family = seg.flow.dst.family = 6;
        std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(off + 8), 16, seg.flow.src.bytes.begin());
        std::copy_n(frame.begin() + static_cast<std::ptrdiff_t>(off + 24), 16, seg.flow.dst.bytes.begin());
        l4 = off + 40;
        l4_end = l4 + plen;
        if (l4_end > frame.size()) {
            if (!snapped) malformed("ipv6", off + 4, "payload length exceeds frame");
            l4_end = frame.size();
        }
    } else {
        return std::nullopt;
    }

    if (l4_end - l4 < 20) {
        if (snapped) return std::nullopt;
        malformed("tcp", l4, "segment shorter than 20-byte header");
    }
    seg.flow.src_port = be16(frame, l4);
    seg.flow.dst_port = be16(frame, l4 + 2);
    seg.seq = be32(frame, l4 + 4);
    const std::size_t data_off = static_cast<std::size_t>(frame[l4 + 12] >> 4) * 4;
    seg.flags = frame[l4 + 13];
    if (data_off < 20) malformed("tcp", l4 + 12, "data offset below 20");
    if (l4 + data_off > l4_end) malformed("tcp", l4 + 12, "data offset past segment end");
    seg.payload.assign(frame.begin() + static_cast<std::ptrdiff_t>(l4 + data_off),
                       frame.begin() + static_cast<std::ptrdiff_t>(l4_end));
    return seg;
}

std::vector<TcpSegment> decode_all(const PcapFile& file) {
    std::vector<TcpSegment> out;
    for (const auto& rec : file.records) {
        if (auto seg = decode_tcp(rec, file.header.linktype)) out.push_back(std::move(*seg));
    }
    return out;
}

const StreamChunk& StitchedFlow::chunk_at(std::size_t offset) const {
    auto it = std::upper_bound(chunks.begin(), chunks.end(), offset,
                               [](std::size_t o, const StreamChunk& c) { return o < c.offset; });
    return it == chunks.begin() ? chunks.front() : *std::prev(it);
}

std::vector<StitchedFlow> stitch_flows(std::span<const TcpSegment> segments) {
    struct Pending {
        std::uint64_t first_index;
        std::vector<const TcpSegment*> segs;
    };
    std::map<FlowKey, Pending> by_flow;
    for (const auto& s : segments) {
        if (s.payload.empty()) continue;
        auto [it, inserted] = by_flow.try_emplace(s.flow, Pending{s.packet_index, {}});
        it->second.segs.push_back(&s);
    }

    std::vector<StitchedFlow> out;
    out.reserve(by_flow.size());
    for (auto& [key, pending] : by_flow) {
        auto& segs = pending.segs;
        // Relative sequence numbers around the first-seen segment survive wraparound.
        const std::uint32_t base = segs.front()->seq;
        auto rel = [base](const TcpSegment* s) { return static_cast<std::int32_t>(s->seq - base); };
        std::stable_sort(segs.begin(), segs.end(), [&](const TcpSegment* a, const TcpSegment* b) {
            if (rel(a) != rel(b)) return rel(a) < rel(b);
            return a->packet_index < b->packet_index;
        });

        StitchedFlow flow;
        flow.flow = key;
        std::int64_t expected = rel(segs.front());
        for (const TcpSegment* s : segs) {
            const std::int64_t start = rel(s);
            const std::int64_t end = start + static_cast<std::int64_t>(s->payload.size());
            if (start > expected) {
                flow.gap = true;
                break;
            }
            if (end <= expected) continue;  // duplicate or fully covered
            const auto skip = static_cast<std::size_t>(expected - start);
            flow.chunks.push_back({flow.bytes.size(), s->ts, s->packet_index});
            flow.bytes.insert(flow.bytes.end(), s->payload.begin() + static_cast<std::ptrdiff_t>(skip),
                              s->payload.end());
            expected = end;
        }
        out.push_back(std::move(flow));
    }
    std::sort(out.begin(), out.end(), [&](const StitchedFlow& a, const StitchedFlow& b) {
        return by_flow.at(a.flow).first_index < by_flow.at(b.flow).first_index;
    });
    return out;
}

PcapWriter::PcapWriter(PcapHeader header) : header_(header) {
    put_le32(bytes_, header_.magic == kMagicNanos ? kMagicNanos : kMagicMicros);
    put_le16(bytes_, header_.version_major);
    put_le16(bytes_, header_.version_minor);
    put_le32(bytes_, 0);  // thiszone
    put_le32(bytes_, 0);  // sigfigs
    put_le32(bytes_, header_.snaplen);
    put_le32(bytes_, header_.linktype);
}

void PcapWriter::add(const Timestamp& ts, std::span<const std::uint8_t> frame) {
    const auto incl = static_cast<std::uint32_t>(std::min<std::size_t>(frame.size(), header_.snaplen));
    put_le32(bytes_, static_cast<std::uint32_t>(ts.sec));
    put_le32(bytes_, header_.magic == kMagicNanos ? ts.nsec : ts.nsec / 1000u);
    put_le32(bytes_, incl);
    put_le32(bytes_, static_cast<std::uint32_t>(frame.size()));
    bytes_.insert(bytes_.end(), frame.begin(), frame.begin() + incl);
}

std::vector<std::uint8_t> byte_swap_pcap(std::span<const std::uint8_t> bytes) {
    std::vector<std::uint8_t> out(bytes.begin(), bytes.end());
    if (out.size() < kGlobalHeaderSize) throw Error(ErrorCode::TruncatedHeader, "cannot swap a short file");
    PcapReader probe(out);  // validates the magic and tells us the current byte order
    auto swap = [&out](std::size_t at, std::size_t width) { std::reverse(out.begin() + at, out.begin() + at + width); };
    swap(0, 4);
    swap(4, 2);
    swap(6, 2);
    for (std::size_t at : {8u, 12u, 16u, 20u}) swap(at, 4);
    std::size_t pos = kGlobalHeaderSize;
    const bool was_swapped = probe.header().swapped();
    while (pos + kRecordHeaderSize <= out.size()) {
        std::uint32_t incl = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = bytes[pos + 8 + i];
            incl |= was_swapped ? std::uint32_t{b} << (8 * (3 - i)) : std::uint32_t{b} << (8 * i);
        }
        for (std::size_t f = 0; f < 4; ++f) swap(pos + 4 * f, 4);
        pos += kRecordHeaderSize + incl;
    }
    return out;
}

}  // namespace sni_sight::pcap
