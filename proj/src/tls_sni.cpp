#include "sni_sight/tls_sni.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "sni_sight/error.hpp"
#include "sni_sight/rng.hpp"

namespace sni_sight::tls {
namespace {

constexpr std::size_t kRecordHeader = 5;
constexpr std::size_t kMaxRecordBody = 16384 + 2048;
constexpr std::uint8_t kContentChangeCipherSpec = 20;

bool plausible_record_header(std::span<const std::uint8_t> b) {
    const std::uint8_t type = b[0];
    if (type < 20 || type > 24) return false;
    if (b[1] != 3 || b[2] > 4) return false;
    const std::size_t len = (std::size_t{b[3]} << 8) | b[4];
    return len <= kMaxRecordBody;
}

/// Bounds-checked big-endian cursor over a ClientHello body.
class Cursor {
public:
    explicit Cursor(std::span<const std::uint8_t> data, std::size_t base = 0) : data_(data), base_(base) {}

    [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }
    [[nodiscard]] std::size_t offset() const { return base_ + pos_; }

    void need(std::size_t n, const char* field) const {
        if (remaining() < n) {
            throw Error(ErrorCode::Malformed, std::string(field) + " at offset " + std::to_string(offset()) +
                                                  " needs " + std::to_string(n) + " bytes, " +
                                                  std::to_string(remaining()) + " remain");
        }
    }
    std::uint8_t u8(const char* field) {
        need(1, field);
        return data_[pos_++];
    }
    std::uint16_t u16(const char* field) {
        need(2, field);
        const auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n, const char* field) {
        need(n, field);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    Cursor sub(std::size_t n, const char* field) {
        const std::size_t at = offset();
        return Cursor(take(n, field), at);
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

[[noreturn]] void malformed(const char* field, std::size_t offset, const std::string& what) {
    throw Error(ErrorCode::Malformed, std::string(field) + " at offset " + std::to_string(offset) + ": " + what);
}

void put16(std::vector<std::uint8_t>& out, std::size_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put24(std::vector<std::uint8_t>& out, std::size_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    put16(out, v & 0xffff);
}

}  // namespace

RecordStream parse_records(const pcap::StitchedFlow& flow) {
    RecordStream out;
    std::span<const std::uint8_t> bytes(flow.bytes);
    if (bytes.size() < kRecordHeader || !plausible_record_header(bytes)) return out;
    out.is_tls = true;

    std::vector<std::uint8_t> hs_buf;
    // (offset into hs_buf, timestamp, packet) for each handshake record appended
    std::vector<std::tuple<std::size_t, pcap::Timestamp, std::uint64_t>> hs_marks;
    bool encrypted = false;

    std::size_t pos = 0;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < kRecordHeader) {
            out.malformed = true;
            break;
        }
        auto header = bytes.subspan(pos, kRecordHeader);
        if (!plausible_record_header(header)) {
            out.malformed = true;
            break;
        }
        const std::size_t len = (std::size_t{header[3]} << 8) | header[4];
        if (bytes.size() - pos - kRecordHeader < len) {
            out.malformed = true;
            break;
        }
        const auto& chunk = flow.chunk_at(pos);
        TlsRecord rec;
        rec.type = header[0];
        rec.version = static_cast<std::uint16_t>((header[1] << 8) | header[2]);
        rec.body.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos + kRecordHeader),
                        bytes.begin() + static_cast<std::ptrdiff_t>(pos + kRecordHeader + len));
        rec.ts = chunk.ts;
        rec.packet_index = chunk.packet_index;
        pos += kRecordHeader + len;

        if (rec.type == kContentChangeCipherSpec) encrypted = true;
        if (rec.type == kContentHandshake && !encrypted) {
            hs_marks.emplace_back(hs_buf.size(), rec.ts, rec.packet_index);
            hs_buf.insert(hs_buf.end(), rec.body.begin(), rec.body.end());
            std::size_t consumed = 0;
            while (hs_buf.size() - consumed >= 4) {
                const std::size_t mlen = (std::size_t{hs_buf[consumed + 1]} << 16) |
                                         (std::size_t{hs_buf[consumed + 2]} << 8) | hs_buf[consumed + 3];
                if (hs_buf.size() - consumed - 4 < mlen) break;
                auto mark = std::upper_bound(hs_marks.begin(), hs_marks.end(), consumed,
                                             [](std::size_t o, const auto& m) { return o < std::get<0>(m); });
                --mark;
                HandshakeMessage msg;
                msg.type = hs_buf[consumed];
                msg.body.assign(hs_buf.begin() + static_cast<std::ptrdiff_t>(consumed + 4),
                                hs_buf.begin() + static_cast<std::ptrdiff_t>(consumed + 4 + mlen));
                msg.ts = std::get<1>(*mark);
                msg.packet_index = std::get<2>(*mark);
                out.handshakes.push_back(std::move(msg));
                consumed += 4 + mlen;
            }
            if (consumed > 0) {
                hs_buf.erase(hs_buf.begin(), hs_buf.begin() + static_cast<std::ptrdiff_t>(consumed));
                // Only the mark covering the new buffer start (and later ones) still matter.
                decltype(hs_marks) fixed;
                for (auto& [o, ts, pkt] : hs_marks) {
                    if (o <= consumed) {
                        fixed.assign(1, {0, ts, pkt});
                    } else {
                        fixed.emplace_back(o - consumed, ts, pkt);
                    }
                }
                if (hs_buf.empty()) fixed.clear();
                hs_marks = std::move(fixed);
            }
        } else if (!hs_buf.empty() && rec.type != kContentHandshake) {
            // A handshake message may not be interleaved with other content types.
            out.malformed = true;
            hs_buf.clear();
            hs_marks.clear();
        }
        out.records.push_back(std::move(rec));
    }
    if (!hs_buf.empty()) out.malformed = true;
    return out;
}

ClientHelloSummary parse_client_hello(std::span<const std::uint8_t> body) {
    ClientHelloSummary hello;
    Cursor c(body);
    hello.legacy_version = c.u16("client_version");
    c.take(32, "random");
    const std::uint8_t sid_len = c.u8("session_id_length");
    if (sid_len > 32) malformed("session_id_length", c.offset() - 1, "exceeds 32");
    c.take(sid_len, "session_id");
    const std::size_t cs_at = c.offset();
    const std::uint16_t cs_len = c.u16("cipher_suites_length");
    if (cs_len % 2 != 0) malformed("cipher_suites_length", cs_at, "odd length");
    c.take(cs_len, "cipher_suites");
    hello.cipher_suite_count = cs_len / 2;
    const std::uint8_t comp_len = c.u8("compression_methods_length");
    c.take(comp_len, "compression_methods");

    if (c.remaining() == 0) return hello;  // no extensions block
    const std::size_t ext_at = c.offset();
    const std::uint16_t ext_len = c.u16("extensions_length");
    if (ext_len > c.remaining()) {
        malformed("extensions_length", ext_at,
                  "declares " + std::to_string(ext_len) + " bytes, " + std::to_string(c.remaining()) + " remain");
    }
    if (ext_len < c.remaining()) {
        malformed("extensions_length", ext_at, std::to_string(c.remaining() - ext_len) + " trailing bytes");
    }
    Cursor exts = c.sub(ext_len, "extensions");
    while (exts.remaining() > 0) {
        Extension ext;
        ext.type = exts.u16("extension_type");
        const std::uint16_t len = exts.u16("extension_length");
        const std::size_t body_at = exts.offset();
        auto ext_body = exts.take(len, "extension_data");
        ext.body.assign(ext_body.begin(), ext_body.end());

        if (ext.type == kExtServerName && len > 0) {
            Cursor sn(ext_body, body_at);
            const std::uint16_t list_len = sn.u16("server_name_list_length");
            if (list_len != sn.remaining()) {
                malformed("server_name_list_length", body_at, "does not match extension length");
            }
            while (sn.remaining() > 0) {
                const std::uint8_t name_type = sn.u8("name_type");
                const std::uint16_t name_len = sn.u16("host_name_length");
                auto name = sn.take(name_len, "host_name");
                if (name_type != kNameTypeHostName) continue;
                if (hello.sni) {
                    ++hello.extra_host_names;
                } else {
                    hello.sni = std::string(name.begin(), name.end());
                }
            }
        } else if (ext.type == kExtSupportedVersions) {
            Cursor sv(ext_body, body_at);
            const std::uint8_t list_len = sv.u8("supported_versions_length");
            if (list_len != sv.remaining() || list_len % 2 != 0) {
                malformed("supported_versions_length", body_at, "inconsistent with extension length");
            }
            while (sv.remaining() > 0) hello.supported_versions.push_back(sv.u16("supported_version"));
        }
        hello.extensions.push_back(std::move(ext));
    }
    return hello;
}

std::optional<TlsVersion> classify_version(const ClientHelloSummary& hello) {
    const auto& sv = hello.supported_versions;
    if (!sv.empty()) {
        if (std::find(sv.begin(), sv.end(), 0x0304) != sv.end()) return TlsVersion::Tls13;
        if (std::find(sv.begin(), sv.end(), 0x0303) != sv.end()) return TlsVersion::Tls12;
        return std::nullopt;
    }
    if (hello.legacy_version == 0x0303) return TlsVersion::Tls12;
    if (hello.legacy_version == 0x0304) return TlsVersion::Tls13;
    return std::nullopt;
}

std::vector<SniEvent> extract_events(const pcap::PcapFile& file, const ExtractOptions& options,
                                     ExtractStats* stats) {
    ExtractStats local;
    ExtractStats& st = stats ? *stats : local;
    st = {};
    st.packets = file.records.size();
    std::vector<pcap::TcpSegment> segments;
    for (const auto& rec : file.records) {
        try {
            if (auto seg = pcap::decode_tcp(rec, file.header.linktype)) segments.push_back(std::move(*seg));
        } catch (const Error& ex) {
            if (ex.code() != ErrorCode::MalformedLayer) throw;
            ++st.malformed_packets;
        }
    }
    st.tcp_segments = segments.size();
    const auto flows = pcap::stitch_flows(segments);
    st.flows = flows.size();

    struct Candidate {
        SniEvent event;
        pcap::Timestamp ts;
        std::uint64_t packet_index;
        std::size_t order;
    };
    std::vector<Candidate> found;
    for (const auto& flow : flows) {
        if (flow.gap) ++st.flows_with_gap;
        const RecordStream rs = parse_records(flow);
        if (!rs.is_tls) continue;
        ++st.tls_flows;
        std::map<std::string, pcap::Timestamp> last_seen;
        for (const auto& msg : rs.handshakes) {
            if (msg.type != kHandshakeClientHello) continue;
            ++st.client_hellos;
            ClientHelloSummary hello;
            try {
                hello = parse_client_hello(msg.body);
            } catch (const Error&) {
                ++st.malformed_hellos;
                continue;
            }
            std::optional<std::string> name;
            if (hello.sni) name = normalize_server_name(*hello.sni);
            if (!name) {
                ++st.dropped_no_sni;
                continue;
            }
            const auto version = classify_version(hello);
            if (!version) {
                ++st.dropped_version;
                continue;
            }
            if (options.dedup) {
                auto it = last_seen.find(*name);
                if (it != last_seen.end() && msg.ts.seconds() - it->second.seconds() < options.dedup_window_s) {
                    ++st.deduplicated;
                    continue;
                }
                last_seen[*name] = msg.ts;
            }
            Candidate cand;
            cand.event.server_name = std::move(*name);
            cand.event.ts = msg.ts.seconds();
            cand.event.version = *version;
            cand.event.flow = flow.flow;
            cand.ts = msg.ts;
            cand.packet_index = msg.packet_index;
            cand.order = found.size();
            found.push_back(std::move(cand));
        }
    }
    std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.ts, a.packet_index, a.order) < std::tie(b.ts, b.packet_index, b.order);
    });
    std::vector<SniEvent> events;
    events.reserve(found.size());
    for (auto& c : found) events.push_back(std::move(c.event));
    return events;
}

std::vector<SniEvent> extract_trace(const std::filesystem::path& path, const ExtractOptions& options,
                                    ExtractStats* stats) {
    return extract_events(pcap::read_pcap(path), options, stats);
}

std::vector<std::uint8_t> build_client_hello(const ClientHelloSpec& spec) {
    std::vector<std::uint8_t> body;
    put16(body, spec.legacy_version);
    Rng rng(spec.random_seed);
    for (int i = 0; i < 32; ++i) body.push_back(static_cast<std::uint8_t>(rng.next_u64()));
    body.push_back(32);  // session id
    for (int i = 0; i < 32; ++i) body.push_back(static_cast<std::uint8_t>(rng.next_u64()));
    const std::uint16_t suites[] = {0x1301, 0x1302, 0xc02b, 0xc02f, 0xc030};
    put16(body, sizeof suites);
    for (auto s : suites) put16(body, s);
    body.push_back(1);  // compression methods: null only
    body.push_back(0);

    std::vector<std::uint8_t> exts;
    if (!spec.server_name.empty()) {
        const std::size_t n = spec.server_name.size();
        put16(exts, kExtServerName);
        put16(exts, n + 5);
        put16(exts, n + 3);
        exts.push_back(kNameTypeHostName);
        put16(exts, n);
        exts.insert(exts.end(), spec.server_name.begin(), spec.server_name.end());
    }
    if (!spec.supported_versions.empty()) {
        const std::size_t n = spec.supported_versions.size() * 2;
        put16(exts, kExtSupportedVersions);
        put16(exts, n + 1);
        exts.push_back(static_cast<std::uint8_t>(n));
        for (auto v : spec.supported_versions) put16(exts, v);
    }
    // supported_groups: x25519, secp256r1
    put16(exts, 0x000a);
    put16(exts, 6);
    put16(exts, 4);
    put16(exts, 0x001d);
    put16(exts, 0x0017);
    put16(body, exts.size());
    body.insert(body.end(), exts.begin(), exts.end());

    std::vector<std::uint8_t> msg;
    msg.push_back(kHandshakeClientHello);
    put24(msg, body.size());
    msg.insert(msg.end(), body.begin(), body.end());
    return msg;
}

std::vector<std::uint8_t> wrap_records(std::span<const std::uint8_t> payload, std::uint8_t type,
                                       std::uint16_t version, std::size_t max_fragment) {
    std::vector<std::uint8_t> out;
    std::size_t pos = 0;
    do {
        const std::size_t n = std::min(max_fragment, payload.size() - pos);
        out.push_back(type);
        put16(out, version);
        put16(out, n);
        out.insert(out.end(), payload.begin() + static_cast<std::ptrdiff_t>(pos),
                   payload.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
    } while (pos < payload.size());
    return out;
}

}  // namespace sni_sight::tls
