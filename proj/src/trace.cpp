#include "sni_sight/trace.hpp"

#include <fstream>

#include <json.hpp>

#include "sni_sight/error.hpp"

namespace sni_sight {

using nlohmann::json;

std::string_view to_string(TlsVersion v) { return v == TlsVersion::Tls13 ? "1.3" : "1.2"; }

TlsVersion parse_tls_version(std::string_view s) {
    if (s == "1.2") return TlsVersion::Tls12;
    if (s == "1.3") return TlsVersion::Tls13;
    throw Error(ErrorCode::BadTraceFile, "unknown TLS version \"" + std::string(s) + "\"");
}

std::string trace_to_json_line(const Trace& trace) {
    json events = json::array();
    for (const auto& e : trace.events) {
        events.push_back({{"sni", e.server_name}, {"ts", e.ts}, {"ver", to_string(e.version)}});
    }
    json j = {{"label", trace.label}, {"events", std::move(events)}};
    if (!trace.source.empty()) j["source"] = trace.source;
    return j.dump();
}

Trace trace_from_json_line(std::string_view line) {
    Trace t;
    try {
        const json j = json::parse(line);
        t.label = j.at("label").get<std::vector<std::string>>();
        for (const auto& e : j.at("events")) {
            SniEvent ev;
            ev.server_name = e.at("sni").get<std::string>();
            ev.ts = e.at("ts").get<double>();
            ev.version = parse_tls_version(e.at("ver").get<std::string>());
            t.events.push_back(std::move(ev));
        }
        if (j.contains("source")) t.source = j["source"].get<std::string>();
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadTraceFile, ex.what());
    }
    return t;
}

void write_traces(const std::filesystem::path& path, const std::vector<Trace>& traces) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& t : traces) out << trace_to_json_line(t) << '\n';
}

std::vector<Trace> read_traces(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<Trace> traces;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            traces.push_back(trace_from_json_line(line));
        } catch (const Error& e) {
            throw Error(ErrorCode::BadTraceFile, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return traces;
}

std::optional<std::string> normalize_server_name(std::string_view raw) {
    if (!raw.empty() && raw.back() == '.') raw.remove_suffix(1);
    if (raw.empty()) return std::nullopt;
    std::string out;
    out.reserve(raw.size());
    for (unsigned char c : raw) {
        if (c <= 0x20 || c >= 0x7f) return std::nullopt;
        out.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + ('a' - 'A') : c));
    }
    return out;
}

}  // namespace sni_sight
