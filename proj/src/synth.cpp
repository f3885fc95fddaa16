#include "sni_sight/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "sni_sight/error.hpp"
#include "sni_sight/pcap_io.hpp"
#include "sni_sight/rng.hpp"
#include "sni_sight/tls_sni.hpp"

namespace sni_sight::synth {

using nlohmann::json;

namespace {

constexpr std::int64_t kEpochMicros = 1'600'000'000LL * 1'000'000LL;

std::string random_token(Rng& rng, std::size_t len) {
    static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(kAlphabet[rng.uniform_index(sizeof kAlphabet - 1)]);
    return s;
}

bool leaks_site(const WebsiteUniverse& u, const std::string& name) {
    return std::any_of(u.sites().begin(), u.sites().end(),
                       [&](const std::string& s) { return name.find(s) != std::string::npos; });
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

/// Fresh name from make() that neither leaks a site id nor collides with taken.
template <typename Make>
std::string fresh_name(const WebsiteUniverse& u, std::set<std::string>& taken, Make make) {
    for (;;) {
        std::string name = make();
        if (!leaks_site(u, name) && taken.insert(name).second) return name;
    }
}

std::size_t weighted_pick(Rng& rng, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = rng.uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (x < weights[i]) return i;
        x -= weights[i];
    }
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) return i;
    }
    return 0;
}

std::string interleave_name(Interleave i) { return i == Interleave::RoundRobin ? "round_robin" : "exponential_clock"; }
std::string pool_mode_name(PoolMode m) { return m == PoolMode::Profiles ? "profiles" : "shared_ordered"; }
std::string scheme_name(LabelScheme s) {
    switch (s) {
        case LabelScheme::PairCover: return "pair_cover";
        case LabelScheme::RandomTriples: return "random_triples";
        case LabelScheme::Explicit: return "explicit";
    }
    return "pair_cover";
}

}  // namespace

void SynthConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::BadConfig, what); };
    if (universe.size() == 0) bad("universe is empty");
    if (!(noise_rate >= 0.0 && noise_rate <= 0.5)) bad("noise_rate must lie in [0, 0.5]");
    if (!(third_party_overlap >= 0.0 && third_party_overlap <= 1.0)) bad("third_party_overlap must lie in [0, 1]");
    if (!(tls13_fraction >= 0.0 && tls13_fraction <= 1.0)) bad("tls13_fraction must lie in [0, 1]");
    if (first_party_count == 0) bad("first_party_count must be at least 1");
    if (burst_mean < 1.0) bad("burst_mean must be at least 1");
    if (burst_max == 0) bad("burst_max must be at least 1");
    if (pool_mode == PoolMode::SharedOrdered && shared_pool_size < 2) bad("shared_pool_size must be at least 2");
    if (!(event_gap_mean_s > 0.0)) bad("event_gap_mean_s must be positive");
    if (window == 0) bad("window must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) bad("train_fraction must lie in (0, 1)");
    if (labels == LabelScheme::Explicit && explicit_labels.empty()) bad("explicit label list is empty");
}

json config_to_json(const SynthConfig& c) {
    return {
        {"universe", c.universe.sites()},
        {"seed", c.seed},
        {"pages_per_site", c.pages_per_site},
        {"interleave", interleave_name(c.interleave)},
        {"noise_rate", c.noise_rate},
        {"burst_mean", c.burst_mean},
        {"burst_max", c.burst_max},
        {"first_party_count", c.first_party_count},
        {"third_party_count", c.third_party_count},
        {"third_party_overlap", c.third_party_overlap},
        {"pool_mode", pool_mode_name(c.pool_mode)},
        {"shared_pool_size", c.shared_pool_size},
        {"tls13_fraction", c.tls13_fraction},
        {"event_gap_mean_s", c.event_gap_mean_s},
        {"labels", scheme_name(c.labels)},
        {"random_label_count", c.random_label_count},
        {"explicit_labels", c.explicit_labels},
        {"traces_per_label", c.traces_per_label},
        {"train_fraction", c.train_fraction},
        {"window", c.window},
    };
}

SynthConfig config_from_json(const json& j) {
    SynthConfig c;
    try {
        if (j.contains("universe")) c.universe = WebsiteUniverse(j["universe"].get<std::vector<std::string>>());
        c.seed = j.value("seed", c.seed);
        c.pages_per_site = j.value("pages_per_site", c.pages_per_site);
        const std::string inter = j.value("interleave", interleave_name(c.interleave));
        if (inter == "round_robin") {
            c.interleave = Interleave::RoundRobin;
        } else if (inter == "exponential_clock") {
            c.interleave = Interleave::ExponentialClock;
        } else {
            throw Error(ErrorCode::BadConfig, "interleave must be round_robin or exponential_clock");
        }
        c.noise_rate = j.value("noise_rate", c.noise_rate);
        c.burst_mean = j.value("burst_mean", c.burst_mean);
        c.burst_max = j.value("burst_max", c.burst_max);
        c.first_party_count = j.value("first_party_count", c.first_party_count);
        c.third_party_count = j.value("third_party_count", c.third_party_count);
        c.third_party_overlap = j.value("third_party_overlap", c.third_party_overlap);
        const std::string mode = j.value("pool_mode", pool_mode_name(c.pool_mode));
        if (mode == "profiles") {
            c.pool_mode = PoolMode::Profiles;
        } else if (mode == "shared_ordered") {
            c.pool_mode = PoolMode::SharedOrdered;
        } else {
            throw Error(ErrorCode::BadConfig, "pool_mode must be profiles or shared_ordered");
        }
        c.shared_pool_size = j.value("shared_pool_size", c.shared_pool_size);
        c.tls13_fraction = j.value("tls13_fraction", c.tls13_fraction);
        c.event_gap_mean_s = j.value("event_gap_mean_s", c.event_gap_mean_s);
        const std::string scheme = j.value("labels", scheme_name(c.labels));
        if (scheme == "pair_cover") {
            c.labels = LabelScheme::PairCover;
        } else if (scheme == "random_triples") {
            c.labels = LabelScheme::RandomTriples;
        } else if (scheme == "explicit") {
            c.labels = LabelScheme::Explicit;
        } else {
            throw Error(ErrorCode::BadConfig, "labels must be pair_cover, random_triples or explicit");
        }
        c.random_label_count = j.value("random_label_count", c.random_label_count);
        if (j.contains("explicit_labels")) {
            c.explicit_labels = j["explicit_labels"].get<std::vector<std::vector<std::string>>>();
        }
        c.traces_per_label = j.value("traces_per_label", c.traces_per_label);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.window = j.value("window", c.window);
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadConfig, ex.what());
    }
    c.validate();
    return c;
}

SynthConfig read_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return config_from_json(json::parse(in));
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadConfig, path.string() + ": " + ex.what());
    }
}

std::vector<SiteProfile> build_profiles(const SynthConfig& config) {
    config.validate();
    const auto& u = config.universe;
    Rng rng(derive_seed(config.seed, "profiles"));
    std::set<std::string> taken;
    std::vector<SiteProfile> profiles(u.size());

    if (config.pool_mode == PoolMode::SharedOrdered) {
        std::vector<std::string> pool;
        for (std::size_t k = 0; k < config.shared_pool_size; ++k) {
            pool.push_back(fresh_name(u, taken, [&] { return "s" + std::to_string(k) + "-" + random_token(rng, 4) + ".sharedcdn.net"; }));
        }
        for (std::size_t s = 0; s < u.size(); ++s) {
            auto& p = profiles[s];
            p.site = u.site(s);
            p.ordering = pool;
            for (std::size_t i = pool.size(); i > 1; --i) std::swap(p.ordering[i - 1], p.ordering[rng.uniform_index(i)]);
        }
        return profiles;
    }

    static const std::vector<std::string> kTemplates = {"www.{site}",       "{rand}.{site}",  "static.{rand}.{site}",
                                                        "api.{site}",       "img{rand}.{site}", "m.{site}",
                                                        "{rand}-edge.{site}", "media.{site}"};
    const auto shared_per_site =
        static_cast<std::size_t>(std::llround(config.third_party_overlap * static_cast<double>(config.third_party_count)));
    std::vector<std::string> shared_pool;
    if (shared_per_site > 0) {
        const std::size_t pool_size = std::max<std::size_t>(2 * config.third_party_count, shared_per_site);
        for (std::size_t k = 0; k < pool_size; ++k) {
            shared_pool.push_back(fresh_name(u, taken, [&] { return random_token(rng, 6) + ".tp-shared" + std::to_string(k) + ".net"; }));
        }
    }
    for (std::size_t s = 0; s < u.size(); ++s) {
        auto& p = profiles[s];
        p.site = u.site(s);
        for (std::size_t k = 0; k < config.first_party_count; ++k) {
            p.templates.push_back(k < kTemplates.size() ? kTemplates[k] : "{rand}" + std::to_string(k) + ".{site}");
            const std::string tpl = p.templates.back();
            // First-party names carry the site id by construction, so only uniqueness is checked.
            p.first_party.push_back(fresh_name(WebsiteUniverse{}, taken, [&] {
                return replace_all(replace_all(tpl, "{rand}", random_token(rng, 5)), "{site}", p.site);
            }));
        }
        std::vector<std::size_t> picks(shared_pool.size());
        for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
        for (std::size_t k = 0; k < config.third_party_count; ++k) {
            if (k < shared_per_site) {
                const std::size_t j = k + rng.uniform_index(picks.size() - k);
                std::swap(picks[k], picks[j]);
                p.third_party.push_back(shared_pool[picks[k]]);
            } else {
                p.third_party.push_back(fresh_name(u, taken, [&] {
                    return random_token(rng, 5) + ".tp" + std::to_string(s) + "-" + random_token(rng, 3) + ".net";
                }));
            }
            p.third_party_weights.push_back(rng.uniform(0.5, 1.5));
        }
        double total = 0.0;
        for (double w : p.third_party_weights) total += w;
        for (double& w : p.third_party_weights) w /= total;
    }
    return profiles;
}

std::vector<std::string> noise_pool(const SynthConfig& config) {
    Rng rng(derive_seed(config.seed, "noise-pool"));
    std::set<std::string> taken;
    std::vector<std::string> pool;
    for (std::size_t k = 0; k < 40; ++k) {
        pool.push_back(fresh_name(config.universe, taken, [&] { return "n" + std::to_string(k) + "-" + random_token(rng, 5) + ".noise-cdn.org"; }));
    }
    return pool;
}

SynthTrace generate_trace(const SynthConfig& config, const std::vector<SiteProfile>& profiles,
                          const std::vector<std::string>& label, std::uint64_t seed) {
    config.validate();
    std::vector<std::size_t> members;
    for (const auto& site : label) members.push_back(config.universe.index_of(site));
    if (profiles.size() != config.universe.size()) throw Error(ErrorCode::BadConfig, "profiles do not match universe");

    Rng rng(seed);
    const auto noise = config.noise_rate > 0.0 ? noise_pool(config) : std::vector<std::string>{};

    // Burst schedule: which site emits each page visit.
    std::vector<std::size_t> schedule;
    if (config.interleave == Interleave::RoundRobin) {
        for (std::size_t page = 0; page < config.pages_per_site; ++page)
            for (std::size_t m : members) schedule.push_back(m);
    } else {
        std::vector<double> clock(members.size());
        std::vector<std::size_t> left(members.size(), config.pages_per_site);
        for (auto& c : clock) c = rng.exponential(1.0);
        for (;;) {
            std::size_t best = members.size();
            for (std::size_t k = 0; k < members.size(); ++k) {
                if (left[k] > 0 && (best == members.size() || clock[k] < clock[best])) best = k;
            }
            if (best == members.size()) break;
            schedule.push_back(members[best]);
            --left[best];
            clock[best] += rng.exponential(1.0);
        }
    }

    SynthTrace out;
    out.trace.label = label;
    std::int64_t now_us = kEpochMicros + static_cast<std::int64_t>(rng.uniform_index(100'000'000'000ULL));
    const double p_continue = 1.0 - 1.0 / config.burst_mean;

    for (std::size_t b = 0; b < schedule.size(); ++b) {
        const SiteProfile& prof = profiles[schedule[b]];
        std::size_t len = 1;
        while (len < config.burst_max && rng.bernoulli(p_continue)) ++len;

        std::vector<std::string> names;
        if (config.pool_mode == PoolMode::SharedOrdered) {
            len = std::min(len, prof.ordering.size());
            const std::size_t start = rng.uniform_index(prof.ordering.size());
            for (std::size_t k = 0; k < len; ++k) names.push_back(prof.ordering[(start + k) % prof.ordering.size()]);
        } else {
            std::vector<std::size_t> fp(prof.first_party.size());
            for (std::size_t i = 0; i < fp.size(); ++i) fp[i] = i;
            std::vector<double> tp_w = prof.third_party_weights;
            auto take_fp = [&] {
                const std::size_t k = rng.uniform_index(fp.size());
                names.push_back(prof.first_party[fp[k]]);
                fp.erase(fp.begin() + static_cast<std::ptrdiff_t>(k));
            };
            take_fp();  // the page itself
            while (names.size() < len) {
                const bool tp_left = std::any_of(tp_w.begin(), tp_w.end(), [](double w) { return w > 0.0; });
                const bool want_fp = rng.bernoulli(0.25);
                if ((want_fp || !tp_left) && !fp.empty()) {
                    take_fp();
                } else if (tp_left) {
                    const std::size_t k = weighted_pick(rng, tp_w);
                    names.push_back(prof.third_party[k]);
                    tp_w[k] = 0.0;
                } else {
                    break;
                }
            }
        }

        std::set<std::string> in_burst(names.begin(), names.end());
        for (auto& name : names) {
            std::string origin = prof.site;
            if (!noise.empty() && rng.bernoulli(config.noise_rate)) {
                std::string pick;
                do {
                    pick = noise[rng.uniform_index(noise.size())];
                } while (in_burst.count(pick));
                in_burst.insert(pick);
                name = pick;
                origin = "noise";
            }
            now_us += std::max<std::int64_t>(1, std::llround(rng.exponential(config.event_gap_mean_s) * 1e6));
            SniEvent ev;
            ev.server_name = name;
            ev.ts = static_cast<double>(now_us) / 1e6;
            ev.version = rng.bernoulli(config.tls13_fraction) ? TlsVersion::Tls13 : TlsVersion::Tls12;
            out.trace.events.push_back(std::move(ev));
            out.origin.push_back(std::move(origin));
            out.burst.push_back(static_cast<std::uint32_t>(b));
        }
    }
    return out;
}

std::vector<std::vector<std::string>> corpus_labels(const SynthConfig& config) {
    config.validate();
    std::vector<std::vector<std::string>> out;
    switch (config.labels) {
        case LabelScheme::PairCover:
            for (const auto& t : pair_cover_triples(config.universe.size())) out.push_back(triple_sites(config.universe, t));
            break;
        case LabelScheme::RandomTriples:
            for (const auto& t : random_triples(config.universe.size(), config.random_label_count,
                                                derive_seed(config.seed, "random-triples")))
                out.push_back(triple_sites(config.universe, t));
            break;
        case LabelScheme::Explicit:
            for (const auto& l : config.explicit_labels) {
                for (const auto& s : l) {
                    if (!config.universe.contains(s)) throw Error(ErrorCode::UnknownSite, s);
                }
                out.push_back(l);
            }
            break;
    }
    return out;
}

std::vector<SynthTrace> generate_corpus(const SynthConfig& config, const std::vector<std::vector<std::string>>& labels,
                                        std::size_t traces_per_label) {
    const auto profiles = build_profiles(config);
    std::vector<SynthTrace> out;
    out.reserve(labels.size() * traces_per_label);
    for (std::size_t l = 0; l < labels.size(); ++l) {
        for (std::size_t r = 0; r < traces_per_label; ++r) {
            out.push_back(generate_trace(config, profiles, labels[l], derive_seed(config.seed, "trace", l * traces_per_label + r)));
        }
    }
    return out;
}

std::string truth_to_json_line(const SynthTrace& t) {
    json j = json::parse(trace_to_json_line(t.trace));
    for (std::size_t i = 0; i < t.trace.events.size(); ++i) {
        j["events"][i]["origin"] = t.origin.at(i);
        j["events"][i]["burst"] = t.burst.at(i);
    }
    return j.dump();
}

SynthTrace truth_from_json_line(std::string_view line) {
    SynthTrace t;
    t.trace = trace_from_json_line(line);
    try {
        const json j = json::parse(line);
        for (const auto& e : j.at("events")) {
            t.origin.push_back(e.at("origin").get<std::string>());
            t.burst.push_back(e.at("burst").get<std::uint32_t>());
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadTraceFile, ex.what());
    }
    return t;
}

DatasetManifest write_corpus(const std::filesystem::path& dir, const SynthConfig& config,
                             const std::vector<SynthTrace>& traces) {
    std::filesystem::create_directories(dir);
    std::vector<Trace> plain;
    plain.reserve(traces.size());
    {
        std::ofstream truth(dir / "truth.jsonl", std::ios::binary);
        if (!truth) throw Error(ErrorCode::Io, "cannot write " + (dir / "truth.jsonl").string());
        for (const auto& t : traces) {
            truth << truth_to_json_line(t) << '\n';
            plain.push_back(t.trace);
        }
    }
    write_traces(dir / "traces.jsonl", plain);
    {
        std::ofstream cfg(dir / "synth_config.json", std::ios::binary);
        cfg << config_to_json(config).dump(2) << '\n';
    }

    DatasetManifest m;
    m.universe = config.universe;
    m.seed = config.seed;
    m.window = config.window;
    m.train_fraction = config.train_fraction;
    m.trace_files = {"traces.jsonl"};
    if (!plain.empty()) {
        m.split = split_traces(plain, config.train_fraction, derive_seed(config.seed, "split"));
        std::vector<Trace> train;
        for (auto id : m.split.train) train.push_back(plain[id]);
        if (!train.empty()) m.vocabulary = build_vocabulary(train);
    }
    write_manifest(dir / "manifest.json", m);
    return m;
}

std::vector<std::uint8_t> emit_pcap(const Trace& trace, const std::vector<std::uint32_t>& flow_ids) {
    if (!flow_ids.empty() && flow_ids.size() != trace.events.size()) {
        throw Error(ErrorCode::BadConfig, "flow id count does not match event count");
    }
    pcap::PcapWriter writer;
    std::map<std::uint32_t, std::uint32_t> next_seq;
    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        const auto& ev = trace.events[i];
        const std::uint32_t flow = flow_ids.empty() ? static_cast<std::uint32_t>(i) : flow_ids[i];

        tls::ClientHelloSpec spec;
        spec.server_name = ev.server_name;
        spec.random_seed = derive_seed(flow, ev.server_name, i);
        if (ev.version == TlsVersion::Tls13) spec.supported_versions = {0x0304, 0x0303};
        const auto hello = tls::build_client_hello(spec);
        const auto payload = tls::wrap_records(hello, tls::kContentHandshake, spec.record_version);

        auto [it, fresh] = next_seq.try_emplace(flow, static_cast<std::uint32_t>(derive_seed(7, "isn", flow)));
        const std::uint32_t seq = it->second;
        it->second += static_cast<std::uint32_t>(payload.size());

        std::vector<std::uint8_t> f;
        const std::uint8_t dst_mac[6] = {0x02, 0x00, 0x00, 0x00, 0x00, 0x01};
        const std::uint8_t src_mac[6] = {0x02, 0x00, 0x00, 0x00, 0x00, 0x02};
        f.insert(f.end(), dst_mac, dst_mac + 6);
        f.insert(f.end(), src_mac, src_mac + 6);
        f.push_back(0x08);
        f.push_back(0x00);
        const std::size_t total = 20 + 20 + payload.size();
        const std::uint8_t ip[20] = {0x45, 0, static_cast<std::uint8_t>(total >> 8), static_cast<std::uint8_t>(total),
                                     0, 0, 0x40, 0, 64, 6, 0, 0,
                                     10, 0, 0, 2,
                                     203, 0, 113, static_cast<std::uint8_t>(1 + flow % 250)};
        f.insert(f.end(), ip, ip + 20);
        const std::uint16_t sport = static_cast<std::uint16_t>(20000 + flow % 40000);
        const std::uint8_t tcp[20] = {static_cast<std::uint8_t>(sport >> 8), static_cast<std::uint8_t>(sport), 0x01, 0xbb,
                                      static_cast<std::uint8_t>(seq >> 24), static_cast<std::uint8_t>(seq >> 16),
                                      static_cast<std::uint8_t>(seq >> 8), static_cast<std::uint8_t>(seq),
                                      0, 0, 0, 1,
                                      0x50, 0x18, 0xff, 0xff, 0, 0, 0, 0};
        f.insert(f.end(), tcp, tcp + 20);
        f.insert(f.end(), payload.begin(), payload.end());

        const auto micros = std::llround(ev.ts * 1e6);
        pcap::Timestamp ts{micros / 1'000'000, static_cast<std::uint32_t>(micros % 1'000'000) * 1000u};
        writer.add(ts, f);
    }
    return writer.bytes();
}

}  // namespace sni_sight::synth
