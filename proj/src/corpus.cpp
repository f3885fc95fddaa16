#include "sni_sight/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "sni_sight/error.hpp"
#include "sni_sight/rng.hpp"

namespace sni_sight {

using nlohmann::json;

WebsiteUniverse::WebsiteUniverse(std::vector<std::string> sites) : sites_(std::move(sites)) {
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        auto& s = sites_[i];
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        if (s.empty()) throw Error(ErrorCode::BadConfig, "empty website identifier");
        if (!index_.emplace(s, i).second) throw Error(ErrorCode::BadConfig, "duplicate website " + s);
    }
}

std::size_t WebsiteUniverse::index_of(std::string_view site) const {
    auto it = index_.find(std::string(site));
    if (it == index_.end()) throw Error(ErrorCode::UnknownSite, std::string(site));
    return it->second;
}

bool WebsiteUniverse::contains(std::string_view site) const { return index_.count(std::string(site)) != 0; }

WebsiteUniverse default_universe() {
    return WebsiteUniverse({"imdb.com", "github.com", "stackoverflow.com", "samsung.com", "pinterest.com",
                            "linkedin.com", "soundcloud.com", "instagram.com", "java.com", "gitlab.com",
                            "quora.com", "spotify.com", "oracle.com", "ebay.com", "en.wikipedia.org",
                            "reddit.com", "twitter.com", "youtube.com", "facebook.com", "netflix.com"});
}

LabelVector LabelVector::from_sites(const WebsiteUniverse& universe, const std::vector<std::string>& sites) {
    LabelVector v(universe.size());
    for (const auto& s : sites) v.set(universe.index_of(s));
    return v;
}

std::size_t LabelVector::popcount() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::string> LabelVector::sites(const WebsiteUniverse& universe) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i]) out.push_back(universe.site(i));
    }
    return out;
}

std::vector<Triple> pair_cover_triples(std::size_t n) {
    if (n < 3) throw Error(ErrorCode::UniverseTooSmall, "need at least 3 sites, have " + std::to_string(n));
    std::vector<Triple> out;
    out.reserve(n * (n - 1) / 2);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            std::size_t c = (a + b) % n;
            while (c == a || c == b) c = (c + 1) % n;
            Triple t{a, b, c};
            std::sort(t.begin(), t.end());
            out.push_back(t);
        }
    }
    return out;
}

std::vector<Triple> random_triples(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<Triple> all;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            for (std::size_t c = b + 1; c < n; ++c) all.push_back({a, b, c});
    if (count > all.size()) {
        throw Error(ErrorCode::CountTooLarge,
                    std::to_string(count) + " triples requested, only " + std::to_string(all.size()) + " exist");
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.uniform_index(all.size() - i);
        std::swap(all[i], all[j]);
    }
    all.resize(count);
    return all;
}

std::vector<std::string> triple_sites(const WebsiteUniverse& universe, const Triple& t) {
    return {universe.site(t[0]), universe.site(t[1]), universe.site(t[2])};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{std::string(kOovToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty() || names_[0] != kOovToken) {
        throw Error(ErrorCode::BadConfig, "vocabulary slot 0 must be the OOV token");
    }
    std::uint64_t h = fnv1a64("sni-vocab");
    for (std::uint32_t i = 0; i < names_.size(); ++i) {
        if (i > 0 && !index_.emplace(names_[i], i).second) {
            throw Error(ErrorCode::BadConfig, "duplicate vocabulary entry " + names_[i]);
        }
        h = fnv1a64(names_[i], h);
        h = fnv1a64(std::string_view("\n", 1), h);
    }
    hash_ = h;
}

std::uint32_t Vocabulary::encode(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? kOov : it->second;
}

Vocabulary build_vocabulary(const std::vector<Trace>& training) {
    if (training.empty()) throw Error(ErrorCode::EmptyCorpus, "no training traces");
    std::map<std::string, std::size_t> first_pos;
    for (const auto& t : training) {
        for (std::size_t i = 0; i < t.events.size(); ++i) {
            auto [it, inserted] = first_pos.try_emplace(t.events[i].server_name, i);
            if (!inserted) it->second = std::min(it->second, i);
        }
    }
    std::vector<std::pair<std::size_t, std::string>> order;
    order.reserve(first_pos.size());
    for (auto& [name, pos] : first_pos) order.emplace_back(pos, name);
    std::sort(order.begin(), order.end());
    std::vector<std::string> names{std::string(Vocabulary::kOovToken)};
    for (auto& [pos, name] : order) {
        if (name != Vocabulary::kOovToken) names.push_back(std::move(name));
    }
    return Vocabulary(std::move(names));
}

std::size_t window_count(std::size_t event_count, std::size_t window) {
    return event_count >= window ? event_count - window + 1 : 1;
}

SequenceSample window_sample_or_pad(const Trace& trace, const Vocabulary& vocab, const WebsiteUniverse& universe,
                                    std::size_t window, std::size_t start, std::size_t trace_id) {
    if (window == 0) throw Error(ErrorCode::BadConfig, "window length must be positive");
    SequenceSample s;
    s.label = LabelVector::from_sites(universe, trace.label);
    s.trace_id = trace_id;
    s.start = start;
    s.vocab_hash = vocab.hash();
    s.indices.assign(window, Vocabulary::kOov);
    for (std::size_t k = 0; k < window; ++k) {
        const std::size_t i = start + k;
        if (i < trace.events.size()) {
            s.indices[k] = vocab.encode(trace.events[i].server_name);
        } else {
            s.padded = true;
        }
    }
    return s;
}

SequenceSample window_sample(const Trace& trace, const Vocabulary& vocab, const WebsiteUniverse& universe,
                             std::size_t window, std::size_t start, std::size_t trace_id) {
    if (trace.events.empty()) throw Error(ErrorCode::EmptyTrace, "trace " + std::to_string(trace_id) + " has no events");
    if (start >= trace.events.size()) {
        throw Error(ErrorCode::StartBeyondTrace, "start " + std::to_string(start) + " with " +
                                                     std::to_string(trace.events.size()) + " events");
    }
    return window_sample_or_pad(trace, vocab, universe, window, start, trace_id);
}

FrequencySample frequency_vector(const Trace& trace, const Vocabulary& vocab, const WebsiteUniverse& universe,
                                 std::size_t trace_id) {
    FrequencySample s;
    s.counts.assign(vocab.size(), 0);
    for (const auto& e : trace.events) ++s.counts[vocab.encode(e.server_name)];
    s.label = LabelVector::from_sites(universe, trace.label);
    s.trace_id = trace_id;
    s.vocab_hash = vocab.hash();
    return s;
}

std::string label_key(std::vector<std::string> label) {
    std::sort(label.begin(), label.end());
    std::string key;
    for (const auto& s : label) {
        if (!key.empty()) key += '|';
        key += s;
    }
    return key;
}

Split split_traces(const std::vector<Trace>& traces, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error(ErrorCode::BadFraction, "train fraction must lie in (0, 1)");
    }
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < traces.size(); ++i) strata[label_key(traces[i].label)].push_back(i);

    Rng rng(seed);
    struct Quota {
        std::vector<std::size_t>* members;
        std::size_t take;
        double remainder;
        std::uint64_t tiebreak;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (auto& [key, members] : strata) {
        for (std::size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[rng.uniform_index(i)]);
        }
        const double exact = train_fraction * static_cast<double>(members.size());
        auto take = static_cast<std::size_t>(std::floor(exact));
        if (members.size() >= 2) take = std::clamp<std::size_t>(take, 1, members.size() - 1);
        quotas.push_back({&members, take, exact - std::floor(exact), rng.next_u64()});
        assigned += take;
    }

    const auto target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(traces.size())));
    std::vector<Quota*> order;
    for (auto& q : quotas) order.push_back(&q);
    std::sort(order.begin(), order.end(), [](const Quota* a, const Quota* b) {
        if (a->remainder != b->remainder) return a->remainder > b->remainder;
        return a->tiebreak < b->tiebreak;
    });
    for (Quota* q : order) {
        if (assigned >= target) break;
        const std::size_t cap = q->members->size() >= 2 ? q->members->size() - 1 : q->members->size();
        if (q->take < cap) {
            ++q->take;
            ++assigned;
        }
    }

    Split split;
    for (const auto& q : quotas) {
        for (std::size_t i = 0; i < q.members->size(); ++i) {
            (i < q.take ? split.train : split.test).push_back((*q.members)[i]);
        }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

Trace scrub(const Trace& trace, const WebsiteUniverse& universe) {
    Trace out;
    out.label = trace.label;
    out.source = trace.source;
    for (const auto& e : trace.events) {
        const bool leaks = std::any_of(universe.sites().begin(), universe.sites().end(), [&](const std::string& site) {
            return e.server_name.find(site) != std::string::npos;
        });
        if (!leaks) out.events.push_back(e);
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["universe"] = m.universe.sites();
    j["seed"] = m.seed;
    j["window"] = m.window;
    j["train_fraction"] = m.train_fraction;
    j["split"] = {{"train", m.split.train}, {"test", m.split.test}};
    j["vocabulary"] = m.vocabulary.names();
    j["vocabulary_hash"] = m.vocabulary.hash();
    j["trace_files"] = m.trace_files;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    DatasetManifest m;
    try {
        const json j = json::parse(in);
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1) {
            throw Error(ErrorCode::VersionMismatch, "manifest format " + std::to_string(m.format_version));
        }
        m.universe = WebsiteUniverse(j.at("universe").get<std::vector<std::string>>());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.window = j.at("window").get<std::size_t>();
        m.train_fraction = j.at("train_fraction").get<double>();
        m.split.train = j.at("split").at("train").get<std::vector<std::size_t>>();
        m.split.test = j.at("split").at("test").get<std::vector<std::size_t>>();
        m.vocabulary = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
        m.trace_files = j.at("trace_files").get<std::vector<std::string>>();
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadConfig, path.string() + ": " + ex.what());
    }
    return m;
}

std::vector<Trace> Dataset::select(const std::vector<std::size_t>& ids) const {
    std::vector<Trace> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(traces.at(id));
    return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    ds.manifest = read_manifest(dir / "manifest.json");
    for (const auto& f : ds.manifest.trace_files) {
        auto part = read_traces(dir / f);
        ds.traces.insert(ds.traces.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    for (auto id : ds.manifest.split.train)
        if (id >= ds.traces.size()) throw Error(ErrorCode::BadConfig, "split references missing trace " + std::to_string(id));
    for (auto id : ds.manifest.split.test)
        if (id >= ds.traces.size()) throw Error(ErrorCode::BadConfig, "split references missing trace " + std::to_string(id));
    return ds;
}

void write_frequency_csv(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    const auto& vocab = dataset.manifest.vocabulary;
    out << "trace_id,split,label";
    for (const auto& name : vocab.names()) out << ',' << name;
    out << '\n';
    std::vector<char> side(dataset.traces.size(), '-');
    for (auto id : dataset.manifest.split.train) side[id] = 'r';
    for (auto id : dataset.manifest.split.test) side[id] = 'e';
    for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
        const auto sample = frequency_vector(dataset.traces[i], vocab, dataset.manifest.universe, i);
        out << i << ',' << (side[i] == 'r' ? "train" : side[i] == 'e' ? "test" : "none") << ','
            << label_key(dataset.traces[i].label);
        for (auto c : sample.counts) out << ',' << c;
        out << '\n';
    }
}

}  // namespace sni_sight
