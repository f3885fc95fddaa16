#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sni_sight/corpus.hpp"
#include "sni_sight/trace.hpp"

namespace sni_sight::synth {

enum class Interleave { RoundRobin, ExponentialClock };

/// Profiles: each site owns first-party names (containing the site id) and a
/// weighted third-party pool, part of which is shared across sites.
/// SharedOrdered: every site draws from one common pool, but walks it in its
/// own fixed cyclic order, so counts carry no label signal while order does.
enum class PoolMode { Profiles, SharedOrdered };

enum class LabelScheme { PairCover, RandomTriples, Explicit };

struct SynthConfig {
    WebsiteUniverse universe = default_universe();
    std::uint64_t seed = 1;
    std::size_t pages_per_site = 15;
    Interleave interleave = Interleave::RoundRobin;
    double noise_rate = 0.0;
    double burst_mean = 6.0;
    std::size_t burst_max = 9;
    std::size_t first_party_count = 4;
    std::size_t third_party_count = 8;
    double third_party_overlap = 0.3;
    PoolMode pool_mode = PoolMode::Profiles;
    std::size_t shared_pool_size = 12;
    double tls13_fraction = 0.5;
    double event_gap_mean_s = 0.05;

    // corpus shape
    LabelScheme labels = LabelScheme::PairCover;
    std::size_t random_label_count = 843;
    std::vector<std::vector<std::string>> explicit_labels;
    std::size_t traces_per_label = 11;
    double train_fraction = 0.85;
    std::size_t window = 20;

    /// Throws BadConfig on out-of-range knobs.
    void validate() const;
};

nlohmann::json config_to_json(const SynthConfig& config);
SynthConfig config_from_json(const nlohmann::json& j);
SynthConfig read_config(const std::filesystem::path& path);

struct SiteProfile {
    std::string site;
    std::vector<std::string> templates;            // "{rand}" / "{site}" placeholders
    std::vector<std::string> first_party;          // instantiated templates
    std::vector<std::string> third_party;
    std::vector<double> third_party_weights;       // sums to 1
    std::vector<std::string> ordering;             // SharedOrdered walk order
};

/// Deterministic per-site profiles for a config (seeded from config.seed).
std::vector<SiteProfile> build_profiles(const SynthConfig& config);

/// Global pool for off-profile noise names.
std::vector<std::string> noise_pool(const SynthConfig& config);

/// A trace plus the generator's ground truth per event.
struct SynthTrace {
    Trace trace;
    std::vector<std::string> origin;  // emitting site, or "noise"
    std::vector<std::uint32_t> burst; // burst (page visit) index
};

/// Throws UnknownSite for label members outside the universe.
SynthTrace generate_trace(const SynthConfig& config, const std::vector<SiteProfile>& profiles,
                          const std::vector<std::string>& label, std::uint64_t seed);

/// Labels selected by config.labels.
std::vector<std::vector<std::string>> corpus_labels(const SynthConfig& config);

/// traces_per_label repetitions of every label, sub-seeded per (label, repetition).
std::vector<SynthTrace> generate_corpus(const SynthConfig& config, const std::vector<std::vector<std::string>>& labels,
                                        std::size_t traces_per_label);

/// Ground-truth sidecar line: the trace line with "origin" and "burst" per event.
std::string truth_to_json_line(const SynthTrace& t);
SynthTrace truth_from_json_line(std::string_view line);

/// Writes traces.jsonl, truth.jsonl, synth_config.json and manifest.json
/// (split and training-split vocabulary included) under dir.
DatasetManifest write_corpus(const std::filesystem::path& dir, const SynthConfig& config,
                             const std::vector<SynthTrace>& traces);

/// Ethernet/IPv4/TCP capture with one ClientHello per event. Events sharing a
/// flow id ride one TCP connection; without flow ids each event gets its own.
std::vector<std::uint8_t> emit_pcap(const Trace& trace, const std::vector<std::uint32_t>& flow_ids = {});

}  // namespace sni_sight::synth
