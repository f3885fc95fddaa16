#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sni_sight/trace.hpp"

namespace sni_sight {

/// Ordered set of monitored websites; the order fixes label slot positions.
class WebsiteUniverse {
public:
    WebsiteUniverse() = default;
    explicit WebsiteUniverse(std::vector<std::string> sites);

    [[nodiscard]] std::size_t size() const { return sites_.size(); }
    [[nodiscard]] const std::vector<std::string>& sites() const { return sites_; }
    [[nodiscard]] const std::string& site(std::size_t i) const { return sites_.at(i); }
    /// Throws UnknownSite.
    [[nodiscard]] std::size_t index_of(std::string_view site) const;
    [[nodiscard]] bool contains(std::string_view site) const;

    bool operator==(const WebsiteUniverse& o) const { return sites_ == o.sites_; }

private:
    std::vector<std::string> sites_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// The built-in twenty-site universe.
WebsiteUniverse default_universe();

/// Fixed-width multi-hot vector over a universe.
class LabelVector {
public:
    LabelVector() = default;
    explicit LabelVector(std::size_t n) : bits_(n, 0) {}
    static LabelVector from_sites(const WebsiteUniverse& universe, const std::vector<std::string>& sites);

    [[nodiscard]] std::size_t size() const { return bits_.size(); }
    [[nodiscard]] bool test(std::size_t i) const { return bits_.at(i) != 0; }
    void set(std::size_t i, bool on = true) { bits_.at(i) = on ? 1 : 0; }
    [[nodiscard]] std::size_t popcount() const;
    [[nodiscard]] const std::vector<std::uint8_t>& bits() const { return bits_; }
    [[nodiscard]] std::vector<std::string> sites(const WebsiteUniverse& universe) const;

    bool operator==(const LabelVector&) const = default;

private:
    std::vector<std::uint8_t> bits_;
};

using Triple = std::array<std::size_t, 3>;

/// One triple per unordered pair {a, b}: the third member is the site at
/// (a + b) mod n, stepping forward past a and b. Every pair co-occurs at
/// least once. Members are sorted ascending. Throws UniverseTooSmall for n < 3.
std::vector<Triple> pair_cover_triples(std::size_t n);

/// count distinct triples drawn uniformly without replacement. Throws CountTooLarge.
std::vector<Triple> random_triples(std::size_t n, std::size_t count, std::uint64_t seed);

std::vector<std::string> triple_sites(const WebsiteUniverse& universe, const Triple& t);

/// Server-name index. Slot 0 is reserved for out-of-vocabulary names.
class Vocabulary {
public:
    static constexpr std::uint32_t kOov = 0;
    static constexpr std::string_view kOovToken = "<oov>";

    Vocabulary();
    /// names[0] must be the OOV token.
    explicit Vocabulary(std::vector<std::string> names);

    [[nodiscard]] std::size_t size() const { return names_.size(); }
    [[nodiscard]] std::uint32_t encode(std::string_view name) const;
    [[nodiscard]] const std::string& decode(std::uint32_t index) const { return names_.at(index); }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] std::uint64_t hash() const { return hash_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::uint64_t hash_ = 0;
};

/// Indexes every distinct name of the training traces. Names are ordered by
/// the earliest event position at which they occur in any trace, ties broken
/// lexicographically, so the result does not depend on trace order.
Vocabulary build_vocabulary(const std::vector<Trace>& training);

struct SequenceSample {
    std::vector<std::uint32_t> indices;
    LabelVector label;
    std::size_t trace_id = 0;
    std::size_t start = 0;
    bool padded = false;
    std::uint64_t vocab_hash = 0;
};

struct FrequencySample {
    std::vector<std::uint32_t> counts;
    LabelVector label;
    std::size_t trace_id = 0;
    std::uint64_t vocab_hash = 0;
};

/// Valid window starts for a trace of event_count events: 0..count-T, or
/// just {0} when the trace is shorter than T (or empty).
std::size_t window_count(std::size_t event_count, std::size_t window);

/// events[start, start+T) as vocabulary indices, OOV-padded at the tail.
/// Throws EmptyTrace or StartBeyondTrace.
SequenceSample window_sample(const Trace& trace, const Vocabulary& vocab, const WebsiteUniverse& universe,
                             std::size_t window, std::size_t start, std::size_t trace_id = 0);

/// Window over a trace that may be empty; an empty trace gives one all-OOV window.
SequenceSample window_sample_or_pad(const Trace& trace, const Vocabulary& vocab, const WebsiteUniverse& universe,
                                    std::size_t window, std::size_t start, std::size_t trace_id = 0);

FrequencySample frequency_vector(const Trace& trace, const Vocabulary& vocab, const WebsiteUniverse& universe,
                                 std::size_t trace_id = 0);

struct Split {
    std::vector<std::size_t> train;  // trace ids, ascending
    std::vector<std::size_t> test;
};

/// Per-trace partition, stratified by label. The overall train count is
/// round(fraction * total); each stratum gets floor(fraction * size) and the
/// leftover slots go to the strata with the largest remainders (seeded order
/// among equal remainders). Strata with at least two traces keep one on each side.
Split split_traces(const std::vector<Trace>& traces, double train_fraction, std::uint64_t seed);

/// Drops every event whose name contains a universe site as a substring.
Trace scrub(const Trace& trace, const WebsiteUniverse& universe);

std::string label_key(std::vector<std::string> label);

/// Everything a training or evaluation run needs to re-derive its samples.
struct DatasetManifest {
    int format_version = 1;
    WebsiteUniverse universe;
    std::uint64_t seed = 0;
    std::size_t window = 20;
    double train_fraction = 0.85;
    Split split;
    Vocabulary vocabulary;
    std::vector<std::string> trace_files;  // relative to the manifest directory
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct Dataset {
    DatasetManifest manifest;
    std::vector<Trace> traces;  // concatenation of trace_files, ids are positions

    [[nodiscard]] std::vector<Trace> select(const std::vector<std::size_t>& ids) const;
};

/// Loads <dir>/manifest.json and its trace files.
Dataset load_dataset(const std::filesystem::path& dir);

/// CSV: trace_id,split,label,<one column per vocabulary name>.
void write_frequency_csv(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace sni_sight
