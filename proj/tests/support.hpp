#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sni_sight/metrics.hpp"
#include "sni_sight/synth.hpp"

namespace sni_sight::testing {

std::filesystem::path fixture_dir();

/// Fresh, empty scratch directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

struct FixtureOutcome {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Runs every capture listed in fixtures/expected.json through extract_trace
/// and compares names, versions and timestamps.
std::vector<FixtureOutcome> run_parser_fixtures();

struct RoundTripOutcome {
    std::size_t traces = 0;
    std::size_t events = 0;
    std::size_t mismatches = 0;
    std::string first_mismatch;
};

/// Seeded synthetic traces through emit_pcap and back through extraction.
RoundTripOutcome run_emit_roundtrip(std::size_t count, std::uint64_t seed);

struct GradCheckOutcome {
    std::size_t checks = 0;
    double worst = 0.0;
    std::string worst_where;
};

/// LSTM (T=3, H=2, V=2), dense layers and the sigmoid cross-entropy, one
/// seed each, compared against central differences.
GradCheckOutcome run_gradient_checks(std::size_t seeds);

/// Confusion counts recomputed from a prediction dump file with plain JSON
/// parsing; decisions are re-derived from the probabilities.
struct Recount {
    Confusion totals;
    std::vector<Confusion> per_class;
    std::uint64_t samples = 0;
    std::uint64_t recovered = 0;
    std::uint64_t true_labels = 0;
    bool decisions_consistent = true;
};
Recount recount_predictions(const std::filesystem::path& dump, std::size_t classes, double threshold);

/// Empty when the report agrees with the recount, else a description.
std::string compare_recount(const EvalReport& report, const Recount& recount);

/// Empty when every unordered pair of 0..n-1 lies in some triple and the
/// triples are well formed, else a description.
std::string check_pair_cover(std::size_t n, const std::vector<std::array<std::size_t, 3>>& triples);

// Corpora for the model-level criteria.
synth::SynthConfig separable_config(std::uint64_t seed);
synth::SynthConfig order_signal_config(std::uint64_t seed);
synth::SynthConfig scrub_config(std::uint64_t seed);

struct SplitCorpus {
    WebsiteUniverse universe;
    std::vector<Trace> train;
    std::vector<Trace> test;
    std::vector<std::size_t> test_ids;
    Vocabulary vocabulary;
};

/// Generates the corpus and applies the same split write_corpus records.
SplitCorpus make_split_corpus(const synth::SynthConfig& config);

}  // namespace sni_sight::testing
