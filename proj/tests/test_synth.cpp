#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "sni_sight/error.hpp"
#include "sni_sight/synth.hpp"
#include "support.hpp"

using namespace sni_sight;
using namespace sni_sight::synth;

namespace {

bool mentions_site(const std::string& name, const WebsiteUniverse& u) {
    return std::any_of(u.sites().begin(), u.sites().end(),
                       [&](const std::string& s) { return name.find(s) != std::string::npos; });
}

}  // namespace

TEST_CASE("profiles keep first-party and third-party names apart") {
    SynthConfig c;
    c.seed = 4;
    const auto profiles = build_profiles(c);
    REQUIRE(profiles.size() == c.universe.size());
    std::set<std::string> first;
    for (const auto& p : profiles) {
        CHECK(p.first_party.size() == c.first_party_count);
        CHECK(p.third_party.size() == c.third_party_count);
        for (const auto& n : p.first_party) {
            CHECK(n.find(p.site) != std::string::npos);
            CHECK(first.insert(n).second);
        }
        for (const auto& n : p.third_party) CHECK_FALSE(mentions_site(n, c.universe));
        double total = 0;
        for (double w : p.third_party_weights) total += w;
        CHECK(total == doctest::Approx(1.0));
    }
    for (const auto& n : noise_pool(c)) CHECK_FALSE(mentions_site(n, c.universe));
    CHECK(build_profiles(c)[3].first_party == profiles[3].first_party);
}

TEST_CASE("shared ordered pools share names but not order") {
    SynthConfig c;
    c.pool_mode = PoolMode::SharedOrdered;
    c.shared_pool_size = 12;
    const auto profiles = build_profiles(c);
    auto sorted = [](std::vector<std::string> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto pool = sorted(profiles[0].ordering);
    CHECK(pool.size() == 12);
    std::set<std::vector<std::string>> orders;
    for (const auto& p : profiles) {
        CHECK(sorted(p.ordering) == pool);
        orders.insert(p.ordering);
        for (const auto& n : p.ordering) CHECK_FALSE(mentions_site(n, c.universe));
    }
    CHECK(orders.size() == profiles.size());
}

TEST_CASE("generated traces") {
    SynthConfig c;
    c.pages_per_site = 5;
    c.noise_rate = 0.1;
    const auto profiles = build_profiles(c);
    const std::vector<std::string> label = {"github.com", "reddit.com", "imdb.com"};
    const auto t = generate_trace(c, profiles, label, 77);
    CHECK(t.trace.label == label);
    REQUIRE(t.origin.size() == t.trace.events.size());
    REQUIRE(t.burst.size() == t.trace.events.size());
    CHECK(t.burst.back() == 14);
    for (std::size_t i = 1; i < t.trace.events.size(); ++i) CHECK(t.trace.events[i].ts > t.trace.events[i - 1].ts);
    for (const auto& o : t.origin) CHECK((o == "noise" || std::find(label.begin(), label.end(), o) != label.end()));
    // Round-robin: bursts cycle through the label members.
    std::vector<std::string> first_origin(15);
    for (std::size_t i = 0; i < t.origin.size(); ++i) {
        if (t.origin[i] != "noise" && first_origin[t.burst[i]].empty()) first_origin[t.burst[i]] = t.origin[i];
    }
    for (std::size_t b = 3; b < 15; ++b) {
        if (!first_origin[b].empty() && !first_origin[b - 3].empty()) CHECK(first_origin[b] == first_origin[b - 3]);
    }
    CHECK(generate_trace(c, profiles, label, 77).trace == t.trace);
    CHECK_FALSE(generate_trace(c, profiles, label, 78).trace == t.trace);
    CHECK_THROWS_AS(generate_trace(c, profiles, {"nowhere.example"}, 1), Error);
}

TEST_CASE("config JSON and validation") {
    SynthConfig c;
    c.seed = 12;
    c.interleave = Interleave::ExponentialClock;
    c.pool_mode = PoolMode::SharedOrdered;
    c.labels = LabelScheme::Explicit;
    c.explicit_labels = {{"github.com", "java.com"}};
    c.noise_rate = 0.25;
    const auto j = config_to_json(c);
    CHECK(config_to_json(config_from_json(j)) == j);
    CHECK(config_from_json(nlohmann::json::object()).pages_per_site == SynthConfig{}.pages_per_site);

    SynthConfig bad;
    bad.labels = LabelScheme::Explicit;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = SynthConfig{};
    bad.noise_rate = 0.6;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK_THROWS_AS(config_from_json({{"interleave", "zigzag"}}), Error);

    c.explicit_labels = {{"github.com", "nowhere.example"}};
    CHECK_THROWS_AS(corpus_labels(c), Error);
}

TEST_CASE("corpus labels by scheme") {
    SynthConfig c;
    CHECK(corpus_labels(c).size() == 190);
    c.labels = LabelScheme::RandomTriples;
    c.random_label_count = 30;
    const auto r = corpus_labels(c);
    CHECK(r.size() == 30);
    for (const auto& l : r) CHECK(l.size() == 3);
}

TEST_CASE("corpus generation is deterministic and writes its files") {
    SynthConfig c;
    c.pages_per_site = 3;
    c.labels = LabelScheme::RandomTriples;
    c.random_label_count = 6;
    c.traces_per_label = 2;
    const auto a = generate_corpus(c, corpus_labels(c), c.traces_per_label);
    const auto b = generate_corpus(c, corpus_labels(c), c.traces_per_label);
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].trace == b[i].trace);

    const auto back = truth_from_json_line(truth_to_json_line(a[0]));
    CHECK(back.trace == a[0].trace);
    CHECK(back.origin == a[0].origin);
    CHECK(back.burst == a[0].burst);

    const auto dir = testing::scratch_dir("synth_corpus");
    const auto m = write_corpus(dir, c, a);
    for (const char* f : {"traces.jsonl", "truth.jsonl", "synth_config.json", "manifest.json"})
        CHECK(std::filesystem::exists(dir / f));
    CHECK(m.split.train.size() + m.split.test.size() == 12);
    const auto ds = load_dataset(dir);
    CHECK(ds.traces.size() == 12);
    CHECK(ds.manifest.vocabulary.hash() == build_vocabulary(ds.select(m.split.train)).hash());
}

TEST_CASE("emitted captures extract back to the same trace") {
    const auto r = testing::run_emit_roundtrip(60, 21);
    INFO(r.first_mismatch);
    CHECK(r.traces == 60);
    CHECK(r.events > 0);
    CHECK(r.mismatches == 0);
}
