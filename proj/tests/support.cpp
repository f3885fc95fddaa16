#include "support.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sni_sight/corpus.hpp"
#include "sni_sight/nn/gradcheck.hpp"
#include "sni_sight/nn/layers.hpp"
#include "sni_sight/nn/lstm.hpp"
#include "sni_sight/pcap_io.hpp"
#include "sni_sight/rng.hpp"
#include "sni_sight/tls_sni.hpp"

namespace sni_sight::testing {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fixture_dir() { return fs::path(SNI_SIGHT_TEST_FIXTURES); }

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::path(SNI_SIGHT_TEST_SCRATCH) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<FixtureOutcome> run_parser_fixtures() {
    std::ifstream in(fixture_dir() / "expected.json");
    const json expected = json::parse(in);
    std::vector<FixtureOutcome> out;
    for (const auto& [name, events] : expected.items()) {
        FixtureOutcome o{name, false, ""};
        try {
            const auto got = tls::extract_trace(fixture_dir() / (name + ".pcap"));
            std::ostringstream why;
            if (got.size() != events.size()) {
                why << "expected " << events.size() << " events, got " << got.size();
            } else {
                for (std::size_t i = 0; i < got.size(); ++i) {
                    const auto& e = events[i];
                    if (got[i].server_name != e.at("sni").get<std::string>()) {
                        why << "event " << i << " name " << got[i].server_name;
                    } else if (std::string(to_string(got[i].version)) != e.at("ver").get<std::string>()) {
                        why << "event " << i << " version " << to_string(got[i].version);
                    } else if (std::abs(got[i].ts - e.at("ts").get<double>()) > 1e-6) {
                        why << "event " << i << " timestamp " << got[i].ts;
                    }
                    if (!why.str().empty()) break;
                }
            }
            o.detail = why.str();
            o.pass = o.detail.empty();
        } catch (const std::exception& ex) {
            o.detail = std::string("threw: ") + ex.what();
        }
        out.push_back(std::move(o));
    }
    return out;
}

RoundTripOutcome run_emit_roundtrip(std::size_t count, std::uint64_t seed) {
    RoundTripOutcome out;
    synth::SynthConfig config;
    config.seed = seed;
    config.pages_per_site = 3;
    config.noise_rate = 0.1;
    const auto profiles = synth::build_profiles(config);
    const auto& u = config.universe;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, "roundtrip", i));
        std::set<std::size_t> members;
        while (members.size() < 3) members.insert(rng.uniform_index(u.size()));
        std::vector<std::string> label;
        for (auto m : members) label.push_back(u.site(m));
        config.interleave = i % 2 == 0 ? synth::Interleave::RoundRobin : synth::Interleave::ExponentialClock;
        const auto st = synth::generate_trace(config, profiles, label, rng.next_u64());
        const auto bytes = synth::emit_pcap(st.trace, st.burst);
        const auto got = tls::extract_events(pcap::read_pcap_bytes(bytes));
        ++out.traces;
        out.events += st.trace.events.size();
        bool same = got.size() == st.trace.events.size();
        for (std::size_t k = 0; same && k < got.size(); ++k) {
            same = got[k].server_name == st.trace.events[k].server_name && got[k].version == st.trace.events[k].version;
        }
        if (!same) {
            if (out.mismatches == 0) {
                out.first_mismatch = "trace " + std::to_string(i) + ": " + std::to_string(st.trace.events.size()) +
                                     " emitted, " + std::to_string(got.size()) + " extracted";
            }
            ++out.mismatches;
        }
    }
    return out;
}

namespace {

nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    nn::Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

double dot(const nn::Tensor& a, const nn::Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void note(GradCheckOutcome& o, double err, const std::string& where) {
    ++o.checks;
    if (err > o.worst || std::isnan(err)) {
        o.worst = std::isnan(err) ? INFINITY : err;
        o.worst_where = where;
    }
}

}  // namespace

GradCheckOutcome run_gradient_checks(std::size_t seeds) {
    GradCheckOutcome out;
    for (std::size_t s = 0; s < seeds; ++s) {
        const std::string tag = " (seed " + std::to_string(s) + ")";
        Rng rng(derive_seed(2024, "gradcheck", s));

        // LSTM T=3, H=2, V=2 with a random initial state and a loss on every output and the final state.
        const std::size_t T = 3, H = 2, V = 2;
        auto p = nn::init_lstm(V, H, rng, 0.5);
        nn::Tensor x = random_tensor({T, V}, rng);
        const nn::Tensor r_out = random_tensor({T, H}, rng);
        const nn::Tensor r_h = random_tensor({H}, rng);
        const nn::Tensor r_c = random_tensor({H}, rng);
        nn::LstmState init = nn::LstmState::zeros(H);
        for (std::size_t k = 0; k < H; ++k) {
            init.h(static_cast<Eigen::Index>(k)) = rng.uniform(-0.5, 0.5);
            init.c(static_cast<Eigen::Index>(k)) = rng.uniform(-0.5, 0.5);
        }
        auto loss = [&] {
            const auto f = nn::lstm_forward(p, x, &init);
            double l = dot(f.outputs, r_out);
            for (std::size_t k = 0; k < H; ++k) {
                l += f.final_state.h(static_cast<Eigen::Index>(k)) * r_h[k] + f.final_state.c(static_cast<Eigen::Index>(k)) * r_c[k];
            }
            return l;
        };
        const auto fwd = nn::lstm_forward(p, x, &init);
        nn::LstmState d_final = nn::LstmState::zeros(H);
        d_final.h = r_h.vector();
        d_final.c = r_c.vector();
        const auto g = nn::lstm_backward(p, fwd.cache, r_out, &d_final);
        note(out, nn::relative_error(g.dW, nn::numeric_gradient(loss, p.W)), "lstm W" + tag);
        note(out, nn::relative_error(g.dU, nn::numeric_gradient(loss, p.U)), "lstm U" + tag);
        note(out, nn::relative_error(g.db, nn::numeric_gradient(loss, p.b)), "lstm b" + tag);
        note(out, nn::relative_error(g.d_inputs, nn::numeric_gradient(loss, x)), "lstm inputs" + tag);

        // Dense layers, identity and ReLU, batch of 3.
        for (auto act : {nn::Activation::Identity, nn::Activation::Relu}) {
            const std::string name = act == nn::Activation::Relu ? "dense relu" : "dense identity";
            auto d = nn::init_dense(4, 3, rng);
            nn::Tensor in = random_tensor({3, 4}, rng);
            const nn::Tensor r = random_tensor({3, 3}, rng);
            auto dloss = [&] { return dot(nn::dense_forward(d, in, act), r); };
            nn::DenseCache cache;
            (void)nn::dense_forward(d, in, act, &cache);
            const auto dg = nn::dense_backward(d, cache, r);
            note(out, nn::relative_error(dg.dW, nn::numeric_gradient(dloss, d.W)), name + " W" + tag);
            note(out, nn::relative_error(dg.db, nn::numeric_gradient(dloss, d.b)), name + " b" + tag);
            note(out, nn::relative_error(dg.dx, nn::numeric_gradient(dloss, in)), name + " x" + tag);
        }

        // Sigmoid cross-entropy with respect to the logits.
        nn::Tensor z = random_tensor({2, 5}, rng);
        for (double& v : z.values()) v *= 4.0;
        nn::Tensor y({2, 5});
        for (double& v : y.values()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
        auto closs = [&] { return nn::sigmoid_ce_loss(z, y).loss; };
        note(out, nn::relative_error(nn::sigmoid_ce_loss(z, y).grad, nn::numeric_gradient(closs, z)), "sigmoid-ce" + tag);
    }
    return out;
}

Recount recount_predictions(const fs::path& dump, std::size_t classes, double threshold) {
    Recount rc;
    rc.per_class.assign(classes, Confusion{});
    std::ifstream in(dump);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const auto probs = j.at("probabilities").get<std::vector<double>>();
        const auto decision = j.at("decision").get<std::vector<int>>();
        const auto truth = j.at("truth").get<std::vector<int>>();
        ++rc.samples;
        for (std::size_t c = 0; c < classes; ++c) {
            const bool predicted = probs.at(c) >= threshold;
            if (predicted != (decision.at(c) != 0)) rc.decisions_consistent = false;
            const bool actual = truth.at(c) != 0;
            auto& k = rc.per_class[c];
            if (predicted && actual) ++k.tp;
            if (predicted && !actual) ++k.fp;
            if (!predicted && !actual) ++k.tn;
            if (!predicted && actual) ++k.fn;
            if (predicted && actual) ++rc.recovered;
            if (actual) ++rc.true_labels;
        }
    }
    for (const auto& k : rc.per_class) {
        rc.totals.tp += k.tp;
        rc.totals.fp += k.fp;
        rc.totals.tn += k.tn;
        rc.totals.fn += k.fn;
    }
    return rc;
}

std::string compare_recount(const EvalReport& report, const Recount& rc) {
    auto counts = [](const Confusion& c) {
        return std::to_string(c.tp) + "/" + std::to_string(c.fp) + "/" + std::to_string(c.tn) + "/" + std::to_string(c.fn);
    };
    if (!rc.decisions_consistent) return "dumped decisions disagree with thresholded probabilities";
    if (report.samples != rc.samples) return "samples " + std::to_string(report.samples) + " vs " + std::to_string(rc.samples);
    if (!(report.totals == rc.totals)) return "totals " + counts(report.totals) + " vs " + counts(rc.totals);
    if (report.per_class.size() != rc.per_class.size()) return "class count differs";
    for (std::size_t c = 0; c < rc.per_class.size(); ++c) {
        if (!(report.per_class[c].counts == rc.per_class[c])) {
            return report.per_class[c].site + " " + counts(report.per_class[c].counts) + " vs " + counts(rc.per_class[c]);
        }
    }
    if (report.labels_recovered != rc.recovered || report.labels_true != rc.true_labels) return "label recovery counts differ";
    const double acc = static_cast<double>(rc.totals.tp + rc.totals.tn) /
                       static_cast<double>(rc.totals.tp + rc.totals.fp + rc.totals.tn + rc.totals.fn);
    if (report.accuracy != acc) return "accuracy differs from (TP+TN)/(TP+FP+TN+FN)";
    return "";
}

std::string check_pair_cover(std::size_t n, const std::vector<std::array<std::size_t, 3>>& triples) {
    std::vector<std::vector<bool>> seen(n, std::vector<bool>(n, false));
    for (const auto& t : triples) {
        for (auto v : t) {
            if (v >= n) return "member out of range";
        }
        if (t[0] == t[1] || t[0] == t[2] || t[1] == t[2]) return "triple with a repeated member";
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) seen[t[a]][t[b]] = true;
    }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (!seen[a][b]) return "pair (" + std::to_string(a) + "," + std::to_string(b) + ") uncovered";
    return "";
}

synth::SynthConfig separable_config(std::uint64_t seed) {
    synth::SynthConfig c;
    c.seed = seed;
    c.noise_rate = 0.0;
    c.third_party_overlap = 0.0;
    return c;
}

synth::SynthConfig order_signal_config(std::uint64_t seed) {
    synth::SynthConfig c;
    c.seed = seed;
    c.pool_mode = synth::PoolMode::SharedOrdered;
    c.shared_pool_size = 12;
    c.burst_mean = 10.0;
    c.burst_max = 12;
    c.pages_per_site = 8;
    return c;
}

synth::SynthConfig scrub_config(std::uint64_t seed) {
    synth::SynthConfig c;
    c.seed = seed;
    c.third_party_overlap = 0.3;
    c.pages_per_site = 8;
    return c;
}

SplitCorpus make_split_corpus(const synth::SynthConfig& config) {
    const auto generated = synth::generate_corpus(config, synth::corpus_labels(config), config.traces_per_label);
    std::vector<Trace> traces;
    for (const auto& g : generated) traces.push_back(g.trace);
    const auto split = split_traces(traces, config.train_fraction, derive_seed(config.seed, "split"));
    SplitCorpus out;
    out.universe = config.universe;
    for (auto id : split.train) out.train.push_back(traces[id]);
    for (auto id : split.test) out.test.push_back(traces[id]);
    out.test_ids = split.test;
    out.vocabulary = build_vocabulary(out.train);
    return out;
}

}  // namespace sni_sight::testing
