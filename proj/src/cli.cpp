#include "sni_sight/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "sni_sight/corpus.hpp"
#include "sni_sight/error.hpp"
#include "sni_sight/metrics.hpp"
#include "sni_sight/nn/checkpoint.hpp"
#include "sni_sight/pcap_io.hpp"
#include "sni_sight/pipeline.hpp"
#include "sni_sight/rng.hpp"
#include "sni_sight/synth.hpp"
#include "sni_sight/tls_sni.hpp"
#include "sni_sight/trace.hpp"

namespace sni_sight::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Raised for command-line problems detected after parsing (exit code 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string seed_text;
    std::string universe_file;
    bool tee_manifest = false;
    bool summary = false;

    // extract
    std::vector<std::string> inputs;
    std::vector<std::string> labels;
    bool strict = false;
    bool no_dedup = false;
    double dedup_window = 1.0;

    // synth / dataset
    std::string config_file;
    std::optional<std::size_t> window;
    std::optional<double> train_fraction;
    bool emit_pcaps = false;

    // train
    std::string dataset;
    std::string model;
    std::optional<double> lr;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> patience;
    std::optional<std::size_t> max_steps;
    std::optional<std::size_t> eval_every;
    std::optional<std::size_t> batch;
    std::vector<std::size_t> hidden;
    std::optional<double> threshold;
    std::optional<std::size_t> pause_after;
    std::string resume;

    // eval
    std::string checkpoint;
    std::string split = "test";
    bool scrub = false;

    // compare
    std::string report_a;
    std::string report_b;
    std::string metric = "accuracy";

    // replay
    std::string run_manifest;

    std::string output;
};

std::optional<std::uint64_t> parse_seed(const std::string& text) {
    if (text.empty()) return std::nullopt;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used, 0);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.front() == '-') throw UsageError("--seed expects an unsigned integer, got " + text);
    return v;
}

WebsiteUniverse read_universe(const std::string& path) {
    const auto bytes = pcap::read_file(path);
    const std::string text(bytes.begin(), bytes.end());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        try {
            return WebsiteUniverse(json::parse(text).get<std::vector<std::string>>());
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::BadConfig, path + ": " + ex.what());
        }
    }
    std::vector<std::string> sites;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        sites.push_back(line.substr(b, e - b + 1));
    }
    return WebsiteUniverse(std::move(sites));
}

std::optional<WebsiteUniverse> universe_option(const Options& o) {
    if (o.universe_file.empty()) return std::nullopt;
    return read_universe(o.universe_file);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
    f << text;
    if (!f) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

json file_digest(const fs::path& path) {
    const auto bytes = pcap::read_file(path);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()))));
    return {{"path", path.generic_string()}, {"bytes", bytes.size()}, {"fnv1a64", hex}};
}

json dataset_digests(const fs::path& dir, const DatasetManifest& m) {
    json out = json::array({file_digest(dir / "manifest.json")});
    for (const auto& f : m.trace_files) out.push_back(file_digest(dir / f));
    return out;
}

/// Records how a run was invoked so `replay` can re-execute it.
class RunRecord {
public:
    RunRecord(std::string subcommand, const std::vector<std::string>& argv)
        : doc_{{"toolkit_version", pipeline::kToolkitVersion}, {"subcommand", std::move(subcommand)}, {"argv", argv},
               {"config", json::object()}, {"inputs", json::array()}, {"outputs", json::array()}} {}

    json& config() { return doc_["config"]; }
    void input(json digest) { doc_["inputs"].push_back(std::move(digest)); }
    void inputs(const json& digests) {
        for (const auto& d : digests) doc_["inputs"].push_back(d);
    }
    void output(const fs::path& p) { doc_["outputs"].push_back(p.generic_string()); }

    void write(const fs::path& path, const Options& o, std::ostream& out) {
        const std::string text = doc_.dump(2) + "\n";
        write_text(path, text);
        if (o.tee_manifest) out << text;
    }

private:
    json doc_;
};

fs::path manifest_beside(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::recursive_directory_iterator(p)) {
                if (entry.is_regular_file() && entry.path().extension() == ".pcap") found.push_back(entry.path());
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p);
        }
    }
    return files;
}

int cmd_extract(const Options& o, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    const auto files = expand_inputs(o.inputs);
    if (files.empty()) throw UsageError("extract: no .pcap files found in the given inputs");
    std::vector<std::string> label = o.labels;
    if (const auto u = universe_option(o)) {
        for (const auto& site : label) {
            if (!u->contains(site)) throw Error(ErrorCode::UnknownSite, "label site " + site + " is not in the universe");
        }
    }
    tls::ExtractOptions opts;
    opts.dedup = !o.no_dedup;
    opts.dedup_window_s = o.dedup_window;

    RunRecord record("extract", argv);
    record.config() = {{"inputs", o.inputs}, {"label", label}, {"strict", o.strict}, {"dedup", opts.dedup},
                       {"dedup_window_s", opts.dedup_window_s}, {"output", o.output}};

    std::vector<Trace> traces;
    std::size_t failures = 0;
    for (const auto& f : files) {
        try {
            tls::ExtractStats stats;
            Trace t;
            t.label = label;
            t.source = f.generic_string();
            t.events = tls::extract_trace(f, opts, &stats);
            record.input(file_digest(f));
            spdlog::info("{}: {} packets, {} TLS flows, {} events", f.string(), stats.packets, stats.tls_flows, t.events.size());
            if (o.summary) {
                out << f.generic_string() << ": " << t.events.size() << " events from " << stats.client_hellos
                    << " ClientHellos (" << stats.malformed_hellos << " malformed, " << stats.dropped_no_sni
                    << " without SNI, " << stats.deduplicated << " deduplicated)\n";
            }
            traces.push_back(std::move(t));
        } catch (const Error& ex) {
            ++failures;
            err << f.generic_string() << ": " << ex.what() << "\n";
            if (o.strict) return kRuntimeError;
        }
    }
    write_traces(o.output, traces);
    record.output(o.output);
    record.write(manifest_beside(o.output), o, out);
    return failures == 0 ? kOk : kRuntimeError;
}

int cmd_synth(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
    synth::SynthConfig config = o.config_file.empty() ? synth::SynthConfig{} : synth::read_config(o.config_file);
    if (const auto seed = parse_seed(o.seed_text)) config.seed = *seed;
    if (const auto u = universe_option(o)) config.universe = *u;
    if (o.window) config.window = *o.window;
    if (o.train_fraction) config.train_fraction = *o.train_fraction;
    config.validate();

    const auto labels = synth::corpus_labels(config);
    if (labels.empty()) throw Error(ErrorCode::BadConfig, "synth: the configuration selects no labels");
    const auto traces = synth::generate_corpus(config, labels, config.traces_per_label);
    const auto manifest = synth::write_corpus(o.output, config, traces);

    RunRecord record("synth", argv);
    record.config() = synth::config_to_json(config);
    if (!o.config_file.empty()) record.input(file_digest(o.config_file));
    for (const char* name : {"traces.jsonl", "truth.jsonl", "synth_config.json", "manifest.json"}) {
        record.output(fs::path(o.output) / name);
    }
    if (o.emit_pcaps) {
        const fs::path pcap_dir = fs::path(o.output) / "pcap";
        fs::create_directories(pcap_dir);
        for (std::size_t i = 0; i < traces.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "trace_%05zu.pcap", i);
            const auto bytes = synth::emit_pcap(traces[i].trace, traces[i].burst);
            write_text(pcap_dir / name, std::string(bytes.begin(), bytes.end()));
        }
        record.output(pcap_dir);
    }
    record.write(fs::path(o.output) / "run_manifest.json", o, out);
    if (o.summary) {
        out << traces.size() << " traces over " << labels.size() << " labels; " << manifest.split.train.size() << " train, "
            << manifest.split.test.size() << " test; vocabulary " << manifest.vocabulary.size() << " names\n";
    }
    return kOk;
}

int cmd_dataset(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
    if (o.inputs.empty()) throw UsageError("dataset: no trace files given");
    const WebsiteUniverse universe = universe_option(o).value_or(default_universe());
    const std::uint64_t seed = parse_seed(o.seed_text).value_or(1);

    RunRecord record("dataset", argv);
    std::vector<Trace> traces;
    for (const auto& in : o.inputs) {
        auto part = read_traces(in);
        record.input(file_digest(in));
        traces.insert(traces.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    if (traces.empty()) throw Error(ErrorCode::EmptyCorpus, "dataset: the trace files hold no traces");
    for (const auto& t : traces) (void)LabelVector::from_sites(universe, t.label);

    DatasetManifest m;
    m.universe = universe;
    m.seed = seed;
    m.window = o.window.value_or(20);
    m.train_fraction = o.train_fraction.value_or(0.85);
    m.trace_files = {"traces.jsonl"};
    m.split = split_traces(traces, m.train_fraction, derive_seed(seed, "split"));
    if (m.split.train.empty()) throw Error(ErrorCode::EmptyTrainSet, "dataset: the split leaves no training traces");
    std::vector<Trace> train;
    for (auto id : m.split.train) train.push_back(traces[id]);
    m.vocabulary = build_vocabulary(train);

    const fs::path dir(o.output);
    fs::create_directories(dir);
    write_traces(dir / "traces.jsonl", traces);
    write_manifest(dir / "manifest.json", m);
    record.config() = {{"inputs", o.inputs}, {"universe", universe.sites()}, {"seed", seed}, {"window", m.window},
                       {"train_fraction", m.train_fraction}, {"output", o.output}};
    record.output(dir / "traces.jsonl");
    record.output(dir / "manifest.json");
    record.write(dir / "run_manifest.json", o, out);
    if (o.summary) {
        out << traces.size() << " traces; " << m.split.train.size() << " train, " << m.split.test.size()
            << " test; vocabulary " << m.vocabulary.size() << " names\n";
    }
    return kOk;
}

void check_universe(const Options& o, const WebsiteUniverse& actual, const std::string& what) {
    if (const auto u = universe_option(o); u && !(*u == actual)) {
        throw Error(ErrorCode::BadConfig, "--universe does not match the " + what + " universe");
    }
}

int cmd_train(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
    const auto kind = pipeline::parse_model_kind(o.model);
    const Dataset data = load_dataset(o.dataset);
    check_universe(o, data.manifest.universe, "dataset");
    const std::uint64_t seed = parse_seed(o.seed_text).value_or(1);
    const auto train = data.select(data.manifest.split.train);
    if (train.empty()) throw Error(ErrorCode::EmptyTrainSet, "train: the dataset has no training traces");

    std::optional<nn::Checkpoint> resume;
    if (!o.resume.empty()) resume = nn::load_checkpoint(o.resume);
    pipeline::TrainControl control;
    control.pause_after = o.pause_after;
    control.resume = resume ? &*resume : nullptr;
    control.log = [](const std::string& msg) { spdlog::info("{}", msg); };

    RunRecord record("train", argv);
    record.inputs(dataset_digests(o.dataset, data.manifest));
    if (!o.resume.empty()) record.input(file_digest(o.resume));

    nn::Checkpoint ckpt;
    if (kind == pipeline::ModelKind::Lstm) {
        pipeline::LstmModelSpec spec;
        spec.window = o.window.value_or(data.manifest.window);
        if (o.lr) spec.lr = *o.lr;
        if (o.patience) spec.patience = *o.patience;
        if (o.max_steps) spec.max_steps = *o.max_steps;
        if (o.eval_every) spec.eval_every = *o.eval_every;
        if (o.batch) spec.batch = *o.batch;
        if (o.threshold) spec.threshold = *o.threshold;
        if (!o.hidden.empty()) {
            if (o.hidden.size() != 1) throw UsageError("--hidden takes one width for the LSTM");
            spec.hidden = o.hidden.front();
        }
        if (o.epochs) throw UsageError("--epochs applies to the fc model; the LSTM stops early (see --patience, --max-steps)");
        record.config() = {{"model", "lstm"}, {"seed", seed}, {"spec", pipeline::spec_to_json(spec)}};
        ckpt = pipeline::train_lstm(train, data.manifest.vocabulary, data.manifest.universe, spec, seed, control);
    } else {
        pipeline::FcModelSpec spec;
        if (o.lr) spec.lr = *o.lr;
        if (o.epochs) spec.epochs = *o.epochs;
        if (o.threshold) spec.threshold = *o.threshold;
        if (!o.hidden.empty()) spec.hidden = o.hidden;
        if (o.patience || o.max_steps || o.eval_every || o.batch || o.window) {
            throw UsageError("--patience, --max-steps, --eval-every, --batch and --window apply to the lstm model");
        }
        record.config() = {{"model", "fc"}, {"seed", seed}, {"spec", pipeline::spec_to_json(spec)}};
        ckpt = pipeline::train_fc(train, data.manifest.vocabulary, data.manifest.universe, spec, seed, control);
    }
    record.config()["dataset"] = o.dataset;
    record.config()["pause_after"] = o.pause_after ? json(*o.pause_after) : json(nullptr);
    record.config()["resume"] = o.resume;

    nn::save_checkpoint(o.output, ckpt);
    record.output(o.output);
    record.write(manifest_beside(o.output), o, out);
    if (o.summary) {
        const auto& tr = ckpt.metadata.at("training");
        out << o.model << " model written to " << o.output << (tr.at("finished").get<bool>() ? "" : " (paused)");
        if (tr.contains("step")) out << "; " << tr.at("step").get<std::size_t>() << " steps";
        if (tr.contains("epoch")) out << "; " << tr.at("epoch").get<std::size_t>() << " epochs";
        out << "\n";
    }
    return kOk;
}

std::vector<std::size_t> split_ids(const Dataset& data, const std::string& which) {
    if (which == "test") return data.manifest.split.test;
    if (which == "train") return data.manifest.split.train;
    std::vector<std::size_t> all(data.traces.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
}

int cmd_eval(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
    const auto ckpt = nn::load_checkpoint(o.checkpoint);
    auto model = pipeline::model_from_checkpoint(ckpt);
    if (o.threshold) {
        model.lstm_spec.threshold = *o.threshold;
        model.fc_spec.threshold = *o.threshold;
    }
    const Dataset data = load_dataset(o.dataset);
    if (!(data.manifest.universe == model.universe)) {
        throw Error(ErrorCode::BadConfig, "eval: model and dataset cover different website universes");
    }
    check_universe(o, model.universe, "model");
    const auto ids = split_ids(data, o.split);
    const auto traces = data.select(ids);
    if (traces.empty()) throw Error(ErrorCode::EmptySet, "eval: the " + o.split + " split is empty");

    RunRecord record("eval", argv);
    record.input(file_digest(o.checkpoint));
    record.inputs(dataset_digests(o.dataset, data.manifest));
    record.config() = {{"checkpoint", o.checkpoint}, {"dataset", o.dataset}, {"split", o.split}, {"scrub", o.scrub},
                       {"threshold", model.threshold()}};

    const fs::path dir(o.output);
    fs::create_directories(dir);
    pipeline::EvalResult result;
    if (o.scrub) {
        auto cmp = pipeline::ablate_scrub(model, traces, model.universe, ids);
        write_report_json(dir / "baseline_report.json", cmp.baseline.report);
        record.output(dir / "baseline_report.json");
        const json summary = {{"baseline_accuracy", cmp.baseline.report.accuracy},
                              {"scrubbed_accuracy", cmp.scrubbed.report.accuracy},
                              {"accuracy_delta", cmp.accuracy_delta()},
                              {"events_removed", cmp.events_removed},
                              {"events_total", cmp.events_total}};
        write_text(dir / "scrub.json", summary.dump(2) + "\n");
        record.output(dir / "scrub.json");
        result = std::move(cmp.scrubbed);
    } else {
        result = pipeline::evaluate(model, traces, ids);
    }
    write_report_json(dir / "report.json", result.report);
    write_report_csv(dir / "report.csv", result.report);
    write_predictions(dir / "predictions.jsonl", result.predictions);
    for (const char* name : {"report.json", "report.csv", "predictions.jsonl"}) record.output(dir / name);
    record.write(dir / "run_manifest.json", o, out);
    if (o.summary) {
        const auto& r = result.report;
        out << r.model << " on " << r.traces << " traces (" << r.samples << " samples): accuracy " << r.accuracy
            << ", trace accuracy " << r.trace_accuracy << ", labels recovered " << r.mean_labels_recovered << " of "
            << r.mean_true_labels << "\n";
    }
    return kOk;
}

int cmd_compare(const Options& o, const std::vector<std::string>& argv, std::ostream& out) {
    const auto a = read_report_json(o.report_a);
    const auto b = read_report_json(o.report_b);
    const auto t = pipeline::compare_reports(a, b, o.metric);
    const json result = {{"metric", o.metric},
                         {"a", o.report_a},
                         {"b", o.report_b},
                         {"pairs", a.per_class.size()},
                         {"t", std::isfinite(t.t) ? json(t.t) : json(t.t > 0 ? "inf" : "-inf")},
                         {"p", t.p},
                         {"df", t.df},
                         {"mean_difference", t.mean_difference},
                         {"degenerate_variance", t.degenerate_variance}};
    write_text(o.output, result.dump(2) + "\n");

    RunRecord record("compare", argv);
    record.input(file_digest(o.report_a));
    record.input(file_digest(o.report_b));
    record.config() = {{"a", o.report_a}, {"b", o.report_b}, {"metric", o.metric}};
    record.output(o.output);
    record.write(manifest_beside(o.output), o, out);
    if (o.summary) {
        out << "paired t-test on per-class " << o.metric << " (" << a.per_class.size() << " pairs): t = " << t.t
            << ", p = " << t.p << ", mean difference " << t.mean_difference << "\n";
    }
    return kOk;
}

void setup_logging(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("sni_sight", sink);
    logger->set_pattern("[%l] %v");
    const char* env = std::getenv("SNI_SIGHT_LOG");
    logger->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    spdlog::set_default_logger(logger);
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--universe", o.universe_file, "Website universe file (one site per line, or a JSON list)");
    sub->add_flag("--tee-manifest", o.tee_manifest, "Also print the run manifest to stdout");
    sub->add_flag("--summary", o.summary, "Print a human-readable summary");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    setup_logging(err);
    Options o;
    CLI::App app{"Server-name sequence toolkit: extract SNI traces, build corpora, train and evaluate models",
                 "sni_sight"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pipeline::kToolkitVersion));

    auto* extract = app.add_subcommand("extract", "Extract chronological SNI traces from pcap files");
    extract->add_option("inputs", o.inputs, "pcap files or directories (searched recursively for *.pcap)");
    extract->add_option("-o,--output", o.output, "Trace JSONL output")->required();
    extract->add_option("--label", o.labels, "Sites visited in the capture(s)");
    extract->add_flag("--strict", o.strict, "Abort on the first bad file");
    extract->add_flag("--no-dedup", o.no_dedup, "Keep repeated ClientHellos for the same name on one flow");
    extract->add_option("--dedup-window", o.dedup_window, "Deduplication window in seconds")->check(CLI::NonNegativeNumber);
    add_common(extract, o);

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labelled corpus");
    synth_cmd->add_option("--config", o.config_file, "SynthConfig JSON file")->check(CLI::ExistingFile);
    synth_cmd->add_option("-o,--output", o.output, "Output directory")->required();
    synth_cmd->add_option("--seed", o.seed_text, "Seed (overrides the config)");
    synth_cmd->add_option("--window", o.window, "Window length T");
    synth_cmd->add_option("--train-fraction", o.train_fraction, "Train split fraction");
    synth_cmd->add_flag("--emit-pcap", o.emit_pcaps, "Also write one capture per trace under <output>/pcap");
    add_common(synth_cmd, o);

    auto* dataset = app.add_subcommand("dataset", "Bundle labelled trace files into a dataset directory");
    dataset->add_option("traces", o.inputs, "Trace JSONL files")->required();
    dataset->add_option("-o,--output", o.output, "Output directory")->required();
    dataset->add_option("--seed", o.seed_text, "Split seed");
    dataset->add_option("--window", o.window, "Window length T");
    dataset->add_option("--train-fraction", o.train_fraction, "Train split fraction");
    add_common(dataset, o);

    auto* train = app.add_subcommand("train", "Train an LSTM or FC model on a dataset");
    train->add_option("dataset", o.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--model", o.model, "lstm or fc")->required()->check(CLI::IsMember({"lstm", "fc"}));
    train->add_option("-o,--output", o.output, "Checkpoint output")->required();
    train->add_option("--seed", o.seed_text, "Seed");
    train->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
    train->add_option("--epochs", o.epochs, "FC epochs");
    train->add_option("--patience", o.patience, "LSTM early-stopping patience (evaluations)");
    train->add_option("--max-steps", o.max_steps, "LSTM step limit");
    train->add_option("--eval-every", o.eval_every, "LSTM steps between validation passes")->check(CLI::PositiveNumber);
    train->add_option("--batch", o.batch, "LSTM windows per step")->check(CLI::PositiveNumber);
    train->add_option("--window", o.window, "Window length T")->check(CLI::PositiveNumber);
    train->add_option("--hidden", o.hidden, "Hidden width(s)");
    train->add_option("--threshold", o.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
    train->add_option("--pause-after", o.pause_after, "Stop after this many steps/epochs with a resumable checkpoint");
    train->add_option("--resume", o.resume, "Continue from a paused checkpoint")->check(CLI::ExistingFile);
    add_common(train, o);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    eval->add_option("checkpoint", o.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("dataset", o.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("-o,--output", o.output, "Output directory")->required();
    eval->add_option("--split", o.split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
    eval->add_flag("--scrub", o.scrub, "Drop names containing a site id before evaluating");
    eval->add_option("--threshold", o.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
    add_common(eval, o);

    auto* compare = app.add_subcommand("compare", "Paired t-test between two reports over per-class metrics");
    compare->add_option("a", o.report_a, "Report JSON")->required()->check(CLI::ExistingFile);
    compare->add_option("b", o.report_b, "Report JSON")->required()->check(CLI::ExistingFile);
    compare->add_option("-o,--output", o.output, "Result JSON")->required();
    compare->add_option("--metric", o.metric, "accuracy, recall, precision or f1")
        ->check(CLI::IsMember({"accuracy", "recall", "precision", "f1"}));
    add_common(compare, o);

    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
    replay->add_option("manifest", o.run_manifest, "Run manifest JSON")->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << pipeline::kToolkitVersion << "\n";
        return kOk;
    } catch (const CLI::ParseError& ex) {
        err << "usage error: " << ex.what() << "\n";
        if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
            err << "run `sni_sight " << sub->get_name() << " --help` for options\n";
        } else {
            err << "run `sni_sight --help` for subcommands\n";
        }
        return kUsageError;
    }

    try {
        if (*extract) return cmd_extract(o, args, out, err);
        if (*synth_cmd) return cmd_synth(o, args, out);
        if (*dataset) return cmd_dataset(o, args, out);
        if (*train) return cmd_train(o, args, out);
        if (*eval) return cmd_eval(o, args, out);
        if (*compare) return cmd_compare(o, args, out);
        if (*replay) {
            const auto bytes = pcap::read_file(o.run_manifest);
            const json m = json::parse(std::string(bytes.begin(), bytes.end()));
            const auto version = m.at("toolkit_version").get<std::string>();
            if (version != pipeline::kToolkitVersion) {
                throw Error(ErrorCode::VersionMismatch, "manifest was written by version " + version + ", this is " +
                                                            std::string(pipeline::kToolkitVersion));
            }
            return run(m.at("argv").get<std::vector<std::string>>(), out, err);
        }
    } catch (const UsageError& ex) {
        err << "usage error: " << ex.what() << "\n";
        return kUsageError;
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return kRuntimeError;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}

}  // namespace sni_sight::cli
