#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sni_sight/cli.hpp"
#include "sni_sight/metrics.hpp"
#include "sni_sight/trace.hpp"
#include "support.hpp"

using namespace sni_sight;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const std::string kSmallConfig =
    R"({"universe":["alpha.com","beta.org","gamma.net","delta.io"],"pages_per_site":3,"third_party_overlap":0.0,"traces_per_label":4,"window":6})";

/// Synthetic dataset shared by the tests below.
fs::path small_corpus() {
    static const fs::path dir = [] {
        const auto root = testing::scratch_dir("cli_corpus");
        write_file(root / "config.json", kSmallConfig);
        const auto r = run({"synth", "--config", (root / "config.json").string(), "-o", (root / "data").string(), "--seed", "3"});
        REQUIRE(r.code == 0);
        return root / "data";
    }();
    return dir;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == cli::kUsageError);
    CHECK(run({"frobnicate"}).code == cli::kUsageError);
    CHECK(run({"train", small_corpus().string(), "--model", "cnn", "-o", "x"}).code == cli::kUsageError);
    CHECK(run({"train", small_corpus().string(), "--model", "fc"}).code == cli::kUsageError);
    const auto empty = testing::scratch_dir("cli_empty");
    const auto r = run({"extract", empty.string(), "-o", (empty / "t.jsonl").string()});
    CHECK(r.code == cli::kUsageError);
    CHECK_FALSE(r.err.empty());
    CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("extract reads the fixture captures") {
    const auto dir = testing::scratch_dir("cli_extract");
    const auto out = dir / "traces.jsonl";
    const auto r = run({"extract", (testing::fixture_dir() / "minimal_client_hello.pcap").string(), "-o", out.string(),
                        "--label", "example.com"});
    REQUIRE(r.code == cli::kOk);
    const auto traces = read_traces(out);
    REQUIRE(traces.size() == 1);
    CHECK(traces[0].label == std::vector<std::string>{"example.com"});
    CHECK_FALSE(traces[0].events.empty());
    CHECK(fs::exists(dir / "traces.jsonl.manifest.json"));

    write_file(dir / "broken.pcap", "not a capture at all");
    const auto bad = run({"extract", (dir / "broken.pcap").string(), "-o", (dir / "b.jsonl").string()});
    CHECK(bad.code == cli::kRuntimeError);
    CHECK(bad.err.find("broken.pcap") != std::string::npos);
}

TEST_CASE("synth is deterministic per seed") {
    const auto dir = testing::scratch_dir("cli_synth");
    write_file(dir / "config.json", kSmallConfig);
    for (const char* name : {"a", "b", "c"}) {
        const std::string seed = std::string(name) == "c" ? "4" : "3";
        REQUIRE(run({"synth", "--config", (dir / "config.json").string(), "-o", (dir / name).string(), "--seed", seed,
                     "--emit-pcap"})
                    .code == 0);
    }
    CHECK(slurp(dir / "a" / "traces.jsonl") == slurp(dir / "b" / "traces.jsonl"));
    CHECK(slurp(dir / "a" / "traces.jsonl") != slurp(dir / "c" / "traces.jsonl"));
    CHECK(fs::exists(dir / "a" / "pcap" / "trace_00000.pcap"));
    CHECK(fs::exists(dir / "a" / "run_manifest.json"));

    // Emitted captures extract back to the generated trace.
    const auto first = read_traces(dir / "a" / "traces.jsonl")[0];
    REQUIRE(run({"extract", (dir / "a" / "pcap" / "trace_00000.pcap").string(), "-o", (dir / "x.jsonl").string()}).code == 0);
    const auto back = read_traces(dir / "x.jsonl")[0];
    REQUIRE(back.events.size() == first.events.size());
    for (std::size_t i = 0; i < back.events.size(); ++i) {
        CHECK(back.events[i].server_name == first.events[i].server_name);
        CHECK(back.events[i].version == first.events[i].version);
    }
}

TEST_CASE("dataset bundles trace files") {
    const auto dir = testing::scratch_dir("cli_dataset");
    write_file(dir / "sites.txt", "alpha.com\nbeta.org\ngamma.net\ndelta.io\n");
    CHECK(run({"dataset", (small_corpus() / "traces.jsonl").string(), "-o", (dir / "bad").string()}).code ==
          cli::kRuntimeError);
    const auto r = run({"dataset", (small_corpus() / "traces.jsonl").string(), "-o", (dir / "ds").string(), "--seed", "2",
                        "--universe", (dir / "sites.txt").string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto ds = load_dataset(dir / "ds");
    CHECK(ds.traces.size() == 24);
    CHECK(ds.manifest.split.train.size() + ds.manifest.split.test.size() == 24);
}

TEST_CASE("train, eval, compare and replay") {
    const auto dir = testing::scratch_dir("cli_flow");
    const auto data = small_corpus().string();
    const auto fc = (dir / "fc.ckpt").string();
    REQUIRE(run({"train", data, "--model", "fc", "-o", fc, "--seed", "1", "--hidden", "8", "4", "--epochs", "5"}).code == 0);
    const auto lstm = (dir / "lstm.ckpt").string();
    REQUIRE(run({"train", data, "--model", "lstm", "-o", lstm, "--seed", "1", "--hidden", "8", "--max-steps", "60",
                 "--eval-every", "20"})
                .code == 0);

    REQUIRE(run({"eval", fc, data, "-o", (dir / "fc_eval").string()}).code == 0);
    REQUIRE(run({"eval", lstm, data, "-o", (dir / "lstm_eval").string(), "--split", "all"}).code == 0);
    for (const char* f : {"report.json", "report.csv", "predictions.jsonl", "run_manifest.json"})
        CHECK(fs::exists(dir / "lstm_eval" / f));
    const auto report = read_report_json(dir / "lstm_eval" / "report.json");
    const auto recount = testing::recount_predictions(dir / "lstm_eval" / "predictions.jsonl", 4, report.threshold);
    CHECK(testing::compare_recount(report, recount).empty());

    const auto same = run({"compare", (dir / "fc_eval" / "report.json").string(), (dir / "fc_eval" / "report.json").string(),
                           "-o", (dir / "same.json").string()});
    REQUIRE(same.code == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "same.json"));
    CHECK(j["p"].get<double>() == 1.0);
    CHECK(j["pairs"].get<int>() == 4);
    CHECK(run({"compare", (dir / "fc_eval" / "report.json").string(), (dir / "lstm_eval" / "report.json").string(),
               "-o", (dir / "cross.json").string(), "--metric", "f1"})
              .code == 0);

    // Reports over different class sets cannot be paired.
    auto other = nlohmann::json::parse(slurp(dir / "fc_eval" / "report.json"));
    other["per_class"][0]["site"] = "zeta.com";
    write_file(dir / "other.json", other.dump());
    CHECK(run({"compare", (dir / "fc_eval" / "report.json").string(), (dir / "other.json").string(), "-o",
               (dir / "bad.json").string()})
              .code == cli::kRuntimeError);

    // Replay reproduces the evaluation outputs.
    const auto before = slurp(dir / "fc_eval" / "report.json");
    fs::remove(dir / "fc_eval" / "report.json");
    REQUIRE(run({"replay", (dir / "fc_eval" / "run_manifest.json").string()}).code == 0);
    CHECK(slurp(dir / "fc_eval" / "report.json") == before);

    auto manifest = nlohmann::json::parse(slurp(dir / "fc_eval" / "run_manifest.json"));
    manifest["toolkit_version"] = "0.0.0";
    write_file(dir / "old.json", manifest.dump());
    CHECK(run({"replay", (dir / "old.json").string()}).code == cli::kRuntimeError);
}

TEST_CASE("paused training resumes through the command line") {
    const auto dir = testing::scratch_dir("cli_resume");
    const auto data = small_corpus().string();
    const std::vector<std::string> base = {"train", data, "--model", "lstm", "--seed", "4", "--hidden", "8",
                                           "--max-steps", "60", "--eval-every", "20"};
    auto with = [&](std::vector<std::string> extra) {
        auto args = base;
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args).code;
    };
    REQUIRE(with({"-o", (dir / "whole.ckpt").string()}) == 0);
    REQUIRE(with({"-o", (dir / "paused.ckpt").string(), "--pause-after", "30"}) == 0);
    REQUIRE(with({"-o", (dir / "resumed.ckpt").string(), "--resume", (dir / "paused.ckpt").string()}) == 0);
    CHECK(slurp(dir / "whole.ckpt") == slurp(dir / "resumed.ckpt"));
}

TEST_CASE("scrub evaluation on a corpus without shared names") {
    const auto dir = testing::scratch_dir("cli_scrub");
    const auto data = small_corpus().string();
    const auto fc = (dir / "fc.ckpt").string();
    REQUIRE(run({"train", data, "--model", "fc", "-o", fc, "--hidden", "8", "--epochs", "3"}).code == 0);
    REQUIRE(run({"eval", fc, data, "-o", (dir / "eval").string(), "--scrub"}).code == 0);
    CHECK(fs::exists(dir / "eval" / "baseline_report.json"));
    const auto s = nlohmann::json::parse(slurp(dir / "eval" / "scrub.json"));
    CHECK(s["events_removed"].get<std::size_t>() > 0);
    CHECK(s["events_removed"].get<std::size_t>() < s["events_total"].get<std::size_t>());
}
