#include "sni_sight/metrics.hpp"

#include <fstream>
#include <iomanip>

#include "sni_sight/error.hpp"

namespace sni_sight {

using nlohmann::json;

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

json confusion_json(const Confusion& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}; }

Confusion confusion_from(const json& j) {
    return {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>(),
            j.at("fn").get<std::uint64_t>()};
}

}  // namespace

void Confusion::add(bool truth, bool predicted) {
    if (truth) {
        predicted ? ++tp : ++fn;
    } else {
        predicted ? ++fp : ++tn;
    }
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

double Confusion::accuracy() const { return ratio(tp + tn, total()); }
double Confusion::recall() const { return ratio(tp, tp + fn); }
double Confusion::precision() const { return ratio(tp, tp + fp); }

double Confusion::f1() const {
    const double p = precision();
    const double r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

ReportBuilder::ReportBuilder(const WebsiteUniverse& universe, std::string model, double threshold)
    : sites_(universe.sites()), model_(std::move(model)), threshold_(threshold), per_class_(universe.size()) {}

void ReportBuilder::add_sample(const LabelVector& truth, const LabelVector& decision) {
    if (truth.size() != sites_.size() || decision.size() != sites_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "label width does not match the universe");
    }
    ++samples_;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        per_class_[i].add(truth.test(i), decision.test(i));
        if (truth.test(i)) {
            ++true_labels_;
            if (decision.test(i)) ++recovered_;
        }
    }
}

void ReportBuilder::add_trace(const LabelVector& truth, const LabelVector& decision) {
    ++traces_;
    for (std::size_t i = 0; i < sites_.size(); ++i) trace_totals_.add(truth.test(i), decision.test(i));
}

EvalReport ReportBuilder::finish() const {
    EvalReport r;
    r.model = model_;
    r.threshold = threshold_;
    r.samples = samples_;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        const Confusion& c = per_class_[i];
        r.totals += c;
        r.per_class.push_back({sites_[i], c, c.recall(), c.precision(), c.f1(), c.accuracy()});
    }
    r.accuracy = r.totals.accuracy();
    r.labels_recovered = recovered_;
    r.labels_true = true_labels_;
    r.mean_labels_recovered = ratio(recovered_, samples_);
    r.mean_true_labels = ratio(true_labels_, samples_);
    r.traces = traces_;
    r.trace_totals = trace_totals_;
    r.trace_accuracy = trace_totals_.accuracy();
    return r;
}

json report_to_json(const EvalReport& r) {
    json classes = json::array();
    for (const auto& c : r.per_class) {
        classes.push_back({{"site", c.site},
                           {"counts", confusion_json(c.counts)},
                           {"recall", c.recall},
                           {"precision", c.precision},
                           {"f1", c.f1},
                           {"accuracy", c.accuracy}});
    }
    return {{"model", r.model},
            {"threshold", r.threshold},
            {"samples", r.samples},
            {"totals", confusion_json(r.totals)},
            {"accuracy", r.accuracy},
            {"per_class", classes},
            {"labels_recovered", r.labels_recovered},
            {"labels_true", r.labels_true},
            {"mean_labels_recovered", r.mean_labels_recovered},
            {"mean_true_labels", r.mean_true_labels},
            {"trace_level", {{"traces", r.traces}, {"totals", confusion_json(r.trace_totals)}, {"accuracy", r.trace_accuracy}}}};
}

EvalReport report_from_json(const json& j) {
    EvalReport r;
    try {
        r.model = j.at("model").get<std::string>();
        r.threshold = j.at("threshold").get<double>();
        r.samples = j.at("samples").get<std::uint64_t>();
        r.totals = confusion_from(j.at("totals"));
        r.accuracy = j.at("accuracy").get<double>();
        for (const auto& c : j.at("per_class")) {
            r.per_class.push_back({c.at("site").get<std::string>(), confusion_from(c.at("counts")),
                                   c.at("recall").get<double>(), c.at("precision").get<double>(),
                                   c.at("f1").get<double>(), c.at("accuracy").get<double>()});
        }
        r.labels_recovered = j.at("labels_recovered").get<std::uint64_t>();
        r.labels_true = j.at("labels_true").get<std::uint64_t>();
        r.mean_labels_recovered = j.at("mean_labels_recovered").get<double>();
        r.mean_true_labels = j.at("mean_true_labels").get<double>();
        const auto& t = j.at("trace_level");
        r.traces = t.at("traces").get<std::uint64_t>();
        r.trace_totals = confusion_from(t.at("totals"));
        r.trace_accuracy = t.at("accuracy").get<double>();
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadConfig, std::string("report: ") + ex.what());
    }
    return r;
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << report_to_json(report).dump(2) << '\n';
}

EvalReport read_report_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return report_from_json(json::parse(in));
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadConfig, path.string() + ": " + ex.what());
    }
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "site,recall,precision,f1,accuracy,tp,fp,tn,fn\n" << std::setprecision(17);
    for (const auto& c : report.per_class) {
        out << c.site << ',' << c.recall << ',' << c.precision << ',' << c.f1 << ',' << c.accuracy << ','
            << c.counts.tp << ',' << c.counts.fp << ',' << c.counts.tn << ',' << c.counts.fn << '\n';
    }
}

std::string prediction_to_json_line(const PredictionRecord& r) {
    return json{{"trace", r.trace_id},
                {"start", r.start},
                {"probabilities", r.probabilities},
                {"decision", r.decision},
                {"truth", r.truth}}
        .dump();
}

PredictionRecord prediction_from_json_line(std::string_view line) {
    PredictionRecord r;
    try {
        const json j = json::parse(line);
        r.trace_id = j.at("trace").get<std::size_t>();
        r.start = j.at("start").get<std::size_t>();
        r.probabilities = j.at("probabilities").get<std::vector<double>>();
        r.decision = j.at("decision").get<std::vector<std::uint8_t>>();
        r.truth = j.at("truth").get<std::vector<std::uint8_t>>();
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::BadTraceFile, std::string("prediction dump: ") + ex.what());
    }
    return r;
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& r : records) out << prediction_to_json_line(r) << '\n';
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<PredictionRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(prediction_from_json_line(line));
    }
    return out;
}

}  // namespace sni_sight
