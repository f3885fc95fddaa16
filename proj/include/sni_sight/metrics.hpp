#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sni_sight/corpus.hpp"

namespace sni_sight {

/// Confusion counters; merging is associative and order-independent.
struct Confusion {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    void add(bool truth, bool predicted);
    Confusion& operator+=(const Confusion& o);
    bool operator==(const Confusion&) const = default;

    [[nodiscard]] std::uint64_t total() const { return tp + fp + tn + fn; }
    /// (TP + TN) / (TP + FP + TN + FN)
    [[nodiscard]] double accuracy() const;
    /// TP / (TP + FN); 0 when the class never occurs.
    [[nodiscard]] double recall() const;
    /// TP / (TP + FP); 0 when the class is never predicted.
    [[nodiscard]] double precision() const;
    /// Harmonic mean of precision and recall; 0 when both are 0.
    [[nodiscard]] double f1() const;
};

struct ClassMetrics {
    std::string site;
    Confusion counts;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

struct EvalReport {
    std::string model;
    double threshold = 0.5;
    std::uint64_t samples = 0;
    Confusion totals;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    std::uint64_t labels_recovered = 0;  // sum over samples of |decision AND truth|
    std::uint64_t labels_true = 0;       // sum over samples of |truth|
    double mean_labels_recovered = 0.0;
    double mean_true_labels = 0.0;
    // Trace-level aggregate: mean probability over a trace's windows, thresholded.
    std::uint64_t traces = 0;
    Confusion trace_totals;
    double trace_accuracy = 0.0;
};

/// Accumulates per-sample decisions into an EvalReport.
class ReportBuilder {
public:
    ReportBuilder(const WebsiteUniverse& universe, std::string model, double threshold);

    void add_sample(const LabelVector& truth, const LabelVector& decision);
    void add_trace(const LabelVector& truth, const LabelVector& decision);
    [[nodiscard]] EvalReport finish() const;

private:
    std::vector<std::string> sites_;
    std::string model_;
    double threshold_;
    std::uint64_t samples_ = 0;
    std::vector<Confusion> per_class_;
    std::uint64_t recovered_ = 0;
    std::uint64_t true_labels_ = 0;
    std::uint64_t traces_ = 0;
    Confusion trace_totals_;
};

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void write_report_json(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report_json(const std::filesystem::path& path);
/// One row per class: site,recall,precision,f1,accuracy,tp,fp,tn,fn.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

/// One evaluated sample, as written to the prediction dump.
struct PredictionRecord {
    std::size_t trace_id = 0;
    std::size_t start = 0;
    std::vector<double> probabilities;
    std::vector<std::uint8_t> decision;
    std::vector<std::uint8_t> truth;
};

std::string prediction_to_json_line(const PredictionRecord& r);
PredictionRecord prediction_from_json_line(std::string_view line);
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace sni_sight
