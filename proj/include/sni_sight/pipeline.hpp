#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sni_sight/corpus.hpp"
#include "sni_sight/metrics.hpp"
#include "sni_sight/nn/checkpoint.hpp"
#include "sni_sight/nn/layers.hpp"
#include "sni_sight/nn/lstm.hpp"
#include "sni_sight/stats.hpp"

namespace sni_sight::pipeline {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum class ModelKind { Lstm, Fc };
std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);  // throws BadConfig

struct LstmModelSpec {
    std::size_t hidden = 256;
    std::size_t window = 20;
    double lr = 0.01;
    std::size_t patience = 5;         // evaluations without improvement before stopping
    std::size_t eval_every = 500;     // training steps between validation passes
    double validation_fraction = 0.1; // of the training traces
    std::size_t validation_windows_per_trace = 4;
    double threshold = 0.5;
    double clip_norm = 5.0;           // <= 0 disables clipping
    std::size_t max_steps = 200000;
    std::size_t batch = 1;            // windows per Adam step
    double forget_bias = 1.0;
};

struct FcModelSpec {
    std::vector<std::size_t> hidden{256, 218, 64};
    double dropout = 0.2;
    std::size_t epochs = 50;
    double lr = 0.01;
    double threshold = 0.5;
};

nlohmann::json spec_to_json(const LstmModelSpec& s);
nlohmann::json spec_to_json(const FcModelSpec& s);
LstmModelSpec lstm_spec_from_json(const nlohmann::json& j);
FcModelSpec fc_spec_from_json(const nlohmann::json& j);

/// LSTM over one-hot server names, final hidden state into a dense logit layer.
struct LstmNet {
    nn::LstmParams lstm;
    nn::DenseParams head;

    nn::ParamList params();
    [[nodiscard]] std::vector<double> logits(std::span<const std::uint32_t> window) const;
    /// B x n logits for equal-length windows.
    [[nodiscard]] nn::Tensor logits_batch(std::span<const std::vector<std::uint32_t>> windows) const;
};

/// Dense ReLU stack with dropout after each hidden layer, linear output.
struct FcNet {
    std::vector<nn::DenseParams> layers;

    nn::ParamList params();
    /// Inference logits for a batch of frequency vectors (B x V).
    [[nodiscard]] nn::Tensor logits_batch(const nn::Tensor& x) const;
};

/// A trained classifier with everything needed to encode its inputs.
struct Model {
    ModelKind kind = ModelKind::Lstm;
    WebsiteUniverse universe;
    Vocabulary vocabulary;
    LstmModelSpec lstm_spec;
    FcModelSpec fc_spec;
    std::uint64_t seed = 0;
    LstmNet lstm;
    FcNet fc;

    [[nodiscard]] double threshold() const { return kind == ModelKind::Lstm ? lstm_spec.threshold : fc_spec.threshold; }
    [[nodiscard]] std::size_t window() const { return lstm_spec.window; }
};

Model model_from_checkpoint(const nn::Checkpoint& ckpt);

struct TrainControl {
    /// Stop (resumably) once this many steps (LSTM) or epochs (FC) have run in
    /// total, without finishing the run.
    std::optional<std::size_t> pause_after;
    /// Continue a paused run instead of starting fresh.
    const nn::Checkpoint* resume = nullptr;
    std::function<void(const std::string&)> log;
};

/// Per step: a uniformly chosen trace, a uniformly chosen window start, one
/// forward/backward pass and an Adam update. Every eval_every steps the mean
/// loss over a fixed validation window set is measured; the run stops after
/// `patience` evaluations without improvement and returns the best weights.
nn::Checkpoint train_lstm(const std::vector<Trace>& train, const Vocabulary& vocab, const WebsiteUniverse& universe,
                          const LstmModelSpec& spec, std::uint64_t seed, const TrainControl& control = {});

/// Full-batch Adam over frequency vectors for spec.epochs epochs.
nn::Checkpoint train_fc(const std::vector<Trace>& train, const Vocabulary& vocab, const WebsiteUniverse& universe,
                        const FcModelSpec& spec, std::uint64_t seed, const TrainControl& control = {});

struct Prediction {
    std::vector<double> probabilities;
    LabelVector decision;
};

/// decision bit i = probability_i >= threshold (ties count as positive).
Prediction decide(std::vector<double> probabilities, double threshold);
Prediction predict_logits(std::span<const double> logits, double threshold);

/// Throws VocabularyMismatch when the sample was encoded with another vocabulary.
Prediction predict(const Model& model, const SequenceSample& sample);
Prediction predict(const Model& model, const FrequencySample& sample);

struct EvalResult {
    EvalReport report;
    std::vector<PredictionRecord> predictions;
};

/// LSTM: every stride-1 window of every trace is one sample (an empty trace
/// contributes one all-OOV window). FC: one frequency vector per trace.
/// trace_ids label the traces in the prediction dump (default: positions).
EvalResult evaluate(const Model& model, const std::vector<Trace>& traces, const std::vector<std::size_t>& trace_ids = {});

struct ScrubComparison {
    EvalResult baseline;
    EvalResult scrubbed;
    std::size_t events_removed = 0;
    std::size_t events_total = 0;
    [[nodiscard]] double accuracy_delta() const { return scrubbed.report.accuracy - baseline.report.accuracy; }
};

ScrubComparison ablate_scrub(const Model& model, const std::vector<Trace>& traces, const WebsiteUniverse& universe,
                             const std::vector<std::size_t>& trace_ids = {});

/// Paired t-test over per-class accuracies of two reports; throws
/// LengthMismatch when their class lists differ.
stats::TTestResult compare_reports(const EvalReport& a, const EvalReport& b, const std::string& metric = "accuracy");

}  // namespace sni_sight::pipeline
