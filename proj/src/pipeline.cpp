#include "sni_sight/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sni_sight/error.hpp"
#include "sni_sight/nn/adam.hpp"
#include "sni_sight/rng.hpp"

namespace sni_sight::pipeline {

using nlohmann::json;
using nn::Tensor;

namespace {

constexpr std::size_t kEvalBatch = 256;

void say(const TrainControl& control, const std::string& msg) {
    if (control.log) control.log(msg);
}

Tensor label_row(const LabelVector& label) {
    Tensor t({1, label.size()});
    for (std::size_t i = 0; i < label.size(); ++i) t[i] = label.test(i) ? 1.0 : 0.0;
    return t;
}

std::vector<Tensor> zeros_like(const nn::ParamList& params) {
    std::vector<Tensor> out;
    for (const auto& p : params) out.emplace_back(p.tensor->shape());
    return out;
}

std::vector<Tensor> snapshot(const nn::ParamList& params) {
    std::vector<Tensor> out;
    for (const auto& p : params) out.push_back(*p.tensor);
    return out;
}

json base_metadata(ModelKind kind, const WebsiteUniverse& universe, const Vocabulary& vocab, std::uint64_t seed) {
    return {{"format", "sni-sight-model"},
            {"toolkit_version", kToolkitVersion},
            {"kind", to_string(kind)},
            {"universe", universe.sites()},
            {"vocabulary", vocab.names()},
            {"vocabulary_hash", vocab.hash()},
            {"seed", seed}};
}

/// Checks a resume checkpoint against the run it is supposed to continue.
void check_resume(const nn::Checkpoint& ckpt, ModelKind kind, const json& spec, const Vocabulary& vocab,
                  const WebsiteUniverse& universe, std::uint64_t seed) {
    const auto& m = ckpt.metadata;
    if (m.value("kind", "") != to_string(kind)) throw Error(ErrorCode::BadConfig, "resume checkpoint is not a " + to_string(kind) + " model");
    if (m.at("spec") != spec) throw Error(ErrorCode::BadConfig, "resume checkpoint was trained with a different model spec");
    if (m.at("seed").get<std::uint64_t>() != seed) throw Error(ErrorCode::BadConfig, "resume checkpoint uses a different seed");
    if (m.at("vocabulary_hash").get<std::uint64_t>() != vocab.hash()) {
        throw Error(ErrorCode::VocabularyMismatch, "resume checkpoint was built on another vocabulary");
    }
    if (m.at("universe").get<std::vector<std::string>>() != universe.sites()) {
        throw Error(ErrorCode::BadConfig, "resume checkpoint covers another website universe");
    }
    if (!m.contains("training")) throw Error(ErrorCode::BadConfig, "checkpoint carries no training state");
}

void put_params(nn::Checkpoint& ckpt, const std::string& prefix, const nn::ParamList& params,
                const std::vector<Tensor>* values = nullptr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        ckpt.put(prefix + params[k].name, values ? (*values)[k] : *params[k].tensor);
    }
}

void load_params(const nn::Checkpoint& ckpt, const std::string& prefix, const nn::ParamList& params) {
    for (const auto& p : params) {
        const Tensor& t = ckpt.get(prefix + p.name);
        nn::require_same_shape(t, *p.tensor, "checkpoint tensor " + prefix + p.name);
        *p.tensor = t;
    }
}

void put_adam(nn::Checkpoint& ckpt, const nn::ParamList& params, const nn::AdamState& adam) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        ckpt.put("adam.m/" + params[k].name, adam.m[k]);
        ckpt.put("adam.v/" + params[k].name, adam.v[k]);
    }
}

void load_adam(const nn::Checkpoint& ckpt, const nn::ParamList& params, nn::AdamState& adam, std::uint64_t t) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        adam.m[k] = ckpt.get("adam.m/" + params[k].name);
        adam.v[k] = ckpt.get("adam.v/" + params[k].name);
        nn::require_same_shape(adam.m[k], *params[k].tensor, "adam moment");
        nn::require_same_shape(adam.v[k], *params[k].tensor, "adam moment");
    }
    adam.t = t;
}

std::vector<std::size_t> default_ids(std::size_t n, const std::vector<std::size_t>& ids) {
    if (!ids.empty()) {
        if (ids.size() != n) throw Error(ErrorCode::LengthMismatch, "trace id list does not match trace count");
        return ids;
    }
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
}

void require_vocab(const Model& model, std::uint64_t hash) {
    if (hash != model.vocabulary.hash()) {
        throw Error(ErrorCode::VocabularyMismatch, "sample was encoded with a different vocabulary than the model");
    }
}

/// Frequency vectors as a dense B x V matrix.
Tensor frequency_matrix(const std::vector<FrequencySample>& samples, std::size_t vocab_size) {
    Tensor x({samples.size(), vocab_size});
    for (std::size_t r = 0; r < samples.size(); ++r) {
        for (std::size_t c = 0; c < vocab_size; ++c) x(r, c) = samples[r].counts[c];
    }
    return x;
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::Lstm ? "lstm" : "fc"; }

ModelKind parse_model_kind(const std::string& s) {
    if (s == "lstm") return ModelKind::Lstm;
    if (s == "fc") return ModelKind::Fc;
    throw Error(ErrorCode::BadConfig, "unknown model \"" + s + "\" (expected lstm or fc)");
}

json spec_to_json(const LstmModelSpec& s) {
    return {{"hidden", s.hidden},
            {"window", s.window},
            {"lr", s.lr},
            {"patience", s.patience},
            {"eval_every", s.eval_every},
            {"validation_fraction", s.validation_fraction},
            {"validation_windows_per_trace", s.validation_windows_per_trace},
            {"threshold", s.threshold},
            {"clip_norm", s.clip_norm},
            {"max_steps", s.max_steps},
            {"batch", s.batch},
            {"forget_bias", s.forget_bias}};
}

json spec_to_json(const FcModelSpec& s) {
    return {{"hidden", s.hidden}, {"dropout", s.dropout}, {"epochs", s.epochs}, {"lr", s.lr}, {"threshold", s.threshold}};
}

LstmModelSpec lstm_spec_from_json(const json& j) {
    LstmModelSpec s;
    s.hidden = j.at("hidden").get<std::size_t>();
    s.window = j.at("window").get<std::size_t>();
    s.lr = j.at("lr").get<double>();
    s.patience = j.at("patience").get<std::size_t>();
    s.eval_every = j.at("eval_every").get<std::size_t>();
    s.validation_fraction = j.at("validation_fraction").get<double>();
    s.validation_windows_per_trace = j.at("validation_windows_per_trace").get<std::size_t>();
    s.threshold = j.at("threshold").get<double>();
    s.clip_norm = j.at("clip_norm").get<double>();
    s.max_steps = j.at("max_steps").get<std::size_t>();
    s.batch = j.at("batch").get<std::size_t>();
    s.forget_bias = j.at("forget_bias").get<double>();
    return s;
}

FcModelSpec fc_spec_from_json(const json& j) {
    FcModelSpec s;
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.dropout = j.at("dropout").get<double>();
    s.epochs = j.at("epochs").get<std::size_t>();
    s.lr = j.at("lr").get<double>();
    s.threshold = j.at("threshold").get<double>();
    return s;
}

nn::ParamList LstmNet::params() {
    return {{"lstm.W", &lstm.W}, {"lstm.U", &lstm.U}, {"lstm.b", &lstm.b}, {"head.W", &head.W}, {"head.b", &head.b}};
}

std::vector<double> LstmNet::logits(std::span<const std::uint32_t> window) const {
    const auto out = nn::lstm_forward(lstm, window);
    Tensor h({1, lstm.hidden()});
    h.vector() = out.final_state.h;
    const Tensor z = nn::dense_forward(head, h, nn::Activation::Identity);
    return {z.values().begin(), z.values().end()};
}

Tensor LstmNet::logits_batch(std::span<const std::vector<std::uint32_t>> windows) const {
    const Tensor h = nn::lstm_last_hidden_batch(lstm, windows);
    return nn::dense_forward(head, h, nn::Activation::Identity);
}

nn::ParamList FcNet::params() {
    nn::ParamList out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        out.push_back({"fc." + std::to_string(l) + ".W", &layers[l].W});
        out.push_back({"fc." + std::to_string(l) + ".b", &layers[l].b});
    }
    return out;
}

Tensor FcNet::logits_batch(const Tensor& x) const {
    Tensor a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const bool last = l + 1 == layers.size();
        a = nn::dense_forward(layers[l], a, last ? nn::Activation::Identity : nn::Activation::Relu);
    }
    return a;
}

Model model_from_checkpoint(const nn::Checkpoint& ckpt) {
    const auto& m = ckpt.metadata;
    Model model;
    try {
        if (m.value("format", "") != "sni-sight-model") throw Error(ErrorCode::BadConfig, "checkpoint is not a model");
        model.kind = parse_model_kind(m.at("kind").get<std::string>());
        model.universe = WebsiteUniverse(m.at("universe").get<std::vector<std::string>>());
        model.vocabulary = Vocabulary(m.at("vocabulary").get<std::vector<std::string>>());
        if (model.vocabulary.hash() != m.at("vocabulary_hash").get<std::uint64_t>()) {
            throw Error(ErrorCode::CorruptTensor, "vocabulary hash does not match vocabulary list");
        }
        model.seed = m.at("seed").get<std::uint64_t>();
        if (model.kind == ModelKind::Lstm) {
            model.lstm_spec = lstm_spec_from_json(m.at("spec"));
            model.lstm.lstm.W = ckpt.get("lstm.W");
            model.lstm.lstm.U = ckpt.get("lstm.U");
            model.lstm.lstm.b = ckpt.get("lstm.b");
            model.lstm.head.W = ckpt.get("head.W");
            model.lstm.head.b = ckpt.get("head.b");
            model.lstm.lstm.validate();
        } else {
            model.fc_spec = fc_spec_from_json(m.at("spec"));
            model.fc.layers.resize(model.fc_spec.hidden.size() + 1);
            for (std::size_t l = 0; l < model.fc.layers.size(); ++l) {
                model.fc.layers[l].W = ckpt.get("fc." + std::to_string(l) + ".W");
                model.fc.layers[l].b = ckpt.get("fc." + std::to_string(l) + ".b");
            }
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::CorruptTensor, std::string("checkpoint metadata: ") + ex.what());
    }
    return model;
}

nn::Checkpoint train_lstm(const std::vector<Trace>& train, const Vocabulary& vocab, const WebsiteUniverse& universe,
                          const LstmModelSpec& spec, std::uint64_t seed, const TrainControl& control) {
    if (train.empty()) throw Error(ErrorCode::EmptyTrainSet, "no training traces");
    if (spec.hidden == 0 || spec.window == 0 || spec.batch == 0 || spec.eval_every == 0) {
        throw Error(ErrorCode::BadConfig, "hidden, window, batch and eval_every must be positive");
    }
    const std::size_t H = spec.hidden;
    const std::size_t T = spec.window;
    const json spec_json = spec_to_json(spec);

    // Held-out validation traces and their fixed windows.
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
        Rng split_rng(derive_seed(seed, "lstm-validation"));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.uniform_index(i)]);
    }
    std::size_t n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(train.size())));
    if (train.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, train.size() - 1);
    std::vector<std::size_t> val_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, order.size())));
    std::vector<std::size_t> fit_ids(order.begin() + static_cast<std::ptrdiff_t>(val_ids.size()), order.end());
    if (val_ids.empty()) val_ids = fit_ids;  // a single trace validates on itself
    std::sort(val_ids.begin(), val_ids.end());
    std::sort(fit_ids.begin(), fit_ids.end());

    std::vector<std::vector<std::uint32_t>> val_windows;
    Tensor val_targets;
    {
        std::vector<LabelVector> labels;
        for (auto id : val_ids) {
            const std::size_t starts = window_count(train[id].events.size(), T);
            const std::size_t k = std::min(std::max<std::size_t>(spec.validation_windows_per_trace, 1), starts);
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t start = k == 1 ? 0 : (j * (starts - 1) + (k - 1) / 2) / (k - 1);
                auto s = window_sample_or_pad(train[id], vocab, universe, T, start, id);
                val_windows.push_back(std::move(s.indices));
                labels.push_back(std::move(s.label));
            }
        }
        val_targets = Tensor({labels.size(), universe.size()});
        for (std::size_t r = 0; r < labels.size(); ++r)
            for (std::size_t c = 0; c < universe.size(); ++c) val_targets(r, c) = labels[r].test(c) ? 1.0 : 0.0;
    }

    std::vector<Tensor> fit_targets;
    for (auto id : fit_ids) fit_targets.push_back(label_row(LabelVector::from_sites(universe, train[id].label)));

    LstmNet net;
    {
        Rng init(derive_seed(seed, "lstm-init"));
        net.lstm = nn::init_lstm(vocab.size(), H, init, spec.forget_bias);
        net.head = nn::init_dense(H, universe.size(), init);
    }
    const nn::ParamList params = net.params();
    nn::AdamState adam = nn::adam_init(params, {spec.lr});
    Rng rng(derive_seed(seed, "lstm-steps"));
    std::size_t step = 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    std::size_t bad_evals = 0;
    json evaluations = json::array();
    std::vector<Tensor> best = snapshot(params);
    bool has_best = false;

    if (control.resume) {
        const auto& ck = *control.resume;
        check_resume(ck, ModelKind::Lstm, spec_json, vocab, universe, seed);
        const auto& tr = ck.metadata.at("training");
        if (tr.at("finished").get<bool>()) return ck;
        load_params(ck, "state/", params);
        load_adam(ck, params, adam, tr.at("adam_t").get<std::uint64_t>());
        rng.restore(tr.at("rng").get<std::string>());
        step = tr.at("step").get<std::size_t>();
        has_best = tr.at("has_best").get<bool>();
        bad_evals = tr.at("bad_evals").get<std::size_t>();
        // Losses come back from the binary history so resumed runs match uninterrupted ones bit for bit.
        const Tensor& history = ck.get("training.evaluations");
        for (std::size_t r = 0; r < history.dim(0); ++r) {
            evaluations.push_back({{"step", static_cast<std::size_t>(history(r, 0))}, {"validation_loss", history(r, 1)}});
        }
        if (has_best) {
            best_step = tr.at("best_step").get<std::size_t>();
            for (std::size_t r = 0; r < history.dim(0); ++r) {
                if (static_cast<std::size_t>(history(r, 0)) == best_step) best_val = history(r, 1);
            }
            for (std::size_t k = 0; k < params.size(); ++k) best[k] = ck.get(params[k].name);
        }
        say(control, "resuming LSTM training at step " + std::to_string(step));
    }

    auto validation_loss = [&] {
        double total = 0.0;
        for (std::size_t off = 0; off < val_windows.size(); off += kEvalBatch) {
            const std::size_t n = std::min(kEvalBatch, val_windows.size() - off);
            const Tensor z = net.logits_batch(std::span(val_windows).subspan(off, n));
            Tensor y({n, universe.size()});
            std::copy_n(val_targets.data() + off * universe.size(), n * universe.size(), y.data());
            total += nn::sigmoid_ce_loss(z, y).loss * static_cast<double>(n);
        }
        return total / static_cast<double>(val_windows.size());
    };

    auto evaluate_now = [&] {
        const double val = validation_loss();
        evaluations.push_back({{"step", step}, {"validation_loss", val}});
        if (val < best_val) {
            best_val = val;
            best_step = step;
            best = snapshot(params);
            has_best = true;
            bad_evals = 0;
        } else {
            ++bad_evals;
        }
        say(control, "step " + std::to_string(step) + " validation loss " + std::to_string(val) +
                         (bad_evals == 0 ? " (best)" : ""));
    };

    auto make_checkpoint = [&](bool finished) {
        nn::Checkpoint ck;
        ck.metadata = base_metadata(ModelKind::Lstm, universe, vocab, seed);
        ck.metadata["spec"] = spec_json;
        ck.metadata["training"] = {{"finished", finished},
                                   {"step", step},
                                   {"has_best", has_best},
                                   {"best_val_loss", has_best ? json(best_val) : json(nullptr)},
                                   {"best_step", best_step},
                                   {"bad_evals", bad_evals},
                                   {"evaluations", evaluations},
                                   {"adam_t", adam.t},
                                   {"rng", finished ? std::string() : rng.state()},
                                   {"validation_traces", val_ids.size()},
                                   {"validation_windows", val_windows.size()}};
        put_params(ck, "", params, has_best ? &best : nullptr);
        if (!finished) {
            Tensor history({evaluations.size(), 2});
            for (std::size_t r = 0; r < evaluations.size(); ++r) {
                history(r, 0) = static_cast<double>(evaluations[r].at("step").get<std::size_t>());
                history(r, 1) = evaluations[r].at("validation_loss").get<double>();
            }
            ck.put("training.evaluations", history);
            put_params(ck, "state/", params);
            put_adam(ck, params, adam);
        }
        return ck;
    };

    std::vector<Tensor> grads = zeros_like(params);
    std::vector<const Tensor*> grad_ptrs;
    std::vector<Tensor*> grad_mut;
    for (auto& g : grads) {
        grad_ptrs.push_back(&g);
        grad_mut.push_back(&g);
    }
    const std::vector<std::size_t>& pool = fit_ids.empty() ? val_ids : fit_ids;

    for (;;) {
        if (step >= spec.max_steps) {
            if (evaluations.empty() || evaluations.back().at("step").get<std::size_t>() != step) evaluate_now();
            say(control, "reached max_steps " + std::to_string(spec.max_steps));
            break;
        }
        if (control.pause_after && step >= *control.pause_after) {
            say(control, "pausing at step " + std::to_string(step));
            return make_checkpoint(false);
        }

        for (auto& g : grads) g.set_zero();
        double step_loss = 0.0;
        for (std::size_t b = 0; b < spec.batch; ++b) {
            const std::size_t pick = rng.uniform_index(pool.size());
            const Trace& trace = train[pool[pick]];
            const std::size_t start = rng.uniform_index(window_count(trace.events.size(), T));
            const auto sample = window_sample_or_pad(trace, vocab, universe, T, start, pool[pick]);
            const Tensor target =
                fit_ids.empty() ? label_row(sample.label) : fit_targets[pick];

            const auto fwd = nn::lstm_forward(net.lstm, sample.indices);
            Tensor h({1, H});
            h.vector() = fwd.final_state.h;
            nn::DenseCache head_cache;
            const Tensor logits = nn::dense_forward(net.head, h, nn::Activation::Identity, &head_cache);
            const auto loss = nn::sigmoid_ce_loss(logits, target);
            step_loss += loss.loss;
            const auto head_grads = nn::dense_backward(net.head, head_cache, loss.grad);
            Tensor d_out({T, H});
            d_out.matrix().row(static_cast<Eigen::Index>(T - 1)) = head_grads.dx.matrix().row(0);
            const auto lstm_grads = nn::lstm_backward(net.lstm, fwd.cache, d_out);

            grads[0].vector() += lstm_grads.dW.vector();
            grads[1].vector() += lstm_grads.dU.vector();
            grads[2].vector() += lstm_grads.db.vector();
            grads[3].vector() += head_grads.dW.vector();
            grads[4].vector() += head_grads.db.vector();
        }
        if (spec.batch > 1) {
            for (auto& g : grads) g.vector() /= static_cast<double>(spec.batch);
        }
        nn::clip_global_norm(grad_mut, spec.clip_norm);
        nn::adam_step(params, grad_ptrs, adam);
        ++step;

        if (step % spec.eval_every == 0) {
            evaluate_now();
            if (bad_evals >= spec.patience) {
                say(control, "early stop at step " + std::to_string(step) + ", best step " + std::to_string(best_step));
                break;
            }
        }
    }
    return make_checkpoint(true);
}

nn::Checkpoint train_fc(const std::vector<Trace>& train, const Vocabulary& vocab, const WebsiteUniverse& universe,
                        const FcModelSpec& spec, std::uint64_t seed, const TrainControl& control) {
    if (train.empty()) throw Error(ErrorCode::EmptyTrainSet, "no training traces");
    if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) throw Error(ErrorCode::BadRate, "dropout rate");
    const json spec_json = spec_to_json(spec);

    std::vector<FrequencySample> samples;
    for (std::size_t i = 0; i < train.size(); ++i) samples.push_back(frequency_vector(train[i], vocab, universe, i));
    const Tensor x = frequency_matrix(samples, vocab.size());
    Tensor y({samples.size(), universe.size()});
    for (std::size_t r = 0; r < samples.size(); ++r)
        for (std::size_t c = 0; c < universe.size(); ++c) y(r, c) = samples[r].label.test(c) ? 1.0 : 0.0;

    FcNet net;
    {
        Rng init(derive_seed(seed, "fc-init"));
        std::size_t in = vocab.size();
        for (std::size_t width : spec.hidden) {
            net.layers.push_back(nn::init_dense(in, width, init));
            in = width;
        }
        net.layers.push_back(nn::init_dense(in, universe.size(), init));
    }
    const nn::ParamList params = net.params();
    nn::AdamState adam = nn::adam_init(params, {spec.lr});
    Rng rng(derive_seed(seed, "fc-dropout"));
    std::size_t epoch = 0;
    json losses = json::array();

    if (control.resume) {
        const auto& ck = *control.resume;
        check_resume(ck, ModelKind::Fc, spec_json, vocab, universe, seed);
        const auto& tr = ck.metadata.at("training");
        if (tr.at("finished").get<bool>()) return ck;
        load_params(ck, "state/", params);
        load_adam(ck, params, adam, tr.at("adam_t").get<std::uint64_t>());
        rng.restore(tr.at("rng").get<std::string>());
        epoch = tr.at("epoch").get<std::size_t>();
        for (double v : ck.get("training.losses").values()) losses.push_back(v);
        say(control, "resuming FC training at epoch " + std::to_string(epoch));
    }

    auto make_checkpoint = [&](bool finished) {
        nn::Checkpoint ck;
        ck.metadata = base_metadata(ModelKind::Fc, universe, vocab, seed);
        ck.metadata["spec"] = spec_json;
        ck.metadata["training"] = {{"finished", finished},
                                   {"epoch", epoch},
                                   {"losses", losses},
                                   {"adam_t", adam.t},
                                   {"rng", finished ? std::string() : rng.state()}};
        put_params(ck, "", params);
        if (!finished) {
            Tensor history({losses.size()});
            for (std::size_t r = 0; r < losses.size(); ++r) history[r] = losses[r].get<double>();
            ck.put("training.losses", history);
            put_params(ck, "state/", params);
            put_adam(ck, params, adam);
        }
        return ck;
    };

    const std::size_t L = net.layers.size();
    while (epoch < spec.epochs) {
        if (control.pause_after && epoch >= *control.pause_after) return make_checkpoint(false);

        std::vector<nn::DenseCache> caches(L);
        std::vector<Tensor> masks(L);
        Tensor a = x;
        for (std::size_t l = 0; l < L; ++l) {
            const bool last = l + 1 == L;
            a = nn::dense_forward(net.layers[l], a, last ? nn::Activation::Identity : nn::Activation::Relu, &caches[l]);
            if (!last) a = nn::dropout(a, spec.dropout, rng, true, &masks[l]);
        }
        const auto loss = nn::sigmoid_ce_loss(a, y);

        std::vector<Tensor> grads(2 * L);
        Tensor d = loss.grad;
        for (std::size_t l = L; l-- > 0;) {
            if (l + 1 != L) d.vector().array() *= masks[l].vector().array();
            auto g = nn::dense_backward(net.layers[l], caches[l], d);
            grads[2 * l] = std::move(g.dW);
            grads[2 * l + 1] = std::move(g.db);
            d = std::move(g.dx);
        }
        std::vector<const Tensor*> ptrs;
        for (const auto& g : grads) ptrs.push_back(&g);
        nn::adam_step(params, ptrs, adam);
        ++epoch;
        losses.push_back(loss.loss);
        say(control, "epoch " + std::to_string(epoch) + " loss " + std::to_string(loss.loss));
    }
    return make_checkpoint(true);
}

Prediction decide(std::vector<double> probabilities, double threshold) {
    Prediction p;
    p.decision = LabelVector(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) p.decision.set(i, probabilities[i] >= threshold);
    p.probabilities = std::move(probabilities);
    return p;
}

Prediction predict_logits(std::span<const double> logits, double threshold) {
    std::vector<double> probs(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = nn::sigmoid(logits[i]);
    return decide(std::move(probs), threshold);
}

Prediction predict(const Model& model, const SequenceSample& sample) {
    if (model.kind != ModelKind::Lstm) throw Error(ErrorCode::BadConfig, "sequence sample given to an FC model");
    require_vocab(model, sample.vocab_hash);
    const auto z = model.lstm.logits(sample.indices);
    return predict_logits(z, model.threshold());
}

Prediction predict(const Model& model, const FrequencySample& sample) {
    if (model.kind != ModelKind::Fc) throw Error(ErrorCode::BadConfig, "frequency sample given to an LSTM model");
    require_vocab(model, sample.vocab_hash);
    Tensor x({1, sample.counts.size()});
    for (std::size_t c = 0; c < sample.counts.size(); ++c) x[c] = sample.counts[c];
    const Tensor z = model.fc.logits_batch(x);
    return predict_logits(z.values(), model.threshold());
}

EvalResult evaluate(const Model& model, const std::vector<Trace>& traces, const std::vector<std::size_t>& trace_ids) {
    if (traces.empty()) throw Error(ErrorCode::EmptySet, "no evaluation traces");
    const auto ids = default_ids(traces.size(), trace_ids);
    const std::size_t n = model.universe.size();
    const double threshold = model.threshold();
    ReportBuilder builder(model.universe, to_string(model.kind), threshold);
    EvalResult result;

    auto record = [&](std::size_t trace_id, std::size_t start, const Prediction& p, const LabelVector& truth) {
        builder.add_sample(truth, p.decision);
        PredictionRecord r;
        r.trace_id = trace_id;
        r.start = start;
        r.probabilities = p.probabilities;
        r.decision = p.decision.bits();
        r.truth = truth.bits();
        result.predictions.push_back(std::move(r));
    };

    if (model.kind == ModelKind::Lstm) {
        const std::size_t T = model.window();
        for (std::size_t t = 0; t < traces.size(); ++t) {
            const LabelVector truth = LabelVector::from_sites(model.universe, traces[t].label);
            const std::size_t windows = window_count(traces[t].events.size(), T);
            std::vector<double> mean_prob(n, 0.0);
            for (std::size_t off = 0; off < windows; off += kEvalBatch) {
                const std::size_t count = std::min(kEvalBatch, windows - off);
                std::vector<std::vector<std::uint32_t>> batch;
                batch.reserve(count);
                for (std::size_t k = 0; k < count; ++k) {
                    batch.push_back(window_sample_or_pad(traces[t], model.vocabulary, model.universe, T, off + k, ids[t]).indices);
                }
                const Tensor z = model.lstm.logits_batch(batch);
                for (std::size_t k = 0; k < count; ++k) {
                    const auto p = predict_logits(std::span<const double>(z.data() + k * n, n), threshold);
                    for (std::size_t c = 0; c < n; ++c) mean_prob[c] += p.probabilities[c];
                    record(ids[t], off + k, p, truth);
                }
            }
            for (double& v : mean_prob) v /= static_cast<double>(windows);
            builder.add_trace(truth, decide(std::move(mean_prob), threshold).decision);
        }
    } else {
        std::vector<FrequencySample> samples;
        for (std::size_t t = 0; t < traces.size(); ++t) {
            samples.push_back(frequency_vector(traces[t], model.vocabulary, model.universe, ids[t]));
        }
        const Tensor z = model.fc.logits_batch(frequency_matrix(samples, model.vocabulary.size()));
        for (std::size_t t = 0; t < traces.size(); ++t) {
            const auto p = predict_logits(std::span<const double>(z.data() + t * n, n), threshold);
            record(ids[t], 0, p, samples[t].label);
            builder.add_trace(samples[t].label, p.decision);
        }
    }
    result.report = builder.finish();
    return result;
}

ScrubComparison ablate_scrub(const Model& model, const std::vector<Trace>& traces, const WebsiteUniverse& universe,
                             const std::vector<std::size_t>& trace_ids) {
    ScrubComparison cmp;
    cmp.baseline = evaluate(model, traces, trace_ids);
    std::vector<Trace> scrubbed;
    scrubbed.reserve(traces.size());
    for (const auto& t : traces) {
        scrubbed.push_back(scrub(t, universe));
        cmp.events_total += t.events.size();
        cmp.events_removed += t.events.size() - scrubbed.back().events.size();
    }
    cmp.scrubbed = evaluate(model, scrubbed, trace_ids);
    return cmp;
}

stats::TTestResult compare_reports(const EvalReport& a, const EvalReport& b, const std::string& metric) {
    if (a.per_class.size() != b.per_class.size()) {
        throw Error(ErrorCode::LengthMismatch, "reports cover " + std::to_string(a.per_class.size()) + " and " +
                                                   std::to_string(b.per_class.size()) + " classes");
    }
    auto pick = [&](const ClassMetrics& c) {
        if (metric == "accuracy") return c.accuracy;
        if (metric == "recall") return c.recall;
        if (metric == "precision") return c.precision;
        if (metric == "f1") return c.f1;
        throw Error(ErrorCode::BadConfig, "unknown metric " + metric);
    };
    std::vector<double> va, vb;
    for (std::size_t i = 0; i < a.per_class.size(); ++i) {
        if (a.per_class[i].site != b.per_class[i].site) {
            throw Error(ErrorCode::LengthMismatch,
                        "class " + std::to_string(i) + " is " + a.per_class[i].site + " vs " + b.per_class[i].site);
        }
        va.push_back(pick(a.per_class[i]));
        vb.push_back(pick(b.per_class[i]));
    }
    return stats::paired_t_test(va, vb);
}

}  // namespace sni_sight::pipeline
