#include "fsnids/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fsnids/error.hpp"

namespace fsnids {

namespace {

using json = nlohmann::json;

json optional_to_json(const std::optional<double>& v) {
    if (!v) return "undefined";
    return *v;
}

std::optional<double> optional_from_json(const json& v) {
    if (v.is_number()) return v.get<double>();
    return std::nullopt;
}

std::string cell(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return buf;
}

}  // namespace

confusion_counts& confusion_counts::operator+=(const confusion_counts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
}

confusion_counts confusion_from_predictions(std::span<const binary_label> predictions,
                                            std::span<const binary_label> labels) {
    if (predictions.size() != labels.size())
        throw precondition_error("prediction count " + std::to_string(predictions.size()) +
                                 " does not match label count " + std::to_string(labels.size()));
    confusion_counts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred_mal = predictions[i] == binary_label::malicious;
        const bool true_mal = labels[i] == binary_label::malicious;
        if (pred_mal && true_mal)
            ++c.tp;
        else if (pred_mal)
            ++c.fp;
        else if (true_mal)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

metrics_report compute_metrics(const confusion_counts& c) {
    if (c.total() == 0) throw precondition_error("no flows to score");
    metrics_report r;
    r.counts = c;
    const double tp = static_cast<double>(c.tp);
    r.accuracy = (tp + static_cast<double>(c.tn)) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0) r.precision = tp / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = tp / static_cast<double>(c.tp + c.fn);
    // Undefined when either ratio is, or when both are zero. Otherwise
    // 2PR/(P+R) reduces to 2TP/(2TP+FP+FN), which avoids the extra rounding.
    if (r.precision && r.recall && c.tp > 0) r.f1 = 2.0 * tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
    return r;
}

std::string to_json(const metrics_report& r) {
    json j;
    j["model"] = r.model;
    j["dataset_id"] = r.dataset_id;
    j["checkpoint_id"] = r.checkpoint_id;
    j["counts"] = {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}};
    j["accuracy"] = optional_to_json(r.accuracy);
    j["precision"] = optional_to_json(r.precision);
    j["recall"] = optional_to_json(r.recall);
    j["f1"] = optional_to_json(r.f1);
    if (!r.notes.empty()) j["notes"] = r.notes;
    return j.dump(2) + "\n";
}

metrics_report report_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw parse_error(std::string("metrics report is not valid JSON: ") + e.what());
    }
    metrics_report r;
    try {
        r.model = j.value("model", "");
        r.dataset_id = j.value("dataset_id", "");
        r.checkpoint_id = j.value("checkpoint_id", "");
        r.notes = j.value("notes", "");
        const auto& c = j.at("counts");
        r.counts.tp = c.at("tp").get<std::uint64_t>();
        r.counts.tn = c.at("tn").get<std::uint64_t>();
        r.counts.fp = c.at("fp").get<std::uint64_t>();
        r.counts.fn = c.at("fn").get<std::uint64_t>();
        r.accuracy = optional_from_json(j.at("accuracy"));
        r.precision = optional_from_json(j.at("precision"));
        r.recall = optional_from_json(j.at("recall"));
        r.f1 = optional_from_json(j.at("f1"));
    } catch (const json::exception& e) {
        throw parse_error(std::string("metrics report is missing a field: ") + e.what());
    }
    return r;
}

std::string format_table(std::span<const metrics_report> reports) {
    std::size_t width = 6;
    for (const auto& r : reports) width = std::max(width, r.model.size());
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %-9s  %-9s  %-9s  %-9s\n", static_cast<int>(width), "Method", "Accuracy",
                  "F1", "Recall", "Precision");
    out << buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%-*s  %-9s  %-9s  %-9s  %-9s\n", static_cast<int>(width), r.model.c_str(),
                      cell(r.accuracy).c_str(), cell(r.f1).c_str(), cell(r.recall).c_str(),
                      cell(r.precision).c_str());
        out << buf;
    }
    return out.str();
}

std::vector<flow_prediction> predict_flows(const model_params<float>& params, std::span<const discretized_flow> flows,
                                           const feature_vocabulary& vocab, std::size_t sequence_length,
                                           std::size_t batch_size) {
    if (sequence_length == 0) throw precondition_error("evaluation sequence length must be positive");
    if (batch_size == 0) throw precondition_error("evaluation batch size must be positive");
    if (vocab.feature_count() != params.config.feature_count)
        throw incompatibility_error("vocabulary has " + std::to_string(vocab.feature_count()) +
                                    " features but the model expects " +
                                    std::to_string(params.config.feature_count));
    std::vector<flow_prediction> out;
    out.reserve(flows.size());
    const auto seqs = chunk_sequences(flows, sequence_length, vocab);
    for (const auto& indices : make_batches(seqs.size(), batch_size, false)) {
        const token_batch batch = assemble_batch(seqs, indices);
        const auto act = forward(params, batch);
        const matrix<float> probs = classifier_head_forward(params, act.hidden);
        for (std::size_t b = 0; b < batch.batch; ++b) {
            for (std::size_t l = 0; l < batch.length; ++l) {
                if (!batch.is_real(b, l)) continue;
                const std::size_t row = b * batch.length + l;
                flow_prediction p;
                p.p_benign = probs(static_cast<Eigen::Index>(row), 0);
                p.p_malicious = probs(static_cast<Eigen::Index>(row), 1);
                p.label = predict_label(p.p_benign, p.p_malicious);
                out.push_back(p);
            }
        }
    }
    return out;
}

metrics_report evaluate_predictions(std::span<const binary_label> predictions, std::span<const binary_label> labels,
                                    std::span<const std::uint8_t> subset) {
    if (predictions.size() != labels.size())
        throw precondition_error("prediction count " + std::to_string(predictions.size()) +
                                 " does not match label count " + std::to_string(labels.size()));
    if (subset.empty()) return compute_metrics(confusion_from_predictions(predictions, labels));
    if (subset.size() != labels.size())
        throw precondition_error("subset mask length " + std::to_string(subset.size()) +
                                 " does not match dataset length " + std::to_string(labels.size()));
    std::vector<binary_label> p, t;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!subset[i]) continue;
        p.push_back(predictions[i]);
        t.push_back(labels[i]);
    }
    return compute_metrics(confusion_from_predictions(p, t));
}

metrics_report evaluate_dataset(const model_params<float>& params, const token_dataset& data,
                                const feature_vocabulary& vocab, std::size_t sequence_length,
                                std::span<const std::uint8_t> subset) {
    if (data.vocab_digest != vocab.digest())
        throw incompatibility_error("dataset vocabulary digest " + data.vocab_digest +
                                    " does not match model vocabulary digest " + vocab.digest());
    if (data.labels.size() != data.flows.size())
        throw precondition_error("dataset has " + std::to_string(data.flows.size()) + " flows but " +
                                 std::to_string(data.labels.size()) + " labels");
    const auto preds = predict_flows(params, data.flows, vocab, sequence_length);
    std::vector<binary_label> labels;
    labels.reserve(preds.size());
    for (const auto& p : preds) labels.push_back(p.label);
    auto r = evaluate_predictions(labels, data.labels, subset);
    r.model = "sequence";
    r.dataset_id = data.vocab_digest;
    return r;
}

// Flows sharing a token tuple contribute identical gradients, so training
// runs over the distinct tuples weighted by their per-class counts.
context_free_baseline context_free_baseline::train(std::span<const discretized_flow> flows,
                                                   std::span<const binary_label> labels,
                                                   const feature_vocabulary& vocab, const baseline_options& options) {
    if (flows.size() != labels.size())
        throw precondition_error("baseline got " + std::to_string(flows.size()) + " flows but " +
                                 std::to_string(labels.size()) + " labels");
    if (flows.empty()) throw precondition_error("baseline needs at least one training flow");

    context_free_baseline model;
    const std::size_t F = vocab.feature_count();
    model.weights_.resize(F);
    for (std::size_t f = 0; f < F; ++f) model.weights_[f].assign(vocab.vocab_size(f), 0.0);

    struct tuple_count {
        discretized_flow flow;
        double benign = 0;
        double malicious = 0;
    };
    std::map<std::array<token_t, max_features>, tuple_count> grouped;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        if (flows[i].count != F)
            throw incompatibility_error("flow has " + std::to_string(flows[i].count) +
                                        " tokens but the vocabulary has " + std::to_string(F) + " features");
        auto& t = grouped[flows[i].tokens];
        t.flow = flows[i];
        (labels[i] == binary_label::malicious ? t.malicious : t.benign) += 1;
    }
    std::vector<tuple_count> rows;
    rows.reserve(grouped.size());
    double n_mal = 0;
    for (auto& [k, v] : grouped) {
        n_mal += v.malicious;
        rows.push_back(v);
    }
    const double n = static_cast<double>(flows.size());
    if (n_mal == 0 || n_mal == n)
        model.warnings_.push_back(std::string("degenerate baseline: training data holds only ") +
                                  (n_mal == 0 ? "benign" : "malicious") + " flows");

    std::vector<std::vector<double>> grad(F);
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        for (std::size_t f = 0; f < F; ++f) grad[f].assign(model.weights_[f].size(), 0.0);
        double grad_bias = 0;
        for (const auto& r : rows) {
            double z = model.bias_;
            for (std::size_t f = 0; f < F; ++f) z += model.weights_[f][r.flow.tokens[f]];
            const double p = 1.0 / (1.0 + std::exp(-z));
            // d/dz of the summed cross-entropy over this tuple's flows.
            const double g = ((r.benign + r.malicious) * p - r.malicious) / n;
            grad_bias += g;
            for (std::size_t f = 0; f < F; ++f) grad[f][r.flow.tokens[f]] += g;
        }
        double largest = std::abs(grad_bias);
        for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t t = 0; t < grad[f].size(); ++t) {
                grad[f][t] += options.l2 * model.weights_[f][t];
                largest = std::max(largest, std::abs(grad[f][t]));
            }
        }
        model.iterations_ = it + 1;
        if (largest < options.tolerance) break;
        model.bias_ -= options.learning_rate * grad_bias;
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t t = 0; t < grad[f].size(); ++t) model.weights_[f][t] -= options.learning_rate * grad[f][t];
    }
    return model;
}

double context_free_baseline::probability_malicious(const discretized_flow& flow) const {
    if (flow.count != weights_.size())
        throw incompatibility_error("flow has " + std::to_string(flow.count) + " tokens but the baseline expects " +
                                    std::to_string(weights_.size()));
    double z = bias_;
    for (std::size_t f = 0; f < weights_.size(); ++f) {
        if (flow.tokens[f] >= weights_[f].size())
            throw index_error("token " + std::to_string(flow.tokens[f]) + " out of range for feature " +
                              std::to_string(f));
        z += weights_[f][flow.tokens[f]];
    }
    return 1.0 / (1.0 + std::exp(-z));
}

binary_label context_free_baseline::predict(const discretized_flow& flow) const {
    const double p = probability_malicious(flow);
    return predict_label(1.0 - p, p);
}

std::vector<binary_label> context_free_baseline::predict(std::span<const discretized_flow> flows) const {
    std::vector<binary_label> out;
    out.reserve(flows.size());
    for (const auto& f : flows) out.push_back(predict(f));
    return out;
}

std::size_t context_free_baseline::parameter_count() const {
    std::size_t n = 1;
    for (const auto& w : weights_) n += w.size();
    return n;
}

metrics_report evaluate_baseline(const context_free_baseline& baseline, const token_dataset& data,
                                 std::span<const std::uint8_t> subset) {
    auto r = evaluate_predictions(baseline.predict(data.flows), data.labels, subset);
    r.model = "context-free baseline";
    r.dataset_id = data.vocab_digest;
    if (!baseline.warnings().empty()) r.notes = baseline.warnings().front();
    return r;
}

}  // namespace fsnids
