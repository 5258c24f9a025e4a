#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsnids/discretizer.hpp"
#include "fsnids/flowset.hpp"
#include "fsnids/model.hpp"

namespace fsnids {

// Malicious is the positive class.
struct confusion_counts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    confusion_counts& operator+=(const confusion_counts& o);
    bool operator==(const confusion_counts&) const = default;
};

confusion_counts confusion_from_predictions(std::span<const binary_label> predictions,
                                            std::span<const binary_label> labels);

// A metric whose denominator is zero is left empty (reported as undefined),
// never silently zero.
struct metrics_report {
    confusion_counts counts;
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::string model;
    std::string dataset_id;
    std::string checkpoint_id;
    std::string notes;
};

metrics_report compute_metrics(const confusion_counts& counts);

std::string to_json(const metrics_report& report);
metrics_report report_from_json(std::string_view text);

// Plain-text table with Accuracy / F1 / Recall / Precision columns.
std::string format_table(std::span<const metrics_report> reports);

struct flow_prediction {
    binary_label label = binary_label::malicious;
    float p_benign = 0.5f;
    float p_malicious = 0.5f;
};

// Chunks the stream at `sequence_length`, runs the encoder and classifier,
// and returns one prediction per input flow (PAD excluded), in input order.
std::vector<flow_prediction> predict_flows(const model_params<float>& params, std::span<const discretized_flow> flows,
                                           const feature_vocabulary& vocab, std::size_t sequence_length,
                                           std::size_t batch_size = 4);

// Metrics over every flow, or over the flows flagged in `subset` when it is
// non-empty. The dataset must carry `vocab`'s digest.
metrics_report evaluate_dataset(const model_params<float>& params, const token_dataset& data,
                                const feature_vocabulary& vocab, std::size_t sequence_length,
                                std::span<const std::uint8_t> subset = {});

metrics_report evaluate_predictions(std::span<const binary_label> predictions, std::span<const binary_label> labels,
                                    std::span<const std::uint8_t> subset = {});

struct baseline_options {
    std::size_t max_iterations = 5000;
    double learning_rate = 0.5;
    double l2 = 1e-4;
    // Stops when the largest gradient component falls below this.
    double tolerance = 1e-6;
};

// Two-class softmax regression over one-hot feature tokens of a single flow.
// It sees no neighbouring flows, so anything it cannot separate from one
// flow's tokens stays at chance.
class context_free_baseline {
public:
    static context_free_baseline train(std::span<const discretized_flow> flows, std::span<const binary_label> labels,
                                       const feature_vocabulary& vocab, const baseline_options& options = {});

    double probability_malicious(const discretized_flow& flow) const;
    binary_label predict(const discretized_flow& flow) const;
    std::vector<binary_label> predict(std::span<const discretized_flow> flows) const;

    std::size_t parameter_count() const;
    std::size_t iterations() const { return iterations_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    // Logit of malicious minus logit of benign, per feature and token.
    std::vector<std::vector<double>> weights_;
    double bias_ = 0.0;
    std::size_t iterations_ = 0;
    std::vector<std::string> warnings_;
};

metrics_report evaluate_baseline(const context_free_baseline& baseline, const token_dataset& data,
                                 std::span<const std::uint8_t> subset = {});

}  // namespace fsnids
