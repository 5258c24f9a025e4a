#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fsnids/model.hpp"
#include "fsnids/sequence_builder.hpp"

namespace fsnids {

enum class loss_kind : std::uint8_t { mlm, classification };

// Which parameter groups a stage may change.
struct stage_scope {
    bool embedding = false;
    bool encoder = false;
    bool mlm_head = false;
    bool classifier_head = false;

    bool contains(param_group g) const;
    bool reaches_encoder() const { return embedding || encoder; }

    static stage_scope pretrain() { return {true, true, true, false}; }
    static stage_scope head_only() { return {false, false, false, true}; }
    static stage_scope joint() { return {true, true, false, true}; }
    static stage_scope everything() { return {true, true, true, true}; }

    bool operator==(const stage_scope&) const = default;
};

template <class S>
struct gradient_result {
    S loss = 0;
    model_params<S> gradients;
};

// Exact reverse-mode gradients of the batch loss. Tensors outside `scope`
// get zero gradients; a non-finite gradient raises numerical_fault naming
// the tensor.
template <class S>
gradient_result<S> backward(const model_params<S>& params, const masked_batch& batch, const stage_scope& scope,
                            loss_diagnostics* diag = nullptr);
template <class S>
gradient_result<S> backward(const model_params<S>& params, const labeled_batch& batch, const stage_scope& scope);

struct adam_hyper {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <class S>
struct optimizer_state {
    adam_hyper hyper;
    std::uint64_t step = 0;
    model_params<S> first_moment;
    model_params<S> second_moment;

    static optimizer_state for_params(const model_params<S>& params, const adam_hyper& hyper);
};

// One bias-corrected Adam update of the tensors inside `scope`.
template <class S>
void adam_step(optimizer_state<S>& state, model_params<S>& params, const model_params<S>& gradients,
               const stage_scope& scope = stage_scope::everything());

struct train_stage {
    std::string name;
    std::size_t iterations = 0;
    stage_scope scope;
    loss_kind loss = loss_kind::mlm;
};

struct train_schedule {
    std::vector<train_stage> stages;

    std::size_t total_iterations() const;
    void validate() const;

    // 400 MLM / 1100 head-only / 400 joint.
    static train_schedule paper();
    static train_schedule scaled(std::size_t pretrain, std::size_t head_only, std::size_t joint);
};

struct loss_record {
    std::size_t iteration = 0;
    std::string stage;
    double loss = 0;
};

void write_loss_trace(const std::filesystem::path& path, std::span<const loss_record> trace);
std::vector<loss_record> read_loss_trace(const std::filesystem::path& path);

struct training_options {
    std::size_t batch_size = 32;
    adam_hyper adam;
    masking_policy masking;
    // Sequence-level shuffling between epochs; flows inside a sequence keep
    // their order either way.
    bool shuffle = false;
    std::uint64_t seed = 0;
    std::function<void(const loss_record&)> on_iteration;
};

// Runs stage.iterations steps of mask -> forward -> MLM loss -> backward ->
// Adam over unshuffled benign sequences, cycling through them as needed.
std::vector<loss_record> pretrain_mlm(model_params<float>& params, std::span<const flow_sequence> benign,
                                      const train_stage& stage, const feature_vocabulary& vocab,
                                      const training_options& options);

// Re-draws the classifier head, then runs the schedule's classification
// stages in order (head-only, then joint). Optimizer state resets at each
// stage boundary.
std::vector<loss_record> finetune_staged(model_params<float>& params, std::span<const flow_sequence> labeled,
                                         const train_schedule& schedule, const training_options& options);

}  // namespace fsnids
