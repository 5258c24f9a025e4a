#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fsnids/discretizer.hpp"
#include "fsnids/sequence_builder.hpp"

namespace fsnids {

template <class S>
using matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct model_config {
    std::size_t feature_count = 7;
    std::size_t per_feature_dim = 16;
    std::size_t layer_count = 1;
    std::size_t head_count = 1;
    // 0 selects 4 * model_dim().
    std::size_t ffn_dim = 0;
    // Per feature, real tokens + MASK + PAD.
    std::vector<std::size_t> vocab_sizes;
    // Per feature, the MLM prediction width.
    std::vector<std::size_t> real_token_counts;
    std::size_t class_count = 2;

    std::size_t model_dim() const { return feature_count * per_feature_dim; }
    std::size_t ffn() const { return ffn_dim ? ffn_dim : 4 * model_dim(); }
    std::size_t head_dim() const { return model_dim() / head_count; }
    void validate() const;

    static model_config for_vocabulary(const feature_vocabulary& vocab, std::size_t per_feature_dim,
                                       std::size_t layer_count = 1, std::size_t head_count = 1);

    bool operator==(const model_config&) const = default;
};

enum class param_group : std::uint8_t { embedding, encoder, mlm_head, classifier_head };

std::string_view to_string(param_group g);

template <class S>
struct encoder_layer_params {
    matrix<S> query_weight, query_bias;
    matrix<S> key_weight, key_bias;
    matrix<S> value_weight, value_bias;
    matrix<S> output_weight, output_bias;
    matrix<S> attention_norm_gain, attention_norm_bias;
    matrix<S> ffn_in_weight, ffn_in_bias;
    matrix<S> ffn_out_weight, ffn_out_bias;
    matrix<S> ffn_norm_gain, ffn_norm_bias;
};

// All trainable tensors. Biases and norm parameters are 1 x n matrices so
// every tensor can be visited uniformly, in a fixed order, by the optimizer
// and the checkpoint writer.
template <class S>
struct model_params {
    model_config config;
    std::vector<matrix<S>> embeddings;  // vocab_f x d
    std::vector<encoder_layer_params<S>> layers;
    std::vector<matrix<S>> mlm_weights;  // D x real_f
    std::vector<matrix<S>> mlm_biases;   // 1 x real_f
    matrix<S> classifier_weight;         // D x class_count
    matrix<S> classifier_bias;           // 1 x class_count

    template <class Fn>
    void visit(Fn&& fn) {
        visit_impl(*this, fn);
    }
    template <class Fn>
    void visit(Fn&& fn) const {
        visit_impl(*this, fn);
    }

    // Same shapes, all zeros.
    model_params zeros_like() const;
    std::size_t tensor_count() const;
    std::size_t scalar_count() const;

    template <class T>
    model_params<T> cast() const;

private:
    template <class Self, class Fn>
    static void visit_impl(Self& self, Fn& fn);
};

template <class S>
template <class Self, class Fn>
void model_params<S>::visit_impl(Self& self, Fn& fn) {
    for (std::size_t f = 0; f < self.embeddings.size(); ++f)
        fn("embedding." + std::to_string(f), param_group::embedding, self.embeddings[f]);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
        auto& l = self.layers[i];
        const std::string p = "encoder." + std::to_string(i) + ".";
        fn(p + "attention.query.weight", param_group::encoder, l.query_weight);
        fn(p + "attention.query.bias", param_group::encoder, l.query_bias);
        fn(p + "attention.key.weight", param_group::encoder, l.key_weight);
        fn(p + "attention.key.bias", param_group::encoder, l.key_bias);
        fn(p + "attention.value.weight", param_group::encoder, l.value_weight);
        fn(p + "attention.value.bias", param_group::encoder, l.value_bias);
        fn(p + "attention.output.weight", param_group::encoder, l.output_weight);
        fn(p + "attention.output.bias", param_group::encoder, l.output_bias);
        fn(p + "attention_norm.gain", param_group::encoder, l.attention_norm_gain);
        fn(p + "attention_norm.bias", param_group::encoder, l.attention_norm_bias);
        fn(p + "ffn.in.weight", param_group::encoder, l.ffn_in_weight);
        fn(p + "ffn.in.bias", param_group::encoder, l.ffn_in_bias);
        fn(p + "ffn.out.weight", param_group::encoder, l.ffn_out_weight);
        fn(p + "ffn.out.bias", param_group::encoder, l.ffn_out_bias);
        fn(p + "ffn_norm.gain", param_group::encoder, l.ffn_norm_gain);
        fn(p + "ffn_norm.bias", param_group::encoder, l.ffn_norm_bias);
    }
    for (std::size_t f = 0; f < self.mlm_weights.size(); ++f) {
        fn("mlm_head." + std::to_string(f) + ".weight", param_group::mlm_head, self.mlm_weights[f]);
        fn("mlm_head." + std::to_string(f) + ".bias", param_group::mlm_head, self.mlm_biases[f]);
    }
    fn(std::string("classifier.weight"), param_group::classifier_head, self.classifier_weight);
    fn(std::string("classifier.bias"), param_group::classifier_head, self.classifier_bias);
}

template <class S>
template <class T>
model_params<T> model_params<S>::cast() const {
    model_params<T> out;
    out.config = config;
    out.embeddings.resize(embeddings.size());
    out.layers.resize(layers.size());
    out.mlm_weights.resize(mlm_weights.size());
    out.mlm_biases.resize(mlm_biases.size());
    std::vector<const matrix<S>*> src;
    visit([&](const std::string&, param_group, const matrix<S>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.visit([&](const std::string&, param_group, matrix<T>& m) { m = src[i++]->template cast<T>(); });
    return out;
}

// Truncated-normal weights (cut at two standard deviations, scaled so the
// resulting standard deviation is 0.02), zero biases, unit norm gains.
template <class S>
model_params<S> init_params(const model_config& config, std::uint64_t seed);

// Re-draws the classifier head only.
template <class S>
void reinit_classifier(model_params<S>& params, std::uint64_t seed);

template <class S>
struct layer_cache {
    matrix<S> input;
    matrix<S> query, key, value;
    // attention[b * head_count + h] is L x L.
    std::vector<matrix<S>> attention;
    matrix<S> context;
    matrix<S> attention_norm_xhat;
    std::vector<S> attention_norm_inv_std;
    matrix<S> attention_norm_out;
    matrix<S> ffn_pre;
    matrix<S> ffn_act;
    matrix<S> ffn_norm_xhat;
    std::vector<S> ffn_norm_inv_std;
};

// Everything the backward pass needs. Rows are positions b * length + l.
template <class S>
struct forward_activations {
    std::size_t batch = 0;
    std::size_t length = 0;
    matrix<S> embedded;  // e_flow, (B*L) x D
    std::vector<layer_cache<S>> layers;
    matrix<S> hidden;  // h_flow, (B*L) x D

    const matrix<S>& attention(std::size_t layer, std::size_t b, std::size_t head = 0) const;
};

// Concatenated per-feature lookups in feature order; no positional signal.
template <class S>
matrix<S> embed_flows(const model_params<S>& params, const token_batch& batch);

// Post-norm encoder stack. attention_mask has one entry per row of
// `embedded`; PAD keys are excluded from every softmax.
template <class S>
forward_activations<S> encoder_forward(const model_params<S>& params, const matrix<S>& embedded,
                                       std::span<const std::uint8_t> attention_mask, std::size_t batch,
                                       std::size_t length);

template <class S>
forward_activations<S> forward(const model_params<S>& params, const token_batch& batch);

// Per feature, (B*L) x real_f logits.
template <class S>
std::vector<matrix<S>> mlm_head_forward(const model_params<S>& params, const matrix<S>& hidden);

template <class S>
matrix<S> classifier_logits(const model_params<S>& params, const matrix<S>& hidden);

// Row-wise softmax of the classifier logits, (B*L) x 2.
template <class S>
matrix<S> classifier_head_forward(const model_params<S>& params, const matrix<S>& hidden);

// Argmax over (benign, malicious); ties go to malicious.
binary_label predict_label(double p_benign, double p_malicious);

struct loss_diagnostics {
    std::size_t empty_selection = 0;
};

// Mean cross-entropy over selected positions and all features.
template <class S>
S mlm_loss(std::span<const matrix<S>> logits, std::span<const token_t> targets,
           std::span<const std::uint8_t> selection, loss_diagnostics* diag = nullptr);

// Mean cross-entropy over non-PAD positions.
template <class S>
S classification_loss(const matrix<S>& probabilities, std::span<const binary_label> labels,
                      std::span<const std::uint8_t> attention_mask);

// Numerics shared with the backward pass.
template <class S>
S gelu(S x);
template <class S>
S gelu_derivative(S x);

inline constexpr double layer_norm_epsilon = 1e-12;

}  // namespace fsnids
