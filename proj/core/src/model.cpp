#include "fsnids/model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "fsnids/error.hpp"

namespace fsnids {

void model_config::validate() const {
    if (feature_count == 0 || feature_count > max_features)
        throw config_error("model: feature_count must be in 1.." + std::to_string(max_features));
    if (per_feature_dim == 0) throw config_error("model: per_feature_dim must be positive");
    if (layer_count == 0) throw config_error("model: layer_count must be positive");
    if (head_count == 0 || model_dim() % head_count != 0)
        throw config_error("model: model_dim " + std::to_string(model_dim()) + " not divisible by head_count " +
                           std::to_string(head_count));
    if (vocab_sizes.size() != feature_count || real_token_counts.size() != feature_count)
        throw config_error("model: per-feature vocabulary sizes do not match feature_count");
    for (std::size_t f = 0; f < feature_count; ++f)
        if (real_token_counts[f] == 0 || vocab_sizes[f] < real_token_counts[f] + 2)
            throw config_error("model: vocabulary of feature " + std::to_string(f) + " lacks MASK/PAD ids");
    if (class_count != 2) throw config_error("model: class_count must be 2");
}

model_config model_config::for_vocabulary(const feature_vocabulary& vocab, std::size_t per_feature_dim,
                                          std::size_t layer_count, std::size_t head_count) {
    model_config c;
    c.feature_count = vocab.feature_count();
    c.per_feature_dim = per_feature_dim;
    c.layer_count = layer_count;
    c.head_count = head_count;
    c.vocab_sizes = vocab.vocab_sizes();
    c.real_token_counts = vocab.real_token_counts();
    c.validate();
    return c;
}

std::string_view to_string(param_group g) {
    switch (g) {
        case param_group::embedding: return "embedding";
        case param_group::encoder: return "encoder";
        case param_group::mlm_head: return "mlm_head";
        case param_group::classifier_head: return "classifier_head";
    }
    return "?";
}

template <class S>
model_params<S> model_params<S>::zeros_like() const {
    model_params out = *this;
    out.visit([](const std::string&, param_group, matrix<S>& m) { m.setZero(); });
    return out;
}

template <class S>
std::size_t model_params<S>::tensor_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, param_group, const matrix<S>&) { ++n; });
    return n;
}

template <class S>
std::size_t model_params<S>::scalar_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, param_group, const matrix<S>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

namespace {

constexpr double init_std = 0.02;
// Standard deviation of a unit normal truncated to [-2, 2].
constexpr double truncated_unit_std = 0.87962566103423978;

template <class S>
void fill_truncated_normal(matrix<S>& m, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = init_std / truncated_unit_std;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double z = normal(rng);
        while (std::abs(z) > 2.0) z = normal(rng);
        m.data()[i] = static_cast<S>(z * scale);
    }
}

template <class S>
matrix<S> weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    matrix<S> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    fill_truncated_normal(m, rng);
    return m;
}

template <class S>
matrix<S> constant(std::size_t cols, S value) {
    return matrix<S>::Constant(1, static_cast<Eigen::Index>(cols), value);
}

using index = Eigen::Index;

template <class S>
void layer_norm(const matrix<S>& x, const matrix<S>& gain, const matrix<S>& bias, matrix<S>& xhat,
                std::vector<S>& inv_std, matrix<S>& out) {
    const index n = x.rows();
    const index d = x.cols();
    xhat.resize(n, d);
    out.resize(n, d);
    inv_std.resize(static_cast<std::size_t>(n));
    for (index r = 0; r < n; ++r) {
        const S mean = x.row(r).mean();
        const S var = (x.row(r).array() - mean).square().mean();
        const S is = S(1) / std::sqrt(var + static_cast<S>(layer_norm_epsilon));
        inv_std[static_cast<std::size_t>(r)] = is;
        xhat.row(r) = (x.row(r).array() - mean) * is;
        out.row(r) = xhat.row(r).array() * gain.row(0).array() + bias.row(0).array();
    }
}

template <class S>
void check_finite(const matrix<S>& m, std::size_t layer, const char* what) {
    if (!m.allFinite())
        throw numerical_fault("non-finite activation in encoder layer " + std::to_string(layer) + " (" + what + ")");
}

}  // namespace

template <class S>
model_params<S> init_params(const model_config& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = config.per_feature_dim;
    const std::size_t dm = config.model_dim();
    const std::size_t ff = config.ffn();

    model_params<S> p;
    p.config = config;
    for (std::size_t f = 0; f < config.feature_count; ++f) p.embeddings.push_back(weight<S>(config.vocab_sizes[f], d, rng));
    for (std::size_t i = 0; i < config.layer_count; ++i) {
        encoder_layer_params<S> l;
        l.query_weight = weight<S>(dm, dm, rng);
        l.query_bias = constant<S>(dm, 0);
        l.key_weight = weight<S>(dm, dm, rng);
        l.key_bias = constant<S>(dm, 0);
        l.value_weight = weight<S>(dm, dm, rng);
        l.value_bias = constant<S>(dm, 0);
        l.output_weight = weight<S>(dm, dm, rng);
        l.output_bias = constant<S>(dm, 0);
        l.attention_norm_gain = constant<S>(dm, 1);
        l.attention_norm_bias = constant<S>(dm, 0);
        l.ffn_in_weight = weight<S>(dm, ff, rng);
        l.ffn_in_bias = constant<S>(ff, 0);
        l.ffn_out_weight = weight<S>(ff, dm, rng);
        l.ffn_out_bias = constant<S>(dm, 0);
        l.ffn_norm_gain = constant<S>(dm, 1);
        l.ffn_norm_bias = constant<S>(dm, 0);
        p.layers.push_back(std::move(l));
    }
    for (std::size_t f = 0; f < config.feature_count; ++f) {
        p.mlm_weights.push_back(weight<S>(dm, config.real_token_counts[f], rng));
        p.mlm_biases.push_back(constant<S>(config.real_token_counts[f], 0));
    }
    p.classifier_weight = weight<S>(dm, config.class_count, rng);
    p.classifier_bias = constant<S>(config.class_count, 0);
    return p;
}

template <class S>
void reinit_classifier(model_params<S>& params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    fill_truncated_normal(params.classifier_weight, rng);
    params.classifier_bias.setZero();
}

template <class S>
const matrix<S>& forward_activations<S>::attention(std::size_t layer, std::size_t b, std::size_t head) const {
    const auto& l = layers.at(layer);
    const std::size_t heads = l.attention.size() / batch;
    return l.attention.at(b * heads + head);
}

template <class S>
matrix<S> embed_flows(const model_params<S>& params, const token_batch& batch) {
    const auto& cfg = params.config;
    if (batch.features != cfg.feature_count)
        throw index_error("embed_flows: batch has " + std::to_string(batch.features) + " features, model expects " +
                          std::to_string(cfg.feature_count));
    const std::size_t d = cfg.per_feature_dim;
    const std::size_t rows = batch.positions();
    matrix<S> out(static_cast<index>(rows), static_cast<index>(cfg.model_dim()));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t f = 0; f < cfg.feature_count; ++f) {
            const token_t t = batch.tokens[r * batch.features + f];
            if (t >= cfg.vocab_sizes[f])
                throw index_error("embed_flows: token " + std::to_string(t) + " out of range for feature " +
                                  std::to_string(f) + " (vocabulary " + std::to_string(cfg.vocab_sizes[f]) + ")");
            out.block(static_cast<index>(r), static_cast<index>(f * d), 1, static_cast<index>(d)) =
                params.embeddings[f].row(t);
        }
    }
    return out;
}

template <class S>
forward_activations<S> encoder_forward(const model_params<S>& params, const matrix<S>& embedded,
                                       std::span<const std::uint8_t> attention_mask, std::size_t batch,
                                       std::size_t length) {
    const auto& cfg = params.config;
    const index n = static_cast<index>(batch * length);
    const index dm = static_cast<index>(cfg.model_dim());
    if (embedded.rows() != n || embedded.cols() != dm || attention_mask.size() != batch * length)
        throw precondition_error("encoder_forward: input shape does not match batch x length x model_dim");
    for (std::size_t b = 0; b < batch; ++b) {
        bool any = false;
        for (std::size_t l = 0; l < length; ++l) any = any || attention_mask[b * length + l];
        if (!any) throw precondition_error("encoder_forward: sequence " + std::to_string(b) + " has no real flows");
    }

    const std::size_t heads = cfg.head_count;
    const index dh = static_cast<index>(cfg.head_dim());
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    const S neg_inf = -std::numeric_limits<S>::infinity();
    const index len = static_cast<index>(length);

    forward_activations<S> act;
    act.batch = batch;
    act.length = length;
    act.embedded = embedded;
    matrix<S> x = embedded;

    for (std::size_t li = 0; li < cfg.layer_count; ++li) {
        const auto& p = params.layers[li];
        layer_cache<S> c;
        c.input = x;
        c.query = x * p.query_weight;
        c.query.rowwise() += p.query_bias.row(0);
        c.key = x * p.key_weight;
        c.key.rowwise() += p.key_bias.row(0);
        c.value = x * p.value_weight;
        c.value.rowwise() += p.value_bias.row(0);

        c.context.resize(n, dm);
        c.attention.resize(batch * heads);
        for (std::size_t b = 0; b < batch; ++b) {
            const index r0 = static_cast<index>(b * length);
            for (std::size_t h = 0; h < heads; ++h) {
                const index c0 = static_cast<index>(h) * dh;
                auto q = c.query.block(r0, c0, len, dh);
                auto k = c.key.block(r0, c0, len, dh);
                auto v = c.value.block(r0, c0, len, dh);
                matrix<S> scores = (q * k.transpose()) * scale;
                for (index j = 0; j < len; ++j)
                    if (!attention_mask[b * length + static_cast<std::size_t>(j)]) scores.col(j).setConstant(neg_inf);
                for (index i = 0; i < len; ++i) {
                    const S m = scores.row(i).maxCoeff();
                    scores.row(i) = (scores.row(i).array() - m).exp();
                    scores.row(i) /= scores.row(i).sum();
                }
                c.context.block(r0, c0, len, dh) = scores * v;
                c.attention[b * heads + h] = std::move(scores);
            }
        }

        matrix<S> residual = x + c.context * p.output_weight;
        residual.rowwise() += p.output_bias.row(0);
        layer_norm(residual, p.attention_norm_gain, p.attention_norm_bias, c.attention_norm_xhat,
                   c.attention_norm_inv_std, c.attention_norm_out);

        c.ffn_pre = c.attention_norm_out * p.ffn_in_weight;
        c.ffn_pre.rowwise() += p.ffn_in_bias.row(0);
        c.ffn_act = c.ffn_pre.unaryExpr([](S v) { return gelu(v); });
        residual = c.attention_norm_out + c.ffn_act * p.ffn_out_weight;
        residual.rowwise() += p.ffn_out_bias.row(0);
        layer_norm(residual, p.ffn_norm_gain, p.ffn_norm_bias, c.ffn_norm_xhat, c.ffn_norm_inv_std, x);

        check_finite(x, li, "output");
        act.layers.push_back(std::move(c));
    }
    act.hidden = std::move(x);
    return act;
}

template <class S>
forward_activations<S> forward(const model_params<S>& params, const token_batch& batch) {
    return encoder_forward(params, embed_flows(params, batch), batch.attention, batch.batch, batch.length);
}

template <class S>
std::vector<matrix<S>> mlm_head_forward(const model_params<S>& params, const matrix<S>& hidden) {
    std::vector<matrix<S>> logits;
    logits.reserve(params.mlm_weights.size());
    for (std::size_t f = 0; f < params.mlm_weights.size(); ++f) {
        matrix<S> l = hidden * params.mlm_weights[f];
        l.rowwise() += params.mlm_biases[f].row(0);
        logits.push_back(std::move(l));
    }
    return logits;
}

template <class S>
matrix<S> classifier_logits(const model_params<S>& params, const matrix<S>& hidden) {
    matrix<S> l = hidden * params.classifier_weight;
    l.rowwise() += params.classifier_bias.row(0);
    return l;
}

template <class S>
matrix<S> classifier_head_forward(const model_params<S>& params, const matrix<S>& hidden) {
    matrix<S> p = classifier_logits(params, hidden);
    for (index r = 0; r < p.rows(); ++r) {
        const S m = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

binary_label predict_label(double p_benign, double p_malicious) {
    return p_benign > p_malicious ? binary_label::benign : binary_label::malicious;
}

template <class S>
S mlm_loss(std::span<const matrix<S>> logits, std::span<const token_t> targets,
           std::span<const std::uint8_t> selection, loss_diagnostics* diag) {
    const std::size_t features = logits.size();
    const std::size_t rows = selection.size();
    if (targets.size() != rows * features) throw precondition_error("mlm_loss: targets do not match logits");
    std::size_t selected = 0;
    S total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!selection[r]) continue;
        ++selected;
        for (std::size_t f = 0; f < features; ++f) {
            const auto row = logits[f].row(static_cast<index>(r));
            const S m = row.maxCoeff();
            const S lse = m + std::log((row.array() - m).exp().sum());
            const token_t t = targets[r * features + f];
            if (t >= row.size()) throw index_error("mlm_loss: target token outside the real-token range");
            total += lse - row(t);
        }
    }
    if (selected == 0) {
        if (diag) ++diag->empty_selection;
        return S(0);
    }
    return total / static_cast<S>(selected * features);
}

template <class S>
S classification_loss(const matrix<S>& probabilities, std::span<const binary_label> labels,
                      std::span<const std::uint8_t> attention_mask) {
    const std::size_t rows = static_cast<std::size_t>(probabilities.rows());
    if (labels.size() != rows || attention_mask.size() != rows)
        throw precondition_error("classification_loss: labels/mask do not match probabilities");
    std::size_t counted = 0;
    S total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (!attention_mask[r]) continue;
        ++counted;
        const S p = probabilities(static_cast<index>(r), labels[r] == binary_label::malicious ? 1 : 0);
        total -= std::log(p);
    }
    if (counted == 0) throw precondition_error("classification_loss: no non-PAD positions");
    return total / static_cast<S>(counted);
}

template <class S>
S gelu(S x) {
    return S(0.5) * x * (S(1) + std::erf(x / std::sqrt(S(2))));
}

template <class S>
S gelu_derivative(S x) {
    const S cdf = S(0.5) * (S(1) + std::erf(x / std::sqrt(S(2))));
    const S pdf = std::exp(S(-0.5) * x * x) / std::sqrt(S(2) * static_cast<S>(M_PI));
    return cdf + x * pdf;
}

#define FSNIDS_INSTANTIATE(S)                                                                                        \
    template struct model_params<S>;                                                                                 \
    template struct forward_activations<S>;                                                                          \
    template model_params<S> init_params<S>(const model_config&, std::uint64_t);                                     \
    template void reinit_classifier<S>(model_params<S>&, std::uint64_t);                                             \
    template matrix<S> embed_flows<S>(const model_params<S>&, const token_batch&);                                   \
    template forward_activations<S> encoder_forward<S>(const model_params<S>&, const matrix<S>&,                     \
                                                       std::span<const std::uint8_t>, std::size_t, std::size_t);     \
    template forward_activations<S> forward<S>(const model_params<S>&, const token_batch&);                          \
    template std::vector<matrix<S>> mlm_head_forward<S>(const model_params<S>&, const matrix<S>&);                   \
    template matrix<S> classifier_logits<S>(const model_params<S>&, const matrix<S>&);                               \
    template matrix<S> classifier_head_forward<S>(const model_params<S>&, const matrix<S>&);                         \
    template S mlm_loss<S>(std::span<const matrix<S>>, std::span<const token_t>, std::span<const std::uint8_t>,      \
                           loss_diagnostics*);                                                                       \
    template S classification_loss<S>(const matrix<S>&, std::span<const binary_label>,                               \
                                      std::span<const std::uint8_t>);                                                \
    template S gelu<S>(S);                                                                                           \
    template S gelu_derivative<S>(S);

FSNIDS_INSTANTIATE(float)
FSNIDS_INSTANTIATE(double)

#undef FSNIDS_INSTANTIATE

}  // namespace fsnids
