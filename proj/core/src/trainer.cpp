#include "fsnids/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fsnids/error.hpp"

namespace fsnids {

namespace {

using index = Eigen::Index;

template <class S>
matrix<S> column_sums(const matrix<S>& m) {
    return m.colwise().sum();
}

// Gradient of y = gain * xhat + bias with respect to the layer-norm input.
template <class S>
matrix<S> layer_norm_backward(const matrix<S>& dy, const matrix<S>& xhat, const std::vector<S>& inv_std,
                              const matrix<S>& gain) {
    const index n = dy.rows();
    const S width = static_cast<S>(dy.cols());
    matrix<S> dx(n, dy.cols());
    for (index r = 0; r < n; ++r) {
        const auto dxhat = (dy.row(r).array() * gain.row(0).array()).eval();
        const S mean_d = dxhat.sum() / width;
        const S mean_dx = (dxhat * xhat.row(r).array()).sum() / width;
        dx.row(r) = inv_std[static_cast<std::size_t>(r)] * (dxhat - mean_d - xhat.row(r).array() * mean_dx);
    }
    return dx;
}

// Propagates d(loss)/d(hidden) through the encoder stack and embeddings.
template <class S>
void backward_encoder(const model_params<S>& params, const forward_activations<S>& act, const token_batch& batch,
                      matrix<S> d, model_params<S>& grads, const stage_scope& scope) {
    const auto& cfg = params.config;
    const std::size_t heads = cfg.head_count;
    const index dh = static_cast<index>(cfg.head_dim());
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    const index len = static_cast<index>(act.length);
    const bool enc = scope.encoder;

    for (std::size_t li = cfg.layer_count; li-- > 0;) {
        const auto& c = act.layers[li];
        const auto& p = params.layers[li];
        auto& g = grads.layers[li];

        if (enc) {
            g.ffn_norm_gain = (d.array() * c.ffn_norm_xhat.array()).colwise().sum();
            g.ffn_norm_bias = column_sums(d);
        }
        const matrix<S> d_res2 = layer_norm_backward(d, c.ffn_norm_xhat, c.ffn_norm_inv_std, p.ffn_norm_gain);

        if (enc) {
            g.ffn_out_weight.noalias() = c.ffn_act.transpose() * d_res2;
            g.ffn_out_bias = column_sums(d_res2);
        }
        matrix<S> d_pre = d_res2 * p.ffn_out_weight.transpose();
        d_pre.array() *= c.ffn_pre.unaryExpr([](S v) { return gelu_derivative(v); }).array();
        if (enc) {
            g.ffn_in_weight.noalias() = c.attention_norm_out.transpose() * d_pre;
            g.ffn_in_bias = column_sums(d_pre);
        }
        matrix<S> d_h1 = d_res2;
        d_h1.noalias() += d_pre * p.ffn_in_weight.transpose();

        if (enc) {
            g.attention_norm_gain = (d_h1.array() * c.attention_norm_xhat.array()).colwise().sum();
            g.attention_norm_bias = column_sums(d_h1);
        }
        const matrix<S> d_res1 =
            layer_norm_backward(d_h1, c.attention_norm_xhat, c.attention_norm_inv_std, p.attention_norm_gain);

        if (enc) {
            g.output_weight.noalias() = c.context.transpose() * d_res1;
            g.output_bias = column_sums(d_res1);
        }
        const matrix<S> d_context = d_res1 * p.output_weight.transpose();

        matrix<S> d_query = matrix<S>::Zero(d.rows(), d.cols());
        matrix<S> d_key = matrix<S>::Zero(d.rows(), d.cols());
        matrix<S> d_value = matrix<S>::Zero(d.rows(), d.cols());
        for (std::size_t b = 0; b < act.batch; ++b) {
            const index r0 = static_cast<index>(b * act.length);
            for (std::size_t h = 0; h < heads; ++h) {
                const index c0 = static_cast<index>(h) * dh;
                const auto& a = c.attention[b * heads + h];
                const auto dc = d_context.block(r0, c0, len, dh);
                const matrix<S> d_attn = dc * c.value.block(r0, c0, len, dh).transpose();
                d_value.block(r0, c0, len, dh).noalias() = a.transpose() * dc;
                matrix<S> d_scores = a.array() * (d_attn.array().colwise() - (d_attn.array() * a.array()).rowwise().sum());
                d_scores *= scale;
                d_query.block(r0, c0, len, dh).noalias() = d_scores * c.key.block(r0, c0, len, dh);
                d_key.block(r0, c0, len, dh).noalias() = d_scores.transpose() * c.query.block(r0, c0, len, dh);
            }
        }
        if (enc) {
            g.query_weight.noalias() = c.input.transpose() * d_query;
            g.query_bias = column_sums(d_query);
            g.key_weight.noalias() = c.input.transpose() * d_key;
            g.key_bias = column_sums(d_key);
            g.value_weight.noalias() = c.input.transpose() * d_value;
            g.value_bias = column_sums(d_value);
        }
        d = d_res1;
        d.noalias() += d_query * p.query_weight.transpose();
        d.noalias() += d_key * p.key_weight.transpose();
        d.noalias() += d_value * p.value_weight.transpose();
    }

    if (scope.embedding) {
        const index width = static_cast<index>(cfg.per_feature_dim);
        for (std::size_t r = 0; r < batch.positions(); ++r)
            for (std::size_t f = 0; f < cfg.feature_count; ++f) {
                const token_t t = batch.tokens[r * batch.features + f];
                grads.embeddings[f].row(t) += d.block(static_cast<index>(r), static_cast<index>(f) * width, 1, width);
            }
    }
}

template <class S>
void check_gradients(const model_params<S>& grads) {
    grads.visit([](const std::string& name, param_group, const matrix<S>& m) {
        if (!m.allFinite()) throw numerical_fault("non-finite gradient in tensor " + name);
    });
}

}  // namespace

bool stage_scope::contains(param_group g) const {
    switch (g) {
        case param_group::embedding: return embedding;
        case param_group::encoder: return encoder;
        case param_group::mlm_head: return mlm_head;
        case param_group::classifier_head: return classifier_head;
    }
    return false;
}

template <class S>
gradient_result<S> backward(const model_params<S>& params, const masked_batch& batch, const stage_scope& scope,
                            loss_diagnostics* diag) {
    const auto& cfg = params.config;
    const std::size_t features = cfg.feature_count;
    gradient_result<S> out;
    out.gradients = params.zeros_like();

    std::vector<index> rows;
    for (std::size_t r = 0; r < batch.selection.size(); ++r)
        if (batch.selection[r]) rows.push_back(static_cast<index>(r));
    if (rows.empty()) {
        if (diag) ++diag->empty_selection;
        return out;
    }

    const auto act = forward(params, batch.inputs);
    const index dm = static_cast<index>(cfg.model_dim());
    const index n_sel = static_cast<index>(rows.size());
    matrix<S> hs(n_sel, dm);
    for (index i = 0; i < n_sel; ++i) hs.row(i) = act.hidden.row(rows[static_cast<std::size_t>(i)]);

    const S norm = S(1) / static_cast<S>(rows.size() * features);
    matrix<S> d_hs = matrix<S>::Zero(n_sel, dm);
    S total = 0;
    for (std::size_t f = 0; f < features; ++f) {
        matrix<S> logits = hs * params.mlm_weights[f];
        logits.rowwise() += params.mlm_biases[f].row(0);
        for (index i = 0; i < n_sel; ++i) {
            const auto row = static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]);
            const auto t = static_cast<index>(batch.targets[row * features + f]);
            if (t >= logits.cols()) throw index_error("backward: MLM target outside the real-token range");
            const S m = logits.row(i).maxCoeff();
            const S shifted_target = logits(i, t) - m;
            logits.row(i) = (logits.row(i).array() - m).exp();
            const S z = logits.row(i).sum();
            logits.row(i) /= z;
            total += std::log(z) - shifted_target;
            logits(i, t) -= S(1);
        }
        logits *= norm;  // now d(loss)/d(logits)
        if (scope.mlm_head) {
            out.gradients.mlm_weights[f].noalias() = hs.transpose() * logits;
            out.gradients.mlm_biases[f] = logits.colwise().sum();
        }
        if (scope.reaches_encoder()) d_hs.noalias() += logits * params.mlm_weights[f].transpose();
    }
    out.loss = total * norm;

    if (scope.reaches_encoder()) {
        matrix<S> d_hidden = matrix<S>::Zero(act.hidden.rows(), dm);
        for (index i = 0; i < n_sel; ++i) d_hidden.row(rows[static_cast<std::size_t>(i)]) = d_hs.row(i);
        backward_encoder(params, act, batch.inputs, std::move(d_hidden), out.gradients, scope);
    }
    check_gradients(out.gradients);
    return out;
}

template <class S>
gradient_result<S> backward(const model_params<S>& params, const labeled_batch& batch, const stage_scope& scope) {
    gradient_result<S> out;
    out.gradients = params.zeros_like();
    const auto act = forward(params, batch.inputs);
    matrix<S> d_logits = classifier_logits(params, act.hidden);
    const index n = d_logits.rows();
    if (batch.labels.size() != static_cast<std::size_t>(n))
        throw precondition_error("backward: labels do not match batch positions");

    std::size_t counted = 0;
    for (index r = 0; r < n; ++r) counted += batch.inputs.attention[static_cast<std::size_t>(r)] ? 1 : 0;
    if (counted == 0) throw precondition_error("backward: batch has no non-PAD positions");
    const S norm = S(1) / static_cast<S>(counted);

    S total = 0;
    for (index r = 0; r < n; ++r) {
        if (!batch.inputs.attention[static_cast<std::size_t>(r)]) {
            d_logits.row(r).setZero();
            continue;
        }
        const index y = batch.labels[static_cast<std::size_t>(r)] == binary_label::malicious ? 1 : 0;
        const S m = d_logits.row(r).maxCoeff();
        const S shifted_target = d_logits(r, y) - m;
        d_logits.row(r) = (d_logits.row(r).array() - m).exp();
        const S z = d_logits.row(r).sum();
        d_logits.row(r) /= z;
        total += std::log(z) - shifted_target;
        d_logits(r, y) -= S(1);
        d_logits.row(r) *= norm;
    }
    out.loss = total * norm;

    if (scope.classifier_head) {
        out.gradients.classifier_weight.noalias() = act.hidden.transpose() * d_logits;
        out.gradients.classifier_bias = d_logits.colwise().sum();
    }
    if (scope.reaches_encoder())
        backward_encoder(params, act, batch.inputs, matrix<S>(d_logits * params.classifier_weight.transpose()),
                         out.gradients, scope);
    check_gradients(out.gradients);
    return out;
}

template <class S>
optimizer_state<S> optimizer_state<S>::for_params(const model_params<S>& params, const adam_hyper& hyper) {
    optimizer_state s;
    s.hyper = hyper;
    s.first_moment = params.zeros_like();
    s.second_moment = params.zeros_like();
    return s;
}

template <class S>
void adam_step(optimizer_state<S>& state, model_params<S>& params, const model_params<S>& gradients,
               const stage_scope& scope) {
    ++state.step;
    const auto& h = state.hyper;
    const double t = static_cast<double>(state.step);
    const S b1 = static_cast<S>(h.beta1);
    const S b2 = static_cast<S>(h.beta2);
    const S c1 = static_cast<S>(1.0 - std::pow(h.beta1, t));
    const S c2 = static_cast<S>(1.0 - std::pow(h.beta2, t));
    const S lr = static_cast<S>(h.learning_rate);
    const S eps = static_cast<S>(h.epsilon);

    std::vector<matrix<S>*> p, m, v;
    std::vector<const matrix<S>*> g;
    std::vector<param_group> groups;
    params.visit([&](const std::string&, param_group grp, matrix<S>& x) {
        p.push_back(&x);
        groups.push_back(grp);
    });
    gradients.visit([&](const std::string&, param_group, const matrix<S>& x) { g.push_back(&x); });
    state.first_moment.visit([&](const std::string&, param_group, matrix<S>& x) { m.push_back(&x); });
    state.second_moment.visit([&](const std::string&, param_group, matrix<S>& x) { v.push_back(&x); });
    if (g.size() != p.size() || m.size() != p.size())
        throw precondition_error("adam_step: gradient/optimizer state does not mirror parameters");

    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!scope.contains(groups[i])) continue;
        if (g[i]->rows() != p[i]->rows() || g[i]->cols() != p[i]->cols())
            throw precondition_error("adam_step: gradient shape mismatch");
        m[i]->array() = b1 * m[i]->array() + (S(1) - b1) * g[i]->array();
        v[i]->array() = b2 * v[i]->array() + (S(1) - b2) * g[i]->array().square();
        p[i]->array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps);
    }
}

std::size_t train_schedule::total_iterations() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.iterations;
    return n;
}

void train_schedule::validate() const {
    if (stages.empty()) throw config_error("schedule has no stages");
    for (const auto& s : stages)
        if (s.iterations == 0) throw config_error("schedule stage '" + s.name + "' has zero iterations");
}

train_schedule train_schedule::scaled(std::size_t pretrain, std::size_t head_only, std::size_t joint) {
    train_schedule s;
    s.stages = {{"mlm-pretrain", pretrain, stage_scope::pretrain(), loss_kind::mlm},
                {"head-only", head_only, stage_scope::head_only(), loss_kind::classification},
                {"joint", joint, stage_scope::joint(), loss_kind::classification}};
    s.validate();
    return s;
}

train_schedule train_schedule::paper() { return scaled(400, 1100, 400); }

void write_loss_trace(const std::filesystem::path& path, std::span<const loss_record> trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write " + path.string());
    out << "FSNIDS-TRACE v1\n";
    char buf[64];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof buf, "%.9g", r.loss);
        out << r.iteration << ' ' << r.stage << ' ' << buf << '\n';
    }
}

std::vector<loss_record> read_loss_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line) || line != "FSNIDS-TRACE v1") throw corruption_error(path.string() + ": not a loss trace");
    std::vector<loss_record> out;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        loss_record r;
        if (!(ss >> r.iteration >> r.stage >> r.loss)) throw corruption_error(path.string() + ": malformed trace line");
        out.push_back(r);
    }
    return out;
}

namespace {

// Cycles through whole-sequence batches, rebuilding the plan at each epoch.
class batch_cursor {
public:
    batch_cursor(std::size_t sequences, const training_options& options)
        : sequences_(sequences), options_(options) {
        rebuild();
    }

    std::span<const std::size_t> next() {
        if (position_ == plan_.size()) {
            ++epoch_;
            rebuild();
        }
        return plan_[position_++];
    }
    std::uint64_t epoch() const { return epoch_; }

private:
    void rebuild() {
        plan_ = make_batches(sequences_, options_.batch_size, options_.shuffle, options_.seed + epoch_);
        position_ = 0;
    }

    std::size_t sequences_;
    const training_options& options_;
    std::vector<std::vector<std::size_t>> plan_;
    std::size_t position_ = 0;
    std::uint64_t epoch_ = 0;
};

void run_classification_stage(model_params<float>& params, std::span<const flow_sequence> labeled,
                              const train_stage& stage, const training_options& options,
                              std::vector<loss_record>& trace) {
    auto state = optimizer_state<float>::for_params(params, options.adam);
    batch_cursor cursor(labeled.size(), options);
    for (std::size_t it = 0; it < stage.iterations; ++it) {
        const auto batch = assemble_labeled_batch(labeled, cursor.next());
        const auto result = backward(params, batch, stage.scope);
        adam_step(state, params, result.gradients, stage.scope);
        loss_record rec{it, stage.name, static_cast<double>(result.loss)};
        if (options.on_iteration) options.on_iteration(rec);
        trace.push_back(std::move(rec));
    }
}

}  // namespace

std::vector<loss_record> pretrain_mlm(model_params<float>& params, std::span<const flow_sequence> benign,
                                      const train_stage& stage, const feature_vocabulary& vocab,
                                      const training_options& options) {
    if (benign.empty()) throw precondition_error("pretrain_mlm: empty benign stream");
    if (stage.loss != loss_kind::mlm) throw config_error("pretrain_mlm: stage '" + stage.name + "' is not an MLM stage");
    for (const auto& s : benign)
        if (!s.labels.empty())
            for (const auto l : s.labels)
                if (l != binary_label::benign) throw precondition_error("pretrain_mlm: stream contains malicious flows");

    std::vector<loss_record> trace;
    auto state = optimizer_state<float>::for_params(params, options.adam);
    batch_cursor cursor(benign.size(), options);
    for (std::size_t it = 0; it < stage.iterations; ++it) {
        const auto indices = cursor.next();
        const auto batch = assemble_masked_batch(benign, indices, options.masking, vocab, cursor.epoch());
        const auto result = backward(params, batch, stage.scope);
        adam_step(state, params, result.gradients, stage.scope);
        loss_record rec{it, stage.name, static_cast<double>(result.loss)};
        if (options.on_iteration) options.on_iteration(rec);
        trace.push_back(std::move(rec));
    }
    return trace;
}

std::vector<loss_record> finetune_staged(model_params<float>& params, std::span<const flow_sequence> labeled,
                                         const train_schedule& schedule, const training_options& options) {
    schedule.validate();
    if (labeled.empty()) throw precondition_error("finetune_staged: empty labeled dataset");
    std::vector<const train_stage*> stages;
    for (const auto& s : schedule.stages)
        if (s.loss == loss_kind::classification) stages.push_back(&s);
    const bool has_head_only = !stages.empty() && !stages.front()->scope.reaches_encoder() &&
                               stages.front()->scope.classifier_head;
    const bool has_joint = stages.size() >= 2 && stages.back()->scope.reaches_encoder() &&
                           stages.back()->scope.classifier_head;
    if (!has_head_only) throw config_error("finetune_staged: schedule lacks a head-only classification stage");
    if (!has_joint) throw config_error("finetune_staged: schedule lacks a joint classification stage");

    reinit_classifier(params, options.seed ^ 0xC1A55F1E5ull);
    std::vector<loss_record> trace;
    for (const auto* stage : stages) {
        if (stage->scope.mlm_head) throw config_error("finetune_staged: MLM heads cannot train on classification loss");
        run_classification_stage(params, labeled, *stage, options, trace);
    }
    return trace;
}

#define FSNIDS_INSTANTIATE(S)                                                                                        \
    template gradient_result<S> backward<S>(const model_params<S>&, const masked_batch&, const stage_scope&,         \
                                            loss_diagnostics*);                                                      \
    template gradient_result<S> backward<S>(const model_params<S>&, const labeled_batch&, const stage_scope&);       \
    template struct optimizer_state<S>;                                                                              \
    template void adam_step<S>(optimizer_state<S>&, model_params<S>&, const model_params<S>&, const stage_scope&);

FSNIDS_INSTANTIATE(float)
FSNIDS_INSTANTIATE(double)

#undef FSNIDS_INSTANTIATE

}  // namespace fsnids
