#include "fsnids/sequence_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fsnids/error.hpp"

namespace fsnids {

std::vector<flow_sequence> chunk_sequences(std::span<const discretized_flow> flows, std::size_t length,
                                           const feature_vocabulary& vocab, std::span<const binary_label> labels) {
    if (length == 0) throw precondition_error("chunk_sequences: sequence length must be >= 1");
    if (!labels.empty() && labels.size() != flows.size())
        throw precondition_error("chunk_sequences: labels do not align with flows");

    std::vector<flow_sequence> out;
    out.reserve((flows.size() + length - 1) / length);
    const auto pad = vocab.pad_flow();
    for (std::size_t start = 0; start < flows.size(); start += length) {
        const std::size_t n = std::min(length, flows.size() - start);
        flow_sequence seq;
        seq.start = start;
        seq.flows.assign(flows.begin() + static_cast<std::ptrdiff_t>(start),
                         flows.begin() + static_cast<std::ptrdiff_t>(start + n));
        if (!labels.empty())
            seq.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                              labels.begin() + static_cast<std::ptrdiff_t>(start + n));
        seq.pad_count = length - n;
        seq.flows.resize(length, pad);
        out.push_back(std::move(seq));
    }
    return out;
}

void masking_policy::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(mask_probability) || !in_unit(replace_fraction) || !in_unit(random_fraction) ||
        !in_unit(keep_fraction))
        throw config_error("masking policy: probabilities must lie in [0, 1]");
    if (std::abs(replace_fraction + random_fraction + keep_fraction - 1.0) > 1e-9)
        throw config_error("masking policy: replace + random + keep fractions must sum to 1");
}

std::size_t masked_batch::selected_count() const {
    return static_cast<std::size_t>(std::count(selection.begin(), selection.end(), std::uint8_t{1}));
}

masked_batch apply_mlm_mask(const flow_sequence& seq, const masking_policy& policy, const feature_vocabulary& vocab,
                            std::uint64_t sequence_index) {
    policy.validate();
    if (seq.real_count() == 0) throw precondition_error("apply_mlm_mask: sequence has no real flows");
    const std::size_t features = vocab.feature_count();
    const std::size_t length = seq.length();

    std::seed_seq seeds{static_cast<std::uint32_t>(policy.seed), static_cast<std::uint32_t>(policy.seed >> 32),
                        static_cast<std::uint32_t>(sequence_index), static_cast<std::uint32_t>(sequence_index >> 32)};
    std::mt19937_64 rng(seeds);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    masked_batch out;
    out.inputs.batch = 1;
    out.inputs.length = length;
    out.inputs.features = features;
    out.inputs.tokens.resize(length * features);
    out.inputs.attention.resize(length);
    out.targets.resize(length * features);
    out.selection.assign(length, 0);

    for (std::size_t l = 0; l < length; ++l) {
        const auto& flow = seq.flows[l];
        const bool real = l < seq.real_count();
        out.inputs.attention[l] = real ? 1 : 0;
        for (std::size_t f = 0; f < features; ++f) {
            out.inputs.tokens[l * features + f] = flow.tokens[f];
            out.targets[l * features + f] = flow.tokens[f];
        }
        if (!real || !(unit(rng) < policy.mask_probability)) continue;

        out.selection[l] = 1;
        const double branch = unit(rng);
        if (branch < policy.replace_fraction) {
            for (std::size_t f = 0; f < features; ++f) out.inputs.tokens[l * features + f] = vocab.mask_id(f);
        } else if (branch < policy.replace_fraction + policy.random_fraction) {
            for (std::size_t f = 0; f < features; ++f) {
                std::uniform_int_distribution<std::size_t> pick(0, vocab.real_tokens(f) - 1);
                out.inputs.tokens[l * features + f] = static_cast<token_t>(pick(rng));
            }
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t sequence_count, std::size_t batch_size, bool shuffle,
                                                   std::uint64_t seed) {
    if (batch_size == 0) throw precondition_error("make_batches: batch size must be >= 1");
    std::vector<std::size_t> order(sequence_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    return batches;
}

token_batch assemble_batch(std::span<const flow_sequence> seqs, std::span<const std::size_t> indices) {
    if (indices.empty()) throw precondition_error("assemble_batch: empty batch");
    token_batch batch;
    batch.batch = indices.size();
    batch.length = seqs[indices[0]].length();
    batch.features = seqs[indices[0]].flows.empty() ? 0 : seqs[indices[0]].flows[0].count;
    batch.tokens.reserve(batch.positions() * batch.features);
    batch.attention.reserve(batch.positions());
    for (const auto idx : indices) {
        const auto& seq = seqs[idx];
        if (seq.length() != batch.length) throw precondition_error("assemble_batch: sequences differ in length");
        for (std::size_t l = 0; l < seq.length(); ++l) {
            const auto& flow = seq.flows[l];
            batch.tokens.insert(batch.tokens.end(), flow.tokens.begin(), flow.tokens.begin() + batch.features);
            batch.attention.push_back(l < seq.real_count() ? 1 : 0);
        }
    }
    return batch;
}

labeled_batch assemble_labeled_batch(std::span<const flow_sequence> seqs, std::span<const std::size_t> indices) {
    labeled_batch out;
    out.inputs = assemble_batch(seqs, indices);
    out.labels.reserve(out.inputs.positions());
    for (const auto idx : indices) {
        const auto& seq = seqs[idx];
        if (seq.labels.size() != seq.real_count())
            throw precondition_error("assemble_labeled_batch: sequence " + std::to_string(idx) + " is unlabeled");
        out.labels.insert(out.labels.end(), seq.labels.begin(), seq.labels.end());
        out.labels.insert(out.labels.end(), seq.pad_count, binary_label::benign);
    }
    return out;
}

masked_batch assemble_masked_batch(std::span<const flow_sequence> seqs, std::span<const std::size_t> indices,
                                   const masking_policy& policy, const feature_vocabulary& vocab,
                                   std::uint64_t round) {
    if (indices.empty()) throw precondition_error("assemble_masked_batch: empty batch");
    masked_batch out;
    out.inputs.batch = indices.size();
    out.inputs.length = seqs[indices[0]].length();
    out.inputs.features = vocab.feature_count();
    for (const auto idx : indices) {
        if (seqs[idx].length() != out.inputs.length)
            throw precondition_error("assemble_masked_batch: sequences differ in length");
        const auto one = apply_mlm_mask(seqs[idx], policy, vocab, (round << 32) ^ idx);
        out.inputs.tokens.insert(out.inputs.tokens.end(), one.inputs.tokens.begin(), one.inputs.tokens.end());
        out.inputs.attention.insert(out.inputs.attention.end(), one.inputs.attention.begin(),
                                    one.inputs.attention.end());
        out.targets.insert(out.targets.end(), one.targets.begin(), one.targets.end());
        out.selection.insert(out.selection.end(), one.selection.begin(), one.selection.end());
    }
    return out;
}

}  // namespace fsnids
