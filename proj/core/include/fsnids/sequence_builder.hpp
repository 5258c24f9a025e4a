#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fsnids/discretizer.hpp"
#include "fsnids/flow_ingest.hpp"

namespace fsnids {

// An ordered chunk of flows. Trailing PAD flows fill a final partial chunk.
struct flow_sequence {
    std::vector<discretized_flow> flows;
    // One per non-PAD flow; empty for unlabeled (pretraining) streams.
    std::vector<binary_label> labels;
    std::size_t pad_count = 0;
    // Offset of flows[0] within the source stream.
    std::size_t start = 0;

    std::size_t length() const { return flows.size(); }
    std::size_t real_count() const { return flows.size() - pad_count; }
};

// Consecutive non-overlapping chunks of `length` flows in input order. The
// last chunk is padded. labels, when non-empty, must align with flows.
std::vector<flow_sequence> chunk_sequences(std::span<const discretized_flow> flows, std::size_t length,
                                           const feature_vocabulary& vocab,
                                           std::span<const binary_label> labels = {});

struct masking_policy {
    double mask_probability = 0.15;
    double replace_fraction = 0.80;
    double random_fraction = 0.10;
    double keep_fraction = 0.10;
    std::uint64_t seed = 0;

    void validate() const;
};

// Dense model input: tokens[(b * length + l) * features + f].
struct token_batch {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::size_t features = 0;
    std::vector<token_t> tokens;
    // 1 for real flows, 0 for PAD.
    std::vector<std::uint8_t> attention;

    token_t at(std::size_t b, std::size_t l, std::size_t f) const { return tokens[(b * length + l) * features + f]; }
    bool is_real(std::size_t b, std::size_t l) const { return attention[b * length + l] != 0; }
    std::size_t positions() const { return batch * length; }
};

// MLM view of a batch. targets hold the original tokens of every position;
// only positions with selection set are scored.
struct masked_batch {
    token_batch inputs;
    std::vector<token_t> targets;
    std::vector<std::uint8_t> selection;

    std::size_t selected_count() const;
};

struct labeled_batch {
    token_batch inputs;
    // One per position; PAD entries are placeholders and never scored.
    std::vector<binary_label> labels;
};

// Whole-flow masking: every non-PAD flow is selected with mask_probability and
// all of its feature tokens are corrupted together (MASK, random real
// tokens, or left unchanged). Deterministic in (policy.seed, sequence_index).
masked_batch apply_mlm_mask(const flow_sequence& seq, const masking_policy& policy, const feature_vocabulary& vocab,
                            std::uint64_t sequence_index);

// Groups sequence indices into batches of at most batch_size. Shuffling
// permutes whole sequences only.
std::vector<std::vector<std::size_t>> make_batches(std::size_t sequence_count, std::size_t batch_size, bool shuffle,
                                                   std::uint64_t seed = 0);

token_batch assemble_batch(std::span<const flow_sequence> seqs, std::span<const std::size_t> indices);
labeled_batch assemble_labeled_batch(std::span<const flow_sequence> seqs, std::span<const std::size_t> indices);
masked_batch assemble_masked_batch(std::span<const flow_sequence> seqs, std::span<const std::size_t> indices,
                                   const masking_policy& policy, const feature_vocabulary& vocab,
                                   std::uint64_t round = 0);

}  // namespace fsnids
