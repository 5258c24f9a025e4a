#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fsnids/discretizer.hpp"
#include "fsnids/model.hpp"
#include "fsnids/sequence_builder.hpp"
#include "fsnids/trainer.hpp"

namespace fsnids::cli {

struct stage_counts {
    std::size_t pretrain = 0;
    std::size_t head_only = 0;
    std::size_t joint = 0;

    bool operator==(const stage_counts&) const = default;
};

struct synth_settings {
    std::size_t flows = 100000;
    double ambiguous_fraction = 0.5;
    double port_offset = 0;
    double byte_scale = 1;
};

// Everything a command needs. Built from a profile, then a config file, then
// command-line flags; later sources win.
struct run_config {
    std::string profile = "desk";

    std::size_t per_feature_dim = 16;
    std::size_t layers = 1;
    std::size_t heads = 1;
    std::optional<std::string> drop_feature;

    std::size_t sequence_length = 64;
    std::size_t test_sequence_length = 512;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    stage_counts stages{100, 200, 100};
    bool shuffle = false;

    masking_policy masking;

    std::optional<std::uint64_t> seed;
    std::map<std::string, std::uint64_t> seed_overrides;
    bool deterministic = false;

    synth_settings synth;

    static run_config for_profile(std::string_view name);

    // Merges a config document. Unknown keys are rejected.
    void apply(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    void validate() const;

    // Fixes the base seed: 0 in deterministic mode, otherwise fresh entropy.
    // Returns true when entropy was used.
    bool resolve_seed();
    // Named seed derived from the base seed unless overridden.
    std::uint64_t seed_for(std::string_view name) const;
    std::map<std::string, std::uint64_t> seed_table() const;

    feature_vocabulary vocabulary() const;
    model_config model(const feature_vocabulary& vocab) const;
    train_schedule schedule() const;
    training_options training() const;

    // Differences from the exact paper settings; empty when it matches.
    std::vector<std::string> paper_deviations() const;
};

inline constexpr std::array<std::string_view, 6> seed_names = {"model",   "masking", "batches",
                                                               "balance", "synth",   "subsample"};

nlohmann::json read_config_file(const std::filesystem::path& path);

}  // namespace fsnids::cli
