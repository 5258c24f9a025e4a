#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsnids/flow_ingest.hpp"

namespace fsnids {

enum class pattern_kind : std::uint8_t { attack_burst, isolated_service, background_noise };

std::string_view to_string(pattern_kind k);
pattern_kind pattern_kind_from_string(std::string_view s);

struct value_range {
    double lo = 0;
    double hi = 0;
};

template <class T>
struct weighted {
    T value;
    double weight = 1.0;
};

// A family of flows. Each field lists weighted alternatives; numeric values
// are drawn uniformly inside the chosen range. Ports at or above 1024 on the
// client side are ephemeral.
struct flow_template {
    std::string name;
    std::vector<weighted<std::string>> proto;
    std::vector<weighted<value_range>> duration;
    std::vector<weighted<value_range>> src_port;
    std::vector<weighted<value_range>> dst_port;
    std::vector<weighted<value_range>> packets;
    std::vector<weighted<value_range>> bytes;
    std::vector<weighted<std::string>> flags;

    // First alternative of every field, range midpoints.
    raw_flow_record prototype() const;
};

struct pattern_spec {
    pattern_kind kind = pattern_kind::background_noise;
    std::size_t min_burst = 1;
    std::size_t max_burst = 1;
    bool port_rotation = false;
    flow_template feature_template;
    binary_label label = binary_label::benign;

    void validate() const;
};

struct domain_params {
    double port_offset = 0;
    double byte_scale = 1;
    // Ports below this are service ports and never shifted.
    double ephemeral_floor = 1024;

    bool is_identity() const { return port_offset == 0 && byte_scale == 1; }
};

// Shares of flows per pattern kind.
struct mix_weights {
    double attack_burst = 0.5;
    double isolated_service = 0.25;
    double background_noise = 0.25;
};

struct synth_config {
    std::size_t total_flows = 100000;
    // Share of flows drawn from templates that both classes use.
    double ambiguous_fraction = 0.5;
    mix_weights mix;
    std::uint64_t seed = 0;
    domain_params domain;
    // Attack bursts are grouped into campaigns and benign traffic into quiet
    // stretches; each stretch spans this many flows.
    std::size_t phase_min = 512;
    std::size_t phase_max = 2048;
    // Distinct token tuples shared by both classes.
    std::size_t shared_templates = 48;
    // Probability that a background or attack-only flow shows its class's
    // preferred value on each feature; 0.5 would make single flows
    // uninformative.
    double cue_strength = 0.7;
    // The same for the byte and ephemeral-port cues, which a domain shift
    // can move.
    double shifted_cue_strength = 0.75;

    void validate() const;

    // Half the flows malicious; ambiguous flows split evenly between
    // attack bursts and isolated services.
    static synth_config balanced(std::size_t total_flows, double ambiguous_fraction, std::uint64_t seed);
};

struct ground_truth {
    std::size_t index = 0;
    pattern_kind kind = pattern_kind::background_noise;
    binary_label label = binary_label::benign;
    bool ambiguous = false;
    std::uint32_t pattern = 0;
    // Burst or singleton occurrence id.
    std::uint64_t occurrence = 0;

    bool operator==(const ground_truth&) const = default;
};

struct synthetic_corpus {
    flow_dataset data;
    std::vector<ground_truth> truth;
    std::size_t clamped_values = 0;

    std::vector<std::uint8_t> ambiguous_mask() const;
};

// The built-in pattern library: ambiguous templates appear both as attack
// bursts and as isolated services; background and attack-only families are
// disjoint from them.
std::vector<pattern_spec> default_patterns(std::size_t shared_template_count = 48, double cue_strength = 0.7,
                                           double shifted_cue_strength = 0.75);

synthetic_corpus generate_corpus(const synth_config& config);
synthetic_corpus generate_corpus(const synth_config& config, std::span<const pattern_spec> patterns);

// Shifts ephemeral ports and scales byte counts; order, labels and ground
// truth are untouched. Values pushed out of range are clamped and counted.
synthetic_corpus shift_domain(const synthetic_corpus& corpus, const domain_params& params);

// Lengths of maximal runs sharing an occurrence id, for attack bursts.
std::vector<std::size_t> burst_lengths(std::span<const ground_truth> truth);

void write_ground_truth(std::ostream& out, std::span<const ground_truth> truth);
void write_ground_truth(const std::filesystem::path& path, std::span<const ground_truth> truth);
std::vector<ground_truth> read_ground_truth(const std::filesystem::path& path);

}  // namespace fsnids
