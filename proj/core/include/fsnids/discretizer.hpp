#pragma once

#include <array>
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

using token_t = std::uint16_t;

// Canonical feature order. Token tuples follow this order, restricted to the
// features a vocabulary selects.
enum class feature_id : std::uint8_t { duration, proto, src_pt, dst_pt, packets, bytes, flags };

inline constexpr std::size_t max_features = 7;
inline constexpr std::array<feature_id, max_features> all_features = {
    feature_id::duration, feature_id::proto,  feature_id::src_pt, feature_id::dst_pt,
    feature_id::packets,  feature_id::bytes, feature_id::flags};

std::string_view feature_name(feature_id f);
feature_id feature_from_name(std::string_view name);

enum class bin_kind : std::uint8_t { numeric, categorical, flag_set };

struct bin_spec {
    feature_id feature = feature_id::duration;
    bin_kind kind = bin_kind::numeric;
    // numeric: inclusive upper bounds, strictly ascending, last is +inf
    std::vector<double> upper_bounds;
    // categorical: known names; index categories.size() is the OOV bucket
    std::vector<std::string> categories;

    std::size_t real_token_count() const;
    void validate() const;

    bool operator==(const bin_spec&) const = default;
};

// The fixed thresholds: Duration 12 bins, Proto 5 names + OOV, ports 8 bins
// each, Packets 9, Bytes 14, Flags 64 combinations.
std::vector<bin_spec> build_default_bins();

// Smallest i with value <= upper_bounds[i]. Throws value_domain_error for
// negative or NaN input.
token_t discretize_value(const bin_spec& spec, double value);
token_t discretize_category(const bin_spec& spec, std::string_view name);

struct discretized_flow {
    std::array<token_t, max_features> tokens{};
    std::uint8_t count = 0;

    std::span<const token_t> view() const { return {tokens.data(), count}; }
    token_t operator[](std::size_t i) const { return tokens[i]; }

    bool operator==(const discretized_flow&) const = default;
};

// Per-feature token spaces. For a feature with n real tokens, ids 0..n-1 are
// real, n is MASK and n+1 is PAD.
class feature_vocabulary {
public:
    explicit feature_vocabulary(std::vector<bin_spec> specs);

    // All seven features with the default bins.
    static feature_vocabulary standard();
    // Six features: the standard set without `dropped`.
    static feature_vocabulary without(feature_id dropped);

    std::size_t feature_count() const { return specs_.size(); }
    const bin_spec& spec(std::size_t f) const { return specs_[f]; }
    std::span<const bin_spec> specs() const { return specs_; }

    std::size_t real_tokens(std::size_t f) const { return specs_[f].real_token_count(); }
    std::size_t vocab_size(std::size_t f) const { return real_tokens(f) + 2; }
    token_t mask_id(std::size_t f) const { return static_cast<token_t>(real_tokens(f)); }
    token_t pad_id(std::size_t f) const { return static_cast<token_t>(real_tokens(f) + 1); }

    std::vector<std::size_t> real_token_counts() const;
    std::vector<std::size_t> vocab_sizes() const;

    discretized_flow discretize(const raw_flow_record& record) const;
    discretized_flow pad_flow() const;
    discretized_flow mask_flow() const;

    // Key-value manifest text and its SHA-256 hex digest.
    std::string manifest_text() const;
    std::string digest() const;

    void write_manifest(const std::filesystem::path& path) const;
    static feature_vocabulary read_manifest(const std::filesystem::path& path);
    static feature_vocabulary parse_manifest(std::string_view text);

    bool operator==(const feature_vocabulary& other) const { return specs_ == other.specs_; }

private:
    std::vector<bin_spec> specs_;
};

}  // namespace fsnids
