#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsnids {

enum class binary_label : std::uint8_t { benign = 0, malicious = 1 };

std::string_view to_string(binary_label label);

// TCP flags in NetFlow order U,A,P,R,S,F. bits[0] is URG, bits[5] is FIN.
struct tcp_flags {
    std::array<std::uint8_t, 6> bits{};

    // Integer code with URG as the most significant bit (0..63).
    unsigned code() const;
    static tcp_flags from_code(unsigned code);

    bool operator==(const tcp_flags&) const = default;
};

inline constexpr std::string_view flag_letters = "UAPRSF";

// Parses the six-character NetFlow flag column, e.g. ".AP.SF".
tcp_flags parse_flags(std::string_view text);
std::string format_flags(const tcp_flags& flags);

// Parses a CIDDS byte count, expanding the K/M/G magnitude suffixes.
std::uint64_t parse_byte_count(std::string_view text);

struct raw_flow_record {
    double duration = 0.0;
    std::string proto;
    double src_pt = 0.0;
    double dst_pt = 0.0;
    std::uint64_t packets = 0;
    std::uint64_t bytes = 0;
    tcp_flags flags;
    std::string label;
    std::optional<std::string> attack_type;
};

struct labeled_flow {
    raw_flow_record record;
    binary_label label = binary_label::benign;
};

struct label_stats {
    std::size_t unrecognized = 0;
};

// "normal" and "unknown" are benign, everything else is malicious. Labels
// outside the known CIDDS set are counted in stats when given.
binary_label map_label_binary(std::string_view label, label_stats* stats = nullptr);

struct flow_dataset {
    std::vector<labeled_flow> records;
    std::vector<std::string> sources;
    bool original_order = true;
    std::size_t data_rows = 0;
    std::size_t skipped_rows = 0;
    std::size_t unrecognized_labels = 0;

    std::size_t size() const { return records.size(); }
    std::size_t count(binary_label label) const;
};

// Reads a CIDDS-style NetFlow CSV. Required columns are resolved by name;
// other columns are ignored. With strict=false malformed rows are skipped
// and counted, with strict=true the first one aborts with parse_error.
flow_dataset parse_cidds_csv(const std::filesystem::path& path, bool strict);
flow_dataset parse_cidds_csv(std::istream& in, std::string_view source, bool strict);

// Concatenates datasets in argument order.
flow_dataset concat_datasets(std::span<const flow_dataset> parts);

// Keeps every malicious record and a uniform sample of benign records of the
// same size, preserving original relative order.
flow_dataset balance_dataset(const flow_dataset& data, std::uint64_t seed);

// Keeps only benign records; the survivors become adjacent.
flow_dataset filter_benign(const flow_dataset& data);

// Writes records in the CIDDS column layout (used by the synthetic corpus
// generator and fixtures).
void write_cidds_csv(std::ostream& out, std::span<const labeled_flow> records);

}  // namespace fsnids
