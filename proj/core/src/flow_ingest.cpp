#include "fsnids/flow_ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>

#include "fsnids/error.hpp"

namespace fsnids {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Splits one CSV line. Double-quoted fields may contain commas; CIDDS files do
// not use quoting but exported spreadsheets sometimes do.
std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    bool quoted = false;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || (line[i] == ',' && !quoted)) {
            auto field = trim(line.substr(start, i - start));
            if (field.size() >= 2 && field.front() == '"' && field.back() == '"')
                field = field.substr(1, field.size() - 2);
            fields.push_back(field);
            start = i + 1;
        } else if (line[i] == '"') {
            quoted = !quoted;
        }
    }
    return fields;
}

double parse_real(std::string_view text, const char* what) {
    text = trim(text);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw parse_error(std::string("invalid ") + what + " value '" + std::string(text) + "'");
    if (!std::isfinite(value)) throw parse_error(std::string("non-finite ") + what);
    return value;
}

std::uint64_t parse_count(std::string_view text, const char* what) {
    text = trim(text);
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw parse_error(std::string("invalid ") + what + " value '" + std::string(text) + "'");
    return value;
}

enum column : std::size_t { c_duration, c_proto, c_src_pt, c_dst_pt, c_packets, c_bytes, c_flags, c_class, c_required };

constexpr std::array<std::string_view, c_required> required_columns = {
    "Duration", "Proto", "Src Pt", "Dst Pt", "Packets", "Bytes", "Flags", "class"};

}  // namespace

std::string_view to_string(binary_label label) {
    return label == binary_label::benign ? "benign" : "malicious";
}

unsigned tcp_flags::code() const {
    unsigned c = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) c |= static_cast<unsigned>(bits[i] != 0) << (5 - i);
    return c;
}

tcp_flags tcp_flags::from_code(unsigned code) {
    tcp_flags f;
    for (std::size_t i = 0; i < 6; ++i) f.bits[i] = static_cast<std::uint8_t>((code >> (5 - i)) & 1u);
    return f;
}

tcp_flags parse_flags(std::string_view text) {
    if (text.size() != flag_letters.size())
        throw parse_error("flag string '" + std::string(text) + "' must have exactly 6 characters");
    tcp_flags flags;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '.') continue;
        if (text[i] != flag_letters[i])
            throw parse_error("unexpected flag character '" + std::string(1, text[i]) + "' at position " +
                              std::to_string(i) + " (expected '.' or '" + std::string(1, flag_letters[i]) + "')");
        flags.bits[i] = 1;
    }
    return flags;
}

std::string format_flags(const tcp_flags& flags) {
    std::string out(6, '.');
    for (std::size_t i = 0; i < 6; ++i)
        if (flags.bits[i]) out[i] = flag_letters[i];
    return out;
}

std::uint64_t parse_byte_count(std::string_view text) {
    text = trim(text);
    if (text.empty()) throw parse_error("empty byte count");
    double scale = 1.0;
    switch (text.back()) {
        case 'K': scale = 1e3; break;
        case 'M': scale = 1e6; break;
        case 'G': scale = 1e9; break;
        default: break;
    }
    if (scale != 1.0) {
        text.remove_suffix(1);
        const double mantissa = parse_real(text, "bytes");
        if (mantissa < 0) throw parse_error("negative byte count");
        return static_cast<std::uint64_t>(std::llround(mantissa * scale));
    }
    return parse_count(text, "bytes");
}

binary_label map_label_binary(std::string_view label, label_stats* stats) {
    label = trim(label);
    if (label == "normal" || label == "unknown") return binary_label::benign;
    static constexpr std::array<std::string_view, 7> known_malicious = {
        "suspicious", "dos", "portScan", "pingScan", "bruteForce", "scan", "attacker"};
    if (stats && std::find(known_malicious.begin(), known_malicious.end(), label) == known_malicious.end())
        ++stats->unrecognized;
    return binary_label::malicious;
}

std::size_t flow_dataset::count(binary_label label) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const labeled_flow& r) { return r.label == label; }));
}

flow_dataset parse_cidds_csv(std::istream& in, std::string_view source, bool strict) {
    flow_dataset data;
    data.sources.emplace_back(source);

    std::string line;
    if (!std::getline(in, line)) throw config_error(std::string(source) + ": missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    const auto header = split_csv(line);
    std::array<std::size_t, c_required> index{};
    for (std::size_t c = 0; c < c_required; ++c) {
        const auto it = std::find(header.begin(), header.end(), required_columns[c]);
        if (it == header.end())
            throw config_error(std::string(source) + ": missing required column \"" +
                               std::string(required_columns[c]) + "\"");
        index[c] = static_cast<std::size_t>(it - header.begin());
    }
    std::optional<std::size_t> attack_type_col;
    if (const auto it = std::find(header.begin(), header.end(), "attackType"); it != header.end())
        attack_type_col = static_cast<std::size_t>(it - header.begin());
    const std::size_t needed = *std::max_element(index.begin(), index.end()) + 1;

    label_stats stats;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++data.data_rows;
        try {
            const auto fields = split_csv(line);
            if (fields.size() < needed)
                throw parse_error("expected at least " + std::to_string(needed) + " fields, got " +
                                  std::to_string(fields.size()));
            labeled_flow flow;
            auto& r = flow.record;
            r.duration = parse_real(fields[index[c_duration]], "duration");
            r.proto = std::string(trim(fields[index[c_proto]]));
            r.src_pt = parse_real(fields[index[c_src_pt]], "src port");
            r.dst_pt = parse_real(fields[index[c_dst_pt]], "dst port");
            r.packets = parse_count(fields[index[c_packets]], "packets");
            r.bytes = parse_byte_count(fields[index[c_bytes]]);
            r.flags = parse_flags(trim(fields[index[c_flags]]));
            r.label = std::string(trim(fields[index[c_class]]));
            if (r.duration < 0 || r.src_pt < 0 || r.dst_pt < 0) throw parse_error("negative numeric field");
            if (r.proto.empty()) throw parse_error("empty protocol");
            if (r.label.empty()) throw parse_error("empty class label");
            if (attack_type_col && *attack_type_col < fields.size()) {
                const auto at = trim(fields[*attack_type_col]);
                if (!at.empty() && at != "---") r.attack_type = std::string(at);
            }
            flow.label = map_label_binary(r.label, &stats);
            data.records.push_back(std::move(flow));
        } catch (const parse_error& e) {
            if (strict)
                throw parse_error(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
            ++data.skipped_rows;
        }
    }
    data.unrecognized_labels = stats.unrecognized;
    return data;
}

flow_dataset parse_cidds_csv(const std::filesystem::path& path, bool strict) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open " + path.string());
    return parse_cidds_csv(in, path.string(), strict);
}

flow_dataset concat_datasets(std::span<const flow_dataset> parts) {
    flow_dataset out;
    for (const auto& p : parts) {
        out.records.insert(out.records.end(), p.records.begin(), p.records.end());
        out.sources.insert(out.sources.end(), p.sources.begin(), p.sources.end());
        out.original_order = out.original_order && p.original_order;
        out.data_rows += p.data_rows;
        out.skipped_rows += p.skipped_rows;
        out.unrecognized_labels += p.unrecognized_labels;
    }
    return out;
}

flow_dataset balance_dataset(const flow_dataset& data, std::uint64_t seed) {
    std::vector<std::size_t> benign;
    std::size_t malicious = 0;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        if (data.records[i].label == binary_label::benign)
            benign.push_back(i);
        else
            ++malicious;
    }
    if (benign.size() < malicious)
        throw precondition_error("balance_dataset: " + std::to_string(benign.size()) + " benign < " +
                                 std::to_string(malicious) + " malicious records");

    std::vector<std::size_t> kept;
    kept.reserve(malicious);
    std::mt19937_64 rng(seed);
    std::sample(benign.begin(), benign.end(), std::back_inserter(kept), malicious, rng);

    std::vector<std::uint8_t> keep(data.records.size(), 0);
    for (const auto i : kept) keep[i] = 1;

    flow_dataset out;
    out.sources = data.sources;
    out.original_order = data.original_order;
    out.records.reserve(2 * malicious);
    for (std::size_t i = 0; i < data.records.size(); ++i)
        if (keep[i] || data.records[i].label == binary_label::malicious) out.records.push_back(data.records[i]);
    out.data_rows = out.records.size();
    return out;
}

flow_dataset filter_benign(const flow_dataset& data) {
    flow_dataset out;
    out.sources = data.sources;
    out.original_order = data.original_order;
    std::copy_if(data.records.begin(), data.records.end(), std::back_inserter(out.records),
                 [](const labeled_flow& r) { return r.label == binary_label::benign; });
    out.data_rows = out.records.size();
    return out;
}

void write_cidds_csv(std::ostream& out, std::span<const labeled_flow> records) {
    out << "Date first seen,Duration,Proto,Src IP Addr,Src Pt,Dst IP Addr,Dst Pt,Packets,Bytes,Flows,Flags,Tos,"
           "class,attackType,attackID,attackDescription\n";
    char buf[64];
    auto real = [&](double v) -> std::string_view {
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return {buf, static_cast<std::size_t>(ptr - buf)};
    };
    for (const auto& f : records) {
        const auto& r = f.record;
        out << "1970-01-01 00:00:00.000," << real(r.duration) << ',' << r.proto << ",0.0.0.0," << real(r.src_pt)
            << ",0.0.0.0," << real(r.dst_pt) << ',' << r.packets << ',' << r.bytes << ",1," << format_flags(r.flags)
            << ",0," << r.label << ',' << r.attack_type.value_or("---") << ",---,---\n";
    }
}

}  // namespace fsnids
