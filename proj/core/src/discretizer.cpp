#include "fsnids/discretizer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fsnids/digest.hpp"
#include "fsnids/error.hpp"

namespace fsnids {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr std::string_view manifest_header = "FSNIDS-VOCAB v1";

std::string format_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_manifest_real(std::string_view s) {
    if (s == "inf") return inf;
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw parse_error("vocabulary manifest: bad number '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string_view kind_name(bin_kind k) {
    switch (k) {
        case bin_kind::numeric: return "numeric";
        case bin_kind::categorical: return "categorical";
        case bin_kind::flag_set: return "flags";
    }
    return "numeric";
}

bin_kind kind_from_name(std::string_view s) {
    if (s == "numeric") return bin_kind::numeric;
    if (s == "categorical") return bin_kind::categorical;
    if (s == "flags") return bin_kind::flag_set;
    throw parse_error("vocabulary manifest: unknown feature kind '" + std::string(s) + "'");
}

}  // namespace

std::string_view feature_name(feature_id f) {
    switch (f) {
        case feature_id::duration: return "Duration";
        case feature_id::proto: return "Proto";
        case feature_id::src_pt: return "Src Pt";
        case feature_id::dst_pt: return "Dst Pt";
        case feature_id::packets: return "Packets";
        case feature_id::bytes: return "Bytes";
        case feature_id::flags: return "Flags";
    }
    return "?";
}

// Accepts the CSV column name or a lower-case form with '_' for the space
// ("Src Pt", "src_pt").
feature_id feature_from_name(std::string_view name) {
    auto fold = [](std::string_view s) {
        std::string out;
        for (char c : s) out += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return out;
    };
    for (const auto f : all_features)
        if (fold(feature_name(f)) == fold(name)) return f;
    throw config_error("unknown feature '" + std::string(name) + "'");
}

std::size_t bin_spec::real_token_count() const {
    switch (kind) {
        case bin_kind::numeric: return upper_bounds.size();
        case bin_kind::categorical: return categories.size() + 1;
        case bin_kind::flag_set: return 64;
    }
    return 0;
}

void bin_spec::validate() const {
    const std::string name(feature_name(feature));
    switch (kind) {
        case bin_kind::numeric:
            if (upper_bounds.empty()) throw config_error(name + ": no bins");
            if (!std::isinf(upper_bounds.back()) || upper_bounds.back() < 0)
                throw config_error(name + ": last upper bound must be +inf");
            for (std::size_t i = 1; i < upper_bounds.size(); ++i)
                if (!(upper_bounds[i - 1] < upper_bounds[i]))
                    throw config_error(name + ": upper bounds must be strictly ascending");
            break;
        case bin_kind::categorical: {
            if (categories.empty()) throw config_error(name + ": empty category list");
            auto sorted = categories;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                throw config_error(name + ": duplicate category");
            break;
        }
        case bin_kind::flag_set: break;
    }
}

std::vector<bin_spec> build_default_bins() {
    const std::vector<double> ports = {50, 60, 100, 400, 500, 40000, 60000, inf};
    return {
        {feature_id::duration, bin_kind::numeric, {0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.01, 0.04, 1, 10, 100, inf}, {}},
        {feature_id::proto, bin_kind::categorical, {}, {"TCP", "UDP", "GRE", "ICMP", "IGMP"}},
        {feature_id::src_pt, bin_kind::numeric, ports, {}},
        {feature_id::dst_pt, bin_kind::numeric, ports, {}},
        {feature_id::packets, bin_kind::numeric, {2, 3, 4, 5, 6, 7, 10, 20, inf}, {}},
        {feature_id::bytes, bin_kind::numeric, {50, 60, 70, 90, 100, 110, 200, 300, 400, 500, 700, 1000, 5000, inf}, {}},
        {feature_id::flags, bin_kind::flag_set, {}, {}},
    };
}

token_t discretize_value(const bin_spec& spec, double value) {
    if (spec.kind != bin_kind::numeric)
        throw config_error(std::string(feature_name(spec.feature)) + " is not a numeric feature");
    if (!(value >= 0))
        throw value_domain_error(std::string(feature_name(spec.feature)) + ": value " + format_real(value) +
                                 " outside the non-negative domain");
    const auto it = std::lower_bound(spec.upper_bounds.begin(), spec.upper_bounds.end(), value);
    return static_cast<token_t>(it - spec.upper_bounds.begin());
}

token_t discretize_category(const bin_spec& spec, std::string_view name) {
    if (spec.kind != bin_kind::categorical)
        throw config_error(std::string(feature_name(spec.feature)) + " is not a categorical feature");
    const auto it = std::find(spec.categories.begin(), spec.categories.end(), name);
    return static_cast<token_t>(it - spec.categories.begin());
}

feature_vocabulary::feature_vocabulary(std::vector<bin_spec> specs) : specs_(std::move(specs)) {
    if (specs_.empty() || specs_.size() > max_features)
        throw config_error("vocabulary must have 1.." + std::to_string(max_features) + " features");
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        specs_[i].validate();
        if (i > 0 && static_cast<int>(specs_[i].feature) <= static_cast<int>(specs_[i - 1].feature))
            throw config_error("vocabulary features must follow canonical order without repeats");
    }
}

feature_vocabulary feature_vocabulary::standard() { return feature_vocabulary(build_default_bins()); }

feature_vocabulary feature_vocabulary::without(feature_id dropped) {
    auto specs = build_default_bins();
    std::erase_if(specs, [&](const bin_spec& s) { return s.feature == dropped; });
    return feature_vocabulary(std::move(specs));
}

std::vector<std::size_t> feature_vocabulary::real_token_counts() const {
    std::vector<std::size_t> out;
    for (const auto& s : specs_) out.push_back(s.real_token_count());
    return out;
}

std::vector<std::size_t> feature_vocabulary::vocab_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& s : specs_) out.push_back(s.real_token_count() + 2);
    return out;
}

discretized_flow feature_vocabulary::discretize(const raw_flow_record& r) const {
    discretized_flow out;
    out.count = static_cast<std::uint8_t>(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        switch (s.feature) {
            case feature_id::duration: out.tokens[i] = discretize_value(s, r.duration); break;
            case feature_id::proto: out.tokens[i] = discretize_category(s, r.proto); break;
            case feature_id::src_pt: out.tokens[i] = discretize_value(s, r.src_pt); break;
            case feature_id::dst_pt: out.tokens[i] = discretize_value(s, r.dst_pt); break;
            case feature_id::packets: out.tokens[i] = discretize_value(s, static_cast<double>(r.packets)); break;
            case feature_id::bytes: out.tokens[i] = discretize_value(s, static_cast<double>(r.bytes)); break;
            case feature_id::flags: out.tokens[i] = static_cast<token_t>(r.flags.code()); break;
        }
    }
    return out;
}

discretized_flow feature_vocabulary::pad_flow() const {
    discretized_flow out;
    out.count = static_cast<std::uint8_t>(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) out.tokens[i] = pad_id(i);
    return out;
}

discretized_flow feature_vocabulary::mask_flow() const {
    discretized_flow out;
    out.count = static_cast<std::uint8_t>(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) out.tokens[i] = mask_id(i);
    return out;
}

std::string feature_vocabulary::manifest_text() const {
    std::ostringstream out;
    out << manifest_header << '\n';
    out << "feature_count=" << specs_.size() << '\n';
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& s = specs_[i];
        const std::string key = "feature." + std::to_string(i) + '.';
        out << key << "name=" << feature_name(s.feature) << '\n';
        out << key << "kind=" << kind_name(s.kind) << '\n';
        if (s.kind == bin_kind::numeric) {
            out << key << "bounds=";
            for (std::size_t b = 0; b < s.upper_bounds.size(); ++b)
                out << (b ? "," : "") << format_real(s.upper_bounds[b]);
            out << '\n';
        } else if (s.kind == bin_kind::categorical) {
            out << key << "categories=";
            for (std::size_t c = 0; c < s.categories.size(); ++c) out << (c ? "," : "") << s.categories[c];
            out << '\n';
        }
        out << key << "real_tokens=" << real_tokens(i) << '\n';
        out << key << "mask_id=" << mask_id(i) << '\n';
        out << key << "pad_id=" << pad_id(i) << '\n';
    }
    return out.str();
}

std::string feature_vocabulary::digest() const { return sha256_hex(manifest_text()); }

void feature_vocabulary::write_manifest(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write " + path.string());
    out << manifest_text();
    if (!out) throw error("write failed: " + path.string());
}

feature_vocabulary feature_vocabulary::read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open vocabulary manifest " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str());
}

feature_vocabulary feature_vocabulary::parse_manifest(std::string_view text) {
    auto lines = split(text, '\n');
    if (lines.empty() || lines.front() != manifest_header)
        throw parse_error("vocabulary manifest: missing '" + std::string(manifest_header) + "' header");
    std::map<std::string, std::string, std::less<>> kv;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto eq = lines[i].find('=');
        if (eq == std::string_view::npos) throw parse_error("vocabulary manifest: malformed line '" + std::string(lines[i]) + "'");
        kv.emplace(std::string(lines[i].substr(0, eq)), std::string(lines[i].substr(eq + 1)));
    }
    auto get = [&](const std::string& key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw parse_error("vocabulary manifest: missing key '" + key + "'");
        return it->second;
    };
    const auto count = std::stoul(get("feature_count"));
    std::vector<bin_spec> specs;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string key = "feature." + std::to_string(i) + '.';
        bin_spec s;
        s.feature = feature_from_name(get(key + "name"));
        s.kind = kind_from_name(get(key + "kind"));
        if (s.kind == bin_kind::numeric)
            for (const auto b : split(get(key + "bounds"), ',')) s.upper_bounds.push_back(parse_manifest_real(b));
        else if (s.kind == bin_kind::categorical)
            for (const auto c : split(get(key + "categories"), ',')) s.categories.emplace_back(c);
        specs.push_back(std::move(s));
    }
    feature_vocabulary vocab(std::move(specs));
    for (std::size_t i = 0; i < count; ++i) {
        const std::string key = "feature." + std::to_string(i) + '.';
        if (std::stoul(get(key + "real_tokens")) != vocab.real_tokens(i) ||
            std::stoul(get(key + "mask_id")) != vocab.mask_id(i) || std::stoul(get(key + "pad_id")) != vocab.pad_id(i))
            throw parse_error("vocabulary manifest: token ids inconsistent with bins for feature " + std::to_string(i));
    }
    return vocab;
}

}  // namespace fsnids
