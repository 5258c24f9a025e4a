#include "fsnids/flowset.hpp"

#include <charconv>
#include <fstream>
#include <string_view>

#include "fsnids/error.hpp"

namespace fsnids {

namespace {

constexpr std::string_view flowset_header = "FLOWSET v1";

std::string expect_key(std::istream& in, std::string_view key) {
    std::string line;
    if (!std::getline(in, line)) throw corruption_error("flowset: truncated header");
    const std::string prefix = std::string(key) + "=";
    if (line.rfind(prefix, 0) != 0) throw corruption_error("flowset: expected '" + prefix + "'");
    return line.substr(prefix.size());
}

}  // namespace

token_dataset discretize_dataset(const flow_dataset& data, const feature_vocabulary& vocab) {
    token_dataset out;
    out.vocab_digest = vocab.digest();
    out.flows.reserve(data.size());
    out.labels.reserve(data.size());
    for (const auto& r : data.records) {
        out.flows.push_back(vocab.discretize(r.record));
        out.labels.push_back(r.label);
    }
    return out;
}

void write_flowset(const std::filesystem::path& path, const token_dataset& data, std::size_t feature_count) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write " + path.string());
    out << flowset_header << '\n'
        << "vocab_digest=" << data.vocab_digest << '\n'
        << "feature_count=" << feature_count << '\n'
        << "records=" << data.flows.size() << '\n';
    std::string line;
    for (std::size_t i = 0; i < data.flows.size(); ++i) {
        line.clear();
        for (std::size_t f = 0; f < feature_count; ++f) {
            line += std::to_string(data.flows[i].tokens[f]);
            line += ' ';
        }
        line += data.labels[i] == binary_label::malicious ? '1' : '0';
        line += '\n';
        out << line;
    }
    if (!out) throw error("write failed: " + path.string());
}

token_dataset read_flowset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open flowset " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != flowset_header)
        throw corruption_error(path.string() + ": missing '" + std::string(flowset_header) + "' header");
    token_dataset data;
    data.vocab_digest = expect_key(in, "vocab_digest");
    const auto features = std::stoul(expect_key(in, "feature_count"));
    const auto records = std::stoul(expect_key(in, "records"));
    if (features == 0 || features > max_features) throw corruption_error("flowset: bad feature count");
    data.flows.reserve(records);
    data.labels.reserve(records);
    for (std::size_t i = 0; i < records; ++i) {
        if (!std::getline(in, line)) throw corruption_error(path.string() + ": truncated at record " + std::to_string(i));
        discretized_flow flow;
        flow.count = static_cast<std::uint8_t>(features);
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (std::size_t f = 0; f <= features; ++f) {
            unsigned v = 0;
            const auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc{}) throw corruption_error(path.string() + ": malformed record " + std::to_string(i));
            p = next;
            if (p < end && *p == ' ') ++p;
            if (f < features)
                flow.tokens[f] = static_cast<token_t>(v);
            else if (v > 1)
                throw corruption_error(path.string() + ": bad label in record " + std::to_string(i));
            else
                data.labels.push_back(v ? binary_label::malicious : binary_label::benign);
        }
        data.flows.push_back(flow);
    }
    return data;
}

}  // namespace fsnids
