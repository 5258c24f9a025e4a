#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fsnids/discretizer.hpp"
#include "fsnids/flow_ingest.hpp"

namespace fsnids {

// A discretized, labeled flow stream in original order.
struct token_dataset {
    std::vector<discretized_flow> flows;
    std::vector<binary_label> labels;
    std::string vocab_digest;

    std::size_t size() const { return flows.size(); }
};

token_dataset discretize_dataset(const flow_dataset& data, const feature_vocabulary& vocab);

// Cache file: "FLOWSET v1" header, a few key=value lines, then one text line
// per flow holding its tokens followed by the binary label (0 benign, 1
// malicious).
void write_flowset(const std::filesystem::path& path, const token_dataset& data, std::size_t feature_count);
token_dataset read_flowset(const std::filesystem::path& path);

}  // namespace fsnids
