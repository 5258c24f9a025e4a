#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsnids/discretizer.hpp"
#include "fsnids/model.hpp"

namespace fsnids {

inline constexpr std::string_view checkpoint_format = "FSNIDS-CKPT v1";

struct tensor_entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset = 0;  // bytes from the start of the tensor blob

    bool operator==(const tensor_entry&) const = default;
};

struct checkpoint_manifest {
    std::string format_version{checkpoint_format};
    model_config config;
    std::string profile;
    std::string vocab_digest;
    std::vector<tensor_entry> tensors;
    // e.g. "mlm-pretrain:100"
    std::vector<std::string> stages;
    std::map<std::string, std::uint64_t> seeds;
    bool optimizer_reset_per_stage = true;

    bool operator==(const checkpoint_manifest&) const = default;
};

struct loaded_checkpoint {
    model_params<float> params;
    checkpoint_manifest manifest;
};

// Layout: format line, "manifest_bytes=N" line, N bytes of JSON manifest,
// the tensors as little-endian f32 in visit order, then the SHA-256 of all
// preceding bytes. The file is written under a temporary name and renamed
// into place. The tensor directory in `manifest` is filled in here.
void save_checkpoint(const model_params<float>& params, checkpoint_manifest manifest,
                     const std::filesystem::path& path);

// Throws corruption_error on truncation or checksum mismatch, and
// incompatibility_error when the vocabulary digest or profile differs from
// the expected ones.
loaded_checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const feature_vocabulary* expected_vocab = nullptr,
                                  const std::optional<std::string>& expected_profile = std::nullopt);

// Conventional location of the vocabulary manifest beside a checkpoint.
std::filesystem::path vocabulary_path_for(const std::filesystem::path& checkpoint);

}  // namespace fsnids
