#include "fsnids/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "fsnids/digest.hpp"
#include "fsnids/error.hpp"

namespace fsnids {

namespace {

using json = nlohmann::json;

static_assert(sizeof(float) == 4);

json config_to_json(const model_config& c) {
    return {{"feature_count", c.feature_count}, {"per_feature_dim", c.per_feature_dim},
            {"layer_count", c.layer_count},     {"head_count", c.head_count},
            {"ffn_dim", c.ffn_dim},               {"vocab_sizes", c.vocab_sizes},
            {"real_token_counts", c.real_token_counts}, {"class_count", c.class_count}};
}

model_config config_from_json(const json& j) {
    model_config c;
    c.feature_count = j.at("feature_count").get<std::size_t>();
    c.per_feature_dim = j.at("per_feature_dim").get<std::size_t>();
    c.layer_count = j.at("layer_count").get<std::size_t>();
    c.head_count = j.at("head_count").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.vocab_sizes = j.at("vocab_sizes").get<std::vector<std::size_t>>();
    c.real_token_counts = j.at("real_token_counts").get<std::vector<std::size_t>>();
    c.class_count = j.at("class_count").get<std::size_t>();
    c.validate();
    return c;
}

void append_le(std::string& out, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>(bits & 0xffu));
        bits >>= 8;
    }
}

float read_le(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
    return std::bit_cast<float>(bits);
}

std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

std::filesystem::path vocabulary_path_for(const std::filesystem::path& checkpoint) {
    auto p = checkpoint;
    p += ".vocab";
    return p;
}

void save_checkpoint(const model_params<float>& params, checkpoint_manifest manifest,
                     const std::filesystem::path& path) {
    manifest.format_version = std::string(checkpoint_format);
    manifest.config = params.config;
    manifest.tensors.clear();

    std::string blob;
    blob.reserve(params.scalar_count() * 4);
    params.visit([&](const std::string& name, param_group, const matrix<float>& m) {
        manifest.tensors.push_back({name, {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                                    static_cast<std::uint64_t>(blob.size())});
        for (Eigen::Index i = 0; i < m.size(); ++i) append_le(blob, m.data()[i]);
    });

    json tensors = json::array();
    for (const auto& t : manifest.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
    const json j = {{"format", manifest.format_version},
                    {"config", config_to_json(manifest.config)},
                    {"profile", manifest.profile},
                    {"vocab_digest", manifest.vocab_digest},
                    {"tensors", tensors},
                    {"blob_bytes", blob.size()},
                    {"stages", manifest.stages},
                    {"seeds", manifest.seeds},
                    {"optimizer_reset_per_stage", manifest.optimizer_reset_per_stage}};
    const std::string text = j.dump(1);

    std::string file;
    file += manifest.format_version;
    file += '\n';
    file += "manifest_bytes=" + std::to_string(text.size()) + '\n';
    file += text;
    file += blob;
    const auto digest = sha256(as_bytes(file));
    file.append(reinterpret_cast<const char*>(digest.data()), digest.size());

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw config_error("cannot write " + tmp.string());
        out.write(file.data(), static_cast<std::streamsize>(file.size()));
        if (!out) throw error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

loaded_checkpoint load_checkpoint(const std::filesystem::path& path, const feature_vocabulary* expected_vocab,
                                  const std::optional<std::string>& expected_profile) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open checkpoint " + path.string());
    const std::string file{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const std::string where = path.string() + ": ";

    const auto first = file.find('\n');
    if (first == std::string::npos || file.compare(0, first, checkpoint_format) != 0)
        throw corruption_error(where + "not a " + std::string(checkpoint_format) + " file");
    const auto second = file.find('\n', first + 1);
    const std::string size_key = "manifest_bytes=";
    if (second == std::string::npos || file.compare(first + 1, size_key.size(), size_key) != 0)
        throw corruption_error(where + "missing manifest size");
    std::size_t manifest_bytes = 0;
    try {
        manifest_bytes = std::stoull(file.substr(first + 1 + size_key.size(), second - first - 1 - size_key.size()));
    } catch (const std::exception&) {
        throw corruption_error(where + "bad manifest size");
    }
    const std::size_t manifest_start = second + 1;
    if (file.size() < manifest_start + manifest_bytes + 32) throw corruption_error(where + "truncated file");

    const std::string_view body(file.data(), file.size() - 32);
    const auto digest = sha256(as_bytes(body));
    if (std::memcmp(digest.data(), file.data() + body.size(), 32) != 0)
        throw corruption_error(where + "checksum mismatch");

    json j;
    try {
        j = json::parse(file.substr(manifest_start, manifest_bytes));
    } catch (const json::exception& e) {
        throw corruption_error(where + "unreadable manifest: " + e.what());
    }

    loaded_checkpoint out;
    auto& m = out.manifest;
    try {
        m.format_version = j.at("format").get<std::string>();
        m.config = config_from_json(j.at("config"));
        m.profile = j.at("profile").get<std::string>();
        m.vocab_digest = j.at("vocab_digest").get<std::string>();
        for (const auto& t : j.at("tensors"))
            m.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>(),
                                 t.at("offset").get<std::uint64_t>()});
        m.stages = j.at("stages").get<std::vector<std::string>>();
        m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
        m.optimizer_reset_per_stage = j.at("optimizer_reset_per_stage").get<bool>();
    } catch (const json::exception& e) {
        throw corruption_error(where + "incomplete manifest: " + e.what());
    }

    if (expected_profile && *expected_profile != m.profile)
        throw incompatibility_error(where + "checkpoint profile '" + m.profile + "' does not match requested profile '" +
                                    *expected_profile + "'");
    if (expected_vocab && expected_vocab->digest() != m.vocab_digest)
        throw incompatibility_error(where + "vocabulary digest " + m.vocab_digest +
                                    " does not match supplied vocabulary " + expected_vocab->digest());

    const std::size_t blob_start = manifest_start + manifest_bytes;
    const std::size_t blob_bytes = body.size() - blob_start;
    if (j.value("blob_bytes", std::size_t{0}) != blob_bytes) throw corruption_error(where + "tensor blob size mismatch");

    out.params = init_params<float>(m.config, 0);
    std::size_t idx = 0;
    out.params.visit([&](const std::string& name, param_group, matrix<float>& t) {
        if (idx >= m.tensors.size()) throw corruption_error(where + "tensor directory is missing " + name);
        const auto& e = m.tensors[idx++];
        if (e.name != name || e.shape.size() != 2 || e.shape[0] != static_cast<std::size_t>(t.rows()) ||
            e.shape[1] != static_cast<std::size_t>(t.cols()))
            throw corruption_error(where + "tensor directory entry '" + e.name + "' does not match " + name);
        const std::size_t bytes = static_cast<std::size_t>(t.size()) * 4;
        if (e.offset + bytes > blob_bytes) throw corruption_error(where + "tensor " + name + " exceeds blob");
        const char* p = file.data() + blob_start + e.offset;
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = read_le(p + 4 * i);
    });
    if (idx != m.tensors.size()) throw corruption_error(where + "tensor directory lists unknown tensors");
    return out;
}

}  // namespace fsnids
