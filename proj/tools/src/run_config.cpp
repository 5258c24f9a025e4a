#include "run_config.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "fsnids/error.hpp"

namespace fsnids::cli {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Walks an object, handing each member to `fn`; anything `fn` does not
// claim is an error so typos in config files do not pass silently.
template <class Fn>
void members(const json& obj, std::string_view where, Fn&& fn) {
    if (!obj.is_object()) throw config_error("config: \"" + std::string(where) + "\" must be an object");
    for (const auto& [key, value] : obj.items())
        if (!fn(key, value)) throw config_error("config: unknown key \"" + std::string(where) + "." + key + "\"");
}

template <class T>
T get(const json& v, std::string_view key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw config_error("config: bad value for \"" + std::string(key) + "\"");
    }
}

}  // namespace

run_config run_config::for_profile(std::string_view name) {
    run_config c;
    if (name == "desk") return c;
    if (name == "paper") {
        c.profile = "paper";
        c.per_feature_dim = 128;
        c.sequence_length = 128;
        c.test_sequence_length = 1024;
        c.batch_size = 512;
        c.learning_rate = 1e-5;
        c.stages = {400, 1100, 400};
        return c;
    }
    throw config_error("unknown profile \"" + std::string(name) + "\" (expected desk or paper)");
}

void run_config::apply(const json& doc) {
    members(doc, "", [&](const std::string& key, const json& v) {
        if (key == "profile") {
            // chosen by the loader before the profile defaults are built
            (void)get<std::string>(v, key);
        } else if (key == "model") {
            members(v, key, [&](const std::string& k, const json& x) {
                if (k == "per_feature_dim") per_feature_dim = get<std::size_t>(x, k);
                else if (k == "layers") layers = get<std::size_t>(x, k);
                else if (k == "heads") heads = get<std::size_t>(x, k);
                else if (k == "drop_feature") {
                    if (x.is_null()) drop_feature.reset();
                    else drop_feature = get<std::string>(x, k);
                } else return false;
                return true;
            });
        } else if (key == "train") {
            members(v, key, [&](const std::string& k, const json& x) {
                if (k == "sequence_length") sequence_length = get<std::size_t>(x, k);
                else if (k == "test_sequence_length") test_sequence_length = get<std::size_t>(x, k);
                else if (k == "batch_size") batch_size = get<std::size_t>(x, k);
                else if (k == "learning_rate") learning_rate = get<double>(x, k);
                else if (k == "shuffle") shuffle = get<bool>(x, k);
                else if (k == "stages") {
                    members(x, "train.stages", [&](const std::string& s, const json& n) {
                        if (s == "pretrain") stages.pretrain = get<std::size_t>(n, s);
                        else if (s == "head_only") stages.head_only = get<std::size_t>(n, s);
                        else if (s == "joint") stages.joint = get<std::size_t>(n, s);
                        else return false;
                        return true;
                    });
                } else return false;
                return true;
            });
        } else if (key == "masking") {
            members(v, key, [&](const std::string& k, const json& x) {
                if (k == "probability") masking.mask_probability = get<double>(x, k);
                else if (k == "replace") masking.replace_fraction = get<double>(x, k);
                else if (k == "random") masking.random_fraction = get<double>(x, k);
                else if (k == "keep") masking.keep_fraction = get<double>(x, k);
                else return false;
                return true;
            });
        } else if (key == "seeds") {
            members(v, key, [&](const std::string& k, const json& x) {
                if (k == "base") {
                    seed = get<std::uint64_t>(x, k);
                    return true;
                }
                for (const auto n : seed_names)
                    if (k == n) {
                        seed_overrides[k] = get<std::uint64_t>(x, k);
                        return true;
                    }
                return false;
            });
        } else if (key == "deterministic") {
            deterministic = get<bool>(v, key);
        } else if (key == "synth") {
            members(v, key, [&](const std::string& k, const json& x) {
                if (k == "flows") synth.flows = get<std::size_t>(x, k);
                else if (k == "ambiguous_fraction") synth.ambiguous_fraction = get<double>(x, k);
                else if (k == "port_offset") synth.port_offset = get<double>(x, k);
                else if (k == "byte_scale") synth.byte_scale = get<double>(x, k);
                else return false;
                return true;
            });
        } else {
            return false;
        }
        return true;
    });
}

json run_config::to_json() const {
    json seeds = json::object();
    if (seed) seeds["base"] = *seed;
    for (const auto& [k, v] : seed_overrides) seeds[k] = v;
    return {
        {"profile", profile},
        {"model",
         {{"per_feature_dim", per_feature_dim},
          {"layers", layers},
          {"heads", heads},
          {"drop_feature", drop_feature ? json(*drop_feature) : json(nullptr)}}},
        {"train",
         {{"sequence_length", sequence_length},
          {"test_sequence_length", test_sequence_length},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"shuffle", shuffle},
          {"stages", {{"pretrain", stages.pretrain}, {"head_only", stages.head_only}, {"joint", stages.joint}}}}},
        {"masking",
         {{"probability", masking.mask_probability},
          {"replace", masking.replace_fraction},
          {"random", masking.random_fraction},
          {"keep", masking.keep_fraction}}},
        {"seeds", seeds},
        {"deterministic", deterministic},
        {"synth",
         {{"flows", synth.flows},
          {"ambiguous_fraction", synth.ambiguous_fraction},
          {"port_offset", synth.port_offset},
          {"byte_scale", synth.byte_scale}}},
    };
}

void run_config::validate() const {
    if (per_feature_dim == 0) throw config_error("per_feature_dim must be positive");
    if (layers == 0 || heads == 0) throw config_error("layers and heads must be positive");
    if (sequence_length == 0 || test_sequence_length == 0) throw config_error("sequence lengths must be positive");
    if (batch_size == 0) throw config_error("batch_size must be positive");
    if (!(learning_rate > 0)) throw config_error("learning_rate must be positive");
    if (stages.pretrain == 0 || stages.head_only == 0 || stages.joint == 0)
        throw config_error("every training stage needs at least one iteration");
    masking.validate();
    model(vocabulary()).validate();
}

bool run_config::resolve_seed() {
    if (seed) return false;
    if (deterministic) {
        seed = 0;
        return false;
    }
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    return true;
}

std::uint64_t run_config::seed_for(std::string_view name) const {
    if (const auto it = seed_overrides.find(std::string(name)); it != seed_overrides.end()) return it->second;
    if (!seed) throw config_error("no base seed fixed");
    return splitmix64(*seed ^ fnv1a(name));
}

std::map<std::string, std::uint64_t> run_config::seed_table() const {
    std::map<std::string, std::uint64_t> out;
    if (seed) out["base"] = *seed;
    for (const auto n : seed_names) out[std::string(n)] = seed_for(n);
    return out;
}

feature_vocabulary run_config::vocabulary() const {
    if (drop_feature) return feature_vocabulary::without(feature_from_name(*drop_feature));
    return feature_vocabulary::standard();
}

model_config run_config::model(const feature_vocabulary& vocab) const {
    return model_config::for_vocabulary(vocab, per_feature_dim, layers, heads);
}

train_schedule run_config::schedule() const {
    return train_schedule::scaled(stages.pretrain, stages.head_only, stages.joint);
}

training_options run_config::training() const {
    training_options o;
    o.batch_size = batch_size;
    o.adam.learning_rate = learning_rate;
    o.masking = masking;
    o.masking.seed = seed_for("masking");
    o.shuffle = shuffle;
    o.seed = seed_for("batches");
    return o;
}

std::vector<std::string> run_config::paper_deviations() const {
    const auto ref = for_profile("paper");
    std::vector<std::string> out;
    auto check = [&](bool same, std::string what) {
        if (!same) out.push_back(std::move(what));
    };
    check(per_feature_dim == ref.per_feature_dim, "per_feature_dim " + std::to_string(per_feature_dim) + " != 128");
    check(layers == 1, "layers " + std::to_string(layers) + " != 1");
    check(heads == 1, "heads " + std::to_string(heads) + " != 1");
    check(sequence_length == ref.sequence_length, "sequence_length " + std::to_string(sequence_length) + " != 128");
    check(test_sequence_length == ref.test_sequence_length,
          "test_sequence_length " + std::to_string(test_sequence_length) + " != 1024");
    check(batch_size == ref.batch_size, "batch_size " + std::to_string(batch_size) + " != 512");
    std::ostringstream lr;
    lr << "learning_rate " << learning_rate << " != 1e-05";
    check(learning_rate == ref.learning_rate, lr.str());
    check(stages == ref.stages, "stages " + std::to_string(stages.pretrain) + "/" + std::to_string(stages.head_only) +
                                    "/" + std::to_string(stages.joint) + " != 400/1100/400");
    check(!shuffle, "sequence shuffling enabled");
    return out;
}

json read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config " + path.string());
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw config_error("config " + path.string() + ": " + e.what());
    }
}

}  // namespace fsnids::cli
