#include "commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsnids/checkpoint.hpp"
#include "fsnids/digest.hpp"
#include "fsnids/evaluator.hpp"
#include "fsnids/flowset.hpp"
#include "fsnids/synthgen.hpp"
#include "fsnids/trainer.hpp"
#include "run_config.hpp"

namespace fsnids::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct common_options {
    std::optional<fs::path> config;
    std::optional<std::string> profile;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    fs::path out;
};

fs::path with_suffix(const fs::path& p, std::string_view suffix) {
    auto q = p;
    q += std::string(suffix);
    return q;
}

// Holds <out>.lock for the lifetime of a command.
class output_lock {
public:
    explicit output_lock(const fs::path& out) : path_(with_suffix(out, ".lock")) {
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST)
                throw error("output is locked by another run (remove " + path_.string() + " if that run is gone)");
            throw error("cannot create lock " + path_.string() + ": " + std::strerror(errno));
        }
        const auto pid = std::to_string(::getpid()) + "\n";
        (void)!::write(fd_, pid.data(), pid.size());
    }
    ~output_lock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    output_lock(const output_lock&) = delete;
    output_lock& operator=(const output_lock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

// Runs `fn` against a temporary name and renames the result into place.
template <class Fn>
void write_atomic(const fs::path& path, Fn&& fn) {
    const auto tmp = with_suffix(path, ".tmp");
    try {
        fn(tmp);
        fs::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_atomic(path, [&](const fs::path& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw error("cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw error("write failed: " + tmp.string());
    });
}

void require_file(const fs::path& path, std::string_view what) {
    if (!fs::is_regular_file(path)) throw missing_artifact_error("missing " + std::string(what) + ": " + path.string());
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

bool looks_like_flowset(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string first;
    std::getline(in, first);
    return first == "FLOWSET v1";
}

struct cache {
    token_dataset data;
    feature_vocabulary vocab;
};

cache load_cache(const fs::path& path, std::string_view what) {
    require_file(path, what);
    const auto vpath = vocabulary_path_for(path);
    require_file(vpath, "vocabulary manifest for " + path.string());
    auto vocab = feature_vocabulary::read_manifest(vpath);
    auto data = read_flowset(path);
    if (data.vocab_digest != vocab.digest())
        throw incompatibility_error("cache " + path.string() + " was built with a different vocabulary than " +
                                    vpath.string());
    return {std::move(data), std::move(vocab)};
}

loaded_checkpoint load_model(const fs::path& path, std::string_view what, const feature_vocabulary& vocab,
                             const run_config& cfg) {
    require_file(path, what);
    return load_checkpoint(path, &vocab, cfg.profile);
}

bool is_finetuned(const checkpoint_manifest& m) {
    for (const auto& s : m.stages)
        if (s.starts_with("joint:")) return true;
    return false;
}

void save_model(const model_params<float>& params, const checkpoint_manifest& manifest,
                const feature_vocabulary& vocab, std::span<const loss_record> trace, const fs::path& out) {
    save_checkpoint(params, manifest, out);
    write_atomic(vocabulary_path_for(out), [&](const fs::path& tmp) { vocab.write_manifest(tmp); });
    write_atomic(with_suffix(out, ".trace"), [&](const fs::path& tmp) { write_loss_trace(tmp, trace); });
}

// Benign flows of a stream; the survivors become adjacent.
std::vector<discretized_flow> benign_flows(const token_dataset& data) {
    std::vector<discretized_flow> out;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.labels[i] == binary_label::benign) out.push_back(data.flows[i]);
    return out;
}

std::function<void(const loss_record&)> progress(std::ostream& out, std::size_t total) {
    const std::size_t every = std::max<std::size_t>(1, total / 10);
    return [&out, every](const loss_record& r) {
        if ((r.iteration + 1) % every == 0)
            out << "  " << r.stage << " " << r.iteration + 1 << " loss " << std::setprecision(6) << r.loss << "\n";
    };
}

run_config build_config(const common_options& c) {
    json doc = c.config ? read_config_file(*c.config) : json::object();
    std::string profile = "desk";
    if (c.profile) profile = *c.profile;
    else if (doc.is_object() && doc.contains("profile") && doc["profile"].is_string())
        profile = doc["profile"].get<std::string>();
    auto cfg = run_config::for_profile(profile);
    cfg.apply(doc);
    if (c.seed) cfg.seed = *c.seed;
    if (c.deterministic) cfg.deterministic = true;
    return cfg;
}

void announce_seed(run_config& cfg, std::ostream& out) {
    if (cfg.resolve_seed()) out << "seed " << *cfg.seed << " (pass --seed to reproduce)\n";
}

// ---------------------------------------------------------------- ingest

struct ingest_options {
    std::vector<fs::path> inputs;
    bool strict = false;
    bool balance = false;
    bool benign_only = false;
    std::optional<std::string> drop_feature;
};

void cmd_ingest(const common_options& common, const ingest_options& o, std::ostream& out) {
    auto cfg = build_config(common);
    if (o.drop_feature) cfg.drop_feature = o.drop_feature;
    if (o.balance) announce_seed(cfg, out);
    const auto vocab = cfg.vocabulary();
    for (const auto& p : o.inputs) require_file(p, "input csv");
    output_lock lock(common.out);

    std::vector<flow_dataset> parts;
    for (const auto& p : o.inputs) parts.push_back(parse_cidds_csv(p, o.strict));
    auto data = concat_datasets(parts);
    if (o.balance) data = balance_dataset(data, cfg.seed_for("balance"));
    if (o.benign_only) data = filter_benign(data);
    const auto tokens = discretize_dataset(data, vocab);

    write_atomic(common.out, [&](const fs::path& tmp) { write_flowset(tmp, tokens, vocab.feature_count()); });
    write_atomic(vocabulary_path_for(common.out), [&](const fs::path& tmp) { vocab.write_manifest(tmp); });

    const auto benign = data.count(binary_label::benign);
    const auto malicious = data.count(binary_label::malicious);
    out << std::left << std::setw(12) << "" << std::right << std::setw(12) << "Records" << "\n"
        << std::left << std::setw(12) << "Benign" << std::right << std::setw(12) << benign << "\n"
        << std::left << std::setw(12) << "Malicious" << std::right << std::setw(12) << malicious << "\n"
        << std::left << std::setw(12) << "Total" << std::right << std::setw(12) << data.size() << "\n";
    if (data.skipped_rows) out << "skipped " << data.skipped_rows << " malformed rows\n";
    if (data.unrecognized_labels) out << "unrecognized labels: " << data.unrecognized_labels << " (mapped malicious)\n";
    out << "wrote " << common.out.string() << "\n";
}

// ---------------------------------------------------------------- dry run

json dry_run(run_config cfg, const fs::path& data_path, std::ostream& out) {
    cfg.validate();
    if (cfg.profile == "paper") {
        const auto dev = cfg.paper_deviations();
        if (!dev.empty()) {
            std::string msg = "the paper profile cannot be changed; it deviates in:";
            for (const auto& d : dev) msg += "\n  " + d;
            throw config_error(msg);
        }
    }
    require_file(data_path, "input data");

    token_dataset data;
    std::optional<feature_vocabulary> vocab;
    if (looks_like_flowset(data_path)) {
        auto c = load_cache(data_path, "input data");
        data = std::move(c.data);
        vocab.emplace(std::move(c.vocab));
    } else {
        vocab.emplace(cfg.vocabulary());
        data = discretize_dataset(parse_cidds_csv(data_path, false), *vocab);
    }
    if (data.size() == 0) throw precondition_error("no flows in " + data_path.string());

    // Contiguous 1% slice so sequences keep their original neighbours.
    const std::size_t n = data.size();
    const std::size_t m = std::max<std::size_t>(1, (n + 99) / 100);
    const std::size_t offset = cfg.seed_for("subsample") % (n - m + 1);
    const std::span<const discretized_flow> flows(data.flows.data() + offset, m);
    const std::span<const binary_label> labels(data.labels.data() + offset, m);

    std::vector<discretized_flow> benign;
    for (std::size_t i = 0; i < m; ++i)
        if (labels[i] == binary_label::benign) benign.push_back(flows[i]);
    // A contiguous slice can fall inside an attack campaign. The MLM probe
    // needs no labels, so it then runs on every flow of the slice.
    const bool benign_source = !benign.empty();
    if (!benign_source) {
        out << "  note: the slice holds no benign flows; the MLM probe uses all of its flows\n";
        benign.assign(flows.begin(), flows.end());
    }

    const auto L = cfg.sequence_length;
    const auto B = cfg.batch_size;
    const auto bseq = chunk_sequences(benign, L, *vocab);
    const auto lseq = chunk_sequences(flows, L, *vocab, labels);
    const auto opts = cfg.training();

    // Full-shape batches: B sequences of L flows, cycling when the slice is short.
    std::vector<std::size_t> bidx(B), lidx(B);
    for (std::size_t i = 0; i < B; ++i) {
        bidx[i] = i % bseq.size();
        lidx[i] = i % lseq.size();
    }
    const auto full_masked = assemble_masked_batch(bseq, bidx, opts.masking, *vocab);
    const auto full_labeled = assemble_labeled_batch(lseq, lidx);
    for (const auto* b : {&full_masked.inputs, &full_labeled.inputs})
        if (b->batch != B || b->length != L || b->features != vocab->feature_count())
            throw error("assembled batch has the wrong shape");

    // One optimizer step per stage on a single sequence.
    const auto schedule = cfg.schedule();
    schedule.validate();
    auto params = init_params<float>(cfg.model(*vocab), cfg.seed_for("model"));
    const std::vector<std::size_t> one{0};
    json stages = json::array();
    for (const auto& stage : schedule.stages) {
        auto state = optimizer_state<float>::for_params(params, opts.adam);
        float loss = 0;
        if (stage.loss == loss_kind::mlm) {
            const auto r = backward(params, assemble_masked_batch(bseq, one, opts.masking, *vocab), stage.scope);
            adam_step(state, params, r.gradients, stage.scope);
            loss = r.loss;
        } else {
            if (!stage.scope.reaches_encoder()) reinit_classifier(params, opts.seed);
            const auto r = backward(params, assemble_labeled_batch(lseq, one), stage.scope);
            adam_step(state, params, r.gradients, stage.scope);
            loss = r.loss;
        }
        if (!std::isfinite(loss)) throw numerical_fault("non-finite loss in stage " + stage.name);
        const double epochs = static_cast<double>(stage.iterations) * B /
                              static_cast<double>(stage.loss == loss_kind::mlm ? bseq.size() : lseq.size());
        stages.push_back({{"name", stage.name},
                          {"iterations", stage.iterations},
                          {"probe_loss", loss},
                          {"passes_over_subsample", epochs}});
        out << "  " << stage.name << ": " << stage.iterations << " iterations, probe loss " << loss << "\n";
    }

    const std::size_t probe = std::min(cfg.test_sequence_length, m);
    const auto preds = predict_flows(params, flows.first(probe), *vocab, cfg.test_sequence_length, 1);
    if (preds.size() != probe) throw error("prediction count mismatch at test length");

    return {{"status", "ok"},
            {"profile", cfg.profile},
            {"config", cfg.to_json()},
            {"data", data_path.string()},
            {"records", n},
            {"subsample",
             {{"offset", offset},
              {"records", m},
              {"benign", benign_source ? benign.size() : 0},
              {"mlm_probe_source", benign_source ? "benign" : "all"}}},
            {"sequences", {{"benign", bseq.size()}, {"labeled", lseq.size()}}},
            {"batch_shape", {B, L, vocab->feature_count()}},
            {"flows_per_iteration", B * L},
            {"total_iterations", schedule.total_iterations()},
            {"learning_rate", cfg.learning_rate},
            {"stages", stages},
            {"test_sequence_length", cfg.test_sequence_length},
            {"test_probe_flows", preds.size()},
            {"model_dim", params.config.model_dim()},
            {"parameters", params.scalar_count()}};
}

void run_dry(const common_options& common, const fs::path& data, std::ostream& out) {
    auto cfg = build_config(common);
    announce_seed(cfg, out);
    output_lock lock(common.out);
    out << "dry run, profile " << cfg.profile << "\n";
    const auto plan = dry_run(cfg, data, out);
    write_text_atomic(common.out, plan.dump(2) + "\n");
    out << "schedule and data plumbing ok; plan written to " << common.out.string() << "\n";
}

// ---------------------------------------------------------------- training

void cmd_pretrain(const common_options& common, const fs::path& data_path, std::ostream& out) {
    auto cfg = build_config(common);
    cfg.validate();
    announce_seed(cfg, out);
    auto [data, vocab] = load_cache(data_path, "benign cache");
    const auto benign = benign_flows(data);
    if (benign.empty()) throw precondition_error("no benign flows in " + data_path.string());
    output_lock lock(common.out);

    const auto seqs = chunk_sequences(benign, cfg.sequence_length, vocab);
    auto params = init_params<float>(cfg.model(vocab), cfg.seed_for("model"));
    auto opts = cfg.training();
    const auto schedule = cfg.schedule();
    opts.on_iteration = progress(out, schedule.stages[0].iterations);
    out << "pretraining on " << benign.size() << " benign flows (" << seqs.size() << " sequences)\n";
    const auto trace = pretrain_mlm(params, seqs, schedule.stages[0], vocab, opts);

    checkpoint_manifest m;
    m.config = params.config;
    m.profile = cfg.profile;
    m.vocab_digest = vocab.digest();
    m.stages = {schedule.stages[0].name + ":" + std::to_string(schedule.stages[0].iterations)};
    m.seeds = cfg.seed_table();
    save_model(params, m, vocab, trace, common.out);
    out << "wrote " << common.out.string() << "\n";
}

void cmd_finetune(const common_options& common, const fs::path& data_path, const fs::path& init,
                  std::ostream& out) {
    auto cfg = build_config(common);
    cfg.validate();
    announce_seed(cfg, out);
    require_file(init, "pretrain checkpoint");
    auto [data, vocab] = load_cache(data_path, "labeled cache");
    auto loaded = load_model(init, "pretrain checkpoint", vocab, cfg);
    if (is_finetuned(loaded.manifest))
        throw incompatibility_error(init.string() + " is already fine-tuned; pass the pretrain checkpoint");
    output_lock lock(common.out);

    const auto seqs = chunk_sequences(data.flows, cfg.sequence_length, vocab, data.labels);
    auto opts = cfg.training();
    const auto schedule = cfg.schedule();
    opts.on_iteration = progress(out, std::max(schedule.stages[1].iterations, schedule.stages[2].iterations));
    out << "fine-tuning on " << data.size() << " flows (" << seqs.size() << " sequences)\n";
    const auto trace = finetune_staged(loaded.params, seqs, schedule, opts);

    auto m = loaded.manifest;
    for (std::size_t i = 1; i < schedule.stages.size(); ++i)
        m.stages.push_back(schedule.stages[i].name + ":" + std::to_string(schedule.stages[i].iterations));
    for (const auto& [k, v] : cfg.seed_table()) m.seeds["finetune." + k] = v;
    save_model(loaded.params, m, vocab, trace, common.out);
    out << "wrote " << common.out.string() << "\n";
}

// ---------------------------------------------------------------- evaluate / predict

struct evaluate_options {
    fs::path data;
    fs::path model;
    std::optional<fs::path> truth;
    std::optional<fs::path> baseline;
};

void cmd_evaluate(const common_options& common, const evaluate_options& o, std::ostream& out) {
    auto cfg = build_config(common);
    cfg.validate();
    require_file(o.model, "fine-tuned checkpoint");
    auto [data, vocab] = load_cache(o.data, "test cache");
    auto loaded = load_model(o.model, "fine-tuned checkpoint", vocab, cfg);
    if (!is_finetuned(loaded.manifest)) throw incompatibility_error(o.model.string() + " has not been fine-tuned");

    std::vector<std::uint8_t> subset;
    if (o.truth) {
        require_file(*o.truth, "ground truth");
        const auto truth = read_ground_truth(*o.truth);
        if (truth.size() != data.size())
            throw incompatibility_error("ground truth has " + std::to_string(truth.size()) + " records, cache has " +
                                        std::to_string(data.size()));
        subset.resize(truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i) subset[i] = truth[i].ambiguous ? 1 : 0;
    }
    std::optional<cache> train;
    if (o.baseline) {
        train = load_cache(*o.baseline, "baseline training cache");
        if (train->data.vocab_digest != data.vocab_digest)
            throw incompatibility_error("baseline training cache uses a different vocabulary than the test cache");
    }
    output_lock lock(common.out);

    const std::string notes = "test_sequence_length=" + std::to_string(cfg.test_sequence_length) +
                              (o.truth ? "; subset=ambiguous" : "; subset=all");
    std::vector<metrics_report> reports;
    auto r = evaluate_dataset(loaded.params, data, vocab, cfg.test_sequence_length, subset);
    r.dataset_id = file_digest(o.data);
    r.checkpoint_id = file_digest(o.model);
    r.notes = notes;
    reports.push_back(r);
    write_text_atomic(common.out, to_json(r) + "\n");

    if (train) {
        const auto base = context_free_baseline::train(train->data.flows, train->data.labels, vocab);
        auto b = evaluate_baseline(base, data, subset);
        b.dataset_id = r.dataset_id;
        b.checkpoint_id = file_digest(*o.baseline);
        if (b.notes.empty()) b.notes = o.truth ? "subset=ambiguous" : "subset=all";
        reports.push_back(b);
        write_text_atomic(with_suffix(common.out, ".baseline.json"), to_json(b) + "\n");
    }
    out << format_table(reports);
    out << "wrote " << common.out.string() << "\n";
}

void cmd_predict(const common_options& common, const fs::path& input, const fs::path& model_path, bool strict,
                 std::ostream& out) {
    auto cfg = build_config(common);
    cfg.validate();
    require_file(model_path, "fine-tuned checkpoint");
    require_file(vocabulary_path_for(model_path), "vocabulary manifest for " + model_path.string());
    const auto vocab = feature_vocabulary::read_manifest(vocabulary_path_for(model_path));
    auto loaded = load_model(model_path, "fine-tuned checkpoint", vocab, cfg);
    if (!is_finetuned(loaded.manifest)) throw incompatibility_error(model_path.string() + " has not been fine-tuned");
    require_file(input, "input csv");
    const auto data = parse_cidds_csv(input, strict);
    output_lock lock(common.out);

    std::vector<discretized_flow> flows;
    flows.reserve(data.size());
    for (const auto& r : data.records) flows.push_back(vocab.discretize(r.record));
    const auto preds = predict_flows(loaded.params, flows, vocab, cfg.test_sequence_length);

    write_atomic(common.out, [&](const fs::path& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw error("cannot write " + tmp.string());
        f << "index,label,p_benign,p_malicious\n";
        char buf[96];
        for (std::size_t i = 0; i < preds.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.6f\n", i, std::string(to_string(preds[i].label)).c_str(),
                          preds[i].p_benign, preds[i].p_malicious);
            f << buf;
        }
        if (!f.flush()) throw error("write failed: " + tmp.string());
    });
    if (data.skipped_rows) out << "skipped " << data.skipped_rows << " malformed rows\n";
    out << "predicted " << preds.size() << " flows; wrote " << common.out.string() << "\n";
}

// ---------------------------------------------------------------- synth

struct synth_options {
    std::optional<std::size_t> flows;
    std::optional<double> ambiguous;
    std::optional<double> port_offset;
    std::optional<double> byte_scale;
};

void cmd_synth(const common_options& common, const synth_options& o, std::ostream& out) {
    auto cfg = build_config(common);
    if (o.flows) cfg.synth.flows = *o.flows;
    if (o.ambiguous) cfg.synth.ambiguous_fraction = *o.ambiguous;
    if (o.port_offset) cfg.synth.port_offset = *o.port_offset;
    if (o.byte_scale) cfg.synth.byte_scale = *o.byte_scale;
    announce_seed(cfg, out);

    auto sc = synth_config::balanced(cfg.synth.flows, cfg.synth.ambiguous_fraction, cfg.seed_for("synth"));
    sc.domain.port_offset = cfg.synth.port_offset;
    sc.domain.byte_scale = cfg.synth.byte_scale;
    sc.validate();
    output_lock lock(common.out);
    const auto corpus = generate_corpus(sc);

    write_atomic(common.out, [&](const fs::path& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw error("cannot write " + tmp.string());
        write_cidds_csv(f, corpus.data.records);
        if (!f.flush()) throw error("write failed: " + tmp.string());
    });
    write_atomic(with_suffix(common.out, ".truth"),
                 [&](const fs::path& tmp) { write_ground_truth(tmp, corpus.truth); });

    std::size_t ambiguous = 0;
    for (const auto& t : corpus.truth) ambiguous += t.ambiguous;
    out << "flows " << corpus.data.size() << ", malicious " << corpus.data.count(binary_label::malicious)
        << ", ambiguous " << ambiguous << "\n";
    if (corpus.clamped_values) out << "clamped " << corpus.clamped_values << " shifted values\n";
    out << "wrote " << common.out.string() << " and " << with_suffix(common.out, ".truth").string() << "\n";
}

void add_common(CLI::App* sub, common_options& c, bool out_required = true) {
    sub->add_option("--config", c.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--profile", c.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--seed", c.seed, "base seed; named seeds derive from it");
    sub->add_flag("--deterministic", c.deterministic, "no ambient entropy; base seed defaults to 0");
    auto* o = sub->add_option("--out", c.out, "output artifact");
    if (out_required) o->required();
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const missing_artifact_error*>(&e)) return 3;
    if (dynamic_cast<const incompatibility_error*>(&e)) return 4;
    if (dynamic_cast<const corruption_error*>(&e)) return 5;
    if (dynamic_cast<const config_error*>(&e)) return 2;
    return 1;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Flow-sequence intrusion detection toolkit", "fsnids"};
    app.require_subcommand(1);

    common_options common;
    ingest_options ingest;
    fs::path data, init, model, input;
    bool dry = false, strict = false;
    evaluate_options eval;
    synth_options synth;

    auto* c_ingest = app.add_subcommand("ingest", "parse CIDDS CSVs into a token cache");
    add_common(c_ingest, common);
    c_ingest->add_option("inputs", ingest.inputs, "CSV files, concatenated in order")->required();
    c_ingest->add_flag("--strict", ingest.strict, "abort on the first malformed row");
    c_ingest->add_flag("--balance", ingest.balance, "subsample benign flows to the malicious count");
    c_ingest->add_flag("--benign-only", ingest.benign_only, "keep benign flows only");
    c_ingest->add_option("--drop-feature", ingest.drop_feature, "build a six-feature vocabulary");

    auto* c_pretrain = app.add_subcommand("pretrain", "masked-flow pretraining on benign traffic");
    add_common(c_pretrain, common);
    c_pretrain->add_option("--data", data, "token cache")->required();
    c_pretrain->add_flag("--dry-run", dry, "validate the schedule on a 1% subsample and write a plan");

    auto* c_finetune = app.add_subcommand("finetune", "head-only then joint classification training");
    add_common(c_finetune, common);
    c_finetune->add_option("--data", data, "labeled token cache")->required();
    c_finetune->add_option("--init", init, "pretrain checkpoint");
    c_finetune->add_flag("--dry-run", dry, "validate the schedule on a 1% subsample and write a plan");

    auto* c_eval = app.add_subcommand("evaluate", "metrics report for a test cache");
    add_common(c_eval, common);
    c_eval->add_option("--data", eval.data, "test token cache")->required();
    c_eval->add_option("--model", eval.model, "fine-tuned checkpoint");
    c_eval->add_option("--truth", eval.truth, "ground truth file; restricts metrics to ambiguous flows");
    c_eval->add_option("--baseline", eval.baseline, "train cache for the context-free baseline");
    c_eval->add_flag("--dry-run", dry, "validate the schedule on a 1% subsample and write a plan");

    auto* c_predict = app.add_subcommand("predict", "per-flow labels and probabilities for a CSV");
    add_common(c_predict, common);
    c_predict->add_option("input", input, "CIDDS CSV")->required();
    c_predict->add_option("--model", model, "fine-tuned checkpoint")->required();
    c_predict->add_flag("--strict", strict, "abort on the first malformed row");

    auto* c_synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
    add_common(c_synth, common);
    c_synth->add_option("--flows", synth.flows, "corpus size");
    c_synth->add_option("--ambiguous", synth.ambiguous, "share of flows from shared templates");
    c_synth->add_option("--port-offset", synth.port_offset, "shift for ephemeral ports");
    c_synth->add_option("--byte-scale", synth.byte_scale, "multiplier for byte counts");

    std::vector<std::string> storage{"fsnids"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (c_ingest->parsed()) {
            cmd_ingest(common, ingest, out);
        } else if (c_pretrain->parsed()) {
            if (dry) run_dry(common, data, out);
            else cmd_pretrain(common, data, out);
        } else if (c_finetune->parsed()) {
            if (dry) run_dry(common, data, out);
            else {
                if (init.empty()) throw missing_artifact_error("missing pretrain checkpoint: pass --init");
                cmd_finetune(common, data, init, out);
            }
        } else if (c_eval->parsed()) {
            if (dry) run_dry(common, eval.data, out);
            else {
                if (eval.model.empty()) throw missing_artifact_error("missing fine-tuned checkpoint: pass --model");
                cmd_evaluate(common, eval, out);
            }
        } else if (c_predict->parsed()) {
            cmd_predict(common, input, model, strict, out);
        } else if (c_synth->parsed()) {
            cmd_synth(common, synth, out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}

}  // namespace fsnids::cli
