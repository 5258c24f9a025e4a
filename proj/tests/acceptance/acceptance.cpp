// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"
#include "fsnids/checkpoint.hpp"
#include "fsnids/discretizer.hpp"
#include "fsnids/error.hpp"
#include "fsnids/evaluator.hpp"
#include "fsnids/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace fsnids;
using fsnids::testing::slurp;
using fsnids::testing::spit;
using json = nlohmann::json;

namespace {

struct verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Runs the command-line tool in-process; stderr is echoed when it fails.
bool tool(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) {
        std::cerr << "fsnids";
        for (const auto& a : args) std::cerr << " " << a;
        std::cerr << "\n  exit " << code << ": " << err.str();
    }
    return code == 0;
}

int tool_code(std::vector<std::string> args) {
    std::ostringstream out, err;
    return cli::run(args, out, err);
}

// ---------------------------------------------------------------- 1

masked_batch masked_from(const token_batch& tokens, const feature_vocabulary& vocab, std::uint64_t seed) {
    std::vector<flow_sequence> seqs(tokens.batch);
    for (std::size_t b = 0; b < tokens.batch; ++b) {
        for (std::size_t l = 0; l < tokens.length; ++l) {
            discretized_flow f;
            f.count = static_cast<std::uint8_t>(tokens.features);
            for (std::size_t k = 0; k < tokens.features; ++k) f.tokens[k] = tokens.at(b, l, k);
            seqs[b].flows.push_back(f);
            if (!tokens.is_real(b, l)) seqs[b].pad_count++;
        }
    }
    masking_policy p;
    p.mask_probability = 0.6;
    p.seed = seed;
    std::vector<std::size_t> idx(tokens.batch);
    std::iota(idx.begin(), idx.end(), 0);
    return assemble_masked_batch(seqs, idx, p, vocab);
}

verdict gradient_check() {
    const auto vocab = feature_vocabulary::standard();
    double worst = 0;
    std::string worst_name;
    std::size_t tensors = 0;
    auto note = [&](const std::vector<oracle::tensor_error>& errs, const std::string& loss) {
        for (const auto& e : errs) {
            ++tensors;
            if (e.relative_error >= worst) {
                worst = e.relative_error;
                worst_name = loss + " " + e.name;
            }
        }
    };
    for (const std::uint64_t seed : {1u, 2u, 3u}) {
        // the initial model and one with wide weights, where attention and
        // GELU are far from linear
        for (const bool spread : {false, true}) {
            const auto params = spread ? oracle::spread_model(vocab, 2, seed, 15)
                                       : init_params<double>(model_config::for_vocabulary(vocab, 2), seed);
            const auto tokens = oracle::random_tokens(vocab, 2, 3, seed + 10, 1);

            const auto mb = masked_from(tokens, vocab, seed);
            const auto mg = backward(params, mb, stage_scope::everything());
            note(oracle::finite_difference_check(
                     params, mg.gradients,
                     [&](const model_params<double>& p) { return backward(p, mb, stage_scope{}).loss; }),
                 "mlm");

            labeled_batch lb;
            lb.inputs = tokens;
            std::mt19937_64 rng(seed);
            lb.labels.resize(tokens.positions());
            for (auto& l : lb.labels) l = rng() % 2 ? binary_label::malicious : binary_label::benign;
            const auto cg = backward(params, lb, stage_scope::everything());
            note(oracle::finite_difference_check(
                     params, cg.gradients,
                     [&](const model_params<double>& p) { return backward(p, lb, stage_scope{}).loss; }),
                 "cls");
        }
    }
    return {worst < 1e-5, "max relative error " + fmt("%.2e", worst) + " over " + std::to_string(tensors) +
                              " tensor checks (worst: " + worst_name + ")"};
}

// ---------------------------------------------------------------- 2

verdict permutation_check() {
    const auto vocab = feature_vocabulary::standard();
    const auto params = init_params<float>(model_config::for_vocabulary(vocab, 16), 17);
    std::mt19937_64 rng(18);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t L = 2 + rng() % 63;
        const std::size_t pad = trial % 3 == 0 ? rng() % (L - 1) : 0;
        const auto b = oracle::random_tokens(vocab, 1, L, 1000 + trial, pad);
        // shuffle the real flows; PAD stays at the tail
        std::vector<std::size_t> perm(L);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.begin() + static_cast<long>(L - pad), rng);
        auto pb = b;
        const std::size_t F = b.features;
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t f = 0; f < F; ++f) pb.tokens[l * F + f] = b.tokens[perm[l] * F + f];
        const auto h = forward(params, b).hidden;
        const auto ph = forward(params, pb).hidden;
        for (std::size_t l = 0; l < L - pad; ++l) {
            const double d = (ph.row(static_cast<long>(l)) - h.row(static_cast<long>(perm[l]))).cwiseAbs().maxCoeff();
            worst = std::max(worst, d);
        }
    }
    return {worst < 1e-5, "max abs deviation " + fmt("%.2e", worst) + " over 100 permuted sequences"};
}

// ---------------------------------------------------------------- 3

verdict discretizer_check() {
    const auto bins = build_default_bins();
    std::mt19937_64 rng(31);
    std::size_t mismatches = 0, checked = 0;
    const std::vector<std::pair<std::size_t, const std::vector<double>*>> numeric{{0, &oracle::duration_bounds},
                                                                                 {2, &oracle::port_bounds},
                                                                                 {3, &oracle::port_bounds},
                                                                                 {4, &oracle::packet_bounds},
                                                                                 {5, &oracle::byte_bounds}};
    for (const auto& [f, bounds] : numeric) {
        const double top = (*bounds)[bounds->size() - 2] * 2;
        std::uniform_int_distribution<std::size_t> pick(0, bounds->size() - 2);
        for (int i = 0; i < 10000; ++i) {
            double v;
            switch (i % 4) {
            case 0:
                v = std::uniform_real_distribution<double>(0, top)(rng);
                break;
            case 1:
                v = (*bounds)[pick(rng)];
                break;
            case 2:
                v = std::nextafter((*bounds)[pick(rng)], oracle::inf);
                break;
            default:
                v = std::exp(std::uniform_real_distribution<double>(-9, std::log(top))(rng));
                break;
            }
            ++checked;
            mismatches += discretize_value(bins[f], v) != static_cast<token_t>(oracle::linear_scan(*bounds, v));
        }
    }
    // protocol and flags are lookups; every value is enumerable
    const std::vector<std::string> protos{"TCP", "UDP", "GRE", "ICMP", "IGMP", "ESP"};
    for (std::size_t i = 0; i < protos.size(); ++i) {
        ++checked;
        mismatches += discretize_category(bins[1], protos[i]) != i;
    }

    raw_flow_record r;
    r.duration = 9.588;
    r.proto = "TCP";
    r.src_pt = 22;
    r.dst_pt = 47695;
    r.packets = 19;
    r.bytes = 3185;
    r.flags = parse_flags(".AP.SF");
    const auto t = feature_vocabulary::standard().discretize(r);
    const std::vector<token_t> got(t.view().begin(), t.view().end());
    const std::vector<token_t> want{9, 0, 0, 6, 7, 12, 27};
    std::string tuple;
    for (auto x : got) tuple += (tuple.empty() ? "" : ",") + std::to_string(x);
    return {mismatches == 0 && got == want, std::to_string(mismatches) + " mismatches in " + std::to_string(checked) +
                                                " values; ssh example -> (" + tuple + ")"};
}

// ---------------------------------------------------------------- 4

verdict metrics_check() {
    // the example tuple read as (TP, FP, FN, TN)
    confusion_counts c;
    c.tp = 90;
    c.fp = 10;
    c.fn = 20;
    c.tn = 80;
    const auto b = compute_metrics(c);
    const bool ok = std::abs(*b.accuracy - 0.85) < 1e-9 && std::abs(*b.precision - 0.9) < 1e-9 &&
                    std::abs(*b.recall - 0.8181818181818182) < 1e-9 && std::abs(*b.f1 - 0.8571428571428571) < 1e-9;

    std::mt19937_64 rng(41);
    std::size_t bad = 0;
    for (int i = 0; i < 10000; ++i) {
        const std::size_t n = 1 + rng() % 200;
        std::vector<int> pred(n), truth(n);
        for (std::size_t k = 0; k < n; ++k) {
            pred[k] = static_cast<int>(rng() % 2);
            truth[k] = static_cast<int>(rng() % 2);
        }
        std::vector<binary_label> p, t;
        for (std::size_t k = 0; k < n; ++k) {
            p.push_back(pred[k] ? binary_label::malicious : binary_label::benign);
            t.push_back(truth[k] ? binary_label::malicious : binary_label::benign);
        }
        const auto got = evaluate_predictions(p, t);
        const auto tally = oracle::count_by_hand(pred, truth);
        const auto want = oracle::metrics_by_definition(tally);
        const bool same = got.counts.tp == tally.tp && got.counts.tn == tally.tn && got.counts.fp == tally.fp &&
                          got.counts.fn == tally.fn && oracle::same_metric(got.accuracy, want.accuracy, 1e-12) &&
                          oracle::same_metric(got.precision, want.precision, 1e-12) &&
                          oracle::same_metric(got.recall, want.recall, 1e-12) &&
                          oracle::same_metric(got.f1, want.f1, 1e-12);
        bad += !same;
    }
    return {ok && bad == 0, std::string("worked example ") + (ok ? "matches" : "differs") + "; " +
                                std::to_string(bad) + " of 10000 random tables disagree with the tally"};
}

// ---------------------------------------------------------------- 5 and 6

struct seed_run {
    std::uint64_t seed = 0;
    double seq_f1_amb = 0, base_f1_amb = 0, base_acc_amb = 0, sigma = 0;
    double seq_f1_in = 0, base_f1_in = 0, seq_f1_shift = 0, base_f1_shift = 0;
    bool ok = false;
};

double f1_or_zero(const metrics_report& r) { return r.f1.value_or(0.0); }

seed_run context_run(const fs::path& dir, std::uint64_t seed) {
    seed_run s;
    s.seed = seed;
    fs::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };
    const auto sd = std::to_string(seed);
    const auto test_seed = std::to_string(seed + 1000);
    const bool ok =
        tool({"synth", "--flows", "100000", "--ambiguous", "0.5", "--seed", sd, "--out", p("train.csv")}) &&
        tool({"synth", "--flows", "20000", "--ambiguous", "0.5", "--seed", test_seed, "--out", p("test.csv")}) &&
        tool({"synth", "--flows", "20000", "--ambiguous", "0.5", "--seed", test_seed, "--port-offset", "3000",
              "--byte-scale", "4", "--out", p("shifted.csv")}) &&
        tool({"ingest", p("train.csv"), "--out", p("train.flowset")}) &&
        tool({"ingest", p("test.csv"), "--out", p("test.flowset")}) &&
        tool({"ingest", p("shifted.csv"), "--out", p("shifted.flowset")}) &&
        tool({"pretrain", "--profile", "desk", "--seed", sd, "--data", p("train.flowset"), "--out", p("pre.ckpt")}) &&
        tool({"finetune", "--profile", "desk", "--seed", sd, "--data", p("train.flowset"), "--init", p("pre.ckpt"),
              "--out", p("ft.ckpt")}) &&
        tool({"evaluate", "--profile", "desk", "--data", p("test.flowset"), "--model", p("ft.ckpt"), "--truth",
              p("test.csv.truth"), "--baseline", p("train.flowset"), "--out", p("ambiguous.json")}) &&
        tool({"evaluate", "--profile", "desk", "--data", p("test.flowset"), "--model", p("ft.ckpt"), "--baseline",
              p("train.flowset"), "--out", p("in_domain.json")}) &&
        tool({"evaluate", "--profile", "desk", "--data", p("shifted.flowset"), "--model", p("ft.ckpt"), "--baseline",
              p("train.flowset"), "--out", p("shifted.json")});
    if (!ok) return s;
    auto report = [&](const char* name) { return report_from_json(slurp(dir / name)); };
    const auto amb = report("ambiguous.json"), amb_b = report("ambiguous.json.baseline.json");
    s.seq_f1_amb = f1_or_zero(amb);
    s.base_f1_amb = f1_or_zero(amb_b);
    s.base_acc_amb = amb_b.accuracy.value_or(0);
    s.sigma = std::sqrt(0.25 / static_cast<double>(amb_b.counts.total()));
    s.seq_f1_in = f1_or_zero(report("in_domain.json"));
    s.base_f1_in = f1_or_zero(report("in_domain.json.baseline.json"));
    s.seq_f1_shift = f1_or_zero(report("shifted.json"));
    s.base_f1_shift = f1_or_zero(report("shifted.json.baseline.json"));
    s.ok = true;
    return s;
}

// ---------------------------------------------------------------- 7

bool desk_pipeline(const fs::path& dir) {
    fs::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };
    return tool({"synth", "--flows", "20000", "--deterministic", "--out", p("train.csv")}) &&
           tool({"synth", "--flows", "5000", "--seed", "77", "--out", p("test.csv")}) &&
           tool({"ingest", p("train.csv"), "--out", p("train.flowset")}) &&
           tool({"ingest", p("test.csv"), "--out", p("test.flowset")}) &&
           tool({"pretrain", "--profile", "desk", "--deterministic", "--data", p("train.flowset"), "--out",
                 p("pre.ckpt")}) &&
           tool({"finetune", "--profile", "desk", "--deterministic", "--data", p("train.flowset"), "--init",
                 p("pre.ckpt"), "--out", p("ft.ckpt")}) &&
           tool({"evaluate", "--profile", "desk", "--data", p("test.flowset"), "--model", p("ft.ckpt"), "--baseline",
                 p("train.flowset"), "--out", p("report.json")});
}

verdict determinism_check(const fs::path& work) {
    if (!desk_pipeline(work / "run_a") || !desk_pipeline(work / "run_b")) return {false, "pipeline failed"};
    std::vector<std::string> differ;
    for (const char* f : {"train.flowset", "pre.ckpt", "ft.ckpt", "ft.ckpt.trace", "report.json",
                          "report.json.baseline.json"})
        if (slurp(work / "run_a" / f) != slurp(work / "run_b" / f)) differ.push_back(f);
    std::string detail = differ.empty() ? "checkpoints, traces and reports bitwise identical across two runs"
                                        : "differing artifacts:";
    for (const auto& d : differ) detail += " " + d;
    return {differ.empty(), detail};
}

// ---------------------------------------------------------------- 8

verdict checkpoint_check(const fs::path& work) {
    const auto src = work / "run_a" / "ft.ckpt";
    if (!fs::exists(src)) return {false, "no desk checkpoint to test (pipeline failed)"};
    const auto dir = work / "roundtrip";
    fs::create_directories(dir);
    const auto vocab = feature_vocabulary::read_manifest(vocabulary_path_for(src));
    const auto loaded = load_checkpoint(src, &vocab, std::string("desk"));
    save_checkpoint(loaded.params, loaded.manifest, dir / "copy.ckpt");
    const auto again = load_checkpoint(dir / "copy.ckpt");
    bool identical = slurp(src) == slurp(dir / "copy.ckpt");
    std::vector<const matrix<float>*> ta, tb;
    loaded.params.visit([&](const std::string&, param_group, const matrix<float>& m) { ta.push_back(&m); });
    again.params.visit([&](const std::string&, param_group, const matrix<float>& m) { tb.push_back(&m); });
    identical = identical && ta.size() == tb.size();
    for (std::size_t i = 0; identical && i < ta.size(); ++i)
        identical = ta[i]->size() == tb[i]->size() &&
                    std::memcmp(ta[i]->data(), tb[i]->data(), sizeof(float) * ta[i]->size()) == 0;

    // flip bytes spread across the whole file, header to checksum
    const auto bytes = slurp(src);
    std::size_t missed = 0, tried = 0;
    for (std::size_t k = 0; k < 64; ++k) {
        const std::size_t pos = k * (bytes.size() - 1) / 63;
        auto bad = bytes;
        bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
        spit(dir / "bad.ckpt", bad);
        ++tried;
        try {
            load_checkpoint(dir / "bad.ckpt");
            ++missed;
        } catch (const corruption_error&) {
        } catch (const error&) {
        }
    }
    bool truncated = false;
    spit(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
    try {
        load_checkpoint(dir / "short.ckpt");
    } catch (const corruption_error&) {
        truncated = true;
    }
    bool mismatch = false;
    const auto six = feature_vocabulary::without(feature_id::flags);
    try {
        load_checkpoint(src, &six);
    } catch (const incompatibility_error&) {
        mismatch = true;
    }
    // and through the tool: a corrupt checkpoint exits 5, a foreign cache 4
    fs::copy_file(vocabulary_path_for(src), vocabulary_path_for(dir / "bad.ckpt"), fs::copy_options::overwrite_existing);
    auto flipped = bytes;
    flipped[bytes.size() - 40] = static_cast<char>(flipped[bytes.size() - 40] ^ 1);
    spit(dir / "bad.ckpt", flipped);
    const int corrupt_code = tool_code({"evaluate", "--data", (work / "run_a" / "test.flowset").string(), "--model",
                                        (dir / "bad.ckpt").string(), "--out", (dir / "r.json").string()});
    const int foreign_code = tool_code({"ingest", (work / "run_a" / "test.csv").string(), "--drop-feature", "flags",
                                        "--out", (dir / "six.flowset").string()}) == 0
                                 ? tool_code({"evaluate", "--data", (dir / "six.flowset").string(), "--model",
                                              src.string(), "--out", (dir / "r2.json").string()})
                                 : -1;
    const bool pass = identical && missed == 0 && truncated && mismatch && corrupt_code == 5 && foreign_code == 4;
    return {pass, std::string("round trip ") + (identical ? "bitwise identical" : "DIFFERS") + "; " +
                      std::to_string(tried - missed) + "/" + std::to_string(tried) + " byte flips rejected; truncation " +
                      (truncated ? "rejected" : "MISSED") + "; vocabulary mismatch " +
                      (mismatch ? "rejected" : "MISSED") + "; tool exit codes " + std::to_string(corrupt_code) + "/" +
                      std::to_string(foreign_code)};
}

// ---------------------------------------------------------------- 9

verdict paper_dry_run(const fs::path& work, const fs::path& csv) {
    if (!fs::exists(csv)) return {false, "no corpus for the dry run"};
    const auto dir = work / "dry";
    fs::create_directories(dir);
    std::string detail;
    bool ok = true;
    for (const char* cmd : {"pretrain", "finetune", "evaluate"}) {
        const auto plan = dir / (std::string(cmd) + ".plan.json");
        if (!tool({cmd, "--dry-run", "--profile", "paper", "--seed", "1", "--data", csv.string(), "--out",
                   plan.string()})) {
            ok = false;
            detail += std::string(cmd) + " failed; ";
            continue;
        }
        const auto j = json::parse(slurp(plan));
        std::vector<std::size_t> iters;
        for (const auto& s : j["stages"]) iters.push_back(s["iterations"].get<std::size_t>());
        const bool shape = j["status"] == "ok" && j["batch_shape"] == json::array({512, 128, 7}) &&
                           j["test_sequence_length"] == 1024 && j["learning_rate"] == 1e-5 &&
                           iters == std::vector<std::size_t>{400, 1100, 400} &&
                           j["subsample"]["records"].get<std::size_t>() * 100 == j["records"].get<std::size_t>();
        ok = ok && shape;
        if (std::string(cmd) == "pretrain")
            detail += "subsample " + std::to_string(j["subsample"]["records"].get<std::size_t>()) + " of " +
                      std::to_string(j["records"].get<std::size_t>()) + " flows, stages 400/1100/400, lr 1e-5, " +
                      "batch 512x128, test L 1024; ";
        if (!shape) detail += std::string(cmd) + " plan does not match the paper-profile schedule; ";
    }
    return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    fs::path workdir = fs::temp_directory_path() / "fsnids_acceptance";
    app.add_option("--workdir", workdir, "scratch directory for pipeline artifacts");
    CLI11_PARSE(app, argc, argv);

    // only the subdirectories this program writes are cleared
    for (const char* sub : {"context", "run_a", "run_b", "roundtrip", "dry"}) fs::remove_all(workdir / sub);
    fs::create_directories(workdir);

    using clock = std::chrono::steady_clock;
    bool passed[10] = {};
    auto report = [&](int id, const char* title, const std::function<verdict()>& fn) {
        const auto t0 = clock::now();
        verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(clock::now() - t0).count();
        passed[id] = v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << title << "): " << v.detail << " ["
                  << fmt("%.1f", secs) << " s]" << std::endl;
    };

    report(1, "gradient check", [] {
        const auto t0 = clock::now();
        auto v = gradient_check();
        const double secs = std::chrono::duration<double>(clock::now() - t0).count();
        if (secs >= 60) {
            v.pass = false;
            v.detail += "; over the one-minute budget";
        }
        return v;
    });
    report(2, "permutation equivariance", permutation_check);
    report(3, "discretizer oracle", discretizer_check);
    report(4, "metrics", metrics_check);

    std::vector<seed_run> runs;
    double context_secs = 0;
    {
        const auto t0 = clock::now();
        for (const std::uint64_t seed : {1u, 2u, 3u})
            runs.push_back(context_run(workdir / "context" / ("seed" + std::to_string(seed)), seed));
        context_secs = std::chrono::duration<double>(clock::now() - t0).count();
        for (const auto& r : runs)
            std::cout << "  seed " << r.seed << ": ambiguous F1 " << fmt("%.4f", r.seq_f1_amb) << " vs baseline "
                      << fmt("%.4f", r.base_f1_amb) << " (baseline accuracy " << fmt("%.4f", r.base_acc_amb)
                      << "); F1 in-domain " << fmt("%.4f", r.seq_f1_in) << " -> shifted "
                      << fmt("%.4f", r.seq_f1_shift) << ", baseline " << fmt("%.4f", r.base_f1_in) << " -> "
                      << fmt("%.4f", r.base_f1_shift) << std::endl;
    }
    const bool runs_ok = std::all_of(runs.begin(), runs.end(), [](const seed_run& r) { return r.ok; });
    auto mean = [&](auto field) {
        double s = 0;
        for (const auto& r : runs) s += field(r);
        return s / static_cast<double>(runs.size());
    };
    report(5, "context beats single flows on ambiguous traffic", [&] {
        if (!runs_ok) return verdict{false, "a seed's pipeline failed"};
        const double gap = mean([](const seed_run& r) { return r.seq_f1_amb - r.base_f1_amb; });
        bool chance = true;
        for (const auto& r : runs) chance = chance && r.base_acc_amb <= 0.5 + 3 * r.sigma;
        const bool in_time = context_secs < 30 * 60;
        return verdict{gap >= 0.15 && chance && in_time,
                       "mean F1 gap " + fmt("%.4f", gap) + " (need >= 0.15); baseline accuracy " +
                           (chance ? "within" : "ABOVE") + " 0.5 + 3 sigma on every seed; three seeds took " +
                           fmt("%.0f", context_secs) + " s"};
    });
    report(6, "domain shift", [&] {
        if (!runs_ok) return verdict{false, "a seed's pipeline failed"};
        const double seq_drop = mean([](const seed_run& r) { return r.seq_f1_in - r.seq_f1_shift; });
        const double base_drop = mean([](const seed_run& r) { return r.base_f1_in - r.base_f1_shift; });
        return verdict{seq_drop <= 0.10 && base_drop >= 2 * seq_drop,
                       "mean F1 drop: sequence " + fmt("%.4f", seq_drop) + " (need <= 0.10), baseline " +
                           fmt("%.4f", base_drop) + " (need >= " + fmt("%.4f", 2 * seq_drop) + ")"};
    });
    report(7, "pipeline determinism", [&] { return determinism_check(workdir); });
    report(8, "checkpoint round trip", [&] { return checkpoint_check(workdir); });
    report(9, "paper profile dry run", [&] {
        auto v = paper_dry_run(workdir, workdir / "context" / "seed1" / "train.csv");
        bool earlier = true;
        for (int i = 1; i <= 8; ++i) earlier = earlier && passed[i];
        if (!earlier) v.detail += "criteria 1-8 not all passing";
        else v.detail += "criteria 1-8 pass";
        v.pass = v.pass && earlier;
        return v;
    });

    const int failures = static_cast<int>(std::count(passed + 1, passed + 10, false));
    std::cout << (failures == 0 ? "all 9 criteria pass" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
