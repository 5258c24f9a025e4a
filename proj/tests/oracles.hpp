#pragma once

// Reference implementations the tests compare the library against. They are
// deliberately naive and share no code with the library beyond its types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fsnids/evaluator.hpp"
#include "fsnids/model.hpp"
#include "fsnids/trainer.hpp"

namespace fsnids::oracle {

inline constexpr double inf = std::numeric_limits<double>::infinity();

// Bin thresholds, typed in independently of the library.
inline const std::vector<double> duration_bounds{0.001, 0.002, 0.003, 0.004, 0.005, 0.006,
                                                 0.01,  0.04,  1,     10,    100,   inf};
inline const std::vector<double> port_bounds{50, 60, 100, 400, 500, 40000, 60000, inf};
inline const std::vector<double> packet_bounds{2, 3, 4, 5, 6, 7, 10, 20, inf};
inline const std::vector<double> byte_bounds{50, 60, 70, 90, 100, 110, 200, 300, 400, 500, 700, 1000, 5000, inf};

inline std::size_t linear_scan(const std::vector<double>& bounds, double v) {
    for (std::size_t i = 0; i < bounds.size(); ++i)
        if (v <= bounds[i]) return i;
    return bounds.size();
}

// ------------------------------------------------------------ metrics

struct tally {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

inline tally count_by_hand(const std::vector<int>& predicted, const std::vector<int>& actual) {
    tally t;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == 1 && actual[i] == 1) t.tp++;
        if (predicted[i] == 0 && actual[i] == 0) t.tn++;
        if (predicted[i] == 1 && actual[i] == 0) t.fp++;
        if (predicted[i] == 0 && actual[i] == 1) t.fn++;
    }
    return t;
}

struct reference_metrics {
    std::optional<double> accuracy, precision, recall, f1;
};

// Accuracy, precision, recall and the harmonic mean, straight from their
// ratio definitions.
inline reference_metrics metrics_by_definition(const tally& t) {
    reference_metrics m;
    const double tp = static_cast<double>(t.tp), tn = static_cast<double>(t.tn);
    const double fp = static_cast<double>(t.fp), fn = static_cast<double>(t.fn);
    if (tp + tn + fp + fn > 0) m.accuracy = (tp + tn) / (tp + tn + fp + fn);
    if (tp + fp > 0) m.precision = tp / (tp + fp);
    if (tp + fn > 0) m.recall = tp / (tp + fn);
    if (m.precision && m.recall && *m.precision + *m.recall > 0)
        m.f1 = 2 * *m.precision * *m.recall / (*m.precision + *m.recall);
    return m;
}

inline bool same_metric(const std::optional<double>& a, const std::optional<double>& b, double tol) {
    if (a.has_value() != b.has_value()) return false;
    return !a || std::abs(*a - *b) <= tol;
}

// ------------------------------------------------------------ gradients

struct tensor_error {
    std::string name;
    double relative_error = 0;  // max |analytic - numeric| / max(|analytic|, |numeric|, floor) over the tensor
    double max_gradient = 0;
};

inline constexpr double gradient_floor = 1e-6;

// Central differences of `loss_of` against every scalar of every tensor.
template <class LossFn>
std::vector<tensor_error> finite_difference_check(model_params<double> params, const model_params<double>& analytic,
                                                  LossFn&& loss_of, double h = 1e-4) {
    std::vector<matrix<double>*> tensors;
    std::vector<std::string> names;
    params.visit([&](const std::string& n, param_group, matrix<double>& m) {
        tensors.push_back(&m);
        names.push_back(n);
    });
    std::vector<const matrix<double>*> grads;
    analytic.visit([&](const std::string&, param_group, const matrix<double>& m) { grads.push_back(&m); });

    std::vector<tensor_error> out;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& m = *tensors[t];
        double worst = 0, scale = 0;
        for (long i = 0; i < m.size(); ++i) {
            const double keep = m.data()[i];
            m.data()[i] = keep + h;
            const double up = loss_of(params);
            m.data()[i] = keep - h;
            const double down = loss_of(params);
            m.data()[i] = keep;
            const double numeric = (up - down) / (2 * h);
            const double a = grads[t]->data()[i];
            worst = std::max(worst, std::abs(a - numeric));
            scale = std::max({scale, std::abs(a), std::abs(numeric)});
        }
        // A tensor whose true gradient is zero (the key bias shifts every
        // score in a row equally) leaves only rounding noise on both sides;
        // below gradient_floor the comparison is absolute.
        out.push_back({names[t], worst / std::max(scale, gradient_floor), scale});
    }
    return out;
}

// A random token batch with some PAD at the tail of the last sequence.
inline token_batch random_tokens(const feature_vocabulary& vocab, std::size_t B, std::size_t L, std::uint64_t seed,
                                 std::size_t trailing_pad = 0) {
    std::mt19937_64 rng(seed);
    token_batch b;
    b.batch = B;
    b.length = L;
    b.features = vocab.feature_count();
    b.tokens.resize(B * L * b.features);
    b.attention.assign(B * L, 1);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t l = 0; l < L; ++l) {
            const bool pad = i + 1 == B && l + trailing_pad >= L;
            b.attention[i * L + l] = pad ? 0 : 1;
            for (std::size_t f = 0; f < b.features; ++f)
                b.tokens[(i * L + l) * b.features + f] =
                    pad ? vocab.pad_id(f) : static_cast<token_t>(rng() % vocab.real_tokens(f));
        }
    return b;
}

// Same model, weights spread wide enough that attention and GELU are far
// from linear.
inline model_params<double> spread_model(const feature_vocabulary& vocab, std::size_t d, std::uint64_t seed,
                                         double scale) {
    auto p = init_params<double>(model_config::for_vocabulary(vocab, d), seed);
    std::mt19937_64 rng(seed ^ 0x5eed);
    std::normal_distribution<double> n(0, 0.1);
    p.visit([&](const std::string& name, param_group, matrix<double>& m) {
        if (m.rows() > 1) m *= scale;
        else if (name.find("gain") != std::string::npos)
            for (long i = 0; i < m.size(); ++i) m.data()[i] = 1 + n(rng);
        else
            for (long i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    });
    return p;
}

}  // namespace fsnids::oracle
