#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fsnids/error.hpp"
#include "fsnids/model.hpp"

using namespace fsnids;

namespace {

token_batch random_batch(const feature_vocabulary& vocab, std::size_t B, std::size_t L, std::uint64_t seed,
                         std::size_t pads_in_last = 0) {
    std::mt19937_64 rng(seed);
    token_batch b;
    b.batch = B;
    b.length = L;
    b.features = vocab.feature_count();
    b.tokens.resize(B * L * b.features);
    b.attention.assign(B * L, 1);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t l = 0; l < L; ++l) {
            const bool pad = i == B - 1 && l >= L - pads_in_last;
            b.attention[i * L + l] = pad ? 0 : 1;
            for (std::size_t f = 0; f < b.features; ++f)
                b.tokens[(i * L + l) * b.features + f] =
                    pad ? vocab.pad_id(f) : static_cast<token_t>(rng() % vocab.real_tokens(f));
        }
    return b;
}

model_params<double> small_model(const feature_vocabulary& vocab, std::size_t d, std::uint64_t seed,
                                 double scale = 1.0) {
    auto p = init_params<double>(model_config::for_vocabulary(vocab, d), seed);
    // Larger weights than the 0.02 default so the tests exercise non-trivial attention.
    if (scale != 1.0)
        p.visit([&](const std::string&, param_group, matrix<double>& m) {
            if (m.rows() > 1) m *= scale;
        });
    return p;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("init is deterministic under seed") {
    const auto vocab = feature_vocabulary::standard();
    const auto cfg = model_config::for_vocabulary(vocab, 4);
    const auto a = init_params<float>(cfg, 3);
    const auto b = init_params<float>(cfg, 3);
    const auto c = init_params<float>(cfg, 4);
    std::vector<const matrix<float>*> ta, tb, tc;
    a.visit([&](const std::string&, param_group, const matrix<float>& m) { ta.push_back(&m); });
    b.visit([&](const std::string&, param_group, const matrix<float>& m) { tb.push_back(&m); });
    c.visit([&](const std::string&, param_group, const matrix<float>& m) { tc.push_back(&m); });
    bool any_diff = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(*ta[i] == *tb[i]);
        if (ta[i]->size() > 1 && *ta[i] != *tc[i]) any_diff = true;
    }
    CHECK(any_diff);
    CHECK(a.layers[0].attention_norm_gain.isOnes());
    CHECK(a.layers[0].ffn_norm_gain.isOnes());
    CHECK(a.layers[0].query_bias.isZero());
}

TEST_CASE("init weight spread on a 768 x 768 projection") {
    const auto vocab = feature_vocabulary::without(feature_id::src_pt);
    const auto cfg = model_config::for_vocabulary(vocab, 128);
    REQUIRE(cfg.model_dim() == 768);
    const auto p = init_params<double>(cfg, 42);
    const auto& w = p.layers[0].query_weight;
    REQUIRE(w.rows() == 768);
    REQUIRE(w.cols() == 768);
    const double mean = w.mean();
    const double var = (w.array() - mean).square().mean();
    CHECK(std::sqrt(var) >= 0.018);
    CHECK(std::sqrt(var) <= 0.022);
    // truncated at two standard deviations of the underlying normal
    CHECK(w.cwiseAbs().maxCoeff() < 0.06);
}

TEST_CASE("config validation") {
    model_config c = model_config::for_vocabulary(feature_vocabulary::standard(), 16);
    CHECK_NOTHROW(c.validate());
    CHECK(c.model_dim() == 112);
    CHECK(c.ffn() == 448);
    c.head_count = 3;
    CHECK_THROWS_AS(c.validate(), config_error);
}

TEST_CASE("embeddings carry no position signal") {
    const auto vocab = feature_vocabulary::standard();
    const auto p = small_model(vocab, 3, 1);
    auto b = random_batch(vocab, 1, 5, 2);
    for (std::size_t f = 0; f < 7; ++f) b.tokens[4 * 7 + f] = b.tokens[0 * 7 + f];
    const auto e = embed_flows(p, b);
    CHECK(e.rows() == 5);
    CHECK(e.cols() == 21);
    CHECK(e.row(0) == e.row(4));

    // change only the flags token: only the last d coordinates move
    auto b2 = b;
    b2.tokens[2 * 7 + 6] = static_cast<token_t>((b.tokens[2 * 7 + 6] + 1) % 64);
    const auto e2 = embed_flows(p, b2);
    CHECK(e2.row(2).head(18) == e.row(2).head(18));
    CHECK(e2.row(2).tail(3) != e.row(2).tail(3));

    auto bad = b;
    bad.tokens[0] = static_cast<token_t>(vocab.vocab_size(0));
    CHECK_THROWS_AS(embed_flows(p, bad), index_error);
}

TEST_CASE("output shapes") {
    const auto vocab = feature_vocabulary::standard();
    for (const std::size_t B : {1u, 2u, 3u})
        for (const std::size_t L : {1u, 4u})
            for (const std::size_t d : {1u, 2u, 5u}) {
                const auto p = small_model(vocab, d, 7);
                const auto b = random_batch(vocab, B, L, 8);
                const auto act = forward(p, b);
                CHECK(act.embedded.rows() == static_cast<long>(B * L));
                CHECK(act.hidden.cols() == static_cast<long>(7 * d));
                const auto mlm = mlm_head_forward(p, act.hidden);
                REQUIRE(mlm.size() == 7);
                CHECK(mlm[0].cols() == 12);
                CHECK(mlm[6].cols() == 64);
                CHECK(mlm[0].rows() == static_cast<long>(B * L));
                CHECK(classifier_head_forward(p, act.hidden).cols() == 2);
            }
}

TEST_CASE("single-flow attention is exactly one") {
    const auto vocab = feature_vocabulary::standard();
    const auto p = small_model(vocab, 2, 3, 20);
    const auto act = forward(p, random_batch(vocab, 1, 1, 4));
    CHECK(act.attention(0, 0).rows() == 1);
    CHECK(act.attention(0, 0)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("PAD keys get no attention") {
    const auto vocab = feature_vocabulary::standard();
    const auto p = small_model(vocab, 2, 3, 20);
    // one real flow followed by five PAD flows
    const auto b = random_batch(vocab, 1, 6, 5, 5);
    const auto act = forward(p, b);
    const auto& a = act.attention(0, 0);
    for (long q = 0; q < 6; ++q) {
        CHECK(a(q, 0) == doctest::Approx(1.0));
        for (long k = 1; k < 6; ++k) CHECK(a(q, k) < 1e-7);
    }
}

TEST_CASE("attention rows are distributions over real keys") {
    const auto vocab = feature_vocabulary::standard();
    const auto p = small_model(vocab, 3, 9, 30);
    const auto b = random_batch(vocab, 3, 8, 10, 3);
    const auto act = forward(p, b);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& a = act.attention(0, i);
        for (long q = 0; q < 8; ++q) {
            double s = 0;
            for (long k = 0; k < 8; ++k) {
                CHECK(a(q, k) >= 0);
                if (b.is_real(i, static_cast<std::size_t>(k))) s += a(q, k);
                else CHECK(a(q, k) < 1e-7);
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
}

TEST_CASE("permuting flows permutes the outputs") {
    const auto vocab = feature_vocabulary::standard();
    const auto p = small_model(vocab, 2, 21, 25);
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t L = 2 + trial % 9;
        const auto b = random_batch(vocab, 1, L, 100 + trial);
        std::vector<std::size_t> perm(L);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto pb = b;
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t f = 0; f < 7; ++f) pb.tokens[l * 7 + f] = b.tokens[perm[l] * 7 + f];
        const auto h = forward(p, b).hidden;
        const auto ph = forward(p, pb).hidden;
        for (std::size_t l = 0; l < L; ++l)
            CHECK((ph.row(static_cast<long>(l)) - h.row(static_cast<long>(perm[l]))).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("heads") {
    const auto vocab = feature_vocabulary::standard();
    auto p = small_model(vocab, 2, 5);
    for (auto& bias : p.mlm_biases) bias.setRandom();
    const matrix<double> zero = matrix<double>::Zero(3, 14);
    const auto logits = mlm_head_forward(p, zero);
    for (std::size_t f = 0; f < 7; ++f)
        for (long r = 0; r < 3; ++r) CHECK(logits[f].row(r) == p.mlm_biases[f]);

    const auto act = forward(p, random_batch(vocab, 2, 5, 6));
    const auto probs = classifier_head_forward(p, act.hidden);
    for (long r = 0; r < probs.rows(); ++r) {
        CHECK(probs(r, 0) > 0);
        CHECK(probs(r, 1) < 1);
        CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    }

    p.classifier_weight.setZero();
    p.classifier_bias.setZero();
    const auto even = classifier_head_forward(p, act.hidden);
    CHECK(even(0, 0) == doctest::Approx(0.5));
    CHECK(predict_label(0.5, 0.5) == binary_label::malicious);
    CHECK(predict_label(0.6, 0.4) == binary_label::benign);
}

TEST_CASE("mlm loss closed forms") {
    // uniform logits over k tokens give ln k per feature
    const std::vector<matrix<double>> uniform{matrix<double>::Zero(4, 12)};
    std::vector<token_t> targets{3, 0, 11, 5};
    std::vector<std::uint8_t> sel{1, 0, 1, 1};
    CHECK(mlm_loss<double>(uniform, targets, sel) == doctest::Approx(std::log(12.0)));

    // targets at unselected positions do not matter
    auto t2 = targets;
    t2[1] = 7;
    CHECK(mlm_loss<double>(uniform, t2, sel) == mlm_loss<double>(uniform, targets, sel));

    // large margin on the right token drives the loss to zero
    std::vector<matrix<double>> sharp{matrix<double>::Zero(4, 12)};
    for (long r = 0; r < 4; ++r) sharp[0](r, targets[static_cast<std::size_t>(r)]) = 60;
    CHECK(mlm_loss<double>(sharp, targets, sel) < 1e-20);

    loss_diagnostics diag;
    const std::vector<std::uint8_t> none(4, 0);
    CHECK(mlm_loss<double>(uniform, targets, none, &diag) == 0.0);
    CHECK(diag.empty_selection == 1);
}

TEST_CASE("classification loss closed forms") {
    matrix<double> half(3, 2);
    half.setConstant(0.5);
    const std::vector<binary_label> labels{binary_label::benign, binary_label::malicious, binary_label::benign};
    const std::vector<std::uint8_t> all{1, 1, 1};
    CHECK(classification_loss<double>(half, labels, all) == doctest::Approx(std::log(2.0)));

    matrix<double> sure(3, 2);
    sure.col(0).setOnes();
    sure.col(1).setZero();
    const std::vector<binary_label> benign(3, binary_label::benign);
    CHECK(classification_loss<double>(sure, benign, all) == doctest::Approx(0.0));

    // a PAD row with a wrong, confident prediction is ignored
    matrix<double> with_pad(4, 2);
    with_pad.topRows(3) = half;
    with_pad.row(3) << 1.0, 0.0;
    const std::vector<binary_label> labels4{binary_label::benign, binary_label::malicious, binary_label::benign,
                                            binary_label::malicious};
    const std::vector<std::uint8_t> mask4{1, 1, 1, 0};
    CHECK(classification_loss<double>(with_pad, labels4, mask4) == classification_loss<double>(half, labels, all));

    const std::vector<std::uint8_t> none{0, 0, 0};
    CHECK_THROWS_AS(classification_loss<double>(half, labels, none), precondition_error);
}

TEST_CASE("outputs stay finite across random draws") {
    const auto vocab = feature_vocabulary::standard();
    std::size_t bad = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto p = small_model(vocab, 1 + s % 3, s, 1.0 + static_cast<double>(s % 50));
        const auto act = forward(p, random_batch(vocab, 1 + s % 2, 1 + s % 6, s + 7, s % 3 == 0 && s % 6 != 0 ? 1 : 0));
        if (!act.hidden.allFinite() || !classifier_head_forward(p, act.hidden).allFinite()) ++bad;
    }
    CHECK(bad == 0);
}

}  // TEST_SUITE
