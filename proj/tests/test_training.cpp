#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "mmlab/nn.hpp"
#include "mmlab/training.hpp"

using namespace mmlab;
using namespace mmlab::training;

namespace {

Matrix randn_matrix(std::int64_t r, std::int64_t c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (std::int64_t i = 0; i < m.size(); ++i) {
        double g0, g1;
        rng.gaussian_pair(g0, g1);
        m.data()[i] = static_cast<float>(g0);
        if (++i < m.size()) m.data()[i] = static_cast<float>(g1);
    }
    return m;
}

// tiny dataset where modality 1 alone decides the label: class = sign of
// the first coordinate, so every strategy can fit it
SyntheticDataset toy_dataset(std::int64_t n, std::uint64_t seed, std::uint32_t k = 2) {
    SyntheticDataset ds;
    ds.x1 = randn_matrix(n, 6, seed);
    ds.x2 = randn_matrix(n, 4, seed + 1);
    ds.n_classes = k;
    ds.labels.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        ds.labels[static_cast<std::size_t>(i)] =
            k == 2 ? (ds.x1(i, 0) > 0.0f ? 1u : 0u)
                   : static_cast<std::uint32_t>(std::min<std::int64_t>(k - 1, i % k));
    return ds;
}

SplitSpec tail_split(const SyntheticDataset& ds, std::int64_t n_test) {
    SplitSpec sp;
    sp.n_total = ds.n();
    sp.train_fraction = 1.0 - static_cast<double>(n_test) / static_cast<double>(ds.n());
    for (std::int64_t i = ds.n() - n_test; i < ds.n(); ++i)
        sp.test_indices.push_back(static_cast<std::uint32_t>(i));
    return sp;
}

std::uint64_t fnv(const float* p, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n * 4; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t model_digest(const model::FusionModel& m) {
    std::uint64_t h = fnv(m.enc1.w.data(), static_cast<std::size_t>(m.enc1.w.size()));
    h = fnv(m.enc1.b.data(), m.enc1.b.size(), h);
    h = fnv(m.enc2.w.data(), static_cast<std::size_t>(m.enc2.w.size()), h);
    h = fnv(m.enc2.b.data(), m.enc2.b.size(), h);
    if (m.head_kind == model::HeadKind::Mlp) {
        h = fnv(m.head_hidden.w.data(), static_cast<std::size_t>(m.head_hidden.w.size()), h);
        h = fnv(m.head_hidden.b.data(), m.head_hidden.b.size(), h);
    }
    h = fnv(m.head_out.w.data(), static_cast<std::size_t>(m.head_out.w.size()), h);
    h = fnv(m.head_out.b.data(), m.head_out.b.size(), h);
    return h;
}

}  // namespace

TEST_CASE("argmax_rows and accuracy") {
    Matrix logits(3, 3);
    logits(0, 1) = 5.0f;
    logits(1, 2) = 2.0f;
    logits(2, 0) = 1.0f;
    const auto pred = argmax_rows(logits);
    CHECK(pred == std::vector<std::uint32_t>{1, 2, 0});
    CHECK(accuracy(logits, {1, 2, 0}) == doctest::Approx(1.0));
    CHECK(accuracy(logits, {1, 2, 1}) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS(accuracy(logits, {1, 2}));
}

TEST_CASE("unimodal training fits a modality-1 separable toy problem") {
    const auto ds = toy_dataset(120, 3);
    const auto sp = tail_split(ds, 20);
    model::TrainConfig cfg;
    cfg.seed = 9;
    cfg.max_iters = 400;
    auto b = train_unimodal(ds, sp, 1, cfg, 16);
    CHECK(b.kind == "uni");
    CHECK(b.strategy == "uni1");
    CHECK(b.metrics.train_acc > 0.95);
    CHECK(b.metrics.test_acc > 0.8);
    CHECK_THROWS(train_unimodal(ds, sp, 3, cfg));
}

TEST_CASE("training is deterministic in the seed") {
    const auto ds = toy_dataset(80, 4);
    const auto sp = tail_split(ds, 16);
    model::TrainConfig cfg;
    cfg.seed = 17;
    cfg.max_iters = 60;
    auto a = train_naive_fusion(ds, sp, HeadKind::Mlp, cfg);
    auto b = train_naive_fusion(ds, sp, HeadKind::Mlp, cfg);
    CHECK(model_digest(*a.fusion) == model_digest(*b.fusion));
    cfg.seed = 18;
    auto c = train_naive_fusion(ds, sp, HeadKind::Mlp, cfg);
    CHECK(model_digest(*a.fusion) != model_digest(*c.fusion));
}

TEST_CASE("umt with lambda_distill=0 is digest-equal to naive fusion") {
    const auto ds = toy_dataset(80, 5);
    const auto sp = tail_split(ds, 16);
    model::TrainConfig cfg;
    cfg.seed = 23;
    cfg.max_iters = 80;

    auto naive = train_naive_fusion(ds, sp, HeadKind::Mlp, cfg);
    UMTConfig umt;
    umt.lambda_distill = 0.0;
    auto reduced = train_umt(ds, sp, umt, cfg);
    CHECK(model_digest(*naive.fusion) == model_digest(*reduced.fusion));
    CHECK(naive.metrics.final_loss == reduced.metrics.final_loss);
}

TEST_CASE("umt requires matching teachers when distilling") {
    const auto ds = toy_dataset(60, 6);
    const auto sp = tail_split(ds, 10);
    model::TrainConfig cfg;
    cfg.seed = 2;
    cfg.max_iters = 5;
    UMTConfig umt;  // lambda_distill = 50, no teachers
    CHECK_THROWS(train_umt(ds, sp, umt, cfg));

    // teacher with the wrong feature width
    auto t_small = train_unimodal(ds, sp, 1, cfg, 8);
    auto t2 = train_unimodal(ds, sp, 2, cfg, 8);
    umt.teacher1 = &*t_small.uni;
    umt.teacher2 = &*t2.uni;
    CHECK_THROWS(train_umt(ds, sp, umt, cfg));
}

TEST_CASE("pure distillation drives student features toward the teachers") {
    const auto ds = toy_dataset(100, 7);
    const auto sp = tail_split(ds, 20);
    model::TrainConfig tcfg;
    tcfg.seed = 31;
    tcfg.max_iters = 150;
    auto b1 = train_unimodal(ds, sp, 1, tcfg);
    auto b2 = train_unimodal(ds, sp, 2, tcfg);

    const auto tr = sp.train_indices();
    const Matrix x1 = synthgen::gather_rows(ds.x1, tr);
    const Matrix x2 = synthgen::gather_rows(ds.x2, tr);
    const auto y = synthgen::gather_labels(ds.labels, tr);
    const Matrix t1 = b1.uni->features(x1);
    const Matrix t2 = b2.uni->features(x2);

    FusionOptions opts;
    opts.lambda_task = 0.0;
    opts.lambda_distill = 1.0;
    // relu student encoders can represent the relu teacher features exactly
    opts.enc_act = model::EncActivation::Relu;
    opts.teacher1 = &*b1.uni;
    opts.teacher2 = &*b2.uni;
    model::TrainConfig cfg;
    cfg.seed = 32;
    cfg.max_iters = 1;
    cfg.early_stop_window = 0;
    Matrix empty1(0, x1.cols()), empty2(0, x2.cols());
    auto first = train_fusion_engine(x1, x2, y, empty1, empty2, {}, 2, cfg, opts);
    const double initial = first.last_loss.distill1 + first.last_loss.distill2;

    cfg.max_iters = 8000;
    cfg.lr = 0.5;
    auto late = train_fusion_engine(x1, x2, y, empty1, empty2, {}, 2, cfg, opts);
    const double final_mse = late.last_loss.distill1 + late.last_loss.distill2;
    CHECK(final_mse < 0.05 * initial);
    // with no task loss the head receives no gradient and stays at init
    CHECK(std::equal(first.model.head_out.w.data(),
                     first.model.head_out.w.data() + first.model.head_out.w.size(),
                     late.model.head_out.w.data()));
}

TEST_CASE("modality dropout frequency matches the 1/6 rate") {
    const auto ds = toy_dataset(12, 8);
    const auto sp = tail_split(ds, 2);
    const auto tr = sp.train_indices();
    const Matrix x1 = synthgen::gather_rows(ds.x1, tr);
    const Matrix x2 = synthgen::gather_rows(ds.x2, tr);
    const auto y = synthgen::gather_labels(ds.labels, tr);

    FusionOptions opts;
    opts.hidden_per_enc = 4;
    opts.head_hidden = 4;
    opts.drop_prob = 1.0 / 3.0;
    model::TrainConfig cfg;
    cfg.seed = 41;
    cfg.max_iters = 100000;
    cfg.early_stop_window = 0;
    cfg.record_every = 0;
    cfg.lr = 1e-4;
    Matrix e1(0, x1.cols()), e2(0, x2.cols());
    auto res = train_fusion_engine(x1, x2, y, e1, e2, {}, 2, cfg, opts);
    const double f1 = static_cast<double>(res.drops1) / cfg.max_iters;
    const double f2 = static_cast<double>(res.drops2) / cfg.max_iters;
    CHECK(std::fabs(f1 - 1.0 / 6.0) < 0.01);
    CHECK(std::fabs(f2 - 1.0 / 6.0) < 0.01);

    // independent-drops reading: each modality at the full rate
    opts.independent_drops = true;
    auto res2 = train_fusion_engine(x1, x2, y, e1, e2, {}, 2, cfg, opts);
    CHECK(std::fabs(static_cast<double>(res2.drops1) / cfg.max_iters - 1.0 / 3.0) < 0.01);
    CHECK(std::fabs(static_cast<double>(res2.drops2) / cfg.max_iters - 1.0 / 3.0) < 0.01);
}

TEST_CASE("aux-ce heads exist and train") {
    const auto ds = toy_dataset(80, 9);
    const auto sp = tail_split(ds, 16);
    model::TrainConfig cfg;
    cfg.seed = 43;
    cfg.max_iters = 60;
    auto b = train_aux_ce(ds, sp, cfg);
    REQUIRE(b.fusion->aux1.has_value());
    REQUIRE(b.fusion->aux2.has_value());
    CHECK(b.strategy == "aux");
    CHECK(b.metrics.train_acc > 0.7);
}

TEST_CASE("full-batch loss decreases at a small learning rate") {
    const auto ds = toy_dataset(100, 10);
    const auto sp = tail_split(ds, 20);
    model::TrainConfig cfg;
    cfg.seed = 47;
    cfg.max_iters = 200;
    cfg.lr = 1e-3;
    cfg.record_every = 1;
    cfg.early_stop_window = 0;
    auto b = train_naive_fusion(ds, sp, HeadKind::Mlp, cfg);
    const auto& curve = b.metrics.loss_curve;
    REQUIRE(curve.size() == 200);
    CHECK(curve.back() < curve.front());
    // monotone within rounding slack at this step size
    int increases = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        increases += curve[i] > curve[i - 1] + 1e-6;
    CHECK(increases == 0);
}

TEST_CASE("ume averaging: normalization, symmetry, and validation") {
    const auto ds = toy_dataset(60, 12);
    const auto sp = tail_split(ds, 12);
    model::TrainConfig cfg;
    cfg.seed = 51;
    cfg.max_iters = 100;
    auto b1 = train_unimodal(ds, sp, 1, cfg);
    auto b2 = train_unimodal(ds, sp, 2, cfg);
    const auto te = sp.test_indices;
    const Matrix x1 = synthgen::gather_rows(ds.x1, te);
    const Matrix x2 = synthgen::gather_rows(ds.x2, te);

    const Matrix p_half = ume_probs(*b1.uni, *b2.uni, x1, x2, 0.5, 0.5);
    const Matrix p_scaled = ume_probs(*b1.uni, *b2.uni, x1, x2, 2.0, 2.0);
    for (std::int64_t i = 0; i < p_half.size(); ++i)
        CHECK(p_half.data()[i] == doctest::Approx(p_scaled.data()[i]).epsilon(1e-6));
    for (std::int64_t i = 0; i < p_half.rows(); ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < p_half.cols(); ++j) s += p_half(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK_THROWS(ume_probs(*b1.uni, *b2.uni, x1, x2, 0.0, 0.0));
    CHECK_THROWS(ume_probs(*b1.uni, *b2.uni, x1, x2, -1.0, 2.0));
    CHECK(ume_predict(*b1.uni, *b2.uni, x1, x2).size() == te.size());
}

TEST_CASE("split_mm_classifier reconstructs the full logits exactly") {
    Rng rng(55);
    nn::DenseLayer head(10, 3);
    head.init(rng);
    for (auto& v : head.b) v = 0.25f;
    const auto [c1, c2] = split_mm_classifier(head, 6);
    CHECK(c1.in_dim() == 6);
    CHECK(c2.in_dim() == 4);

    Matrix f = randn_matrix(7, 10, 56);
    Matrix f1(7, 6), f2(7, 4);
    for (std::int64_t i = 0; i < 7; ++i) {
        for (std::int64_t j = 0; j < 6; ++j) f1(i, j) = f(i, j);
        for (std::int64_t j = 0; j < 4; ++j) f2(i, j) = f(i, 6 + j);
    }
    const Matrix full = head.forward(f);
    const Matrix l1 = c1.forward(f1);
    const Matrix l2 = c2.forward(f2);
    for (std::int64_t i = 0; i < full.rows(); ++i)
        for (std::int64_t j = 0; j < full.cols(); ++j) {
            const double rebuilt = static_cast<double>(l1(i, j)) + l2(i, j) - head.b[static_cast<std::size_t>(j)];
            CHECK(std::fabs(rebuilt - full(i, j)) <= 1e-5);
        }
    CHECK_THROWS(split_mm_classifier(head, 0));
    CHECK_THROWS(split_mm_classifier(head, 10));
}

TEST_CASE("fit_linear_softmax separates linearly separable features") {
    Matrix f(60, 3);
    std::vector<std::uint32_t> y(60);
    Rng rng(57);
    for (std::int64_t i = 0; i < 60; ++i) {
        const bool pos = i % 2 == 0;
        f(i, 0) = (pos ? 2.0f : -2.0f) + static_cast<float>(rng.uniform(-0.3, 0.3));
        f(i, 1) = static_cast<float>(rng.uniform(-1.0, 1.0));
        f(i, 2) = static_cast<float>(rng.uniform(-1.0, 1.0));
        y[static_cast<std::size_t>(i)] = pos ? 1u : 0u;
    }
    model::TrainConfig cfg;
    cfg.seed = 58;
    cfg.max_iters = 300;
    const auto fit = fit_linear_softmax(f, y, f, y, 2, cfg);
    CHECK(fit.train_acc == doctest::Approx(1.0));
}

TEST_CASE("decision_trick returns a recommendation and flags degenerate data") {
    const auto ds = toy_dataset(100, 13);
    const auto sp = tail_split(ds, 20);
    model::TrainConfig cfg;
    cfg.seed = 61;
    cfg.max_iters = 150;
    const auto res = decision_trick(ds, sp, cfg);
    CHECK((res.recommendation == "UMT" || res.recommendation == "UME"));
    CHECK(!res.degenerate);
    CHECK(res.mm_clf_acc >= 0.0);
    CHECK(res.avg_pred_acc >= 0.0);

    auto single = toy_dataset(60, 14);
    for (auto& v : single.labels) v = 0;
    const auto sp2 = tail_split(single, 10);
    const auto res2 = decision_trick(single, sp2, cfg);
    CHECK(res2.degenerate);
}

TEST_CASE("relu-encoder fusion variant trains and serializes its activation") {
    const auto ds = toy_dataset(80, 15);
    const auto sp = tail_split(ds, 16);
    model::TrainConfig cfg;
    cfg.seed = 63;
    cfg.max_iters = 120;
    auto b = train_naive_fusion(ds, sp, HeadKind::Mlp, cfg, model::EncActivation::Relu);
    CHECK(b.fusion->enc_act == model::EncActivation::Relu);
    CHECK(b.metrics.train_acc > 0.8);
    const auto text = b.to_json_text();
    const auto back = model::ModelBundle::from_json_text(text);
    CHECK(back.fusion->enc_act == model::EncActivation::Relu);
}
