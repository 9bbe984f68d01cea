#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmlab/eval.hpp"

using namespace mmlab;
using namespace mmlab::eval;
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

SyntheticDataset toy_dataset(std::int64_t n, std::uint64_t seed, bool separable1 = true) {
    SyntheticDataset ds;
    ds.x1 = randn_matrix(n, 6, seed);
    ds.x2 = randn_matrix(n, 4, seed + 1);
    ds.n_classes = 2;
    ds.labels.resize(static_cast<std::size_t>(n));
    Rng rng(seed + 2);
    for (std::int64_t i = 0; i < n; ++i)
        ds.labels[static_cast<std::size_t>(i)] =
            separable1 ? (ds.x1(i, 0) > 0.0f ? 1u : 0u)
                       : static_cast<std::uint32_t>(rng.below(2));
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

}  // namespace

TEST_CASE("confusion matrix counts and percentages") {
    //         predicted: 0 1 2
    // actual 0: 0,0 -> 2 hits; one 0->1
    const std::vector<std::uint32_t> y = {0, 0, 0, 1, 1, 2};
    const std::vector<std::uint32_t> p = {0, 0, 1, 1, 2, 2};
    const auto cm = confusion(p, y, 3);
    CHECK(cm.at(0, 0) == 2);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 2) == 1);
    CHECK(cm.at(2, 2) == 1);
    CHECK(cm.row_total(0) == 3);
    CHECK(cm.percent(0, 0) == doctest::Approx(100.0 * 2 / 3));
    CHECK(cm.overall_accuracy() == doctest::Approx(4.0 / 6.0));
    const auto csv = cm.to_csv();
    CHECK(!csv.empty());

    CHECK_THROWS(confusion({0, 1}, {0}, 2));        // length mismatch
    CHECK_THROWS(confusion({0, 3}, {0, 1}, 2));     // prediction out of range
    CHECK_THROWS(confusion({0, 1}, {0, 2}, 2));     // label out of range
}

TEST_CASE("per-class accuracy reports nullopt for absent classes") {
    const std::vector<std::uint32_t> y = {0, 0, 2};
    const std::vector<std::uint32_t> p = {0, 1, 2};
    const auto pc = per_class_accuracy(p, y, 3);
    REQUIRE(pc.size() == 3);
    REQUIRE(pc[0].has_value());
    CHECK(*pc[0] == doctest::Approx(0.5));
    CHECK(!pc[1].has_value());  // no actual class-1 examples
    REQUIRE(pc[2].has_value());
    CHECK(*pc[2] == doctest::Approx(1.0));
}

TEST_CASE("layer checksum changes with the parameters") {
    Rng rng(3);
    nn::DenseLayer l(4, 3);
    l.init(rng);
    const auto h0 = layer_checksum(l);
    CHECK(h0 == layer_checksum(l));
    l.w(0, 0) += 1.0f;
    CHECK(layer_checksum(l) != h0);
}

TEST_CASE("probing a trained uni encoder recovers its accuracy and mutates nothing") {
    const auto ds = toy_dataset(150, 7);
    const auto sp = tail_split(ds, 30);
    model::TrainConfig cfg;
    cfg.seed = 11;
    cfg.max_iters = 300;
    auto b = train_unimodal(ds, sp, 1, cfg);

    const auto before_enc = layer_checksum(b.uni->enc);
    const auto before_head = layer_checksum(b.uni->head);
    model::TrainConfig pc;
    pc.seed = 12;
    pc.max_iters = 300;
    const auto rep = linear_probe(b, 1, ds, sp, pc);
    CHECK(layer_checksum(b.uni->enc) == before_enc);
    CHECK(layer_checksum(b.uni->head) == before_head);
    CHECK(rep.encoder_id == "uni1.enc");
    // a fresh linear head on the same frozen features should do at least
    // about as well as the model's own head
    CHECK(rep.probe_test_acc >= b.metrics.test_acc - 0.02);
}

TEST_CASE("probe of an untrained encoder on label-noise data sits at chance") {
    const auto ds = toy_dataset(400, 17, /*separable1=*/false);
    const auto sp = tail_split(ds, 100);
    model::ModelBundle b;
    b.kind = "uni";
    b.modality = 2;
    b.n_classes = 2;
    b.uni.emplace(ds.x2.cols(), 16, 2);
    Rng rng(19);
    b.uni->init(rng);
    model::TrainConfig pc;
    pc.seed = 21;
    pc.max_iters = 200;
    const auto rep = linear_probe(b, 2, ds, sp, pc);
    CHECK(rep.probe_test_acc > 0.5 - 0.1);
    CHECK(rep.probe_test_acc < 0.5 + 0.1);
}

TEST_CASE("fusion probes tap the requested encoder") {
    const auto ds = toy_dataset(150, 23);
    const auto sp = tail_split(ds, 30);
    model::TrainConfig cfg;
    cfg.seed = 25;
    cfg.max_iters = 200;
    auto b = train_naive_fusion(ds, sp, HeadKind::Mlp, cfg);

    model::TrainConfig pc;
    pc.seed = 26;
    pc.max_iters = 300;
    const auto r1 = linear_probe(b, 1, ds, sp, pc);
    const auto r2 = linear_probe(b, 2, ds, sp, pc);
    CHECK(r1.encoder_id == "fusion.enc1");
    CHECK(r2.encoder_id == "fusion.enc2");
    // labels depend only on modality 1 here
    CHECK(r1.probe_test_acc > 0.8);
    CHECK(r2.probe_test_acc < 0.75);
    CHECK_THROWS(linear_probe(b, 3, ds, sp, pc));
}

TEST_CASE("probe result is deterministic in its seed") {
    const auto ds = toy_dataset(120, 29);
    const auto sp = tail_split(ds, 24);
    model::TrainConfig cfg;
    cfg.seed = 31;
    cfg.max_iters = 150;
    auto b = train_unimodal(ds, sp, 1, cfg);
    model::TrainConfig pc;
    pc.seed = 33;
    pc.max_iters = 150;
    const auto a1 = linear_probe(b, 1, ds, sp, pc);
    const auto a2 = linear_probe(b, 1, ds, sp, pc);
    CHECK(a1.probe_test_acc == a2.probe_test_acc);
    CHECK(a1.probe_train_acc == a2.probe_train_acc);
}
