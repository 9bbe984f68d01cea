#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmlab/nn.hpp"
#include "mmlab/rng.hpp"

#include "f64_shadow.hpp"

using namespace mmlab;
using namespace mmlab::nn;

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

std::vector<std::uint32_t> random_labels(std::int64_t n, std::uint32_t k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint32_t> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<std::uint32_t>(rng.below(k));
    return y;
}

}  // namespace

TEST_CASE("dense forward matches a hand computation") {
    DenseLayer l(2, 3);
    // w is out x in
    l.w(0, 0) = 1.0f; l.w(0, 1) = 2.0f;
    l.w(1, 0) = -1.0f; l.w(1, 1) = 0.5f;
    l.w(2, 0) = 0.0f; l.w(2, 1) = 1.0f;
    l.b = {0.1f, 0.2f, 0.3f};
    Matrix x(1, 2);
    x(0, 0) = 3.0f; x(0, 1) = 4.0f;
    Matrix y = l.forward(x);
    CHECK(y(0, 0) == doctest::Approx(3 + 8 + 0.1));
    CHECK(y(0, 1) == doctest::Approx(-3 + 2 + 0.2));
    CHECK(y(0, 2) == doctest::Approx(4 + 0.3));
}

TEST_CASE("init respects the fan bound and is seed-deterministic") {
    Rng r1(5), r2(5);
    DenseLayer a(40, 30), b(40, 30);
    a.init(r1);
    b.init(r2);
    const float bound = std::sqrt(6.0f / (40 + 30));
    for (std::int64_t i = 0; i < a.w.size(); ++i) {
        CHECK(std::fabs(a.w.data()[i]) <= bound);
        CHECK(a.w.data()[i] == b.w.data()[i]);
    }
    for (float v : a.b) CHECK(v == 0.0f);
}

TEST_CASE("softmax rows sum to one and are translation invariant") {
    Matrix logits = randn_matrix(17, 5, 3);
    Matrix p = softmax(logits);
    for (std::int64_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < p.cols(); ++j) {
            CHECK(p(i, j) >= 0.0f);
            s += p(i, j);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
    Matrix shifted = logits;
    for (std::int64_t i = 0; i < shifted.rows(); ++i)
        for (std::int64_t j = 0; j < shifted.cols(); ++j) shifted(i, j) += 100.0f;
    Matrix p2 = softmax(shifted);
    for (std::int64_t i = 0; i < p.size(); ++i)
        CHECK(p.data()[i] == doctest::Approx(p2.data()[i]).epsilon(1e-4));
}

TEST_CASE("softmax_xent loss at uniform logits is log(K)") {
    Matrix logits(6, 4);  // all zeros
    const auto y = random_labels(6, 4, 7);
    auto res = softmax_xent(logits, y);
    CHECK(res.loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("softmax_xent rejects out-of-range labels") {
    Matrix logits(3, 2);
    std::vector<std::uint32_t> y = {0, 1, 2};
    CHECK_THROWS(softmax_xent(logits, y));
}

TEST_CASE("softmax_xent gradient sums to zero per row") {
    Matrix logits = randn_matrix(11, 3, 9);
    const auto y = random_labels(11, 3, 10);
    auto res = softmax_xent(logits, y);
    for (std::int64_t i = 0; i < res.grad.rows(); ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < res.grad.cols(); ++j) s += res.grad(i, j);
        CHECK(s == doctest::Approx(0.0).epsilon(1).scale(1e-6));
    }
}

TEST_CASE("mse of identical matrices is zero") {
    Matrix a = randn_matrix(4, 6, 11);
    auto res = mse(a, a);
    CHECK(res.loss == 0.0);
    for (std::int64_t i = 0; i < res.grad.size(); ++i) CHECK(res.grad.data()[i] == 0.0f);
}

TEST_CASE("sgd_step applies p -= lr*g exactly") {
    std::vector<float> p = {1.0f, 2.0f, -3.0f};
    std::vector<float> g = {0.5f, -1.0f, 2.0f};
    sgd_step(p, g, 0.1f);
    CHECK(p[0] == doctest::Approx(1.0f - 0.05f));
    CHECK(p[1] == doctest::Approx(2.0f + 0.1f));
    CHECK(p[2] == doctest::Approx(-3.0f - 0.2f));
}

TEST_CASE("dense + softmax_xent gradients pass the finite-difference check") {
    Rng rng(21);
    for (int inst = 0; inst < 10; ++inst) {
        const std::int64_t n = 7, in = 5, out = 4;
        DenseLayer l(in, out);
        l.init(rng);
        Matrix x = randn_matrix(n, in, 100 + inst);
        const auto y = random_labels(n, out, 200 + inst);

        auto res = softmax_xent(l.forward(x), y);
        Matrix gw;
        std::vector<float> gb;
        l.backward(x, res.grad, gw, gb, false);

        auto dx = shadow::from_matrix(x);
        auto dw = shadow::from_matrix(l.w);
        auto db = shadow::from_floats(l.b.data(), l.b.size());
        auto loss_fn = [&] { return shadow::xent(shadow::dense(dx, n, in, dw, db, out), n, out, y); };
        Rng pick(300 + inst);
        const double err = shadow::max_grad_rel_err({&dw, &db}, {gw.data(), gb.data()},
                                                    loss_fn, pick, 32);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("two-layer relu network gradients pass the finite-difference check") {
    Rng rng(22);
    for (int inst = 0; inst < 10; ++inst) {
        const std::int64_t n = 6, in = 4, hid = 8, out = 3;
        DenseLayer l1(in, hid), l2(hid, out);
        l1.init(rng);
        l2.init(rng);
        Matrix x = randn_matrix(n, in, 400 + inst);
        const auto y = random_labels(n, out, 500 + inst);

        Matrix h = l1.forward(x);
        Matrix f = relu_forward(h);
        auto res = softmax_xent(l2.forward(f), y);
        Matrix gw2, gw1;
        std::vector<float> gb2, gb1;
        Matrix gf = l2.backward(f, res.grad, gw2, gb2, true);
        Matrix gh = relu_backward(h, gf);
        l1.backward(x, gh, gw1, gb1, false);

        auto dx = shadow::from_matrix(x);
        auto dw1 = shadow::from_matrix(l1.w);
        auto db1 = shadow::from_floats(l1.b.data(), l1.b.size());
        auto dw2 = shadow::from_matrix(l2.w);
        auto db2 = shadow::from_floats(l2.b.data(), l2.b.size());
        auto loss_fn = [&] {
            auto dh = shadow::relu(shadow::dense(dx, n, in, dw1, db1, hid));
            return shadow::xent(shadow::dense(dh, n, hid, dw2, db2, out), n, out, y);
        };
        Rng pick(600 + inst);
        const double err = shadow::max_grad_rel_err(
            {&dw1, &db1, &dw2, &db2}, {gw1.data(), gb1.data(), gw2.data(), gb2.data()},
            loss_fn, pick, 32);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("mse gradients pass the finite-difference check") {
    Rng rng(23);
    const std::int64_t n = 5, in = 4, out = 6;
    DenseLayer l(in, out);
    l.init(rng);
    Matrix x = randn_matrix(n, in, 700);
    Matrix target = randn_matrix(n, out, 701);

    auto res = mse(l.forward(x), target);
    Matrix gw;
    std::vector<float> gb;
    l.backward(x, res.grad, gw, gb, false);

    auto dx = shadow::from_matrix(x);
    auto dw = shadow::from_matrix(l.w);
    auto db = shadow::from_floats(l.b.data(), l.b.size());
    auto dt = shadow::from_matrix(target);
    auto loss_fn = [&] { return shadow::mse(shadow::dense(dx, n, in, dw, db, out), dt); };
    Rng pick(702);
    const double err = shadow::max_grad_rel_err({&dw, &db}, {gw.data(), gb.data()},
                                                loss_fn, pick, 48);
    CHECK(err < 1e-4);
}

TEST_CASE("the built-in f32 grad_check utility agrees at its native precision") {
    // sanity for the shipped helper: f32 finite differences are good to ~1e-3
    Rng rng(25);
    const std::int64_t n = 7, in = 5, out = 4;
    DenseLayer l(in, out);
    l.init(rng);
    Matrix x = randn_matrix(n, in, 900);
    const auto y = random_labels(n, out, 901);
    auto loss_fn = [&] { return softmax_xent(l.forward(x), y).loss; };
    auto res = softmax_xent(l.forward(x), y);
    Matrix gw;
    std::vector<float> gb;
    l.backward(x, res.grad, gw, gb, false);
    float* params[2] = {l.w.data(), l.b.data()};
    const std::size_t sizes[2] = {static_cast<std::size_t>(l.w.size()), l.b.size()};
    const float* grads[2] = {gw.data(), gb.data()};
    Rng pick(902);
    auto rep = grad_check(std::span<float*>(params, 2), std::span<const std::size_t>(sizes, 2),
                          std::span<const float*>(grads, 2), loss_fn, pick, 32);
    CHECK(rep.checked > 0);
    CHECK(rep.max_rel_err < 5e-3);
}

TEST_CASE("backward grad_input matches finite differences on the input") {
    Rng rng(24);
    const std::int64_t n = 3, in = 5, out = 4;
    DenseLayer l(in, out);
    l.init(rng);
    Matrix x = randn_matrix(n, in, 800);
    const auto y = random_labels(n, out, 801);

    auto res = softmax_xent(l.forward(x), y);
    Matrix gw;
    std::vector<float> gb;
    Matrix gx = l.backward(x, res.grad, gw, gb, true);
    REQUIRE(gx.rows() == n);
    REQUIRE(gx.cols() == in);

    const double h = 1e-3;
    for (std::int64_t i = 0; i < x.size(); i += 3) {
        const float orig = x.data()[i];
        x.data()[i] = static_cast<float>(orig + h);
        const double lp = softmax_xent(l.forward(x), y).loss;
        x.data()[i] = static_cast<float>(orig - h);
        const double lm = softmax_xent(l.forward(x), y).loss;
        x.data()[i] = orig;
        const double numeric = (lp - lm) / (2 * h);
        const double analytic = gx.data()[i];
        const double den = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
        CHECK(std::fabs(numeric - analytic) / den < 1e-3);
    }
}
