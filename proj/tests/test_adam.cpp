#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "vitfill/adam.hpp"

using namespace vitfill;

TEST_SUITE_BEGIN("adam");

TEST_CASE("first step moves by ~lr in the gradient direction") {
    AdamConfig cfg;
    cfg.lr = 1e-2;
    cfg.weight_decay = 0.0;
    auto p = Tensor<float>({2}, {1.0f, -1.0f});
    auto g = Tensor<float>({2}, {0.3f, -0.7f});
    auto st = AdamState<float>::shaped_like(p);
    adam_update(p, g, st, cfg);
    // after bias correction m_hat = g, v_hat = g^2, so the step is
    // lr * g / (|g| + eps) = lr * sign(g) almost exactly
    CHECK(p.data[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-5));
    CHECK(p.data[1] == doctest::Approx(-1.0 + 1e-2).epsilon(1e-5));
    CHECK(st.step == 1);
}

TEST_CASE("two steps match a hand-rolled double-precision reference") {
    AdamConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 1e-5;
    auto p = Tensor<double>({1}, {0.5});
    auto st = AdamState<double>::shaped_like(p);
    const double g1 = 0.2, g2 = -0.1;

    double m = 0, v = 0, ref = 0.5;
    for (int step = 1; step <= 2; ++step) {
        const double g = step == 1 ? g1 : g2;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, step));
        const double vh = v / (1.0 - std::pow(0.999, step));
        ref = ref - cfg.lr * mh / (std::sqrt(vh) + cfg.eps) - cfg.lr * cfg.weight_decay * ref;
    }
    adam_update(p, Tensor<double>({1}, {g1}), st, cfg);
    adam_update(p, Tensor<double>({1}, {g2}), st, cfg);
    CHECK(p.data[0] == doctest::Approx(ref).epsilon(1e-14));
}

TEST_CASE("weight decay is decoupled from the gradient") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.5;
    auto p = Tensor<float>({1}, {2.0f});
    auto st = AdamState<float>::shaped_like(p);
    adam_update(p, Tensor<float>({1}, {0.0f}), st, cfg);
    // zero gradient: the only movement is -lr * wd * p
    CHECK(p.data[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-6));
}

TEST_CASE("drives a quadratic to its minimum") {
    AdamConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.0;
    auto p = Tensor<double>({1}, {-4.0});
    auto st = AdamState<double>::shaped_like(p);
    for (int i = 0; i < 2000; ++i) {
        const double g = 2.0 * (p.data[0] - 3.0);
        adam_update(p, Tensor<double>({1}, {g}), st, cfg);
    }
    CHECK(p.data[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("shape mismatches are rejected") {
    AdamConfig cfg;
    auto p = Tensor<float>::zeros({2});
    auto st = AdamState<float>::shaped_like(p);
    CHECK_THROWS_AS(adam_update(p, Tensor<float>::zeros({3}), st, cfg), DimensionError);
    auto bad = AdamState<float>::shaped_like(Tensor<float>::zeros({4}));
    CHECK_THROWS_AS(adam_update(p, Tensor<float>::zeros({2}), bad, cfg), DimensionError);
}

TEST_SUITE_END();
