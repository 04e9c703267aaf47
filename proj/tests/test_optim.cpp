#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aac/optim.hpp"

using namespace aac;
using namespace aac::optim;

TEST(CosineLr, Endpoints) {
    EXPECT_EQ(cosine_lr(0, 100, 5e-4), 5e-4);
    EXPECT_EQ(cosine_lr(100, 100, 5e-4), 0.0);
    EXPECT_EQ(cosine_lr(50, 100, 5e-4), 2.5e-4);
    EXPECT_EQ(cosine_lr(2, 4, 1.0), 0.5);
}

TEST(CosineLr, MonotoneNonIncreasing) {
    for (std::size_t k = 0; k < 100; ++k) EXPECT_GE(cosine_lr(k, 100, 1.0), cosine_lr(k + 1, 100, 1.0));
}

TEST(CosineLr, BeyondScheduleThrows) { EXPECT_THROW(cosine_lr(101, 100, 1.0), std::out_of_range); }

namespace {

model::NamedParameter param(const std::string& name, std::vector<double> values, bool exempt = false) {
    const std::size_t n = values.size();
    return {name, Tensor::parameter({n}, std::move(values)), exempt};
}

void set_grad(model::NamedParameter& p, const std::vector<double>& g) {
    auto buf = p.tensor.grad_buffer();
    std::copy(g.begin(), g.end(), buf.begin());
}

}  // namespace

TEST(Clip, BelowThresholdUntouched) {
    std::vector<model::NamedParameter> ps{param("w", {0, 0})};
    set_grad(ps[0], {3, 4});
    EXPECT_EQ(clip_global_norm(ps, 10.0), 1.0);
    EXPECT_EQ(ps[0].tensor.grad()[0], 3.0);
}

TEST(Clip, RescalesToThreshold) {
    std::vector<model::NamedParameter> ps{param("w", {0, 0})};
    set_grad(ps[0], {30, 40});
    EXPECT_DOUBLE_EQ(clip_global_norm(ps, 10.0), 0.2);
    EXPECT_DOUBLE_EQ(ps[0].tensor.grad()[0], 6.0);
    EXPECT_DOUBLE_EQ(ps[0].tensor.grad()[1], 8.0);
}

TEST(Clip, GlobalNormAcrossParameters) {
    std::vector<model::NamedParameter> ps{param("a", {0}), param("b", {0, 0})};
    set_grad(ps[0], {12});
    set_grad(ps[1], {0, 16});
    clip_global_norm(ps, 10.0);
    EXPECT_NEAR(global_grad_norm(ps), 10.0, 1e-12);
    EXPECT_NEAR(ps[0].tensor.grad()[0] / ps[1].tensor.grad()[1], 0.75, 1e-15);
}

TEST(Clip, NonFiniteThrows) {
    std::vector<model::NamedParameter> ps{param("w", {0})};
    set_grad(ps[0], {std::nan("")});
    EXPECT_THROW(clip_global_norm(ps, 10.0), std::runtime_error);
}

TEST(AdamW, FirstStepWithoutDecayMovesByLr) {
    std::vector<model::NamedParameter> ps{param("w", {1.0})};
    set_grad(ps[0], {1.0});
    OptimConfig cfg;
    cfg.weight_decay = 0.0;
    AdamWState st;
    adamw_step(ps, st, 1e-3, cfg);
    // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps)
    EXPECT_NEAR(ps[0].tensor.at(0), 1.0 - 1e-3, 1e-10);
    EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientGivesGeometricDecay) {
    std::vector<model::NamedParameter> ps{param("w", {1.5, -2.0}), param("b", {0.7}, true)};
    OptimConfig cfg;
    cfg.weight_decay = 2.0;
    AdamWState st;
    const double lr = 1e-2;
    double expected0 = 1.5, expected1 = -2.0;
    for (int i = 0; i < 5; ++i) {
        adamw_step(ps, st, lr, cfg);
        expected0 *= (1.0 - lr * 2.0);
        expected1 *= (1.0 - lr * 2.0);
        EXPECT_EQ(ps[0].tensor.at(0), expected0);
        EXPECT_EQ(ps[0].tensor.at(1), expected1);
        EXPECT_EQ(ps[1].tensor.at(0), 0.7);
    }
}

TEST(AdamW, MatchesIndependentAdamOracle) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> theta{0.3, -1.2, 2.5};
    std::vector<model::NamedParameter> ps{param("w", theta)};
    OptimConfig cfg;
    cfg.weight_decay = 0.0;
    AdamWState st;
    std::vector<double> m(3, 0.0), v(3, 0.0);
    const double lr = 3e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 100; ++t) {
        std::vector<double> g{n(rng), n(rng), n(rng)};
        ps[0].tensor.zero_grad();
        set_grad(ps[0], g);
        adamw_step(ps, st, lr, cfg);
        for (std::size_t i = 0; i < 3; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            theta[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(ps[0].tensor.at(i), theta[i], 1e-12);
}

TEST(AdamW, StateShapeMismatchThrows) {
    std::vector<model::NamedParameter> ps{param("w", {1.0, 2.0})};
    AdamWState st;
    st.moments["w"] = {{0.0}, {0.0}};
    EXPECT_THROW(adamw_step(ps, st, 1e-3, {}), std::invalid_argument);
}

TEST(OptimConfig, Validation) {
    OptimConfig c;
    EXPECT_NO_THROW(c.validate());
    c.beta2 = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.clip_norm = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
