#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "aac/grad_check.hpp"
#include "aac/tensor.hpp"

using namespace aac;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(values(matmul(eye, b)), values(b));
}

TEST(Matmul, HandEvaluated) {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {0, 1});
    Tensor c = matmul(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_EQ(values(c), (std::vector<double>{2, 4}));
}

TEST(Matmul, InnerDimensionMismatchThrows) {
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST(Softmax, UniformRow) {
    auto s = values(softmax(Tensor::from({1, 3}, {0, 0, 0})));
    for (double v : s) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, HandEvaluated) {
    auto s = values(softmax(Tensor::from({1, 2}, {0, std::log(3.0)})));
    EXPECT_NEAR(s[0], 0.25, 1e-15);
    EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
    Tensor x = Tensor::from({2, 3}, {0.1, -2.0, 3.5, 8.0, 7.0, -5.0});
    Tensor shifted = Tensor::from({2, 3}, {100.1, 98.0, 103.5, 108.0, 107.0, 95.0});
    auto a = values(softmax(x)), b = values(softmax(shifted));
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], 1e-12);
        EXPECT_GT(a[i], 0.0);
        EXPECT_LT(a[i], 1.0);
    }
    EXPECT_NEAR(a[0] + a[1] + a[2], 1.0, 1e-12);
    EXPECT_NEAR(a[3] + a[4] + a[5], 1.0, 1e-12);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
    auto y = values(layer_norm(Tensor::from({1, 3}, {2, 2, 2}), Tensor::full({3}, 1.0), Tensor::zeros({3}), 1e-5));
    for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, HandEvaluatedWithoutEps) {
    auto y = values(layer_norm(Tensor::from({1, 2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0));
    EXPECT_DOUBLE_EQ(y[0], -1.0);
    EXPECT_DOUBLE_EQ(y[1], 1.0);
}

TEST(Gelu, KnownValues) {
    auto y = values(gelu(Tensor::from({3}, {0.0, 10.0, 1.0})));
    EXPECT_EQ(y[0], 0.0);
    EXPECT_NEAR(y[1], 10.0, 1e-12);
    EXPECT_NEAR(y[2], 0.841344746068543, 1e-12);
}

TEST(Embedding, GathersRowsAndScatterAddsGradient) {
    Tensor table = Tensor::parameter({3, 2}, {1, 2, 3, 4, 5, 6});
    const std::vector<int> ids{2, 0, 2};
    Tensor e = embedding(table, ids);
    EXPECT_EQ(values(e), (std::vector<double>{5, 6, 1, 2, 5, 6}));
    sum(e).backward();
    EXPECT_EQ(std::vector<double>(table.grad().begin(), table.grad().end()), (std::vector<double>{1, 1, 0, 0, 2, 2}));
}

TEST(Embedding, OutOfRangeIdThrows) {
    const std::vector<int> ids{3};
    EXPECT_THROW(embedding(Tensor::zeros({3, 2}), ids), std::out_of_range);
}

TEST(Dropout, IdentityWhenDisabled) {
    Rng rng(1);
    Tensor x = Tensor::from({1, 4}, {1, 2, 3, 4});
    EXPECT_EQ(values(dropout(x, 0.0, true, rng)), values(x));
    EXPECT_EQ(values(dropout(x, 0.5, false, rng)), values(x));
}

TEST(Dropout, KeepRateAndScaling) {
    Rng rng(7);
    const double p = 0.2;
    Tensor x = Tensor::full({1, 100000}, 1.0);
    auto y = values(dropout(x, p, true, rng));
    std::size_t kept = 0;
    for (double v : y) {
        if (v != 0.0) {
            ++kept;
            EXPECT_DOUBLE_EQ(v, 1.0 / (1.0 - p));
        }
    }
    EXPECT_NEAR(static_cast<double>(kept) / 1e5, 1.0 - p, 0.01);
}

TEST(Backward, SumGivesOnes) {
    Tensor x = Tensor::parameter({3}, {1, -2, 5});
    sum(x).backward();
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
    Tensor x = Tensor::parameter({2}, {1, 2});
    sum(mul(x, x)).backward();
    EXPECT_EQ(x.grad()[0], 2.0);
    EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Backward, AccumulatesUntilZeroed) {
    Tensor x = Tensor::parameter({2}, {1, 2});
    sum(x).backward();
    sum(x).backward();
    EXPECT_EQ(x.grad()[0], 2.0);
    x.zero_grad();
    for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarRejected) {
    Tensor x = Tensor::parameter({2}, {1, 2});
    EXPECT_THROW(scale(x, 2.0).backward(), std::logic_error);
}

TEST(Backward, ConsumedTapeRejected) {
    Tensor x = Tensor::parameter({2}, {1, 2});
    Tensor loss = sum(mul(x, x));
    loss.backward();
    EXPECT_THROW(loss.backward(), std::logic_error);
}

TEST(Backward, NoGradGuardKeepsOpsOffTape) {
    Tensor x = Tensor::parameter({2}, {1, 2});
    Tensor y;
    {
        NoGradGuard guard;
        y = sum(mul(x, x));
    }
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(grad_enabled());
}

TEST(Backward, DeterministicAcrossRuns) {
    auto run = [] {
        Rng rng(3);
        Tensor a = Tensor::parameter({3, 3}, {0.1, 0.2, -0.3, 0.4, 0.5, 0.6, -0.7, 0.8, 0.9});
        Tensor y = sum(gelu(matmul(softmax(a), dropout(a, 0.3, true, rng))));
        y.backward();
        return std::pair{y.item(), std::vector<double>(a.grad().begin(), a.grad().end())};
    };
    EXPECT_EQ(run(), run());
}

TEST(GradCheck, LinearFunctionIsExact) {
    Tensor x = Tensor::parameter({3}, {0.5, -1.0, 2.0});
    auto r = grad_check([&] { return sum(scale(x, 3.0)); }, {x});
    EXPECT_TRUE(r.passed);
    EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, SoftmaxMatmulChain) {
    Tensor a = Tensor::parameter({2, 3}, {0.3, -0.1, 0.8, 1.2, -0.7, 0.05});
    Tensor b = Tensor::parameter({3, 3}, {0.2, 0.1, -0.4, 0.9, -0.3, 0.6, 0.0, 0.5, -0.2});
    Tensor w = Tensor::from({2, 3}, {1, -2, 3, 0.5, 0.25, -1});
    auto r = grad_check([&] { return sum(mul(softmax(matmul(a, b)), w)); }, {a, b});
    EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(GradCheck, CorruptedGradientIsFlagged) {
    Tensor x = Tensor::parameter({3}, {0.5, -1.0, 2.0});
    auto wrong_square = [](const Tensor& t) {
        std::vector<double> out;
        for (double v : t.data()) out.push_back(v * v);
        return make_op(t.shape(), std::move(out), {t}, [t](std::span<const double>, std::span<const double> g) {
            Tensor in = t;
            auto gi = in.grad_buffer();
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] * 3.0 * t.data()[i];  // should be 2x
        });
    };
    auto r = grad_check([&] { return sum(wrong_square(x)); }, {x});
    EXPECT_FALSE(r.passed);
    EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(GradSuite, EveryCasePassesForTwoSeeds) {
    auto rows = run_grad_suite(2);
    EXPECT_GT(rows.size(), 30u);
    for (const auto& row : rows) EXPECT_TRUE(row.report.passed) << row.name << " seed " << row.seed << ": " << row.report.max_rel_error;
}
