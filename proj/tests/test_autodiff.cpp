#include <gtest/gtest.h>

#include <cmath>

#include "frost/autodiff.hpp"
#include "frost/error.hpp"
#include "support/grad_cases.hpp"
#include "support/oracles.hpp"

using namespace frost;

TEST(Autodiff, MatmulIdentity) {
    ad::Tape t;
    auto i2 = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    auto m = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    EXPECT_EQ(ad::matmul(i2, m).value().values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Autodiff, MatmulAnnihilates) {
    ad::Tape t;
    auto a = t.constant(Tensor::matrix({{1, 0}, {0, 0}}));
    auto b = t.constant(Tensor::matrix({{0, 0}, {0, 1}}));
    for (double v : ad::matmul(a, b).value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, MatmulShapeMismatchThrows) {
    ad::Tape t;
    auto a = t.constant(Tensor({2, 3}));
    auto b = t.constant(Tensor({2, 3}));
    EXPECT_THROW(ad::matmul(a, b), ShapeError);
}

TEST(Autodiff, MatmulGradientMatchesFiniteDifferences) {
    Rng rng = make_stream(1, "test.matmul");
    gradcheck::Problem p{{gradcheck::randn({3, 4}, rng), gradcheck::randn({4, 2}, rng)},
                         [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::sum(ad::matmul(v[0], v[1])); }};
    EXPECT_TRUE(gradcheck::run(p, 1e-4, 1e-8, 1e-5).ok);
}

TEST(Autodiff, SoftmaxSymmetricCases) {
    ad::Tape t;
    auto s = ad::softmax(t.constant(Tensor::vector({0, 0}))).value();
    EXPECT_DOUBLE_EQ(s[0], 0.5);
    EXPECT_DOUBLE_EQ(s[1], 0.5);
    for (double tau : {0.5, 1.0, 3.0}) {
        auto u = ad::softmax(t.constant(Tensor::vector({2.5, 2.5, 2.5})), tau).value();
        for (double v : u.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    }
}

TEST(Autodiff, SoftmaxWithTemperatureMatchesDirectEvaluation) {
    ad::Tape t;
    auto s = ad::softmax(t.constant(Tensor::vector({2, 0})), 2.0).value();
    const double e1 = std::exp(1.0), e0 = 1.0;
    EXPECT_NEAR(s[0], e1 / (e1 + e0), 1e-12);
    EXPECT_NEAR(s[1], e0 / (e1 + e0), 1e-12);
}

TEST(Autodiff, SoftmaxRejectsNonPositiveTemperature) {
    ad::Tape t;
    EXPECT_THROW(ad::softmax(t.constant(Tensor::vector({1, 2})), 0.0), ParameterError);
}

TEST(Autodiff, ElementwiseDefinitions) {
    ad::Tape t;
    EXPECT_EQ(ad::relu(t.constant(Tensor::vector({-1, 0, 2}))).value().values(), (std::vector<double>{0, 0, 2}));
    auto x = t.constant(Tensor::vector({0.5, 1.5}));
    auto back = ad::log(ad::exp(x)).value();
    EXPECT_NEAR(back[0], 0.5, 1e-12);
    EXPECT_NEAR(back[1], 1.5, 1e-12);
}

TEST(Autodiff, ReluSubgradientConvention) {
    ad::Tape t;
    auto x = t.variable(Tensor::vector({-1, 2, 0}));
    t.backward(ad::sum(ad::relu(x)));
    EXPECT_EQ(t.grad(x).values(), (std::vector<double>{0, 1, 0}));
}

TEST(Autodiff, LogOfNonPositiveIsDomainError) {
    ad::Tape t;
    EXPECT_THROW(ad::log(t.constant(Tensor::vector({1.0, 0.0}))), DomainError);
    EXPECT_THROW(ad::log(t.constant(Tensor::vector({-1.0}))), DomainError);
}

TEST(Autodiff, SquareGradient) {
    ad::Tape t;
    auto x = t.variable(Tensor::scalar(3.0));
    t.backward(ad::sum(ad::square(x)));
    EXPECT_DOUBLE_EQ(t.grad(x)[0], 6.0);
}

TEST(Autodiff, SumOfSoftmaxHasZeroGradient) {
    ad::Tape t;
    auto x = t.variable(Tensor::vector({0.3, -1.2, 2.0, 0.0}));
    t.backward(ad::sum(ad::softmax(x)));
    const auto gx = t.grad(x);
    for (double g : gx.values()) EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST(Autodiff, BackwardRequiresScalar) {
    ad::Tape t;
    auto x = t.variable(Tensor::vector({1, 2}));
    EXPECT_THROW(t.backward(ad::square(x)), ShapeError);
}

TEST(Autodiff, GradientsAccumulateAcrossPaths) {
    ad::Tape t;
    auto x = t.variable(Tensor::vector({2.0}));
    // x*x + 3x: derivative 2x + 3
    t.backward(ad::sum(ad::add(ad::mul(x, x), ad::scale(x, 3.0))));
    EXPECT_DOUBLE_EQ(t.grad(x)[0], 7.0);
}

TEST(Autodiff, BackwardVisitsInReverseOrder) {
    ad::Tape t;
    auto x = t.variable(Tensor::vector({1.0, 2.0}));
    auto y = ad::exp(x);
    auto z = ad::square(y);
    auto l = ad::sum(z);
    t.backward(l);
    const auto& order = t.backward_order();
    ASSERT_EQ(order.size(), 3u);
    EXPECT_EQ(order[0], l.id());
    EXPECT_EQ(order[1], z.id());
    EXPECT_EQ(order[2], y.id());
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
    ad::Tape t;
    auto c = t.constant(Tensor::vector({1.0, 2.0}));
    auto x = t.variable(Tensor::vector({3.0, 4.0}));
    t.backward(ad::sum(ad::mul(c, x)));
    EXPECT_FALSE(c.requires_grad());
    EXPECT_EQ(t.grad(c).values(), (std::vector<double>{0, 0}));
    EXPECT_EQ(t.grad(x).values(), (std::vector<double>{1, 2}));
}

TEST(Autodiff, TwoLayerNetworkGradient) {
    Rng rng = make_stream(2, "test.mlp");
    gradcheck::Problem p{{gradcheck::randn({5, 4}, rng), gradcheck::randn({6, 4}, rng), gradcheck::randn({6}, rng),
                          gradcheck::randn({3, 6}, rng), gradcheck::randn({3}, rng)},
                         [](ad::Tape&, const std::vector<ad::Var>& v) {
                             auto h = ad::relu(ad::linear(v[0], v[1], v[2]));
                             return ad::mean(ad::square(ad::linear(h, v[3], v[4])));
                         }};
    EXPECT_TRUE(gradcheck::run(p).ok);
}

class GradCase : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradCase, MatchesFiniteDifferences) {
    const auto cases = gradcheck::all_cases();
    const auto& c = cases.at(GetParam());
    Rng rng = make_stream(11, "test.grad." + c.name);
    for (int i = 0; i < 10; ++i) {
        const auto o = gradcheck::run(c.make(rng));
        EXPECT_TRUE(o.ok) << c.name << " config " << i << " worst " << o.worst;
    }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradCase, ::testing::Range<std::size_t>(0, gradcheck::all_cases().size()),
                         [](const auto& info) { return gradcheck::all_cases().at(info.param).name; });
