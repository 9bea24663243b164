#include <gtest/gtest.h>

#include <cmath>

#include "frost/objectives.hpp"

using namespace frost;

namespace {

double value(const std::function<ad::Var(ad::Tape&)>& f) {
    ad::Tape t;
    return f(t).value().item();
}

}  // namespace

TEST(CrossEntropy, UniformLogitsTwoClasses) {
    const double v = value([](ad::Tape& t) {
        return cross_entropy_supervised(t.constant(Tensor::matrix({{0.3, 0.3}})), Tensor::matrix({{0, 1}}));
    });
    EXPECT_NEAR(v, std::log(2.0) / 2.0, 1e-12);
}

TEST(CrossEntropy, SaturatedIsNearZero) {
    const double v = value([](ad::Tape& t) {
        return cross_entropy_supervised(t.constant(Tensor::matrix({{50, -50, -50}})), Tensor::matrix({{1, 0, 0}}));
    });
    EXPECT_LE(v, 1e-10);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusTargetOverC) {
    ad::Tape t;
    auto l = t.variable(Tensor::matrix({{0.5, -1.0, 2.0}}));
    const auto y = Tensor::matrix({{0, 1, 0}});
    t.backward(cross_entropy_supervised(l, y));
    const auto p = ad::softmax(t.constant(l.value())).value();
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(t.grad(l)[k], (p[k] - y[k]) / 3.0, 1e-12);
}

TEST(CrossEntropy, RejectsNonOneHot) {
    ad::Tape t;
    EXPECT_THROW(cross_entropy_supervised(t.constant(Tensor::matrix({{1, 2}})), Tensor::matrix({{0.5, 0.5}})),
                 ValidationError);
    EXPECT_THROW(cross_entropy_supervised(t.constant(Tensor::matrix({{1, 2}})), Tensor::matrix({{1, 0, 0}})),
                 ShapeError);
}

TEST(Lwf, IdenticalLogitsSoftmaxModeHasZeroGradient) {
    ad::Tape t;
    const auto frozen = Tensor::matrix({{1.0, -0.5, 2.0}, {0.0, 0.3, 0.1}});
    auto live = t.variable(frozen);
    t.backward(lwf_logit_kd(frozen, live, 2.0, LwfMode::Softmax));
    const auto gl = t.grad(live);
    for (double g : gl.values()) EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST(Lwf, IdenticalLogitsPreSoftmaxIsZero) {
    const auto frozen = Tensor::matrix({{1.0, -0.5}});
    EXPECT_EQ(value([&](ad::Tape& t) { return lwf_logit_kd(frozen, t.constant(frozen), 2.0, LwfMode::PreSoftmax); }), 0.0);
}

TEST(Lwf, SoftmaxModeDirectEvaluation) {
    const double got = value([](ad::Tape& t) {
        return lwf_logit_kd(Tensor::matrix({{1, 0}}), t.constant(Tensor::matrix({{0, 1}})), 1.0, LwfMode::Softmax);
    });
    const double a = std::exp(1.0) / (std::exp(1.0) + 1.0), b = 1.0 - a;
    // -(1/C) sum_k pi_k(frozen) log pi_k(live); live probabilities are (b, a).
    const double expected = -(a * std::log(b) + b * std::log(a)) / 2.0;
    EXPECT_NEAR(got, expected, 1e-12);
}

TEST(Lwf, RejectsBadTemperature) {
    ad::Tape t;
    EXPECT_THROW(lwf_logit_kd(Tensor::matrix({{1, 0}}), t.constant(Tensor::matrix({{1, 0}})), 0.0, LwfMode::Softmax),
                 ParameterError);
}

TEST(RankStats, Examples) {
    std::vector<double> a{3, 2, 1, 0}, b{0, 1, 2, 3}, c{5, 4, 0}, d{4, 5, 0};
    EXPECT_EQ(rank_stats_pair_label(a, a, 2), 1);
    EXPECT_EQ(rank_stats_pair_label(a, b, 2), 0);
    EXPECT_EQ(rank_stats_pair_label(c, d, 2), 1);
    EXPECT_THROW(rank_stats_pair_label(a, a, 0), ParameterError);
    EXPECT_THROW(rank_stats_pair_label(a, a, 5), ParameterError);
    EXPECT_THROW(rank_stats_pair_label(a, c, 2), ShapeError);
}

TEST(RankStats, BatchMatrixAgreesWithPairs) {
    const auto z = Tensor::matrix({{3, 2, 1, 0}, {0, 1, 2, 3}, {2, 3, 0, 1}, {1, 1, 1, 1}});
    const auto y = rank_stats_pair_labels(z, 2);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(y.at(i, j), rank_stats_pair_label(z.row(i), z.row(j), 2));
}

TEST(PairwiseBce, PerfectPositivePair) {
    const double v = value([](ad::Tape& t) {
        auto l = t.constant(Tensor::vector({60, -60}));
        return pairwise_bce(l, l, 1);
    });
    EXPECT_LE(v, 1.1e-6);
}

TEST(PairwiseBce, SymmetricPointIsLn2) {
    for (int label : {0, 1}) {
        const double v = value([&](ad::Tape& t) {
            return pairwise_bce(t.constant(Tensor::vector({0.7, 0.7})), t.constant(Tensor::vector({2, -1})), label);
        });
        EXPECT_NEAR(v, std::log(2.0), 1e-12);
    }
}

TEST(PairwiseBce, DirectEvaluationNegativePair) {
    const double v = value([](ad::Tape& t) {
        return pairwise_bce(t.constant(Tensor::vector({1, 0})), t.constant(Tensor::vector({0, 1})), 0);
    });
    const double a = std::exp(1.0) / (std::exp(1.0) + 1.0), p = 2.0 * a * (1.0 - a);
    EXPECT_NEAR(v, -std::log(1.0 - p), 1e-12);
}

TEST(PairwiseBce, LogisticDotVariant) {
    const double v = value([](ad::Tape& t) {
        return pairwise_bce(t.constant(Tensor::vector({1, 0.5})), t.constant(Tensor::vector({0.2, 1})), 1,
                            PairSimilarity::LogisticDot);
    });
    EXPECT_NEAR(v, -std::log(1.0 / (1.0 + std::exp(-0.7))), 1e-12);
}

TEST(PairwiseBce, BatchAveragesPairs) {
    ad::Tape t;
    const auto l = Tensor::matrix({{1, 0}, {0, 1}, {0.5, 0.5}});
    const auto y = Tensor::matrix({{1, 0, 1}, {0, 1, 0}, {1, 0, 1}});
    const double batch = pairwise_bce_batch(t.constant(l), y).value().item();
    double sum = 0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j)
            sum += pairwise_bce(t.constant(Tensor::vector({l.at(i, 0), l.at(i, 1)})),
                                t.constant(Tensor::vector({l.at(j, 0), l.at(j, 1)})), static_cast<int>(y.at(i, j)))
                       .value()
                       .item();
    EXPECT_NEAR(batch, sum / 3.0, 1e-12);
    EXPECT_THROW(pairwise_bce_batch(t.constant(Tensor::matrix({{1, 0}})), Tensor({1, 1})), ShapeError);
}

TEST(PseudoLabels, OffsetAndTies) {
    std::vector<double> peak{0.1, 0.2, 0.9, 0.3}, flat{1, 1, 1};
    EXPECT_EQ(make_pseudo_label(peak, 5), 7u);
    EXPECT_EQ(make_pseudo_label(std::vector<double>{3, 1}, 0), 0u);
    EXPECT_EQ(make_pseudo_label(flat, 5), 5u);
}

TEST(SelfTraining, UniformAndSaturated) {
    EXPECT_NEAR(value([](ad::Tape& t) { return self_training_loss(t.constant(Tensor::matrix({{0, 0}})), {1}); }),
                std::log(2.0) / 2.0, 1e-12);
    EXPECT_LE(value([](ad::Tape& t) { return self_training_loss(t.constant(Tensor::matrix({{-50, 50}})), {1}); }),
              1e-10);
}

TEST(SelfTraining, RelabelingSymmetry) {
    const double a = value([](ad::Tape& t) {
        return self_training_loss(t.constant(Tensor::matrix({{2, -1}, {0.5, 1}})), {0, 1});
    });
    const double b = value([](ad::Tape& t) {
        return self_training_loss(t.constant(Tensor::matrix({{-1, 2}, {1, 0.5}})), {1, 0});
    });
    EXPECT_NEAR(a, b, 1e-15);
}

TEST(Consistency, Values) {
    const auto p = Tensor::matrix({{1, 0}}), q = Tensor::matrix({{0, 1}});
    EXPECT_EQ(value([&](ad::Tape& t) { return consistency_mse(t.constant(p), t.constant(p)); }), 0.0);
    EXPECT_DOUBLE_EQ(value([&](ad::Tape& t) { return consistency_mse(t.constant(p), t.constant(q)); }), 1.0);
    const auto r = Tensor::matrix({{0.2, 0.8}, {0.6, 0.4}}), s = Tensor::matrix({{0.5, 0.5}, {0.1, 0.9}});
    EXPECT_EQ(value([&](ad::Tape& t) { return consistency_mse(t.constant(r), t.constant(s)); }),
              value([&](ad::Tape& t) { return consistency_mse(t.constant(s), t.constant(r)); }));
}

TEST(RampUp, Endpoints) {
    const RampUpSchedule s{50.0, 50.0};
    EXPECT_NEAR(ramp_up(s, 0.0), 50.0 * std::exp(-5.0), 1e-12);
    EXPECT_NEAR(ramp_up(s, 0.0), 0.33690, 1e-5);
    EXPECT_EQ(ramp_up(s, 50.0), 50.0);
    EXPECT_EQ(ramp_up(s, 80.0), 50.0);
    for (int t = 1; t <= 50; ++t) EXPECT_GT(ramp_up(s, t), ramp_up(s, t - 1));
    EXPECT_THROW(ramp_up({1.0, 0.0}, 1.0), ParameterError);
    EXPECT_THROW(ramp_up(s, -1.0), ParameterError);
}

TEST(Replay, UniformAndSaturated) {
    EXPECT_NEAR(value([](ad::Tape& t) { return replay_loss(t.constant(Tensor::matrix({{1, 1}})), {0}, 1); }),
                std::log(2.0), 1e-12);
    EXPECT_LE(value([](ad::Tape& t) { return replay_loss(t.constant(Tensor::matrix({{50, -50}})), {0}, 1); }), 1e-10);
    ad::Tape t;
    EXPECT_THROW(replay_loss(t.constant(Tensor::matrix({{1, 1}})), {1}, 1), ValidationError);
}

TEST(Replay, GradientReachesEveryRow) {
    ad::Tape t;
    auto l = t.variable(Tensor::matrix({{0.2, -0.4, 1.0, 0.3}}));
    t.backward(replay_loss(l, {1}, 2));
    const auto gl = t.grad(l);
    for (double g : gl.values()) EXPECT_NE(g, 0.0);
}

TEST(FeatureKd, Values) {
    const auto z = Tensor::matrix({{0, 3, 4}});
    EXPECT_EQ(value([&](ad::Tape& t) { return feature_kd(z, t.constant(z)); }), 0.0);
    EXPECT_DOUBLE_EQ(value([&](ad::Tape& t) { return feature_kd(z, t.constant(Tensor({1, 3}))); }), 5.0);
    const auto a = Tensor::matrix({{1, 2}, {0, -1}}), b = Tensor::matrix({{0.5, 0}, {2, 2}});
    const auto a3 = Tensor::matrix({{-3, -6}, {0, 3}}), b3 = Tensor::matrix({{-1.5, 0}, {-6, -6}});
    const double base = value([&](ad::Tape& t) { return feature_kd(a, t.constant(b)); });
    EXPECT_NEAR(value([&](ad::Tape& t) { return feature_kd(a3, t.constant(b3)); }), 3.0 * base, 1e-12);
}

TEST(Total, Arithmetic) {
    EXPECT_EQ(frost_total(LossParts{}, 1, 1, 10).total, 0.0);
    LossParts p;
    p.bce = p.self = p.mse = p.replay = p.feat_kd = 1.0;
    EXPECT_DOUBLE_EQ(frost_total(p, 1.0, 1.0, 10.0).total, 14.0);
    LossParts q;
    q.bce = 0.5;
    q.self = 2.0;
    q.mse = 3.0;
    const auto b = frost_total(q, LossWeights{}, 10.0);
    EXPECT_NEAR(b.total, 0.5 + ramp_up({0.05, 50}, 10) * 2.0 + ramp_up({5, 50}, 10) * 3.0, 1e-10);
}
