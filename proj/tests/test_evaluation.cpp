#include <gtest/gtest.h>

#include "frost/evaluation.hpp"
#include "frost/fixtures.hpp"
#include "support/oracles.hpp"

using namespace frost;

TEST(ClassIncd, HandSimulation) {
    // 2 old classes, 2 new classes at joint indices 2 and 3.
    ClassIncdInputs in;
    in.label_old = {0, 0, 1, 1};
    in.joint_pred_old = {0, 0, 1, 3};  // 3 of 4 right
    in.label_new = {2, 2, 3, 3};
    in.cluster_new = {1, 1, 0, 0};  // mapping: class 2 -> cluster 1, class 3 -> cluster 0
    in.joint_pred_new = {3, 2, 2, 0};  // targets 3,3,2,2 -> 2 of 4 right
    in.offset = 2;
    in.num_new = 2;
    in.num_classes = 4;
    const auto r = eval_class_incd(in);
    EXPECT_DOUBLE_EQ(r.old_acc, 0.75);
    EXPECT_DOUBLE_EQ(r.new_acc, 0.5);
    EXPECT_DOUBLE_EQ(r.all_acc, 0.625);
    for (std::size_t c = 0; c < 4; ++c) {
        std::size_t row = 0;
        for (auto v : r.confusion[c]) row += v;
        EXPECT_EQ(row, 2u);
    }
}

TEST(ClassIncd, FrozenMappingIsUsed) {
    ClassIncdInputs in;
    in.label_new = {1, 2};
    in.cluster_new = {0, 1};
    in.joint_pred_new = {2, 1};
    in.offset = 1;
    in.num_new = 2;
    in.num_classes = 3;
    LabelMapping swap;
    swap.cluster_to_class = {1, 0};
    swap.class_to_cluster = {1, 0};
    EXPECT_DOUBLE_EQ(eval_class_incd(in).new_acc, 0.0);
    EXPECT_DOUBLE_EQ(eval_class_incd(in, swap).new_acc, 1.0);
}

TEST(ClassIncd, Validation) {
    ClassIncdInputs in;
    in.label_new = {5};
    in.cluster_new = {0};
    in.joint_pred_new = {0};
    in.offset = 1;
    in.num_new = 1;
    in.num_classes = 2;
    EXPECT_THROW(eval_class_incd(in), ValidationError);
}

TEST(Fixtures, OracleScoresOneUnderBothProtocols) {
    const auto task = fixture_task(0);
    const auto m = make_fixture("oracle", task);
    const auto split = generate(task);
    const auto incd = eval_class_incd(m, split.test_old, split.test_new[0]);
    const auto rt = eval_original_rt(m, split.test_old, split.test_new[0]);
    EXPECT_EQ(incd.old_acc, 1.0);
    EXPECT_EQ(incd.new_acc, 1.0);
    EXPECT_EQ(incd.all_acc, 1.0);
    EXPECT_EQ(rt.old_acc, 1.0);
    EXPECT_EQ(rt.new_acc, 1.0);
    EXPECT_EQ(rt.all_acc, 1.0);
}

TEST(Fixtures, SwapSeparatesTheProtocols) {
    const auto task = fixture_task(3);
    const auto m = make_fixture("swap", task);
    const auto split = generate(task);
    const auto incd = eval_class_incd(m, split.test_old, split.test_new[0]);
    const auto rt = eval_original_rt(m, split.test_old, split.test_new[0]);
    EXPECT_EQ(incd.old_acc, 0.0);
    EXPECT_EQ(incd.new_acc, 0.0);
    EXPECT_EQ(incd.all_acc, 0.0);
    EXPECT_EQ(rt.all_acc, 1.0);
    EXPECT_THROW(make_fixture("other", task), ConfigError);
}

TEST(OriginalRt, RandomTwoClassPredictorIsOptimistic) {
    // Expected HA accuracy of a uniformly random predictor over n balanced samples of 2 classes,
    // estimated by Monte Carlo and compared with exhaustive enumeration of every prediction vector.
    const std::size_t n = 8;
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % 2;
    double exact = 0.0;
    for (std::size_t mask = 0; mask < (1u << n); ++mask) {
        std::size_t agree = 0;
        for (std::size_t i = 0; i < n; ++i) agree += ((mask >> i) & 1u) == labels[i];
        exact += static_cast<double>(std::max(agree, n - agree)) / n;
    }
    exact /= (1u << n);
    Rng rng = make_stream(0, "test.rt.random");
    double mean = 0.0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        OriginalRtInputs in;
        in.num_old = 1;
        in.num_new = 1;
        in.label_old.assign(n / 2, 0);
        in.old_head_pred.assign(n / 2, 0);
        in.label_new.assign(n / 2, 1);
        in.cluster_new.assign(n / 2, 0);
        for (std::size_t i = 0; i < n / 2; ++i) in.concat_pred.push_back(uniform(rng, 0, 1) < 0.5 ? 0 : 1);
        for (std::size_t i = 0; i < n / 2; ++i) in.concat_pred.push_back(uniform(rng, 0, 1) < 0.5 ? 0 : 1);
        mean += eval_original_rt(in).all_acc;
    }
    mean /= trials;
    EXPECT_GE(exact, 0.5);
    EXPECT_NEAR(mean, exact, 0.05);
}

TEST(Confusion, Definition) {
    std::vector<std::size_t> p{1, 1}, l{0, 0};
    const auto m = confusion_matrix(p, l, 2);
    EXPECT_EQ(m, (ConfusionMatrix{{0, 2}, {0, 0}}));
    std::vector<std::size_t> same{0, 2, 1, 2};
    const auto d = confusion_matrix(same, same, 3);
    EXPECT_EQ(d, (ConfusionMatrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 2}}));
    EXPECT_THROW(confusion_matrix(p, std::vector<std::size_t>{0}, 2), ValidationError);
    EXPECT_THROW(confusion_matrix(p, l, 1), ValidationError);
}

TEST(Confusion, RowSumsMatchClassCounts) {
    Rng rng = make_stream(1, "test.confusion");
    std::vector<std::size_t> p(300), l(300), counts(6, 0);
    for (std::size_t i = 0; i < 300; ++i) {
        l[i] = static_cast<std::size_t>(uniform(rng, 0, 6));
        p[i] = static_cast<std::size_t>(uniform(rng, 0, 6));
        ++counts[l[i]];
    }
    const auto m = confusion_matrix(p, l, 6);
    for (std::size_t c = 0; c < 6; ++c) {
        std::size_t s = 0;
        for (auto v : m[c]) s += v;
        EXPECT_EQ(s, counts[c]);
    }
}

TEST(Reports, JsonAndCsv) {
    EvalReport r;
    r.protocol = "class-incd";
    r.old_acc = 0.123456;
    r.confusion = {{1, 0}, {2, 3}};
    const auto j = report_to_json(r);
    EXPECT_EQ(j.at("old").get<double>(), 0.1235);
    EXPECT_EQ(confusion_csv(r.confusion), "true\\pred,0,1\n0,1,0\n1,2,3\n");
    EXPECT_EQ(norms_csv({1.0, 2.5}, 1), "class,block,norm\n0,old,1\n1,new,2.5\n");
}
