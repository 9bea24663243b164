#include <gtest/gtest.h>

#include "frost/trainer.hpp"

using namespace frost;

namespace {

// A small, fast task for mechanics.
RunConfig tiny(std::vector<std::size_t> steps = {3}) {
    RunConfig rc;
    rc.task.num_old = 3;
    rc.task.new_per_step = std::move(steps);
    rc.task.train_per_class = 40;
    rc.task.test_per_class = 10;
    rc.train.pretrain_epochs = 4;
    rc.train.pretrain_decay_epoch = 3;
    rc.train.discover_epochs = 3;
    rc.train.discover_decay_epoch = 2;
    rc.train.batch_size = 32;
    return rc;
}

struct Reference {
    RunConfig rc = config_from_json(nlohmann::json::object());
    SplitSet split = generate(rc.task);
    PretrainResult pre = pretrain_supervised(split.labelled, rc.task.num_old, rc.train);
};

const Reference& reference() {
    static const Reference r;
    return r;
}

double old_head_accuracy(const ModelBundle& m, const LabeledSet& s) {
    const auto p = argmax_rows(logits(m.old_head, forward_features(m, s.x)));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == s.y[i];
    return static_cast<double>(hit) / p.size();
}

}  // namespace

TEST(Schedule, StepDecay) {
    EXPECT_EQ(scheduled_lr(0.1, 0.1, 24, 25), 0.1);
    EXPECT_DOUBLE_EQ(scheduled_lr(0.1, 0.1, 25, 25), 0.01);
}

TEST(Sgd, HeavyBallMomentum) {
    Tensor p = Tensor::vector({1.0});
    ad::Tape tape;
    auto v = tape.variable(p);
    tape.backward(ad::sum(ad::scale(v, 2.0)));  // gradient 2
    Sgd opt(0.5);
    std::vector<ParamSlot> slots{{"p", &p, v}};
    opt.step(tape, slots, 0.1);  // v = 2, p = 1 - 0.2
    EXPECT_DOUBLE_EQ(p[0], 0.8);
    opt.step(tape, slots, 0.1);  // v = 0.5*2 + 2 = 3, p = 0.8 - 0.3
    EXPECT_DOUBLE_EQ(p[0], 0.5);
}

TEST(Pretrain, ReachesHighTrainAccuracyOnDefaultTask) {
    const auto& r = reference();
    EXPECT_GE(train_accuracy(r.pre.model, r.split.labelled), 0.99);
    EXPECT_EQ(r.pre.record.history.size(), r.rc.train.pretrain_epochs);
    EXPECT_TRUE(r.pre.model.frozen_backbone.has_value());
    EXPECT_EQ(r.pre.model.joint_head, r.pre.model.old_head);
    EXPECT_EQ(r.pre.prototypes.size(), r.rc.task.num_old);
}

TEST(Pretrain, ZeroEpochsLeavesInitAndStillComputesPrototypes) {
    auto rc = tiny();
    rc.train.pretrain_epochs = 0;
    const auto split = generate(rc.task);
    const auto a = pretrain_supervised(split.labelled, 3, rc.train);
    Rng rng = make_stream(rc.train.seed, "init.pretrain");
    const auto init = ModelBundle::init(rc.task.input_dim, rc.train.hidden, rc.train.feature_dim, 3, rng);
    EXPECT_EQ(a.model.backbone, init.backbone);
    EXPECT_EQ(a.prototypes.size(), 3u);
    EXPECT_TRUE(a.record.history.empty());
}

TEST(Pretrain, Deterministic) {
    const auto rc = tiny();
    const auto split = generate(rc.task);
    const auto a = pretrain_supervised(split.labelled, 3, rc.train);
    const auto b = pretrain_supervised(split.labelled, 3, rc.train);
    EXPECT_EQ(record_to_json(a.record).dump(), record_to_json(b.record).dump());
    EXPECT_EQ(a.model.hash(), b.model.hash());
}

TEST(Discover, FrozenExtractorNeverChanges) {
    const auto rc = tiny();
    const auto split = generate(rc.task);
    const auto pre = pretrain_supervised(split.labelled, 3, rc.train);
    const auto r = discover(pre.model, pre.prototypes, split.unlabelled[0], 3, rc.train);
    ASSERT_EQ(r.record.frozen_hash.size(), rc.train.discover_epochs);
    for (auto h : r.record.frozen_hash) EXPECT_EQ(h, pre.model.frozen_backbone->hash());
    EXPECT_EQ(*r.model.frozen_backbone, *pre.model.frozen_backbone);
    EXPECT_EQ(r.model.num_all(), 6u);
    EXPECT_TRUE(r.record.boundary_rows_preserved);
    EXPECT_EQ(r.record.history.size(), rc.train.discover_epochs);
}

TEST(Discover, ConfigErrors) {
    const auto rc = tiny();
    const auto split = generate(rc.task);
    const auto pre = pretrain_supervised(split.labelled, 3, rc.train);
    EXPECT_THROW(discover(pre.model, PrototypeStore{}, split.unlabelled[0], 3, rc.train), ConfigError);
    auto m = pre.model;
    m.frozen_backbone.reset();
    EXPECT_THROW(discover(m, pre.prototypes, split.unlabelled[0], 3, rc.train), ConfigError);
    EXPECT_THROW(discover(pre.model, pre.prototypes, LabeledSet{}, 3, rc.train), ConfigError);
    auto cfg = rc.train;
    cfg.ablation = parse_ablation("no_fr");
    EXPECT_NO_THROW(discover(pre.model, PrototypeStore{}, split.unlabelled[0], 3, cfg));
}

TEST(Discover, ReferencePatterns) {
    const auto& r = reference();
    const auto pre_old = old_head_accuracy(r.pre.model, r.split.test_old);
    const auto full = run_arm(r.pre, r.split, r.rc.task, r.rc.train, "full").class_incd;
    const auto nost = run_arm(r.pre, r.split, r.rc.task, r.rc.train, "no_st").class_incd;
    const auto none = run_arm(r.pre, r.split, r.rc.task, r.rc.train, "no_fd&fr").class_incd;
    EXPECT_GE(full.old_acc, 0.80);
    EXPECT_GE(full.new_acc, 0.60);
    EXPECT_GE(full.all_acc, 0.70);
    EXPECT_LE(nost.new_acc, 0.05);
    EXPECT_GE(nost.old_acc, 0.9 * pre_old);
    EXPECT_LE(none.old_acc, 0.05);
    EXPECT_GE(none.new_acc, 2.0 / 5.0);
    EXPECT_GT(full.old_acc, none.old_acc);
    EXPECT_GT(full.new_acc, nost.new_acc);
}

TEST(Steps, ExtendsHeadAndReplaysBothBlocks) {
    RunConfig rc = config_from_json(nlohmann::json::object());
    rc.task.new_per_step = {5, 3};
    const auto split = generate(rc.task);
    const auto pre = pretrain_supervised(split.labelled, 5, rc.train);
    const auto st = run_steps(pre, split, rc.task, rc.train);
    EXPECT_EQ(st.model.num_all(), 13u);
    EXPECT_TRUE(st.boundary_rows_preserved);
    ASSERT_EQ(st.records.size(), 2u);
    bool old_seen = false, step1_seen = false;
    for (const auto& epoch : st.records[1].replay_label_counts)
        for (const auto& [c, n] : epoch) {
            old_seen = old_seen || (c < 5 && n > 0);
            step1_seen = step1_seen || (c >= 5 && c < 10 && n > 0);
            EXPECT_LT(c, 10u);
        }
    EXPECT_TRUE(old_seen);
    EXPECT_TRUE(step1_seen);
    const auto csv = steps_csv(st);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,Old,New-1-J,New-2-J,New-1-N,New-2-N,All");
    EXPECT_EQ(st.model.retired_novel_heads.size(), 1u);
    EXPECT_EQ(st.mappings.size(), 2u);
}

TEST(Grid, TwelveRowsSharedPretrainAndThreadInvariant) {
    const auto rc = tiny();
    const auto split = generate(rc.task);
    const auto pre = pretrain_supervised(split.labelled, 3, rc.train);
    const auto serial = run_ablation_grid(pre, split, rc.task, rc.train, 1);
    const auto parallel = run_ablation_grid(pre, split, rc.task, rc.train, 4);
    ASSERT_EQ(serial.size(), 12u);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(serial[i].arm, ablation_names()[i]);
        EXPECT_EQ(serial[i].model.hash(), parallel[i].model.hash());
        EXPECT_EQ(*serial[i].model.frozen_backbone, *pre.model.frozen_backbone);
    }
    const auto csv = grid_csv(serial);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(Grid, ThreadsFromEnvironment) {
    ::setenv("FROST_THREADS", "3", 1);
    EXPECT_EQ(grid_threads(), 3u);
    ::setenv("FROST_THREADS", "zero", 1);
    EXPECT_THROW(grid_threads(), ConfigError);
    ::unsetenv("FROST_THREADS");
    EXPECT_EQ(grid_threads(), 1u);
}

TEST(Records, LossesCsvHeader) {
    RunRecord r;
    r.history.resize(2);
    const auto csv = losses_csv(r);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,bce,self,mse,replay,kd,total,omega_self,omega_mse,ce,lwf");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
