#include <gtest/gtest.h>

#include "frost/config.hpp"

using namespace frost;
using nlohmann::json;

TEST(Profiles, Shapes) {
    EXPECT_EQ(task_profile("p5-5").new_per_step, (std::vector<std::size_t>{5}));
    EXPECT_EQ(task_profile("p5-3-3").new_per_step, (std::vector<std::size_t>{3, 3}));
    EXPECT_EQ(task_profile("p180-10-10").num_old, 180u);
    for (const char* name : {"p5-5", "p5-3-3", "p80-20", "p180-20", "p80-10-10", "p180-10-10"})
        EXPECT_NO_THROW(task_profile(name).validate()) << name;
    try {
        task_profile("p9");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("p80-20"), std::string::npos);
    }
}

TEST(Ablations, TwelveArms) {
    EXPECT_EQ(ablation_names().size(), 12u);
    for (const auto& n : ablation_names()) EXPECT_NO_THROW(parse_ablation(n)) << n;
}

TEST(Ablations, Switches) {
    const auto full = parse_ablation("full");
    EXPECT_TRUE(full.replay_enabled());
    EXPECT_TRUE(full.feature_kd_enabled());
    const auto both = parse_ablation("no_fd&fr");
    EXPECT_FALSE(both.replay_enabled());
    EXPECT_FALSE(both.feature_kd_enabled());
    EXPECT_EQ(parse_ablation("no_fd_fr").no_fr, true);
    const auto lwf = parse_ablation("lwf_softmax");
    EXPECT_EQ(lwf.lwf, LwfArm::Softmax);
    EXPECT_TRUE(lwf.no_fd);
    EXPECT_TRUE(lwf.no_fr);
    const auto lwffr = parse_ablation("lwf_presoftmax+fr");
    EXPECT_EQ(lwffr.lwf, LwfArm::PreSoftmax);
    EXPECT_TRUE(lwffr.no_fd);
    EXPECT_FALSE(lwffr.no_fr);
}

TEST(Ablations, UnknownNameListsValidOnes) {
    try {
        parse_ablation("no_everything");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string m = e.what();
        EXPECT_NE(m.find("no_st"), std::string::npos);
        EXPECT_NE(m.find("lwf_softmax+fr"), std::string::npos);
    }
}

TEST(Ablations, InconsistentSwitchesRejected) {
    Ablation a;
    a.lwf = LwfArm::Softmax;
    EXPECT_THROW(a.validate(), ConfigError);
}

TEST(Config, DefaultsRoundTrip) {
    const auto c = config_from_json(json::object());
    EXPECT_EQ(c.profile, "p5-5");
    EXPECT_EQ(c.train.ablation_name, "full");
    const auto j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, OverridesApplyOverProfile) {
    const auto c = config_from_json(json::parse(R"({"task":{"profile":"p5-3-3","noise":0.5},
        "train":{"lambda":1.5,"pair_similarity":"logistic-dot"},"ablation":"no_st","seed":4})"));
    EXPECT_EQ(c.task.new_per_step, (std::vector<std::size_t>{3, 3}));
    EXPECT_EQ(c.task.noise, 0.5);
    EXPECT_EQ(c.task.seed, 4u);
    EXPECT_EQ(c.train.weights.lambda, 1.5);
    EXPECT_EQ(c.train.similarity, PairSimilarity::LogisticDot);
    EXPECT_TRUE(c.train.ablation.no_st);
}

TEST(Config, Errors) {
    EXPECT_THROW(config_from_json(json::parse(R"({"trian":{}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train":{"lr":"fast"}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train":{"lr":-1}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train":{"pretrain_decay_epoch":40}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train":{"top_k":17}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"ablation":"bogus"})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"task":{"profile":"p1"}})")), ConfigError);
    EXPECT_THROW(config_from_json(json::parse(R"({"train":{"pair_similarity":"cosine"}})")), ConfigError);
    try {
        config_from_json(json::parse(R"({"model":{"width":3}})"));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("model.width"), std::string::npos);
    }
}
