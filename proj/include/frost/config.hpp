#pragma once

// Run configuration: task profiles, training hyperparameters, ablation arms,
// and their JSON form. Every field has a default; the resolved configuration
// is written back in full to each run manifest.

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "frost/datagen.hpp"
#include "frost/error.hpp"
#include "frost/objectives.hpp"

namespace frost {

// Named task shapes mirroring common class-incremental splits (class counts only).
inline TaskSpec task_profile(const std::string& name) {
    TaskSpec t;
    if (name == "p5-5") {
        t.input_dim = 16, t.num_old = 5, t.new_per_step = {5};
    } else if (name == "p5-3-3") {
        t.input_dim = 16, t.num_old = 5, t.new_per_step = {3, 3};
    } else if (name == "p80-20") {
        t.input_dim = 96, t.num_old = 80, t.new_per_step = {20};
    } else if (name == "p180-20") {
        t.input_dim = 192, t.num_old = 180, t.new_per_step = {20};
    } else if (name == "p80-10-10") {
        t.input_dim = 96, t.num_old = 80, t.new_per_step = {10, 10};
    } else if (name == "p180-10-10") {
        t.input_dim = 192, t.num_old = 180, t.new_per_step = {10, 10};
    } else {
        throw ConfigError("unknown task profile '" + name +
                          "' (valid: p5-5, p5-3-3, p80-20, p180-20, p80-10-10, p180-10-10)");
    }
    return t;
}

enum class LwfArm { None, Softmax, PreSoftmax };

struct Ablation {
    bool no_fd = false;
    bool no_fr = false;
    bool no_st = false;
    bool no_bce = false;
    bool no_mse = false;
    LwfArm lwf = LwfArm::None;
    bool joint_only = false;

    bool replay_enabled() const { return !no_fr; }
    bool feature_kd_enabled() const { return !no_fd; }

    void validate() const {
        if (lwf != LwfArm::None && !no_fd)
            throw ConfigError("ablation: LwF arms replace feature distillation; set no_fd");
        if (lwf != LwfArm::None && joint_only) throw ConfigError("ablation: joint_only cannot be combined with LwF");
    }
};

// The arms of the ablation grid, in report order.
inline const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names{
        "full",           "no_fd&fr",          "no_fd",      "no_fr",           "no_st", "no_all&st",
        "lwf_softmax",    "lwf_softmax+fr",    "lwf_presoftmax", "lwf_presoftmax+fr", "joint_only",
        "joint_only_no_st"};
    return names;
}

inline Ablation parse_ablation(const std::string& name) {
    Ablation a;
    if (name == "full") return a;
    if (name == "no_fd&fr" || name == "no_fd_fr") return a.no_fd = a.no_fr = true, a;
    if (name == "no_fd") return a.no_fd = true, a;
    if (name == "no_fr") return a.no_fr = true, a;
    if (name == "no_st") return a.no_st = true, a;
    if (name == "no_all&st" || name == "no_all_st") return a.no_fd = a.no_fr = a.no_st = true, a;
    if (name == "lwf_softmax") return a.no_fd = a.no_fr = true, a.lwf = LwfArm::Softmax, a;
    if (name == "lwf_softmax+fr") return a.no_fd = true, a.lwf = LwfArm::Softmax, a;
    if (name == "lwf_presoftmax") return a.no_fd = a.no_fr = true, a.lwf = LwfArm::PreSoftmax, a;
    if (name == "lwf_presoftmax+fr") return a.no_fd = true, a.lwf = LwfArm::PreSoftmax, a;
    if (name == "joint_only") return a.joint_only = true, a;
    if (name == "joint_only_no_st") return a.joint_only = a.no_st = true, a;
    std::string valid;
    for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown ablation '" + name + "' (valid: " + valid + ")");
}

struct TrainConfig {
    // model
    std::size_t hidden = 64;
    std::size_t feature_dim = 16;
    double head_init_scale = 0.1;
    // optimisation
    std::size_t pretrain_epochs = 30;
    std::size_t pretrain_decay_epoch = 25;
    std::size_t discover_epochs = 40;
    std::size_t discover_decay_epoch = 34;
    double lr = 0.1;
    double discover_lr = 0.02;
    double decay_factor = 0.1;
    double momentum = 0.9;
    std::size_t batch_size = 128;
    // discovery objective
    std::size_t top_k = 5;
    LossWeights weights{{20.0, 50.0}, {5.0, 50.0}, 3.0};
    double aug_sigma = 0.5;
    double lwf_temperature = 2.0;
    double lwf_weight = 1.0;
    PairSimilarity similarity = PairSimilarity::SoftmaxDot;
    // arm
    std::string ablation_name = "full";
    Ablation ablation{};
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden < 1 || feature_dim < 1) throw ConfigError("model.hidden and model.feature_dim must be >= 1");
        if (!(head_init_scale >= 0.0)) throw ConfigError("model.head_init_scale must be >= 0");
        if (pretrain_epochs > 0 && pretrain_decay_epoch >= pretrain_epochs)
            throw ConfigError("train.pretrain_decay_epoch must be < train.pretrain_epochs");
        if (discover_epochs > 0 && discover_decay_epoch >= discover_epochs)
            throw ConfigError("train.discover_decay_epoch must be < train.discover_epochs");
        if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
        if (!(discover_lr > 0.0)) throw ConfigError("train.discover_lr must be > 0");
        if (!(decay_factor > 0.0)) throw ConfigError("train.decay_factor must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
        if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
        if (top_k < 1 || top_k > feature_dim) throw ConfigError("train.top_k must lie in [1, model.feature_dim]");
        if (!(weights.lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
        if (!(weights.self.weight >= 0.0) || !(weights.mse.weight >= 0.0))
            throw ConfigError("train.self_weight and train.mse_weight must be >= 0");
        if (!(weights.self.length > 0.0) || !(weights.mse.length > 0.0))
            throw ConfigError("train.rampup_length must be > 0");
        if (!(aug_sigma >= 0.0)) throw ConfigError("train.aug_sigma must be >= 0");
        if (!(lwf_temperature > 0.0)) throw ConfigError("train.lwf_temperature must be > 0");
        if (!(lwf_weight >= 0.0)) throw ConfigError("train.lwf_weight must be >= 0");
        ablation.validate();
    }
};

struct RunConfig {
    std::string profile = "p5-5";
    TaskSpec task = task_profile("p5-5");
    TrainConfig train{};
};

// ---------------------------------------------------------------- JSON

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(where + "." + it.key() + ": unknown field");
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

}  // namespace detail

inline nlohmann::json task_to_json(const TaskSpec& t) {
    return {{"input_dim", t.input_dim},         {"num_old", t.num_old},
            {"new_per_step", t.new_per_step},   {"train_per_class", t.train_per_class},
            {"test_per_class", t.test_per_class}, {"radius", t.radius},
            {"noise", t.noise}};
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    const auto& t = c.train;
    auto task = task_to_json(c.task);
    task["profile"] = c.profile;
    return {{"task", task},
            {"model", {{"hidden", t.hidden}, {"feature_dim", t.feature_dim}, {"head_init_scale", t.head_init_scale}}},
            {"train",
             {{"pretrain_epochs", t.pretrain_epochs},
              {"pretrain_decay_epoch", t.pretrain_decay_epoch},
              {"discover_epochs", t.discover_epochs},
              {"discover_decay_epoch", t.discover_decay_epoch},
              {"lr", t.lr},
              {"discover_lr", t.discover_lr},
              {"decay_factor", t.decay_factor},
              {"momentum", t.momentum},
              {"batch_size", t.batch_size},
              {"top_k", t.top_k},
              {"self_weight", t.weights.self.weight},
              {"mse_weight", t.weights.mse.weight},
              {"rampup_length", t.weights.self.length},
              {"lambda", t.weights.lambda},
              {"aug_sigma", t.aug_sigma},
              {"lwf_temperature", t.lwf_temperature},
              {"lwf_weight", t.lwf_weight},
              {"pair_similarity", t.similarity == PairSimilarity::SoftmaxDot ? "softmax-dot" : "logistic-dot"}}},
            {"ablation", t.ablation_name},
            {"seed", t.seed}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    detail::reject_unknown(j, {"task", "model", "train", "ablation", "seed"}, "config");
    RunConfig c;
    if (j.contains("task")) {
        const auto& t = j.at("task");
        detail::reject_unknown(t,
                               {"profile", "input_dim", "num_old", "new_per_step", "train_per_class",
                                "test_per_class", "radius", "noise"},
                               "task");
        detail::read_field(t, "profile", c.profile, "task");
        c.task = task_profile(c.profile);
        detail::read_field(t, "input_dim", c.task.input_dim, "task");
        detail::read_field(t, "num_old", c.task.num_old, "task");
        detail::read_field(t, "new_per_step", c.task.new_per_step, "task");
        detail::read_field(t, "train_per_class", c.task.train_per_class, "task");
        detail::read_field(t, "test_per_class", c.task.test_per_class, "task");
        detail::read_field(t, "radius", c.task.radius, "task");
        detail::read_field(t, "noise", c.task.noise, "task");
    }
    auto& tr = c.train;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown(m, {"hidden", "feature_dim", "head_init_scale"}, "model");
        detail::read_field(m, "hidden", tr.hidden, "model");
        detail::read_field(m, "feature_dim", tr.feature_dim, "model");
        detail::read_field(m, "head_init_scale", tr.head_init_scale, "model");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown(t,
                               {"pretrain_epochs", "pretrain_decay_epoch", "discover_epochs", "discover_decay_epoch",
                                "lr", "discover_lr", "decay_factor", "momentum", "batch_size", "top_k", "self_weight", "mse_weight",
                                "rampup_length", "lambda", "aug_sigma", "lwf_temperature", "lwf_weight",
                                "pair_similarity"},
                               "train");
        detail::read_field(t, "pretrain_epochs", tr.pretrain_epochs, "train");
        detail::read_field(t, "pretrain_decay_epoch", tr.pretrain_decay_epoch, "train");
        detail::read_field(t, "discover_epochs", tr.discover_epochs, "train");
        detail::read_field(t, "discover_decay_epoch", tr.discover_decay_epoch, "train");
        detail::read_field(t, "lr", tr.lr, "train");
        detail::read_field(t, "discover_lr", tr.discover_lr, "train");
        detail::read_field(t, "decay_factor", tr.decay_factor, "train");
        detail::read_field(t, "momentum", tr.momentum, "train");
        detail::read_field(t, "batch_size", tr.batch_size, "train");
        detail::read_field(t, "top_k", tr.top_k, "train");
        detail::read_field(t, "self_weight", tr.weights.self.weight, "train");
        detail::read_field(t, "mse_weight", tr.weights.mse.weight, "train");
        double len = tr.weights.self.length;
        detail::read_field(t, "rampup_length", len, "train");
        tr.weights.self.length = tr.weights.mse.length = len;
        detail::read_field(t, "lambda", tr.weights.lambda, "train");
        detail::read_field(t, "aug_sigma", tr.aug_sigma, "train");
        detail::read_field(t, "lwf_temperature", tr.lwf_temperature, "train");
        detail::read_field(t, "lwf_weight", tr.lwf_weight, "train");
        std::string sim = "softmax-dot";
        detail::read_field(t, "pair_similarity", sim, "train");
        if (sim == "softmax-dot") tr.similarity = PairSimilarity::SoftmaxDot;
        else if (sim == "logistic-dot") tr.similarity = PairSimilarity::LogisticDot;
        else throw ConfigError("train.pair_similarity: expected softmax-dot or logistic-dot");
    }
    detail::read_field(j, "ablation", tr.ablation_name, "config");
    tr.ablation = parse_ablation(tr.ablation_name);
    detail::read_field(j, "seed", tr.seed, "config");
    c.task.seed = tr.seed;
    c.task.validate();
    tr.validate();
    return c;
}

}  // namespace frost
