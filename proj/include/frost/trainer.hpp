#pragma once

// Training stages: supervised pretraining on the labelled old classes,
// discovery of one new-class block, multi-step incremental runs and the
// ablation grid.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "frost/autodiff.hpp"
#include "frost/config.hpp"
#include "frost/datagen.hpp"
#include "frost/error.hpp"
#include "frost/evaluation.hpp"
#include "frost/model.hpp"
#include "frost/objectives.hpp"
#include "frost/prototypes.hpp"
#include "frost/rng.hpp"

namespace frost {

// ---------------------------------------------------------------- optimiser

// A parameter bound on the current tape.
struct ParamSlot {
    std::string name;
    Tensor* param;
    ad::Var var;
};

// SGD with heavy-ball momentum: v = mu v + g; p -= lr v.
class Sgd {
public:
    explicit Sgd(double momentum) : momentum_(momentum) {}

    void step(const ad::Tape& tape, const std::vector<ParamSlot>& slots, double lr) {
        for (const auto& s : slots) {
            const Tensor g = tape.grad(s.var);
            auto& v = velocity_[s.name];
            if (v.size() != g.size()) v.assign(g.size(), 0.0);
            auto& p = s.param->values();
            for (std::size_t i = 0; i < p.size(); ++i) {
                v[i] = momentum_ * v[i] + g[i];
                p[i] -= lr * v[i];
            }
        }
    }

private:
    double momentum_;
    std::map<std::string, std::vector<double>> velocity_;
};

inline double scheduled_lr(double lr, double decay_factor, std::size_t epoch, std::size_t decay_epoch) {
    return epoch < decay_epoch ? lr : lr * decay_factor;
}

// ---------------------------------------------------------------- records

struct RunRecord {
    std::string stage;  // "pretrain" or "discover"
    std::string arm;
    std::size_t step = 0;
    std::vector<LossBreakdown> history;  // per-epoch means
    std::vector<double> train_accuracy;  // pretrain only
    std::vector<std::uint64_t> frozen_hash;  // per discovery epoch
    // Per discovery epoch: number of replayed rows per class id.
    std::vector<std::map<std::size_t, std::size_t>> replay_label_counts;
    bool boundary_rows_preserved = true;
    std::map<std::string, EvalReport> reports;
    std::map<std::string, std::string> artifacts;
};

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

inline nlohmann::json breakdown_to_json(const LossBreakdown& b) {
    return {{"ce", b.ce},         {"bce", b.bce},       {"self", b.self},   {"mse", b.mse},
            {"replay", b.replay}, {"kd", b.feat_kd},    {"lwf", b.lwf},     {"total", b.total},
            {"omega_self", b.omega_self}, {"omega_mse", b.omega_mse}, {"lambda", b.lambda}};
}

inline nlohmann::json record_to_json(const RunRecord& r) {
    nlohmann::json hist = nlohmann::json::array();
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        auto j = breakdown_to_json(r.history[e]);
        j["epoch"] = e;
        hist.push_back(std::move(j));
    }
    nlohmann::json hashes = nlohmann::json::array();
    for (auto h : r.frozen_hash) hashes.push_back(hex64(h));
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& m : r.replay_label_counts) {
        nlohmann::json e = nlohmann::json::object();
        for (const auto& [c, n] : m) e[std::to_string(c)] = n;
        counts.push_back(std::move(e));
    }
    nlohmann::json reports = nlohmann::json::object();
    for (const auto& [k, v] : r.reports) reports[k] = report_to_json(v);
    return {{"stage", r.stage},
            {"arm", r.arm},
            {"step", r.step},
            {"epochs", r.history.size()},
            {"history", hist},
            {"train_accuracy", r.train_accuracy},
            {"frozen_hash", hashes},
            {"replay_label_counts", counts},
            {"boundary_rows_preserved", r.boundary_rows_preserved},
            {"reports", reports},
            {"artifacts", r.artifacts}};
}

// epoch,bce,self,mse,replay,kd,total,omega_self,omega_mse,ce,lwf
inline std::string losses_csv(const RunRecord& r) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,bce,self,mse,replay,kd,total,omega_self,omega_mse,ce,lwf\n";
    for (std::size_t e = 0; e < r.history.size(); ++e) {
        const auto& b = r.history[e];
        os << e << ',' << b.bce << ',' << b.self << ',' << b.mse << ',' << b.replay << ',' << b.feat_kd << ','
           << b.total << ',' << b.omega_self << ',' << b.omega_mse << ',' << b.ce << ',' << b.lwf << '\n';
    }
    return os.str();
}

namespace detail {

inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

inline void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
    acc.ce += b.ce, acc.bce += b.bce, acc.self += b.self, acc.mse += b.mse;
    acc.replay += b.replay, acc.feat_kd += b.feat_kd, acc.lwf += b.lwf, acc.total += b.total;
    acc.omega_self = b.omega_self, acc.omega_mse = b.omega_mse, acc.lambda = b.lambda;
}

inline void average(LossBreakdown& acc, std::size_t n) {
    if (n == 0) return;
    const double k = 1.0 / static_cast<double>(n);
    acc.ce *= k, acc.bce *= k, acc.self *= k, acc.mse *= k;
    acc.replay *= k, acc.feat_kd *= k, acc.lwf *= k, acc.total *= k;
}

inline void push_slots(std::vector<ParamSlot>& out, const std::string& prefix, Linear& l, const BoundLinear& b) {
    out.push_back({prefix + ".weight", &l.weight, b.weight});
    out.push_back({prefix + ".bias", &l.bias, b.bias});
}

inline void push_slots(std::vector<ParamSlot>& out, const std::string& prefix, Head& h, const BoundHead& b) {
    out.push_back({prefix + ".weight", &h.weight, b.weight});
    out.push_back({prefix + ".bias", &h.bias, b.bias});
}

inline void push_slots(std::vector<ParamSlot>& out, Backbone& bb, const BoundBackbone& b) {
    push_slots(out, "backbone.hidden", bb.hidden, b.hidden);
    push_slots(out, "backbone.feature", bb.feature, b.feature);
}

// Evaluate one loss term, naming it if it produces a non-finite value.
inline ad::Var term(const char* name, const std::function<ad::Var()>& f) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(std::string("loss term '") + name + "' diverged: " + e.what());
    }
}

inline void require_finite(const char* name, double v) {
    if (!std::isfinite(v)) throw NumericError(std::string("loss term '") + name + "' is not finite");
}

// Rows [begin, end) of a head as a standalone head.
inline Head head_block(const Head& h, std::size_t begin, std::size_t end) {
    const std::size_t d = h.feature_dim();
    Head out = Head::zeros(end - begin, d);
    for (std::size_t c = begin; c < end; ++c) {
        out.bias[c - begin] = h.bias[c];
        for (std::size_t k = 0; k < d; ++k) out.weight.at(c - begin, k) = h.weight.at(c, k);
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------- stage 1

struct PretrainResult {
    ModelBundle model;
    PrototypeStore prototypes;
    RunRecord record;
};

inline PretrainResult pretrain_supervised(const LabeledSet& labelled, std::size_t num_old, const TrainConfig& cfg) {
    if (labelled.size() == 0) throw ConfigError("pretrain: labelled split is empty");
    cfg.validate();
    Rng init = make_stream(cfg.seed, "init.pretrain");
    Rng shuffle = make_stream(cfg.seed, "shuffle.pretrain");
    PretrainResult out{ModelBundle::init(labelled.x.cols(), cfg.hidden, cfg.feature_dim, num_old, init), {}, {}};
    auto& m = out.model;
    out.record.stage = "pretrain";
    out.record.arm = "supervised";
    Sgd opt(cfg.momentum);

    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const double lr = scheduled_lr(cfg.lr, cfg.decay_factor, epoch, cfg.pretrain_decay_epoch);
        const auto order = detail::shuffled(labelled.size(), shuffle);
        LossBreakdown acc;
        std::size_t batches = 0, hits = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<std::size_t> y(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) y[i] = labelled.y[idx[i]];

            ad::Tape tape;
            auto bb = bind(tape, m.backbone, true);
            auto head = bind(tape, m.old_head, true);
            auto l = detail::term("forward", [&] { return head(bb(tape.constant(take_rows(labelled.x, idx)))); });
            auto loss = detail::term("ce", [&] { return cross_entropy_supervised(l, one_hot(y, num_old)); });
            const auto pred = argmax_rows(l.value());
            for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];

            tape.backward(loss);
            std::vector<ParamSlot> slots;
            detail::push_slots(slots, m.backbone, bb);
            detail::push_slots(slots, "old_head", m.old_head, head);
            opt.step(tape, slots, lr);

            LossParts parts;
            parts.ce = loss.value().item();
            detail::accumulate(acc, frost_total(parts, 0.0, 0.0, 0.0));
            ++batches;
        }
        detail::average(acc, batches);
        out.record.history.push_back(acc);
        out.record.train_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(labelled.size()));
    }

    m.joint_head = m.old_head;
    out.prototypes = compute_prototypes(forward_features(m, labelled.x), labelled.y);
    snapshot_frozen(m);
    return out;
}

inline double train_accuracy(const ModelBundle& m, const LabeledSet& s) {
    const auto pred = argmax_rows(logits(m.old_head, forward_features(m, s.x)));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < s.size(); ++i) hits += pred[i] == s.y[i];
    return static_cast<double>(hits) / static_cast<double>(s.size());
}

// ---------------------------------------------------------------- stage 2

struct DiscoverResult {
    ModelBundle model;
    RunRecord record;
};

// Discover one block of num_new classes in `unlabelled`. `step` is the 0-based
// discovery step; it only names the random streams.
inline DiscoverResult discover(ModelBundle m, const PrototypeStore& store, const LabeledSet& unlabelled,
                               std::size_t num_new, const TrainConfig& cfg, std::size_t step = 0) {
    cfg.validate();
    const auto& ab = cfg.ablation;
    if (unlabelled.size() == 0) throw ConfigError("discover: unlabelled split is empty");
    if (num_new == 0) throw ConfigError("discover: the step has no new classes");
    if (ab.replay_enabled() && store.empty())
        throw ConfigError("discover: feature replay is enabled (no_fr=false) but no prototypes were provided");
    if ((ab.feature_kd_enabled() || ab.lwf != LwfArm::None) && !m.frozen_backbone)
        throw ConfigError("discover: distillation needs a frozen extractor; run pretraining first");
    if (ab.replay_enabled() && store.dim() != m.backbone.feature_dim())
        throw ConfigError("discover: prototype dimension does not match the feature width");

    const std::string tag = "discover." + std::to_string(step) + "." + cfg.ablation_name;
    Rng init = make_stream(cfg.seed, tag + ".init");
    Rng shuffle = make_stream(cfg.seed, tag + ".shuffle");
    Rng augment = make_stream(cfg.seed, tag + ".augment");
    Rng replay_rng = make_stream(cfg.seed, tag + ".replay");

    DiscoverResult out{std::move(m), {}};
    auto& model = out.model;
    auto& rec = out.record;
    rec.stage = "discover";
    rec.arm = cfg.ablation_name;
    rec.step = step;

    const Head teacher = model.joint_head;
    const std::size_t offset = teacher.num_classes();
    model.joint_head = extend_head(teacher, num_new, cfg.head_init_scale, init);
    for (std::size_t c = 0; c < offset && rec.boundary_rows_preserved; ++c) {
        rec.boundary_rows_preserved = model.joint_head.bias[c] == teacher.bias[c];
        for (std::size_t k = 0; k < teacher.feature_dim(); ++k)
            rec.boundary_rows_preserved =
                rec.boundary_rows_preserved && model.joint_head.weight.at(c, k) == teacher.weight.at(c, k);
    }
    if (ab.joint_only)
        model.novel_head.reset();
    else
        model.novel_head = Head::uniform(num_new, model.backbone.feature_dim(), cfg.head_init_scale, init);
    model.step_classes.push_back(num_new);

    const auto replay_classes = store.class_ids();
    Sgd opt(cfg.momentum);

    for (std::size_t epoch = 0; epoch < cfg.discover_epochs; ++epoch) {
        const double lr = scheduled_lr(cfg.discover_lr, cfg.decay_factor, epoch, cfg.discover_decay_epoch);
        const double t = static_cast<double>(epoch);
        const double w_self = ab.no_st ? 0.0 : ramp_up(cfg.weights.self, t);
        const double w_mse = ab.no_mse ? 0.0 : ramp_up(cfg.weights.mse, t);
        const double lambda = ab.feature_kd_enabled() ? cfg.weights.lambda : 0.0;
        const auto order = detail::shuffled(unlabelled.size(), shuffle);
        LossBreakdown acc;
        std::map<std::size_t, std::size_t> replay_counts;
        std::size_t batches = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            if (end - start < 2) continue;
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            const Tensor x = take_rows(unlabelled.x, idx);
            const Tensor xv = correlated_view(x, cfg.aug_sigma, augment);

            ad::Tape tape;
            auto bb = bind(tape, model.backbone, true);
            auto jh = bind(tape, model.joint_head, true);
            std::optional<BoundHead> nh;
            if (model.novel_head) nh = bind(tape, *model.novel_head, true);

            ad::Var z, zv, joint, novel, novel_v;
            detail::term("forward", [&] {
                z = bb(tape.constant(x));
                zv = bb(tape.constant(xv));
                joint = jh(z);
                novel = nh ? (*nh)(z) : ad::columns(joint, offset, offset + num_new);
                novel_v = nh ? (*nh)(zv) : ad::columns(jh(zv), offset, offset + num_new);
                return z;
            });

            LossParts parts;
            std::vector<ad::Var> weighted;
            auto add = [&](double w, const ad::Var& v) {
                if (w != 0.0) weighted.push_back(w == 1.0 ? v : ad::scale(v, w));
            };

            if (!ab.no_bce) {
                const Tensor pairs = rank_stats_pair_labels(z.value(), cfg.top_k);
                auto v = detail::term("bce", [&] { return pairwise_bce_batch(novel, pairs, cfg.similarity); });
                parts.bce = v.value().item();
                add(1.0, v);
            }
            if (w_mse > 0.0) {
                auto v = detail::term("mse", [&] { return consistency_mse(ad::softmax(novel), ad::softmax(novel_v)); });
                parts.mse = v.value().item();
                add(w_mse, v);
            }
            if (!ab.no_st) {
                const auto pseudo = make_pseudo_labels(novel.value(), offset);
                auto v = detail::term("self", [&] { return self_training_loss(joint, pseudo); });
                parts.self = v.value().item();
                add(w_self, v);
            }
            if (ab.replay_enabled()) {
                auto batch = sample_replay_batch(store, replay_classes, idx.size(), replay_rng);
                for (auto c : batch.labels) ++replay_counts[c];
                auto v = detail::term("replay", [&] {
                    return replay_loss(jh(tape.constant(batch.features)), batch.labels, offset);
                });
                parts.replay = v.value().item();
                add(1.0, v);
            }
            if (ab.feature_kd_enabled() && lambda > 0.0) {
                const Tensor fz = features(*model.frozen_backbone, x);
                auto v = detail::term("kd", [&] { return feature_kd(fz, z); });
                parts.feat_kd = v.value().item();
                add(lambda, v);
            }
            if (ab.lwf != LwfArm::None) {
                const Tensor target = logits(teacher, features(*model.frozen_backbone, x));
                const auto mode = ab.lwf == LwfArm::Softmax ? LwfMode::Softmax : LwfMode::PreSoftmax;
                auto v = detail::term("lwf", [&] {
                    return lwf_logit_kd(target, ad::columns(joint, 0, offset), cfg.lwf_temperature, mode);
                });
                parts.lwf = cfg.lwf_weight * v.value().item();
                add(cfg.lwf_weight, v);
            }

            auto b = frost_total(parts, w_self, w_mse, lambda);
            detail::require_finite("total", b.total);
            detail::accumulate(acc, b);
            ++batches;
            if (weighted.empty()) continue;
            ad::Var total = weighted.front();
            for (std::size_t i = 1; i < weighted.size(); ++i) total = ad::add(total, weighted[i]);
            if (!total.requires_grad()) continue;

            tape.backward(total);
            std::vector<ParamSlot> slots;
            detail::push_slots(slots, model.backbone, bb);
            detail::push_slots(slots, "joint_head", model.joint_head, jh);
            if (nh) detail::push_slots(slots, "novel_head", *model.novel_head, *nh);
            opt.step(tape, slots, lr);
        }
        detail::average(acc, batches);
        rec.history.push_back(acc);
        rec.replay_label_counts.push_back(std::move(replay_counts));
        rec.frozen_hash.push_back(model.frozen_backbone ? model.frozen_backbone->hash() : 0);
    }
    return out;
}

// Evaluate a single-step model under both protocols.
inline void attach_reports(RunRecord& rec, const ModelBundle& m, const SplitSet& split) {
    rec.reports["class-incd"] = eval_class_incd(m, split.test_old, split.test_new.at(0));
    rec.reports["original-rt"] = eval_original_rt(m, split.test_old, split.test_new.at(0));
}

// ---------------------------------------------------------------- multi-step

// Prototypes of the last discovered block, from that step's unlabelled data
// grouped by the joint head's argmax restricted to the block.
inline PrototypeStore block_prototypes(const ModelBundle& m, const LabeledSet& unlabelled) {
    const std::size_t off = m.current_offset(), w = m.num_new();
    const Tensor z = forward_features(m, unlabelled.x);
    const Tensor l = logits(m.joint_head, z);
    std::vector<std::size_t> labels(l.rows());
    for (std::size_t i = 0; i < l.rows(); ++i) labels[i] = off + argmax(l.row(i).subspan(off, w));
    return compute_prototypes(z, labels);
}

// Close the finished step and discover the next block.
inline DiscoverResult incremental_step(ModelBundle m, PrototypeStore& store, const LabeledSet& previous_unlabelled,
                                       const LabeledSet& unlabelled, std::size_t num_new, const TrainConfig& cfg,
                                       std::size_t step) {
    if (m.step_classes.empty()) throw ConfigError("incremental_step: no completed discovery step");
    if (cfg.ablation.replay_enabled()) store.merge(block_prototypes(m, previous_unlabelled));
    if (m.novel_head) {
        m.retired_novel_heads.push_back(*m.novel_head);
        m.novel_head.reset();
    } else {
        m.retired_novel_heads.push_back(detail::head_block(m.joint_head, m.current_offset(), m.num_all()));
    }
    release_frozen(m);
    snapshot_frozen(m);
    return discover(std::move(m), store, unlabelled, num_new, cfg, step);
}

struct StepsResult {
    ModelBundle model;
    PrototypeStore prototypes;
    std::vector<RunRecord> records;     // one per discovery step
    std::vector<EvalReport> reports;    // class-iNCD report after each step
    std::vector<LabelMapping> mappings; // frozen mapping of each step, taken at its end
    bool boundary_rows_preserved = true;
};

inline StepsResult run_steps(const PretrainResult& pre, const SplitSet& split, const TaskSpec& spec,
                             const TrainConfig& cfg) {
    const std::size_t steps = spec.new_per_step.size();
    StepsResult out{pre.model, pre.prototypes, {}, {}, {}, true};
    for (std::size_t k = 0; k < steps; ++k) {
        auto r = k == 0 ? discover(std::move(out.model), out.prototypes, split.unlabelled[0], spec.new_per_step[0], cfg, 0)
                        : incremental_step(std::move(out.model), out.prototypes, split.unlabelled[k - 1],
                                           split.unlabelled[k], spec.new_per_step[k], cfg, k);
        out.model = std::move(r.model);
        out.boundary_rows_preserved = out.boundary_rows_preserved && r.record.boundary_rows_preserved;
        std::vector<LabeledSet> seen(split.test_new.begin(), split.test_new.begin() + static_cast<std::ptrdiff_t>(k + 1));
        auto report = eval_steps(out.model, split.test_old, seen, out.mappings);
        r.record.reports["class-incd"] = report;
        out.reports.push_back(report);
        out.mappings.push_back(step_mapping(out.model, split.test_new[k]));
        out.records.push_back(std::move(r.record));
    }
    return out;
}

// One row per step: step,Old,New-1-J,...,New-S-J,New-1-N,...,New-S-N,All.
inline std::string steps_csv(const StepsResult& r) {
    const std::size_t S = r.reports.empty() ? 0 : r.reports.back().new_joint_per_step.size();
    std::ostringstream os;
    os << "step,Old";
    for (std::size_t k = 1; k <= S; ++k) os << ",New-" << k << "-J";
    for (std::size_t k = 1; k <= S; ++k) os << ",New-" << k << "-N";
    os << ",All\n";
    auto cell = [&](const std::vector<double>& v, std::size_t k) {
        if (k < v.size()) os << ',' << round4(v[k]);
        else os << ',';
    };
    for (std::size_t s = 0; s < r.reports.size(); ++s) {
        const auto& rep = r.reports[s];
        os << s + 1 << ',' << round4(rep.old_acc);
        for (std::size_t k = 0; k < S; ++k) cell(rep.new_joint_per_step, k);
        for (std::size_t k = 0; k < S; ++k) cell(rep.new_novel_per_step, k);
        os << ',' << round4(rep.all_acc) << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------- ablation grid

struct GridRow {
    std::string arm;
    EvalReport class_incd;
    EvalReport original_rt;
    RunRecord record;
    ModelBundle model;
};

inline std::size_t grid_threads() {
    if (const char* env = std::getenv("FROST_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw ConfigError("FROST_THREADS must be a positive integer");
    }
    return 1;
}

inline GridRow run_arm(const PretrainResult& pre, const SplitSet& split, const TaskSpec& spec, TrainConfig cfg,
                       const std::string& arm) {
    cfg.ablation_name = arm;
    cfg.ablation = parse_ablation(arm);
    auto r = discover(pre.model, pre.prototypes, split.unlabelled.at(0), spec.new_per_step.at(0), cfg, 0);
    attach_reports(r.record, r.model, split);
    GridRow row{arm, r.record.reports.at("class-incd"), r.record.reports.at("original-rt"), std::move(r.record),
                std::move(r.model)};
    return row;
}

// Every arm starts from the same stage-1 result. Arms are independent, so
// they may run on up to `threads` workers without changing any result.
inline std::vector<GridRow> run_ablation_grid(const PretrainResult& pre, const SplitSet& split, const TaskSpec& spec,
                                              const TrainConfig& base, std::size_t threads = 1) {
    const auto& arms = ablation_names();
    std::vector<std::optional<GridRow>> rows(arms.size());
    std::vector<std::exception_ptr> errors(arms.size());
    auto worker = [&](std::size_t first) {
        for (std::size_t i = first; i < arms.size(); i += threads) {
            try {
                rows[i] = run_arm(pre, split, spec, base, arms[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, arms.size()));
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<GridRow> out;
    for (auto& r : rows) out.push_back(std::move(*r));
    return out;
}

inline std::string grid_csv(const std::vector<GridRow>& rows) {
    std::ostringstream os;
    os << "arm,class_incd_old,class_incd_new,class_incd_all,original_rt_old,original_rt_new,original_rt_all\n";
    for (const auto& r : rows)
        os << r.arm << ',' << round4(r.class_incd.old_acc) << ',' << round4(r.class_incd.new_acc) << ','
           << round4(r.class_incd.all_acc) << ',' << round4(r.original_rt.old_acc) << ','
           << round4(r.original_rt.new_acc) << ',' << round4(r.original_rt.all_acc) << '\n';
    return os.str();
}

}  // namespace frost
