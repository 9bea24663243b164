#pragma once

// Evaluation protocols.
//
// class-iNCD (task-agnostic): the novel head's clusters on the new-class test
// data are matched to ground truth with the Hungarian assignment; the matched
// ids re-label the new-class ground truth, and the joint head must then hit
// offset + re-labelled id on new samples and the true label on old samples.
//
// Original_RT: task-aware old-head accuracy, task-aware novel-head clustering
// accuracy, and Hungarian accuracy of the concatenated old+novel head over the
// pooled test data. The last one can report 100% for a model that never puts
// a sample in the right task block.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "frost/assignment.hpp"
#include "frost/datagen.hpp"
#include "frost/error.hpp"
#include "frost/model.hpp"
#include "frost/tensor.hpp"

namespace frost {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

// Entry (i, j) counts samples of true class i predicted as j.
inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                        std::size_t classes) {
    if (preds.size() != labels.size()) throw ValidationError("confusion_matrix: length mismatch");
    ConfusionMatrix m(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= classes || labels[i] >= classes)
            throw ValidationError("confusion_matrix: index out of range");
        ++m[labels[i]][preds[i]];
    }
    return m;
}

struct EvalReport {
    std::string protocol;
    double old_acc = 0.0;
    double new_acc = 0.0;
    double all_acc = 0.0;
    std::size_t n_old = 0;
    std::size_t n_new = 0;
    std::size_t correct_old = 0;
    std::size_t correct_new = 0;
    std::size_t num_classes = 0;
    ConfusionMatrix confusion;
    // Per discovery step: joint-head and novel-head new-class accuracy.
    std::vector<double> new_joint_per_step;
    std::vector<double> new_novel_per_step;
    std::vector<double> head_norms;
};

namespace detail {

inline double ratio(std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; }

inline void require_range(std::span<const std::size_t> v, std::size_t lo, std::size_t hi, const char* what) {
    for (auto x : v)
        if (x < lo || x >= hi)
            throw ValidationError(std::string(what) + ": label " + std::to_string(x) + " outside [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + ")");
}

}  // namespace detail

// Prediction-level inputs of one class-iNCD evaluation over a single new block.
struct ClassIncdInputs {
    std::vector<std::size_t> joint_pred_old;  // joint-head argmax on old test samples
    std::vector<std::size_t> label_old;       // true old labels in [0, offset)
    std::vector<std::size_t> joint_pred_new;  // joint-head argmax on new test samples
    std::vector<std::size_t> cluster_new;     // novel-head cluster on new test samples, in [0, num_new)
    std::vector<std::size_t> label_new;       // true new labels in [offset, offset + num_new)
    std::size_t offset = 0;                   // first joint index of the new block
    std::size_t num_new = 0;
    std::size_t num_classes = 0;  // joint-head width
};

inline EvalReport eval_class_incd(const ClassIncdInputs& in, std::optional<LabelMapping> frozen_mapping = {}) {
    if (in.joint_pred_old.size() != in.label_old.size() || in.joint_pred_new.size() != in.label_new.size() ||
        in.cluster_new.size() != in.label_new.size())
        throw ValidationError("eval_class_incd: prediction/label length mismatch");
    if (in.offset + in.num_new > in.num_classes) throw ValidationError("eval_class_incd: block exceeds head");
    detail::require_range(in.label_old, 0, in.offset, "eval_class_incd old labels");
    detail::require_range(in.label_new, in.offset, in.offset + in.num_new, "eval_class_incd new labels");
    detail::require_range(in.cluster_new, 0, in.num_new, "eval_class_incd clusters");
    detail::require_range(in.joint_pred_old, 0, in.num_classes, "eval_class_incd joint predictions");
    detail::require_range(in.joint_pred_new, 0, in.num_classes, "eval_class_incd joint predictions");

    EvalReport r;
    r.protocol = "class-incd";
    r.num_classes = in.num_classes;
    std::vector<std::size_t> preds, truth;
    for (std::size_t i = 0; i < in.label_old.size(); ++i) {
        r.correct_old += in.joint_pred_old[i] == in.label_old[i];
        preds.push_back(in.joint_pred_old[i]);
        truth.push_back(in.label_old[i]);
    }
    r.n_old = in.label_old.size();
    if (!in.label_new.empty()) {
        std::vector<std::size_t> local(in.label_new.size());
        for (std::size_t i = 0; i < local.size(); ++i) local[i] = in.label_new[i] - in.offset;
        const LabelMapping map =
            frozen_mapping ? *frozen_mapping : optimal_label_mapping(in.cluster_new, local, in.num_new);
        for (std::size_t i = 0; i < local.size(); ++i) {
            const std::size_t target = in.offset + map.class_to_cluster[local[i]];
            r.correct_new += in.joint_pred_new[i] == target;
            preds.push_back(in.joint_pred_new[i]);
            truth.push_back(target);
        }
    }
    r.n_new = in.label_new.size();
    r.old_acc = detail::ratio(r.correct_old, r.n_old);
    r.new_acc = detail::ratio(r.correct_new, r.n_new);
    r.all_acc = detail::ratio(r.correct_old + r.correct_new, r.n_old + r.n_new);
    r.confusion = confusion_matrix(preds, truth, in.num_classes);
    return r;
}

// Prediction-level inputs of the Original_RT protocol.
struct OriginalRtInputs {
    std::vector<std::size_t> old_head_pred;  // old head argmax on old test samples
    std::vector<std::size_t> label_old;
    std::vector<std::size_t> cluster_new;  // novel head on new test samples
    std::vector<std::size_t> label_new;    // in [num_old, num_old + num_new)
    std::vector<std::size_t> concat_pred;  // concat head argmax on old samples then new samples
    std::size_t num_old = 0;
    std::size_t num_new = 0;
};

inline EvalReport eval_original_rt(const OriginalRtInputs& in) {
    const std::size_t C = in.num_old + in.num_new;
    if (in.old_head_pred.size() != in.label_old.size() || in.cluster_new.size() != in.label_new.size() ||
        in.concat_pred.size() != in.label_old.size() + in.label_new.size())
        throw ValidationError("eval_original_rt: prediction/label length mismatch");
    detail::require_range(in.label_old, 0, in.num_old, "eval_original_rt old labels");
    detail::require_range(in.label_new, in.num_old, C, "eval_original_rt new labels");
    detail::require_range(in.old_head_pred, 0, in.num_old, "eval_original_rt old head predictions");
    detail::require_range(in.cluster_new, 0, in.num_new, "eval_original_rt clusters");
    detail::require_range(in.concat_pred, 0, C, "eval_original_rt concat predictions");

    EvalReport r;
    r.protocol = "original-rt";
    r.num_classes = C;
    r.n_old = in.label_old.size();
    r.n_new = in.label_new.size();
    for (std::size_t i = 0; i < r.n_old; ++i) r.correct_old += in.old_head_pred[i] == in.label_old[i];
    r.old_acc = detail::ratio(r.correct_old, r.n_old);
    if (r.n_new) {
        std::vector<std::size_t> local(r.n_new);
        for (std::size_t i = 0; i < r.n_new; ++i) local[i] = in.label_new[i] - in.num_old;
        const auto m = optimal_label_mapping(in.cluster_new, local, in.num_new);
        r.correct_new = m.matched;
        r.new_acc = m.accuracy;
    }
    std::vector<std::size_t> pooled(in.label_old);
    pooled.insert(pooled.end(), in.label_new.begin(), in.label_new.end());
    const auto all = optimal_label_mapping(in.concat_pred, pooled, C);
    r.all_acc = all.accuracy;
    std::vector<std::size_t> mapped(in.concat_pred.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) mapped[i] = all.cluster_to_class[in.concat_pred[i]];
    r.confusion = confusion_matrix(mapped, pooled, C);
    return r;
}

// ---------------------------------------------------------------- model-level

// Logits of the current step's novel predictor: the novel head, or the current
// step's block of the joint head when the model has none.
inline Tensor novel_logits(const ModelBundle& m, const Tensor& z) {
    if (m.novel_head) return logits(*m.novel_head, z);
    Tensor a = logits(m.joint_head, z);
    const std::size_t off = m.current_offset(), w = m.num_new();
    Tensor out({a.rows(), w});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(i, j) = a.at(i, off + j);
    return out;
}

inline ClassIncdInputs class_incd_inputs(const ModelBundle& m, const LabeledSet& test_old, const LabeledSet& test_new,
                                         std::size_t offset, std::size_t num_new,
                                         const Head* novel_override = nullptr) {
    ClassIncdInputs in;
    in.offset = offset;
    in.num_new = num_new;
    in.num_classes = m.num_all();
    if (test_old.size()) {
        const Tensor z = forward_features(m, test_old.x);
        in.joint_pred_old = argmax_rows(logits(m.joint_head, z));
        in.label_old = test_old.y;
    }
    if (test_new.size()) {
        const Tensor z = forward_features(m, test_new.x);
        in.joint_pred_new = argmax_rows(logits(m.joint_head, z));
        in.cluster_new = argmax_rows(novel_override ? logits(*novel_override, z) : novel_logits(m, z));
        in.label_new = test_new.y;
    }
    return in;
}

// class-iNCD evaluation of the current step against its new-class test data.
inline EvalReport eval_class_incd(const ModelBundle& m, const LabeledSet& test_old, const LabeledSet& test_new) {
    if (m.num_new() == 0) throw ValidationError("eval_class_incd: model has no discovered classes");
    auto r = eval_class_incd(class_incd_inputs(m, test_old, test_new, m.current_offset(), m.num_new()));
    r.head_norms = head_weight_norms(m.joint_head);
    return r;
}

inline EvalReport eval_original_rt(const ModelBundle& m, const LabeledSet& test_old, const LabeledSet& test_new) {
    if (m.num_new() == 0) throw ValidationError("eval_original_rt: model has no discovered classes");
    const std::size_t C_L = m.old_head.num_classes();
    if (m.current_offset() != C_L)
        throw ValidationError("eval_original_rt: protocol is defined for a single discovery step");
    OriginalRtInputs in;
    in.num_old = C_L;
    in.num_new = m.num_new();
    const Tensor zo = forward_features(m, test_old.x);
    const Tensor zn = forward_features(m, test_new.x);
    in.old_head_pred = argmax_rows(logits(m.old_head, zo));
    in.label_old = test_old.y;
    in.cluster_new = argmax_rows(novel_logits(m, zn));
    in.label_new = test_new.y;
    for (const Tensor* z : {&zo, &zn}) {
        const Tensor lo = logits(m.old_head, *z);
        const Tensor ln = novel_logits(m, *z);
        for (std::size_t i = 0; i < z->rows(); ++i) {
            std::vector<double> row(lo.row(i).begin(), lo.row(i).end());
            row.insert(row.end(), ln.row(i).begin(), ln.row(i).end());
            in.concat_pred.push_back(argmax(row));
        }
    }
    auto r = eval_original_rt(in);
    r.head_norms = head_weight_norms(m.joint_head);
    return r;
}

// Hungarian mapping of the current step's clusters on its new-class test data.
inline LabelMapping step_mapping(const ModelBundle& m, const LabeledSet& test_new) {
    const Tensor z = forward_features(m, test_new.x);
    const auto clusters = argmax_rows(novel_logits(m, z));
    std::vector<std::size_t> local(test_new.size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = test_new.y[i] - m.current_offset();
    return optimal_label_mapping(clusters, local, m.num_new());
}

// Multi-step class-iNCD report. mappings[k] is the frozen mapping of step k for
// completed steps; steps without one (and the current step) are mapped now.
// New-k-N of a retired step uses its retired novel head on the current extractor.
inline EvalReport eval_steps(const ModelBundle& m, const LabeledSet& test_old, const std::vector<LabeledSet>& test_new,
                             const std::vector<LabelMapping>& mappings) {
    const std::size_t steps = m.step_classes.size();
    if (steps == 0 || test_new.size() < steps) throw ValidationError("eval_steps: missing step test data");
    EvalReport total;
    total.protocol = "class-incd";
    total.num_classes = m.num_all();
    total.confusion.assign(m.num_all(), std::vector<std::size_t>(m.num_all(), 0));
    for (std::size_t k = 0; k < steps; ++k) {
        const bool current = k + 1 == steps;
        const Head* head = current ? nullptr : &m.retired_novel_heads.at(k);
        auto in = class_incd_inputs(m, k == 0 ? test_old : LabeledSet{}, test_new[k], m.step_offset(k),
                                    m.step_classes[k], head);
        std::optional<LabelMapping> frozen;
        if (!current && k < mappings.size()) frozen = mappings[k];
        const auto r = eval_class_incd(in, frozen);
        const LabelMapping map = frozen ? *frozen : [&] {
            std::vector<std::size_t> local(in.label_new.size());
            for (std::size_t i = 0; i < local.size(); ++i) local[i] = in.label_new[i] - in.offset;
            return optimal_label_mapping(in.cluster_new, local, in.num_new);
        }();
        std::size_t novel_hits = 0;
        for (std::size_t i = 0; i < in.label_new.size(); ++i)
            novel_hits += map.cluster_to_class[in.cluster_new[i]] == in.label_new[i] - in.offset;
        total.new_joint_per_step.push_back(r.new_acc);
        total.new_novel_per_step.push_back(detail::ratio(novel_hits, in.label_new.size()));
        if (k == 0) {
            total.correct_old = r.correct_old;
            total.n_old = r.n_old;
        }
        total.correct_new += r.correct_new;
        total.n_new += r.n_new;
        for (std::size_t i = 0; i < m.num_all(); ++i)
            for (std::size_t j = 0; j < m.num_all(); ++j) total.confusion[i][j] += r.confusion[i][j];
    }
    total.old_acc = detail::ratio(total.correct_old, total.n_old);
    total.new_acc = detail::ratio(total.correct_new, total.n_new);
    total.all_acc = detail::ratio(total.correct_old + total.correct_new, total.n_old + total.n_new);
    total.head_norms = head_weight_norms(m.joint_head);
    return total;
}

// ---------------------------------------------------------------- documents

inline double round4(double v) { return std::round(v * 1e4) / 1e4; }

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j = {{"protocol", r.protocol},
                        {"old", round4(r.old_acc)},
                        {"new", round4(r.new_acc)},
                        {"all", round4(r.all_acc)},
                        {"n_old", r.n_old},
                        {"n_new", r.n_new},
                        {"correct_old", r.correct_old},
                        {"correct_new", r.correct_new},
                        {"num_classes", r.num_classes},
                        {"confusion", r.confusion},
                        {"head_norms", r.head_norms}};
    nlohmann::json nj = nlohmann::json::array(), nn = nlohmann::json::array();
    for (double v : r.new_joint_per_step) nj.push_back(round4(v));
    for (double v : r.new_novel_per_step) nn.push_back(round4(v));
    j["new_joint_per_step"] = nj;
    j["new_novel_per_step"] = nn;
    return j;
}

inline std::string confusion_csv(const ConfusionMatrix& m) {
    std::ostringstream os;
    os << "true\\pred";
    for (std::size_t j = 0; j < m.size(); ++j) os << ',' << j;
    os << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        os << i;
        for (auto v : m[i]) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

inline std::string norms_csv(const std::vector<double>& norms, std::size_t num_old) {
    std::ostringstream os;
    os.precision(17);
    os << "class,block,norm\n";
    for (std::size_t c = 0; c < norms.size(); ++c) os << c << ',' << (c < num_old ? "old" : "new") << ',' << norms[c] << '\n';
    return os.str();
}

}  // namespace frost
