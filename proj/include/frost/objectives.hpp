#pragma once

// Loss terms for supervised pretraining, novel class discovery and
// not-forgetting, plus the ramp-up weighting schedule.
//
// Every loss returns a scalar Var on the tape of its inputs. Pseudo-labels
// and rank-statistics pair labels are computed from plain tensors and never
// carry gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "frost/autodiff.hpp"
#include "frost/error.hpp"
#include "frost/tensor.hpp"

namespace frost {

// Floor for every probability that enters a log.
inline constexpr double kProbFloor = 1e-7;

namespace detail {

inline ad::Var clamped_log_softmax(const ad::Var& logits, double temperature = 1.0) {
    return ad::clamp(ad::log_softmax(logits, temperature), std::log(kProbFloor),
                     std::numeric_limits<double>::infinity());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// Mean over the batch of -(1/C) sum_k y_k log softmax_k(logits).
inline ad::Var cross_entropy_supervised(const ad::Var& logits, const Tensor& one_hot) {
    detail::require_same_shape(logits.value(), one_hot, "cross_entropy_supervised");
    for (std::size_t r = 0; r < one_hot.rows(); ++r) {
        std::size_t ones = 0;
        for (double v : one_hot.row(r)) {
            if (v == 1.0) ++ones;
            else if (v != 0.0) throw ValidationError("cross_entropy_supervised: target row is not one-hot");
        }
        if (ones != 1) throw ValidationError("cross_entropy_supervised: target row is not one-hot");
    }
    auto& tape = logits.tape();
    const double n = static_cast<double>(one_hot.rows() * one_hot.cols());
    return ad::scale(ad::sum(ad::mul(tape.constant(one_hot), detail::clamped_log_softmax(logits))), -1.0 / n);
}

inline Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    Tensor t({labels.size(), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw ValidationError("one_hot: label out of range");
        t.at(i, labels[i]) = 1.0;
    }
    return t;
}

enum class LwfMode { Softmax, PreSoftmax };

// Logit-level distillation from frozen old-class logits into the live ones.
// Softmax mode: mean over batch of -(1/C) sum_k pi_k(frozen) log pi_k(live), tempered by tau.
// Pre-softmax mode: mean squared difference of the raw logits.
inline ad::Var lwf_logit_kd(const Tensor& frozen_logits, const ad::Var& live_logits, double tau, LwfMode mode) {
    if (!(tau > 0.0)) throw ParameterError("lwf_logit_kd: temperature must be positive");
    detail::require_same_shape(frozen_logits, live_logits.value(), "lwf_logit_kd");
    auto& tape = live_logits.tape();
    auto frozen = tape.constant(frozen_logits);
    if (mode == LwfMode::PreSoftmax) return ad::mean(ad::square(ad::sub(live_logits, frozen)));
    const double n = static_cast<double>(frozen_logits.rows() * frozen_logits.cols());
    auto target = tape.constant(ad::softmax(frozen, tau).value());
    return ad::scale(ad::sum(ad::mul(target, detail::clamped_log_softmax(live_logits, tau))), -1.0 / n);
}

// Indices of the k largest entries, ascending; ties prefer the lower index.
inline std::vector<std::size_t> top_k_indices(std::span<const double> z, std::size_t k) {
    if (k < 1 || k > z.size()) throw ParameterError("top-k: k must lie in [1, d]");
    std::vector<std::size_t> idx(z.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return z[a] > z[b] || (z[a] == z[b] && a < b); });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// 1 when the top-k index sets of z_i and z_j coincide.
inline int rank_stats_pair_label(std::span<const double> zi, std::span<const double> zj, std::size_t k) {
    if (zi.size() != zj.size()) throw ShapeError("rank_stats_pair_label: feature lengths differ");
    return top_k_indices(zi, k) == top_k_indices(zj, k) ? 1 : 0;
}

// Pair-label matrix over the rows of a feature batch (symmetric, ones on the diagonal).
inline Tensor rank_stats_pair_labels(const Tensor& z, std::size_t k) {
    const std::size_t n = z.rows();
    std::vector<std::vector<std::size_t>> sets(n);
    for (std::size_t i = 0; i < n; ++i) sets[i] = top_k_indices(z.row(i), k);
    Tensor y({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) y.at(i, j) = y.at(j, i) = (sets[i] == sets[j]) ? 1.0 : 0.0;
    return y;
}

// How the pair similarity p_ij is formed from two rows of novel-head logits.
enum class PairSimilarity {
    SoftmaxDot,   // <softmax(l_i), softmax(l_j)>
    LogisticDot,  // logistic(<l_i, l_j>)
};

// Binary cross-entropy between one pair's similarity and its pseudo-label.
inline ad::Var pairwise_bce(const ad::Var& logits_i, const ad::Var& logits_j, int label,
                            PairSimilarity sim = PairSimilarity::SoftmaxDot) {
    if (logits_i.shape() != logits_j.shape()) throw ShapeError("pairwise_bce: logit shapes differ");
    if (label != 0 && label != 1) throw ValidationError("pairwise_bce: label must be 0 or 1");
    ad::Var p = sim == PairSimilarity::SoftmaxDot
                    ? ad::sum(ad::mul(ad::softmax(logits_i), ad::softmax(logits_j)))
                    : ad::sigmoid(ad::sum(ad::mul(logits_i, logits_j)));
    p = ad::clamp(p, kProbFloor, 1.0 - kProbFloor);
    return label == 1 ? ad::scale(ad::log(p), -1.0) : ad::scale(ad::log(ad::add_scalar(ad::scale(p, -1.0), 1.0)), -1.0);
}

// Mean pairwise BCE over all unordered pairs i < j of a batch.
// pair_labels is the n x n matrix from rank_stats_pair_labels.
inline ad::Var pairwise_bce_batch(const ad::Var& logits, const Tensor& pair_labels,
                                  PairSimilarity sim = PairSimilarity::SoftmaxDot) {
    const std::size_t n = logits.value().rows();
    if (n < 2) throw ShapeError("pairwise_bce_batch: need at least two samples");
    if (pair_labels.rank() != 2 || pair_labels.rows() != n || pair_labels.cols() != n)
        throw ShapeError("pairwise_bce_batch: pair label matrix must be n x n");
    auto& tape = logits.tape();
    ad::Var s = sim == PairSimilarity::SoftmaxDot
                    ? [&] {
                          auto p = ad::softmax(logits);
                          return ad::matmul(p, ad::transpose(p));
                      }()
                    : ad::sigmoid(ad::matmul(logits, ad::transpose(logits)));
    s = ad::clamp(s, kProbFloor, 1.0 - kProbFloor);
    Tensor pos({n, n}), neg({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double y = pair_labels.at(i, j);
            if (y != 0.0 && y != 1.0) throw ValidationError("pairwise_bce_batch: labels must be binary");
            pos.at(i, j) = y;
            neg.at(i, j) = 1.0 - y;
        }
    auto terms = ad::add(ad::mul(tape.constant(pos), ad::log(s)),
                         ad::mul(tape.constant(neg), ad::log(ad::add_scalar(ad::scale(s, -1.0), 1.0))));
    const double pairs = static_cast<double>(n * (n - 1) / 2);
    return ad::scale(ad::sum(terms), -1.0 / pairs);
}

// offset + argmax(novel_logits); ties toward the lower index.
inline std::size_t make_pseudo_label(std::span<const double> novel_logits, std::size_t offset) {
    if (novel_logits.empty()) throw ParameterError("make_pseudo_label: empty logits");
    return offset + argmax(novel_logits);
}

inline std::vector<std::size_t> make_pseudo_labels(const Tensor& novel_logits, std::size_t offset) {
    std::vector<std::size_t> out(novel_logits.rows());
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = make_pseudo_label(novel_logits.row(r), offset);
    return out;
}

// Mean over the batch of -(1/C_A) log softmax_y(joint_logits).
inline ad::Var self_training_loss(const ad::Var& joint_logits, const std::vector<std::size_t>& pseudo_labels) {
    const auto& v = joint_logits.value();
    if (pseudo_labels.size() != v.rows()) throw ShapeError("self_training_loss: one label per row required");
    for (auto y : pseudo_labels)
        if (y >= v.cols()) throw ValidationError("self_training_loss: pseudo-label out of range");
    const double n = static_cast<double>(v.rows() * v.cols());
    return ad::scale(ad::sum(ad::pick(detail::clamped_log_softmax(joint_logits), pseudo_labels)), -1.0 / n);
}

// Mean over the batch of (1/C) sum_k (p1_k - p2_k)^2.
inline ad::Var consistency_mse(const ad::Var& probs_v1, const ad::Var& probs_v2) {
    if (probs_v1.shape() != probs_v2.shape()) throw ShapeError("consistency_mse: shape mismatch");
    return ad::mean(ad::square(ad::sub(probs_v1, probs_v2)));
}

struct RampUpSchedule {
    double weight = 1.0;  // gamma
    double length = 1.0;  // T, in epochs
};

// gamma * exp(-5 (1 - min(t, T)/T)^2).
inline double ramp_up(const RampUpSchedule& s, double t) {
    if (!(s.length > 0.0)) throw ParameterError("ramp_up: length must be positive");
    if (!(s.weight >= 0.0)) throw ParameterError("ramp_up: weight must be non-negative");
    if (!(t >= 0.0)) throw ParameterError("ramp_up: epoch must be non-negative");
    if (t >= s.length) return s.weight;
    const double phase = 1.0 - t / s.length;
    return s.weight * std::exp(-5.0 * phase * phase);
}

// Mean over the batch of -log softmax_y(joint_logits) for replayed old-class features.
inline ad::Var replay_loss(const ad::Var& joint_logits, const std::vector<std::size_t>& labels, std::size_t num_old) {
    const auto& v = joint_logits.value();
    if (labels.size() != v.rows()) throw ShapeError("replay_loss: one label per row required");
    for (auto y : labels)
        if (y >= num_old || y >= v.cols()) throw ValidationError("replay_loss: label is not an old class");
    return ad::scale(ad::sum(ad::pick(detail::clamped_log_softmax(joint_logits), labels)),
                     -1.0 / static_cast<double>(v.rows()));
}

// Mean over the batch of ||frozen_i - live_i||_2.
inline ad::Var feature_kd(const Tensor& frozen_features, const ad::Var& live_features) {
    detail::require_same_shape(frozen_features, live_features.value(), "feature_kd");
    auto frozen = live_features.tape().constant(frozen_features);
    return ad::mean(ad::row_norm(ad::sub(frozen, live_features)));
}

// Component values of one optimisation step of the discovery objective.
struct LossBreakdown {
    double ce = 0.0;  // stage-1 supervised term (zero during discovery)
    double bce = 0.0;
    double self = 0.0;
    double mse = 0.0;
    double replay = 0.0;
    double feat_kd = 0.0;
    double lwf = 0.0;  // logit distillation of the LwF ablation arms
    double total = 0.0;
    double omega_self = 0.0;
    double omega_mse = 0.0;
    double lambda = 0.0;
};

struct LossParts {
    double ce = 0.0;
    double bce = 0.0;
    double self = 0.0;
    double mse = 0.0;
    double replay = 0.0;
    double feat_kd = 0.0;
    double lwf = 0.0;
};

struct LossWeights {
    RampUpSchedule self{0.05, 50.0};
    RampUpSchedule mse{5.0, 50.0};
    double lambda = 10.0;
};

// total = ce + bce + w_self(t) self + w_mse(t) mse + replay + lambda kd + lwf.
inline LossBreakdown frost_total(const LossParts& p, double omega_self, double omega_mse, double lambda) {
    LossBreakdown b;
    b.ce = p.ce;
    b.bce = p.bce;
    b.self = p.self;
    b.mse = p.mse;
    b.replay = p.replay;
    b.feat_kd = p.feat_kd;
    b.lwf = p.lwf;
    b.omega_self = omega_self;
    b.omega_mse = omega_mse;
    b.lambda = lambda;
    b.total = p.ce + p.bce + omega_self * p.self + omega_mse * p.mse + p.replay + lambda * p.feat_kd + p.lwf;
    return b;
}

inline LossBreakdown frost_total(const LossParts& p, const LossWeights& w, double epoch) {
    return frost_total(p, ramp_up(w.self, epoch), ramp_up(w.mse, epoch), w.lambda);
}

}  // namespace frost
