#pragma once

// Feature extractor and classifier heads.
//
// The extractor is a two-layer perceptron: input -> hidden (relu) -> feature.
// Heads are linear classifiers over features. A ModelBundle carries the live
// extractor, an optional frozen copy taken at the end of a stage, the stage-1
// head, the joint head spanning every class seen so far, and the novel head of
// the current discovery step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "frost/autodiff.hpp"
#include "frost/error.hpp"
#include "frost/rng.hpp"
#include "frost/tensor.hpp"

namespace frost {

struct Linear {
    Tensor weight;  // out x in
    Tensor bias;    // out

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }

    // Uniform in [-1/sqrt(in), 1/sqrt(in)] for weights and biases.
    static Linear uniform_fan_in(std::size_t in, std::size_t out, Rng& rng) {
        const double a = 1.0 / std::sqrt(static_cast<double>(in));
        Linear l{Tensor({out, in}), Tensor({out})};
        for (auto& v : l.weight.values()) v = uniform(rng, -a, a);
        for (auto& v : l.bias.values()) v = uniform(rng, -a, a);
        return l;
    }

    static Linear zeros(std::size_t in, std::size_t out) { return {Tensor({out, in}), Tensor({out})}; }

    friend bool operator==(const Linear&, const Linear&) = default;
};

struct Backbone {
    Linear hidden;
    Linear feature;

    std::size_t input_dim() const { return hidden.in_dim(); }
    std::size_t hidden_dim() const { return hidden.out_dim(); }
    std::size_t feature_dim() const { return feature.out_dim(); }

    static Backbone init(std::size_t input, std::size_t hidden_units, std::size_t features, Rng& rng) {
        Backbone b;
        b.hidden = Linear::uniform_fan_in(input, hidden_units, rng);
        b.feature = Linear::uniform_fan_in(hidden_units, features, rng);
        return b;
    }

    static Backbone zeros(std::size_t input, std::size_t hidden_units, std::size_t features) {
        return {Linear::zeros(input, hidden_units), Linear::zeros(hidden_units, features)};
    }

    std::uint64_t hash() const {
        auto h = hash_values(hidden.weight.data());
        h = hash_values(hidden.bias.data(), h);
        h = hash_values(feature.weight.data(), h);
        return hash_values(feature.bias.data(), h);
    }

    friend bool operator==(const Backbone&, const Backbone&) = default;
};

struct Head {
    Tensor weight;  // classes x d
    Tensor bias;    // classes

    std::size_t num_classes() const { return weight.rows(); }
    std::size_t feature_dim() const { return weight.cols(); }

    // Rows uniform in [-init_scale, init_scale], zero biases.
    static Head uniform(std::size_t classes, std::size_t d, double init_scale, Rng& rng) {
        if (classes == 0 || d == 0) throw ParameterError("head needs at least one class and one feature");
        if (!(init_scale >= 0.0)) throw ParameterError("init_scale must be non-negative");
        Head h{Tensor({classes, d}), Tensor({classes})};
        if (init_scale > 0.0)
            for (auto& v : h.weight.values()) v = frost::uniform(rng, -init_scale, init_scale);
        return h;
    }

    static Head zeros(std::size_t classes, std::size_t d) { return {Tensor({classes, d}), Tensor({classes})}; }

    friend bool operator==(const Head&, const Head&) = default;
};

// ---------------------------------------------------------------- tape bindings

struct BoundLinear {
    ad::Var weight;
    ad::Var bias;
    ad::Var operator()(const ad::Var& x) const { return ad::linear(x, weight, bias); }
};

inline BoundLinear bind(ad::Tape& tape, const Linear& l, bool trainable) {
    if (trainable) return {tape.variable(l.weight), tape.variable(l.bias)};
    return {tape.constant(l.weight), tape.constant(l.bias)};
}

struct BoundBackbone {
    BoundLinear hidden;
    BoundLinear feature;

    ad::Var operator()(const ad::Var& x) const {
        if (x.value().rank() != 2 || x.value().cols() != hidden.weight.value().cols())
            throw ShapeError("backbone: input " + shape_str(x.shape()) + " does not match input width " +
                             std::to_string(hidden.weight.value().cols()));
        return feature(ad::relu(hidden(x)));
    }
};

inline BoundBackbone bind(ad::Tape& tape, const Backbone& b, bool trainable) {
    return {bind(tape, b.hidden, trainable), bind(tape, b.feature, trainable)};
}

struct BoundHead {
    ad::Var weight;
    ad::Var bias;
    ad::Var operator()(const ad::Var& z) const {
        if (z.value().rank() != 2 || z.value().cols() != weight.value().cols())
            throw ShapeError("head: feature width mismatch");
        return ad::linear(z, weight, bias);
    }
};

inline BoundHead bind(ad::Tape& tape, const Head& h, bool trainable) {
    if (trainable) return {tape.variable(h.weight), tape.variable(h.bias)};
    return {tape.constant(h.weight), tape.constant(h.bias)};
}

// Inference without gradients; same arithmetic as the taped path.
inline Tensor features(const Backbone& b, const Tensor& x) {
    ad::Tape tape;
    return bind(tape, b, false)(tape.constant(x)).value();
}

inline Tensor logits(const Head& h, const Tensor& z) {
    ad::Tape tape;
    return bind(tape, h, false)(tape.constant(z)).value();
}

// ---------------------------------------------------------------- bundle

struct ModelBundle {
    Backbone backbone;
    std::optional<Backbone> frozen_backbone;
    Head old_head;
    Head joint_head;
    std::optional<Head> novel_head;
    // Novel heads of completed earlier discovery steps, kept for task-aware diagnostics.
    std::vector<Head> retired_novel_heads;
    std::size_t num_old = 0;
    // New-class count of every discovery step started so far.
    std::vector<std::size_t> step_classes;

    std::size_t num_new() const { return step_classes.empty() ? 0 : step_classes.back(); }
    std::size_t num_all() const { return joint_head.num_classes(); }
    // First joint-head index of the current step's class block.
    std::size_t current_offset() const { return num_all() - num_new(); }
    // First joint-head index of step k's block (0-based step).
    std::size_t step_offset(std::size_t k) const {
        std::size_t off = num_old;
        for (std::size_t i = 0; i < k; ++i) off += step_classes.at(i);
        return off;
    }

    static ModelBundle init(std::size_t input, std::size_t hidden, std::size_t d, std::size_t num_old, Rng& rng) {
        if (num_old == 0) throw ParameterError("at least one old class required");
        ModelBundle m;
        m.backbone = Backbone::init(input, hidden, d, rng);
        m.old_head.weight = Tensor({num_old, d});
        m.old_head.bias = Tensor({num_old});
        const double a = 1.0 / std::sqrt(static_cast<double>(d));
        for (auto& v : m.old_head.weight.values()) v = uniform(rng, -a, a);
        for (auto& v : m.old_head.bias.values()) v = uniform(rng, -a, a);
        m.joint_head = m.old_head;
        m.num_old = num_old;
        return m;
    }

    // (name, tensor) for every parameter, in a fixed order.
    std::vector<std::pair<std::string, const Tensor*>> named_parameters() const {
        std::vector<std::pair<std::string, const Tensor*>> out;
        auto add_backbone = [&](const std::string& p, const Backbone& b) {
            out.emplace_back(p + ".hidden.weight", &b.hidden.weight);
            out.emplace_back(p + ".hidden.bias", &b.hidden.bias);
            out.emplace_back(p + ".feature.weight", &b.feature.weight);
            out.emplace_back(p + ".feature.bias", &b.feature.bias);
        };
        auto add_head = [&](const std::string& p, const Head& h) {
            out.emplace_back(p + ".weight", &h.weight);
            out.emplace_back(p + ".bias", &h.bias);
        };
        add_backbone("backbone", backbone);
        if (frozen_backbone) add_backbone("frozen_backbone", *frozen_backbone);
        add_head("old_head", old_head);
        add_head("joint_head", joint_head);
        if (novel_head) add_head("novel_head", *novel_head);
        for (std::size_t i = 0; i < retired_novel_heads.size(); ++i)
            add_head("retired_novel_head." + std::to_string(i), retired_novel_heads[i]);
        return out;
    }

    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto& [name, t] : named_parameters()) h = hash_values(t->data(), h);
        return h;
    }
};

inline Tensor forward_features(const ModelBundle& m, const Tensor& x) { return features(m.backbone, x); }

inline ad::Var forward_features(ad::Tape& tape, const ModelBundle& m, const ad::Var& x, bool trainable) {
    return bind(tape, m.backbone, trainable)(x);
}

// Append new_classes rows drawn uniformly from [-init_scale, init_scale] with zero biases;
// existing rows and biases are copied bit-for-bit.
inline Head extend_head(const Head& old, std::size_t new_classes, double init_scale, Rng& rng) {
    if (new_classes == 0) throw ParameterError("extend_head: new_classes must be >= 1");
    if (!(init_scale >= 0.0)) throw ParameterError("extend_head: init_scale must be non-negative");
    const std::size_t c = old.num_classes(), d = old.feature_dim();
    Head h{Tensor({c + new_classes, d}), Tensor({c + new_classes})};
    std::copy(old.weight.values().begin(), old.weight.values().end(), h.weight.values().begin());
    std::copy(old.bias.values().begin(), old.bias.values().end(), h.bias.values().begin());
    if (init_scale > 0.0)
        for (std::size_t i = c * d; i < h.weight.size(); ++i) h.weight[i] = uniform(rng, -init_scale, init_scale);
    return h;
}

// Deep-copy the live extractor into frozen_backbone. One snapshot per stage.
inline void snapshot_frozen(ModelBundle& m) {
    if (m.frozen_backbone) throw Error("snapshot_frozen: a frozen extractor already exists for this stage");
    m.frozen_backbone = m.backbone;
}

// Drop the frozen extractor at a stage boundary so the next stage can take its own.
inline void release_frozen(ModelBundle& m) { m.frozen_backbone.reset(); }

// Per-class L2 norm of [weight row, bias].
inline std::vector<double> head_weight_norms(const Head& h) {
    std::vector<double> n(h.num_classes());
    for (std::size_t c = 0; c < h.num_classes(); ++c) {
        double s = h.bias[c] * h.bias[c];
        for (double w : h.weight.row(c)) s += w * w;
        n[c] = std::sqrt(s);
    }
    return n;
}

}  // namespace frost
