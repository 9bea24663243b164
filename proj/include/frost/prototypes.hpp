#pragma once

// Per-class Gaussian feature statistics and feature replay.
//
// Each class keeps the population mean and variance of its features
// (diagonal covariance). Replay draws mean + sqrt(variance) * N(0, I).

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "frost/error.hpp"
#include "frost/rng.hpp"
#include "frost/tensor.hpp"

namespace frost {

struct ClassPrototype {
    std::size_t class_id = 0;
    std::vector<double> mean;
    std::vector<double> variance;
    std::size_t count = 0;

    friend bool operator==(const ClassPrototype&, const ClassPrototype&) = default;
};

class PrototypeStore {
public:
    PrototypeStore() = default;
    explicit PrototypeStore(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return protos_.size(); }
    bool empty() const { return protos_.empty(); }
    bool contains(std::size_t c) const { return protos_.count(c) != 0; }

    const ClassPrototype& at(std::size_t c) const {
        auto it = protos_.find(c);
        if (it == protos_.end()) throw LookupError("prototype store has no class " + std::to_string(c));
        return it->second;
    }

    std::vector<std::size_t> class_ids() const {
        std::vector<std::size_t> ids;
        for (const auto& [c, p] : protos_) ids.push_back(c);
        return ids;
    }

    void insert(ClassPrototype p) {
        if (dim_ == 0) dim_ = p.mean.size();
        if (p.mean.size() != dim_ || p.variance.size() != dim_)
            throw ValidationError("prototype dimension does not match store dimension " + std::to_string(dim_));
        if (p.count < 1) throw ValidationError("prototype count must be >= 1");
        for (double v : p.variance)
            if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("prototype variance must be finite and >= 0");
        for (double v : p.mean)
            if (!std::isfinite(v)) throw ValidationError("prototype mean must be finite");
        if (contains(p.class_id)) throw ValidationError("duplicate prototype class " + std::to_string(p.class_id));
        protos_.emplace(p.class_id, std::move(p));
    }

    // Add every class of other; ids must not collide.
    void merge(const PrototypeStore& other) {
        for (const auto& [c, p] : other.protos_) insert(p);
    }

    friend bool operator==(const PrototypeStore&, const PrototypeStore&) = default;

private:
    std::size_t dim_ = 0;
    std::map<std::size_t, ClassPrototype> protos_;
};

// Population mean and variance per class present in labels.
inline PrototypeStore compute_prototypes(const Tensor& features, const std::vector<std::size_t>& labels) {
    if (features.rank() != 2) throw ShapeError("compute_prototypes: features must be n x d");
    if (labels.size() != features.rows()) throw ShapeError("compute_prototypes: one label per feature row");
    if (labels.empty()) throw ValidationError("compute_prototypes: empty class set");
    const std::size_t d = features.cols();
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    PrototypeStore store(d);
    for (const auto& [c, rows] : members) {
        ClassPrototype p{c, std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), rows.size()};
        const double n = static_cast<double>(rows.size());
        for (auto r : rows)
            for (std::size_t k = 0; k < d; ++k) p.mean[k] += features.at(r, k);
        for (auto& m : p.mean) m /= n;
        for (auto r : rows)
            for (std::size_t k = 0; k < d; ++k) {
                const double e = features.at(r, k) - p.mean[k];
                p.variance[k] += e * e;
            }
        for (auto& v : p.variance) v /= n;
        store.insert(std::move(p));
    }
    return store;
}

struct ReplayBatch {
    Tensor features;
    std::vector<std::size_t> labels;
};

// n i.i.d. draws from N(mean_c, diag(variance_c)).
inline Tensor sample_replay(const PrototypeStore& store, std::size_t class_id, std::size_t n, Rng& rng) {
    if (n < 1) throw ParameterError("sample_replay: n must be >= 1");
    const auto& p = store.at(class_id);
    const std::size_t d = store.dim();
    std::vector<double> sd(d);
    for (std::size_t k = 0; k < d; ++k) sd[k] = std::sqrt(p.variance[k]);
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) out.at(i, k) = p.mean[k] + sd[k] * standard_normal(rng);
    return out;
}

// n rows, each of a class drawn uniformly from `classes`, then a feature from its Gaussian.
inline ReplayBatch sample_replay_batch(const PrototypeStore& store, const std::vector<std::size_t>& classes,
                                       std::size_t n, Rng& rng) {
    if (classes.empty()) throw ConfigError("sample_replay_batch: no classes to replay");
    const std::size_t d = store.dim();
    ReplayBatch b{Tensor({n, d}), std::vector<std::size_t>(n)};
    std::uniform_int_distribution<std::size_t> pick(0, classes.size() - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = classes[pick(rng)];
        const auto& p = store.at(c);
        b.labels[i] = c;
        for (std::size_t k = 0; k < d; ++k)
            b.features.at(i, k) = p.mean[k] + std::sqrt(p.variance[k]) * standard_normal(rng);
    }
    return b;
}

inline constexpr int kPrototypeVersion = 1;

inline nlohmann::json prototypes_to_json(const PrototypeStore& s) {
    nlohmann::json list = nlohmann::json::array();
    for (auto c : s.class_ids()) {
        const auto& p = s.at(c);
        list.push_back({{"class_id", p.class_id}, {"count", p.count}, {"mean", p.mean}, {"variance", p.variance}});
    }
    return {{"version", kPrototypeVersion}, {"d", s.dim()}, {"prototypes", std::move(list)}};
}

inline PrototypeStore prototypes_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("version").get<int>() != kPrototypeVersion)
            throw ParseError("prototypes: unsupported version");
        const auto d = doc.at("d").get<std::size_t>();
        if (d == 0) throw ParseError("prototypes: d must be positive");
        PrototypeStore s(d);
        for (const auto& e : doc.at("prototypes")) {
            ClassPrototype p{e.at("class_id").get<std::size_t>(), e.at("mean").get<std::vector<double>>(),
                             e.at("variance").get<std::vector<double>>(), e.at("count").get<std::size_t>()};
            s.insert(std::move(p));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("prototypes: ") + e.what());
    } catch (const ValidationError& e) {
        throw ParseError(std::string("prototypes: ") + e.what());
    }
}

}  // namespace frost
