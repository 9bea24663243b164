#pragma once

// Synthetic class-incremental tasks: Gaussian class clusters whose means lie
// at radius R along +/- the axes of a seeded orthonormal basis, split into a
// labelled old-class set, one unlabelled set per discovery step, and test
// sets. CSV ingestion/export for external feature data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "frost/error.hpp"
#include "frost/rng.hpp"
#include "frost/tensor.hpp"

namespace frost {

struct TaskSpec {
    std::size_t input_dim = 16;
    std::size_t num_old = 5;
    std::vector<std::size_t> new_per_step{5};
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 50;
    double radius = 5.0;
    double noise = 1.0;
    std::uint64_t seed = 0;

    std::size_t num_classes() const {
        std::size_t n = num_old;
        for (auto c : new_per_step) n += c;
        return n;
    }

    void validate() const {
        if (input_dim < 1) throw ConfigError("task.input_dim must be >= 1");
        if (num_old < 1) throw ConfigError("task.num_old must be >= 1");
        if (new_per_step.empty()) throw ConfigError("task.new_per_step needs at least one step");
        for (auto c : new_per_step)
            if (c < 1) throw ConfigError("task.new_per_step entries must be >= 1");
        if (train_per_class < 1 || test_per_class < 1) throw ConfigError("task sample counts must be >= 1");
        if (!(noise > 0.0)) throw ConfigError("task.noise must be > 0");
        if (!(radius > 0.0)) throw ConfigError("task.radius must be > 0");
        if (placement_axes() > input_dim)
            throw ConfigError("task: " + std::to_string(num_old) + " old and " +
                              std::to_string(num_classes() - num_old) + " new classes need " +
                              std::to_string(placement_axes()) + " placement axes but input_dim is " +
                              std::to_string(input_dim));
    }

    // Axes used by the class-mean placement: every old class owns one axis.
    std::size_t placement_axes() const { return std::max(num_old, (num_classes() + 1) / 2); }
};

// Features with labels and globally unique sample ids.
struct LabeledSet {
    Tensor x;
    std::vector<std::size_t> y;
    std::vector<std::size_t> ids;

    std::size_t size() const { return y.size(); }

    std::uint64_t hash() const {
        auto h = hash_values(x.data());
        for (auto v : y) {
            const double label = static_cast<double>(v);
            h = hash_values(std::span<const double>(&label, 1), h);
        }
        return h;
    }
};

struct SplitSet {
    LabeledSet labelled;                 // old classes
    std::vector<LabeledSet> unlabelled;  // one per discovery step; y is ground truth, for evaluation only
    LabeledSet test_old;
    std::vector<LabeledSet> test_new;  // one per discovery step
    std::vector<std::vector<double>> class_means;

    std::uint64_t hash() const {
        auto h = labelled.hash();
        for (const auto& u : unlabelled) h ^= splitmix64(u.hash());
        h ^= splitmix64(test_old.hash() + 1);
        for (const auto& t : test_new) h ^= splitmix64(t.hash() + 2);
        return h;
    }
};

// Class means: R * (+/-) the columns of a seeded orthonormal basis (a cross-polytope).
// Old class c sits at +R u_c. New classes take -R u_0, -R u_1, ... first, then the
// positive ends of the axes past the old block, so they share axes with old classes.
inline std::vector<std::vector<double>> place_class_means(const TaskSpec& spec) {
    const std::size_t D = spec.input_dim;
    Rng rng = make_stream(spec.seed, "data.means");
    std::vector<std::vector<double>> basis;
    while (basis.size() < D) {
        std::vector<double> v(D);
        for (auto& x : v) x = standard_normal(rng);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) {
                double dot = 0.0;
                for (std::size_t k = 0; k < D; ++k) dot += v[k] * b[k];
                for (std::size_t k = 0; k < D; ++k) v[k] -= dot * b[k];
            }
        double nrm = 0.0;
        for (double x : v) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm < 1e-8) continue;
        for (auto& x : v) x /= nrm;
        basis.push_back(std::move(v));
    }
    const std::size_t axes = spec.placement_axes();
    std::vector<std::vector<double>> means;
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        std::size_t axis = c;
        double sign = 1.0;
        if (c >= spec.num_old) {
            const std::size_t j = c - spec.num_old;
            if (j < axes) axis = j, sign = -1.0;
            else axis = spec.num_old + (j - axes);
        }
        std::vector<double> m(D);
        for (std::size_t k = 0; k < D; ++k) m[k] = sign * spec.radius * basis[axis][k];
        means.push_back(std::move(m));
    }
    return means;
}

namespace detail {

inline LabeledSet draw_set(const std::vector<std::vector<double>>& means, std::size_t first_class,
                           std::size_t num_classes, std::size_t per_class, double noise, Rng& rng,
                           std::size_t& next_id) {
    const std::size_t D = means.front().size();
    LabeledSet s{Tensor({num_classes * per_class, D}), {}, {}};
    std::size_t row = 0;
    for (std::size_t c = first_class; c < first_class + num_classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            for (std::size_t k = 0; k < D; ++k) s.x.at(row, k) = means[c][k] + noise * standard_normal(rng);
            s.y.push_back(c);
            s.ids.push_back(next_id++);
        }
    return s;
}

}  // namespace detail

inline SplitSet generate(const TaskSpec& spec) {
    spec.validate();
    SplitSet out;
    out.class_means = place_class_means(spec);
    Rng rng = make_stream(spec.seed, "data.samples");
    std::size_t next_id = 0;
    out.labelled =
        detail::draw_set(out.class_means, 0, spec.num_old, spec.train_per_class, spec.noise, rng, next_id);
    std::size_t first = spec.num_old;
    for (auto c : spec.new_per_step) {
        out.unlabelled.push_back(
            detail::draw_set(out.class_means, first, c, spec.train_per_class, spec.noise, rng, next_id));
        first += c;
    }
    out.test_old = detail::draw_set(out.class_means, 0, spec.num_old, spec.test_per_class, spec.noise, rng, next_id);
    first = spec.num_old;
    for (auto c : spec.new_per_step) {
        out.test_new.push_back(
            detail::draw_set(out.class_means, first, c, spec.test_per_class, spec.noise, rng, next_id));
        first += c;
    }
    return out;
}

// x + sigma_aug * N(0, I).
inline Tensor correlated_view(const Tensor& x, double sigma_aug, Rng& rng) {
    if (!(sigma_aug >= 0.0)) throw ParameterError("correlated_view: sigma_aug must be >= 0");
    Tensor v = x;
    if (sigma_aug == 0.0) return v;
    for (auto& e : v.values()) e += sigma_aug * standard_normal(rng);
    return v;
}

// ---------------------------------------------------------------- CSV

// One sample per line: D decimal features then an integer label. An optional
// first line starting with '#' is a header.
inline LabeledSet ingest_csv(std::istream& in, std::size_t input_dim, std::size_t num_classes = 0) {
    std::vector<double> flat;
    std::vector<std::size_t> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && !line.empty() && line[0] == '#') continue;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (line.back() == ',') fields.emplace_back();
        if (fields.size() != input_dim + 1)
            throw ParseError("row " + std::to_string(lineno) + ": expected " + std::to_string(input_dim + 1) +
                             " fields, got " + std::to_string(fields.size()));
        for (std::size_t k = 0; k < input_dim; ++k) {
            try {
                std::size_t used = 0;
                const double v = std::stod(fields[k], &used);
                if (used != fields[k].size() || !std::isfinite(v)) throw std::invalid_argument("bad");
                flat.push_back(v);
            } catch (const std::exception&) {
                throw ParseError("row " + std::to_string(lineno) + ": field " + std::to_string(k + 1) +
                                 " is not a finite number");
            }
        }
        long long label = 0;
        try {
            std::size_t used = 0;
            label = std::stoll(fields.back(), &used);
            if (used != fields.back().size()) throw std::invalid_argument("bad");
        } catch (const std::exception&) {
            throw ParseError("row " + std::to_string(lineno) + ": label is not an integer");
        }
        if (label < 0 || (num_classes && static_cast<std::size_t>(label) >= num_classes))
            throw ParseError("row " + std::to_string(lineno) + ": label " + std::to_string(label) + " out of range");
        labels.push_back(static_cast<std::size_t>(label));
    }
    if (labels.empty()) throw ParseError("csv contains no samples");
    LabeledSet s{Tensor({labels.size(), input_dim}, std::move(flat)), std::move(labels), {}};
    for (std::size_t i = 0; i < s.y.size(); ++i) s.ids.push_back(i);
    return s;
}

inline LabeledSet ingest_csv(const std::string& path, std::size_t input_dim, std::size_t num_classes = 0) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return ingest_csv(in, input_dim, num_classes);
}

inline void export_csv(std::ostream& out, const LabeledSet& s, bool header = true) {
    const std::size_t D = s.x.cols();
    if (header) {
        out << "#";
        for (std::size_t k = 0; k < D; ++k) out << "x" << k << ",";
        out << "label\n";
    }
    std::ostringstream row;
    row.precision(17);
    for (std::size_t i = 0; i < s.size(); ++i) {
        row.str("");
        for (std::size_t k = 0; k < D; ++k) row << s.x.at(i, k) << ",";
        row << s.y[i] << "\n";
        out << row.str();
    }
}

}  // namespace frost
