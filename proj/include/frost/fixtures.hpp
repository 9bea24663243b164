#pragma once

// Hand-built checkpoints for protocol checks.
//
// Both fixtures read features through 2*C_L relu units: unit c fires on the
// positive end of old class c's axis, unit C_L + j on the negative end, where
// new class j sits. With low task noise each test sample lights exactly one unit.
//
//   oracle: every head is right.
//   swap:   old and novel heads are right inside their own task, but the
//           concatenated (and joint) head sends every old sample to a new class
//           and every new sample to an old class.

#include <cstddef>
#include <string>

#include "frost/datagen.hpp"
#include "frost/error.hpp"
#include "frost/model.hpp"

namespace frost {

// The task fixtures are evaluated on: p5-5 geometry with near-zero noise.
inline TaskSpec fixture_task(std::uint64_t seed = 0) {
    TaskSpec t;
    t.noise = 0.05;
    t.seed = seed;
    return t;
}

inline ModelBundle make_fixture(const std::string& kind, const TaskSpec& task) {
    if (kind != "oracle" && kind != "swap") throw ConfigError("fixture kind must be 'oracle' or 'swap'");
    if (task.new_per_step.size() != 1 || task.new_per_step[0] != task.num_old)
        throw ConfigError("fixtures need one discovery step with as many new classes as old ones");
    const std::size_t L = task.num_old, D = task.input_dim, F = 2 * L;
    const auto means = place_class_means(task);

    ModelBundle m;
    m.num_old = L;
    m.step_classes = {L};
    m.backbone = Backbone::zeros(D, F, F);
    for (std::size_t c = 0; c < L; ++c)
        for (std::size_t k = 0; k < D; ++k) {
            const double u = means[c][k] / task.radius;
            m.backbone.hidden.weight.at(c, k) = u;
            m.backbone.hidden.weight.at(L + c, k) = -u;
        }
    for (std::size_t i = 0; i < F; ++i) m.backbone.feature.weight.at(i, i) = 1.0;

    m.old_head = Head::zeros(L, F);
    Head novel = Head::zeros(L, F);
    for (std::size_t c = 0; c < L; ++c) {
        m.old_head.weight.at(c, c) = 1.0;
        novel.weight.at(c, L + c) = 1.0;
        if (kind == "swap") {
            // Cross-task channels outweigh the in-task ones.
            m.old_head.weight.at(c, L + c) = 2.0;
            novel.weight.at(c, c) = 2.0;
        }
    }
    m.joint_head = Head::zeros(F, F);
    for (std::size_t c = 0; c < L; ++c)
        for (std::size_t k = 0; k < F; ++k) {
            m.joint_head.weight.at(c, k) = m.old_head.weight.at(c, k);
            m.joint_head.weight.at(L + c, k) = novel.weight.at(c, k);
        }
    m.novel_head = novel;
    return m;
}

}  // namespace frost
