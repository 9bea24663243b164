#pragma once

// JSON checkpoint documents for ModelBundle.
//
//   { "format": "frost-checkpoint", "format_version": 1,
//     "num_old": C_L, "step_classes": [C_U1, ...],
//     "parameters": [ { "name": "...", "shape": [..], "values": [..] }, ... ] }
//
// Doubles are written in shortest round-trip decimal form, so load(save(m))
// reproduces every parameter bit-for-bit.

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"

#include "frost/error.hpp"
#include "frost/model.hpp"
#include "frost/tensor.hpp"

namespace frost {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"values", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j, const std::string& what) {
    try {
        auto shape = j.at("shape").get<Shape>();
        auto values = j.at("values").get<std::vector<double>>();
        return Tensor(std::move(shape), std::move(values));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": " + e.what());
    } catch (const ShapeError& e) {
        throw ParseError(what + ": " + e.what());
    }
}

inline nlohmann::json checkpoint_to_json(const ModelBundle& m) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, t] : m.named_parameters()) {
        auto e = tensor_to_json(*t);
        e["name"] = name;
        params.push_back(std::move(e));
    }
    return {{"format", "frost-checkpoint"},
            {"format_version", kCheckpointVersion},
            {"num_old", m.num_old},
            {"step_classes", m.step_classes},
            {"parameters", std::move(params)}};
}

inline ModelBundle checkpoint_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format_version").get<int>() != kCheckpointVersion)
            throw ParseError("checkpoint: unsupported format_version");
        std::map<std::string, Tensor> p;
        for (const auto& e : doc.at("parameters")) {
            auto name = e.at("name").get<std::string>();
            p[name] = tensor_from_json(e, "checkpoint parameter " + name);
        }
        auto take = [&](const std::string& name) {
            auto it = p.find(name);
            if (it == p.end()) throw ParseError("checkpoint: missing parameter " + name);
            return it->second;
        };
        auto backbone = [&](const std::string& pre) {
            return Backbone{{take(pre + ".hidden.weight"), take(pre + ".hidden.bias")},
                            {take(pre + ".feature.weight"), take(pre + ".feature.bias")}};
        };
        auto head = [&](const std::string& pre) { return Head{take(pre + ".weight"), take(pre + ".bias")}; };

        ModelBundle m;
        m.num_old = doc.at("num_old").get<std::size_t>();
        m.step_classes = doc.at("step_classes").get<std::vector<std::size_t>>();
        m.backbone = backbone("backbone");
        if (p.count("frozen_backbone.hidden.weight")) m.frozen_backbone = backbone("frozen_backbone");
        m.old_head = head("old_head");
        m.joint_head = head("joint_head");
        if (p.count("novel_head.weight")) m.novel_head = head("novel_head");
        for (std::size_t i = 0; p.count("retired_novel_head." + std::to_string(i) + ".weight"); ++i)
            m.retired_novel_heads.push_back(head("retired_novel_head." + std::to_string(i)));

        // Structural validation.
        const auto d = m.backbone.feature_dim();
        auto check_linear = [](const Linear& l, const std::string& n) {
            if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.weight.rows())
                throw ParseError("checkpoint: inconsistent shapes in " + n);
        };
        check_linear(m.backbone.hidden, "backbone.hidden");
        check_linear(m.backbone.feature, "backbone.feature");
        if (m.backbone.feature.in_dim() != m.backbone.hidden_dim())
            throw ParseError("checkpoint: backbone layer widths disagree");
        auto check_head = [d](const Head& h, const std::string& n) {
            if (h.weight.rank() != 2 || h.feature_dim() != d || h.bias.rank() != 1 ||
                h.bias.size() != h.num_classes())
                throw ParseError("checkpoint: inconsistent shapes in " + n);
        };
        check_head(m.old_head, "old_head");
        check_head(m.joint_head, "joint_head");
        if (m.novel_head) check_head(*m.novel_head, "novel_head");
        if (m.old_head.num_classes() != m.num_old) throw ParseError("checkpoint: old_head rows != num_old");
        std::size_t total = m.num_old;
        for (auto c : m.step_classes) total += c;
        if (m.joint_head.num_classes() != total)
            throw ParseError("checkpoint: joint_head rows != num_old + sum(step_classes)");
        if (m.novel_head && m.novel_head->num_classes() != m.num_new())
            throw ParseError("checkpoint: novel_head rows != current step class count");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << text;
    if (!os) throw Error("failed writing " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void save_checkpoint(const ModelBundle& m, const std::string& path) {
    write_text(path, checkpoint_to_json(m).dump(1) + "\n");
}

inline ModelBundle load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json(path)); }

}  // namespace frost
