// frost: command-line driver for pretraining, discovery, evaluation, the
// ablation grid and multi-step runs.
//
// Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "frost/checkpoint.hpp"
#include "frost/config.hpp"
#include "frost/error.hpp"
#include "frost/evaluation.hpp"
#include "frost/fixtures.hpp"
#include "frost/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace frost;

namespace {

constexpr const char* kVersion = "0.1.0";

// A JSON document is either a config or a manifest that embeds one.
RunConfig config_from_document(const json& doc) {
    if (doc.is_object() && doc.contains("tool") && doc.contains("config")) return config_from_json(doc.at("config"));
    return config_from_json(doc);
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) return config_from_json(json::object());
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    return config_from_document(read_json(path));
}

void apply_seed(RunConfig& rc, std::optional<std::uint64_t> seed) {
    if (!seed) return;
    rc.train.seed = *seed;
    rc.task.seed = *seed;
}

void apply_ablation(RunConfig& rc, const std::string& name) {
    if (name.empty()) return;
    rc.train.ablation = parse_ablation(name);
    rc.train.ablation_name = name;
    rc.train.validate();
}

void prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

std::string at(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const std::string& dir, const std::string& command, const RunConfig& rc, const json& inputs,
                    const json& artifacts) {
    write_json(at(dir, "manifest.json"), {{"tool", "frost"},
                                          {"version", kVersion},
                                          {"command", command},
                                          {"config", config_to_json(rc)},
                                          {"seed", rc.train.seed},
                                          {"inputs", inputs},
                                          {"artifacts", artifacts}});
}

void check_model_fits(const ModelBundle& m, const TaskSpec& task) {
    if (m.backbone.input_dim() != task.input_dim)
        throw ConfigError("checkpoint expects input_dim " + std::to_string(m.backbone.input_dim()) +
                          " but the task has " + std::to_string(task.input_dim));
    if (m.num_old != task.num_old)
        throw ConfigError("checkpoint has " + std::to_string(m.num_old) + " old classes but the task has " +
                          std::to_string(task.num_old));
}

// ---------------------------------------------------------------- commands

int cmd_pretrain(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
    auto rc = load_config(config);
    apply_seed(rc, seed);
    const auto split = generate(rc.task);
    prepare_out(out);
    auto pre = pretrain_supervised(split.labelled, rc.task.num_old, rc.train);
    pre.record.artifacts = {{"checkpoint", "checkpoint.json"}, {"prototypes", "prototypes.json"}};
    save_checkpoint(pre.model, at(out, "checkpoint.json"));
    write_json(at(out, "prototypes.json"), prototypes_to_json(pre.prototypes));
    write_text(at(out, "losses.csv"), losses_csv(pre.record));
    write_json(at(out, "record.json"), record_to_json(pre.record));
    write_manifest(out, "pretrain", rc, {{"data_hash", hex64(split.hash())}},
                   {{"checkpoint", "checkpoint.json"},
                    {"prototypes", "prototypes.json"},
                    {"losses", "losses.csv"},
                    {"record", "record.json"}});
    std::cout << "pretrain: train accuracy "
              << (pre.record.train_accuracy.empty() ? train_accuracy(pre.model, split.labelled)
                                                    : pre.record.train_accuracy.back())
              << ", outputs in " << out << "\n";
    return 0;
}

int cmd_discover(const std::string& config, const std::string& from, const std::string& out,
                 const std::string& ablation, std::optional<std::uint64_t> seed) {
    RunConfig rc;
    if (!config.empty()) rc = load_config(config);
    else if (fs::exists(at(from, "manifest.json"))) rc = config_from_document(read_json(at(from, "manifest.json")));
    else rc = load_config("");
    apply_seed(rc, seed);
    apply_ablation(rc, ablation);

    const auto ckpt = at(from, "checkpoint.json");
    if (!fs::exists(ckpt)) throw ConfigError("stage-1 checkpoint not found: " + ckpt);
    auto model = load_checkpoint(ckpt);
    if (!model.step_classes.empty())
        throw ConfigError(ckpt + " is a discovery checkpoint; discover starts from a pretrain checkpoint");
    check_model_fits(model, rc.task);
    PrototypeStore store;
    const auto protos = at(from, "prototypes.json");
    if (fs::exists(protos)) store = prototypes_from_json(read_json(protos));
    else if (rc.train.ablation.replay_enabled())
        throw ConfigError("feature replay is enabled (switch no_fr is off) but " + protos +
                          " is missing; choose an ablation with no_fr or provide prototypes");

    const auto split = generate(rc.task);
    prepare_out(out);
    auto r = discover(std::move(model), store, split.unlabelled.at(0), rc.task.new_per_step.at(0), rc.train, 0);
    attach_reports(r.record, r.model, split);
    r.record.artifacts = {{"checkpoint", "checkpoint.json"}, {"from", from}};
    const auto& incd = r.record.reports.at("class-incd");
    const auto& rt = r.record.reports.at("original-rt");
    save_checkpoint(r.model, at(out, "checkpoint.json"));
    write_json(at(out, "prototypes.json"), prototypes_to_json(store));
    write_text(at(out, "losses.csv"), losses_csv(r.record));
    write_json(at(out, "record.json"), record_to_json(r.record));
    write_json(at(out, "report_class-incd.json"), report_to_json(incd));
    write_json(at(out, "report_original-rt.json"), report_to_json(rt));
    write_text(at(out, "confusion.csv"), confusion_csv(incd.confusion));
    write_text(at(out, "norms.csv"), norms_csv(incd.head_norms, r.model.num_old));
    write_manifest(out, "discover", rc, {{"from", from}, {"data_hash", hex64(split.hash())}},
                   {{"checkpoint", "checkpoint.json"},
                    {"prototypes", "prototypes.json"},
                    {"losses", "losses.csv"},
                    {"record", "record.json"},
                    {"reports", {"report_class-incd.json", "report_original-rt.json"}},
                    {"confusion", "confusion.csv"},
                    {"norms", "norms.csv"}});
    std::cout << "discover [" << rc.train.ablation_name << "] class-incd Old " << round4(incd.old_acc) << " New "
              << round4(incd.new_acc) << " All " << round4(incd.all_acc) << "\n";
    return 0;
}

TaskSpec data_task(const std::string& spec, std::optional<std::uint64_t> seed) {
    TaskSpec task;
    if (fs::exists(spec)) {
        task = config_from_document(read_json(spec)).task;
    } else if (spec.size() > 5 && spec.substr(spec.size() - 5) == ".json") {
        throw ConfigError("data file not found: " + spec);
    } else {
        task = task_profile(spec);
    }
    if (seed) task.seed = *seed;
    task.validate();
    return task;
}

int cmd_eval(const std::string& model_dir, const std::string& data, const std::string& protocol,
             const std::string& out_path, std::optional<std::uint64_t> seed) {
    if (protocol != "class-incd" && protocol != "original-rt")
        throw ConfigError("unknown protocol '" + protocol + "' (valid: class-incd, original-rt)");
    const auto ckpt = at(model_dir, "checkpoint.json");
    if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt);
    const auto model = load_checkpoint(ckpt);
    if (model.step_classes.empty()) throw ConfigError(ckpt + " has no discovered classes to evaluate");
    const auto task = data_task(data, seed);
    check_model_fits(model, task);
    if (task.new_per_step.size() < model.step_classes.size())
        throw ConfigError("data has fewer discovery steps than the checkpoint");
    for (std::size_t k = 0; k < model.step_classes.size(); ++k)
        if (task.new_per_step[k] != model.step_classes[k])
            throw ConfigError("data step " + std::to_string(k + 1) + " class count does not match the checkpoint");
    const auto split = generate(task);

    EvalReport report;
    if (protocol == "original-rt") {
        report = eval_original_rt(model, split.test_old, split.test_new.at(0));
    } else if (model.step_classes.size() == 1) {
        report = eval_class_incd(model, split.test_old, split.test_new.at(0));
    } else {
        std::vector<LabeledSet> seen(split.test_new.begin(),
                                     split.test_new.begin() + static_cast<std::ptrdiff_t>(model.step_classes.size()));
        report = eval_steps(model, split.test_old, seen, {});
    }
    const auto doc = report_to_json(report).dump(2) + "\n";
    write_text(out_path.empty() ? at(model_dir, "report_" + protocol + ".json") : out_path, doc);
    std::cout << doc;
    return 0;
}

int cmd_grid(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
    auto rc = load_config(config);
    apply_seed(rc, seed);
    const std::size_t threads = grid_threads();
    const auto split = generate(rc.task);
    prepare_out(out);
    const auto pre = pretrain_supervised(split.labelled, rc.task.num_old, rc.train);
    const auto rows = run_ablation_grid(pre, split, rc.task, rc.train, threads);
    json arms = json::array();
    for (const auto& r : rows)
        arms.push_back({{"arm", r.arm},
                        {"class-incd", report_to_json(r.class_incd)},
                        {"original-rt", report_to_json(r.original_rt)},
                        {"record", record_to_json(r.record)}});
    write_text(at(out, "grid.csv"), grid_csv(rows));
    write_json(at(out, "grid.json"), {{"pretrain", record_to_json(pre.record)}, {"arms", arms}});
    write_manifest(out, "grid", rc, {{"data_hash", hex64(split.hash())}},
                   {{"grid", "grid.csv"}, {"details", "grid.json"}});
    std::cout << grid_csv(rows);
    return 0;
}

int cmd_steps(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
    auto rc = load_config(config);
    apply_seed(rc, seed);
    const auto split = generate(rc.task);
    prepare_out(out);
    const auto pre = pretrain_supervised(split.labelled, rc.task.num_old, rc.train);
    const auto r = run_steps(pre, split, rc.task, rc.train);
    json steps = json::array();
    for (std::size_t k = 0; k < r.records.size(); ++k)
        steps.push_back({{"step", k + 1}, {"report", report_to_json(r.reports[k])}, {"record", record_to_json(r.records[k])}});
    save_checkpoint(r.model, at(out, "checkpoint.json"));
    write_json(at(out, "prototypes.json"), prototypes_to_json(r.prototypes));
    write_text(at(out, "steps.csv"), steps_csv(r));
    write_json(at(out, "steps.json"),
               {{"boundary_rows_preserved", r.boundary_rows_preserved}, {"pretrain", record_to_json(pre.record)}, {"steps", steps}});
    write_manifest(out, "steps", rc, {{"data_hash", hex64(split.hash())}},
                   {{"steps", "steps.csv"},
                    {"details", "steps.json"},
                    {"checkpoint", "checkpoint.json"},
                    {"prototypes", "prototypes.json"}});
    std::cout << steps_csv(r);
    return 0;
}

int cmd_make_fixture(const std::string& kind, const std::string& out, std::optional<std::uint64_t> seed) {
    const auto task = fixture_task(seed.value_or(0));
    const auto model = make_fixture(kind, task);
    prepare_out(out);
    save_checkpoint(model, at(out, "checkpoint.json"));
    auto t = task_to_json(task);
    t["profile"] = "p5-5";
    write_json(at(out, "data.json"), {{"task", t}, {"seed", task.seed}});
    std::cout << kind << " fixture written to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frost: class-incremental novel class discovery on synthetic Gaussian tasks"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config, out, from, ablation, model_dir, data, protocol, out_path, kind;
    std::optional<std::uint64_t> seed;

    auto* pre = app.add_subcommand("pretrain", "supervised training on the labelled old classes");
    pre->add_option("--config", config, "JSON config or manifest");
    pre->add_option("--out", out, "output directory")->required();
    pre->add_option("--seed", seed, "override the config seed");

    auto* disc = app.add_subcommand("discover", "discover the new classes from a pretrain run");
    disc->add_option("--config", config, "JSON config or manifest (default: the manifest in --from)");
    disc->add_option("--from", from, "directory of a pretrain run")->required();
    disc->add_option("--out", out, "output directory")->required();
    disc->add_option("--ablation", ablation, "ablation arm (default: full)");
    disc->add_option("--seed", seed, "override the config seed");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint under one protocol");
    ev->add_option("--model", model_dir, "directory containing checkpoint.json")->required();
    ev->add_option("--data", data, "task profile name or JSON config/manifest")->required();
    ev->add_option("--protocol", protocol, "class-incd or original-rt")->required();
    ev->add_option("--out", out_path, "report path (default: MODEL/report_PROTOCOL.json)");
    ev->add_option("--seed", seed, "override the data seed");

    auto* grid = app.add_subcommand("grid", "run every ablation arm from one shared pretrain");
    grid->add_option("--config", config, "JSON config or manifest");
    grid->add_option("--out", out, "output directory")->required();
    grid->add_option("--seed", seed, "override the config seed");

    auto* steps = app.add_subcommand("steps", "pretrain then run every discovery step of the task");
    steps->add_option("--config", config, "JSON config or manifest");
    steps->add_option("--out", out, "output directory")->required();
    steps->add_option("--seed", seed, "override the config seed");

    auto* fix = app.add_subcommand("make-fixture", "write a hand-built oracle or cross-task-swap checkpoint");
    fix->add_option("--kind", kind, "oracle or swap")->required();
    fix->add_option("--out", out, "output directory")->required();
    fix->add_option("--seed", seed, "seed of the fixture task");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*pre) return cmd_pretrain(config, out, seed);
        if (*disc) return cmd_discover(config, from, out, ablation, seed);
        if (*ev) return cmd_eval(model_dir, data, protocol, out_path, seed);
        if (*grid) return cmd_grid(config, out, seed);
        if (*steps) return cmd_steps(config, out, seed);
        if (*fix) return cmd_make_fixture(kind, out, seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const LookupError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
