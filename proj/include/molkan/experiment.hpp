#pragma once

// Experiment orchestration: JSON config in, per-seed training runs (on
// separate threads; runs are independent and deterministic), aggregated
// RunReport + CSV out.

#include <filesystem>
#include <thread>

#include <sys/utsname.h>

#include "molkan/dataset.hpp"
#include "molkan/io.hpp"
#include "molkan/training.hpp"

namespace molkan {

struct ExperimentConfig {
    std::string dataset_path;
    TaskKind task = TaskKind::classification;
    GnnHost host = GnnHost::gine;
    UpdateKind update_kind = UpdateKind::skan;
    HeadKind head_kind = HeadKind::mlp;
    int depth = 2;
    int hidden = 256;
    int num_rbf = 8;
    int grid_size = 8;
    int spline_order = 3;
    int gat_heads = 4;
    bool skan_in_aggregation = false;
    double lr = 1e-3;
    int epochs = 50;
    int batch_size = 32;
    std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
    std::string split = "scaffold";  // scaffold | random
    std::string output_path = "runs";
    std::string run_name = "run";
    std::vector<std::string> label_columns;
    std::string smiles_column = "smiles";
    bool save_checkpoints = false;
    int n_threads = 0;  // 0: one per seed up to hardware concurrency

    GnnConfig gnn() const {
        GnnConfig g;
        g.host = host;
        g.depth = depth;
        g.hidden = hidden;
        g.update_kind = update_kind;
        g.head_kind = head_kind;
        g.num_rbf = num_rbf;
        g.grid_size = grid_size;
        g.spline_order = spline_order;
        g.gat_heads = gat_heads;
        g.skan_in_aggregation = skan_in_aggregation;
        return g;
    }
    TrainConfig train() const {
        TrainConfig t;
        t.epochs = epochs;
        t.batch_size = batch_size;
        t.lr = lr;
        return t;
    }
};

namespace detail {

template <class E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table,
             const char* what) {
    for (const auto& [name, value] : table)
        if (s == name) return value;
    throw ConfigError(std::string("invalid ") + what + ": " + s);
}

}  // namespace detail

inline TaskKind task_from_string(const std::string& s) {
    return detail::parse_enum<TaskKind>(
        s, {{"classification", TaskKind::classification}, {"regression", TaskKind::regression}},
        "task");
}
inline GnnHost host_from_string(const std::string& s) {
    return detail::parse_enum<GnnHost>(
        s, {{"gcn", GnnHost::gcn}, {"gat", GnnHost::gat}, {"gine", GnnHost::gine}}, "host");
}
inline UpdateKind update_from_string(const std::string& s) {
    return detail::parse_enum<UpdateKind>(s,
                                          {{"mlp", UpdateKind::mlp},
                                           {"skan", UpdateKind::skan},
                                           {"bspline_kan", UpdateKind::bspline_kan},
                                           {"fastkan", UpdateKind::fastkan}},
                                          "update");
}
inline HeadKind head_from_string(const std::string& s) {
    return detail::parse_enum<HeadKind>(s, {{"mlp", HeadKind::mlp}, {"skan", HeadKind::skan}},
                                        "head");
}

inline json config_to_json(const ExperimentConfig& c) {
    json j;
    j["dataset_path"] = c.dataset_path;
    j["task"] = to_string(c.task);
    j["host"] = to_string(c.host);
    j["update"] = to_string(c.update_kind);
    j["head"] = to_string(c.head_kind);
    j["depth"] = c.depth;
    j["hidden"] = c.hidden;
    j["num_rbf"] = c.num_rbf;
    j["grid_size"] = c.grid_size;
    j["spline_order"] = c.spline_order;
    j["gat_heads"] = c.gat_heads;
    j["skan_in_aggregation"] = c.skan_in_aggregation;
    j["lr"] = c.lr;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["seeds"] = c.seeds;
    j["split"] = c.split;
    j["output_path"] = c.output_path;
    j["run_name"] = c.run_name;
    j["label_columns"] = c.label_columns;
    j["smiles_column"] = c.smiles_column;
    j["save_checkpoints"] = c.save_checkpoints;
    return j;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("dataset_path")) c.dataset_path = j.at("dataset_path").get<std::string>();
    if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
    if (j.contains("host")) c.host = host_from_string(j.at("host").get<std::string>());
    if (j.contains("update")) c.update_kind = update_from_string(j.at("update").get<std::string>());
    if (j.contains("head")) c.head_kind = head_from_string(j.at("head").get<std::string>());
    if (j.contains("depth")) c.depth = j.at("depth").get<int>();
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
    if (j.contains("num_rbf")) c.num_rbf = j.at("num_rbf").get<int>();
    if (j.contains("grid_size")) c.grid_size = j.at("grid_size").get<int>();
    if (j.contains("spline_order")) c.spline_order = j.at("spline_order").get<int>();
    if (j.contains("gat_heads")) c.gat_heads = j.at("gat_heads").get<int>();
    if (j.contains("skan_in_aggregation"))
        c.skan_in_aggregation = j.at("skan_in_aggregation").get<bool>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (j.contains("split")) c.split = j.at("split").get<std::string>();
    if (j.contains("output_path")) c.output_path = j.at("output_path").get<std::string>();
    if (j.contains("run_name")) c.run_name = j.at("run_name").get<std::string>();
    if (j.contains("label_columns"))
        c.label_columns = j.at("label_columns").get<std::vector<std::string>>();
    if (j.contains("smiles_column")) c.smiles_column = j.at("smiles_column").get<std::string>();
    if (j.contains("save_checkpoints")) c.save_checkpoints = j.at("save_checkpoints").get<bool>();
    if (j.contains("n_threads")) c.n_threads = j.at("n_threads").get<int>();
    if (c.split != "scaffold" && c.split != "random")
        throw ConfigError("invalid split: " + c.split);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j = json::parse(in);
    return config_from_json(j);
}

inline std::string environment_note() {
    utsname u{};
    uname(&u);
    return std::string(u.sysname) + " " + u.machine + ", " +
           std::to_string(std::thread::hardware_concurrency()) + " hardware threads, " +
#if defined(__clang__)
           "clang " + std::to_string(__clang_major__);
#elif defined(__GNUC__)
           "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__);
#else
           "unknown compiler";
#endif
}

inline SplitResult make_split(const ExperimentConfig& cfg, const Dataset& data) {
    if (cfg.split == "random") {
        SplitResult r;
        r.idx = random_split(data.size());
        r.scaffold_fallback = true;
        return r;
    }
    return scaffold_split(data);
}

// Runs every seed (threads run independent models/tapes), aggregates, and
// returns the report. The dataset overload lets callers reuse a parsed set.
inline RunReport run_experiment(const ExperimentConfig& cfg, const Dataset& data) {
    RunReport report;
    report.config_echo = config_to_json(cfg);
    report.environment = environment_note();
    report.parse_stats = data.stats;
    report.metric_name = data.task == TaskKind::classification ? "roc_auc" : "mae";

    GnnConfig gnn = cfg.gnn();
    gnn.n_tasks = data.n_tasks;
    report.param_count = GnnModel::build(gnn, 0).parameter_count();

    SplitResult split = make_split(cfg, data);
    report.scaffold_fallback = split.scaffold_fallback;
    report.n_scaffold_groups = split.n_groups;

    report.seeds.resize(cfg.seeds.size());
    std::vector<GnnModel> models;
    if (cfg.save_checkpoints) models.resize(cfg.seeds.size());
    const int max_threads =
        cfg.n_threads > 0 ? cfg.n_threads : std::max(1u, std::thread::hardware_concurrency());

    size_t next = 0;
    while (next < cfg.seeds.size()) {
        size_t batch_end = std::min(cfg.seeds.size(), next + size_t(max_threads));
        std::vector<std::thread> workers;
        for (size_t i = next; i < batch_end; ++i) {
            workers.emplace_back([&, i] {
                try {
                    report.seeds[i] =
                        train_loop(gnn, data, split.idx, cfg.train(), cfg.seeds[i],
                                   cfg.save_checkpoints ? &models[i] : nullptr);
                } catch (const std::exception& e) {
                    report.seeds[i].seed = cfg.seeds[i];
                    report.seeds[i].diverged = true;
                    report.seeds[i].error = e.what();
                }
            });
        }
        for (auto& w : workers) w.join();
        next = batch_end;
    }
    if (cfg.save_checkpoints) {
        std::filesystem::create_directories(cfg.output_path);
        for (size_t i = 0; i < cfg.seeds.size(); ++i) {
            if (report.seeds[i].diverged) continue;
            save_checkpoint(cfg.output_path + "/" + cfg.run_name + "_seed" +
                                std::to_string(cfg.seeds[i]) + ".ckpt",
                            models[i].parameters());
        }
    }
    return report;
}

inline RunReport run_experiment(const ExperimentConfig& cfg) {
    Dataset data = load_csv_dataset(cfg.dataset_path, cfg.task, cfg.label_columns, cfg.smiles_column);
    return run_experiment(cfg, data);
}

// report + CSV (+ optional checkpoints) under output_path
inline std::pair<std::string, std::string> write_experiment_outputs(const ExperimentConfig& cfg,
                                                                    const RunReport& report) {
    std::filesystem::create_directories(cfg.output_path);
    std::string base = cfg.output_path + "/" + cfg.run_name;
    write_report(base + ".json", report);
    write_summary_csv(base + ".csv", report);
    return {base + ".json", base + ".csv"};
}

}  // namespace molkan
