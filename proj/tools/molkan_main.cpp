// molkan command-line interface: train / bench-kan / verify / split-stats /
// gen-data. See README.md for usage.

#include <cstdio>
#include <map>

#include <CLI11.hpp>

#include "molkan/molkan.hpp"

using namespace molkan;

namespace {

int cmd_train(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
    ExperimentConfig cfg = load_config(config_path);
    for (const auto& [key, value] : overrides) {
        if (key == "seed") cfg.seeds = {uint64_t(std::stoull(value))};
        if (key == "epochs") cfg.epochs = std::stoi(value);
        if (key == "host") cfg.host = host_from_string(value);
        if (key == "update") cfg.update_kind = update_from_string(value);
        if (key == "head") cfg.head_kind = head_from_string(value);
        if (key == "out") cfg.output_path = value;
        if (key == "name") cfg.run_name = value;
    }

    std::printf("dataset: %s (%s)\n", cfg.dataset_path.c_str(), to_string(cfg.task));
    Dataset data =
        load_csv_dataset(cfg.dataset_path, cfg.task, cfg.label_columns, cfg.smiles_column);
    std::printf("molecules: %d (skipped %d), tasks: %d\n", data.stats.molecules,
                data.stats.skipped, data.n_tasks);
    std::printf("model: %s-%s%s, depth %d, hidden %d, M %d\n", to_string(cfg.host),
                to_string(cfg.update_kind), cfg.head_kind == HeadKind::skan ? "+" : "", cfg.depth,
                cfg.hidden, cfg.num_rbf);

    RunReport report = run_experiment(cfg, data);
    auto [json_path, csv_path] = write_experiment_outputs(cfg, report);

    for (const auto& s : report.seeds) {
        if (s.diverged)
            std::printf("  seed %llu: FAILED (%s)\n", (unsigned long long)s.seed, s.error.c_str());
        else
            std::printf("  seed %llu: test %s = %.4f (epoch %d selected)\n",
                        (unsigned long long)s.seed, report.metric_name.c_str(), s.test_metric,
                        s.selected_epoch);
    }
    auto mean = report.mean_test();
    auto sd = report.std_test();
    if (mean) {
        if (sd)
            std::printf("%s: %.4f +/- %.4f over %zu seeds\n", report.metric_name.c_str(), *mean,
                        *sd, report.per_seed_test().size());
        else
            std::printf("%s: %.4f (single seed)\n", report.metric_name.c_str(), *mean);
    } else {
        std::printf("no completed seeds\n");
    }
    std::printf("report: %s\nsummary: %s\n", json_path.c_str(), csv_path.c_str());
    bool any_ok = !report.per_seed_test().empty();
    return any_ok ? 0 : 1;
}

int cmd_bench(const BenchConfig& cfg, const std::string& out_path) {
    auto result = bench_kan_variants(cfg);
    std::printf("layer %d -> %d, batch %d, M=%d, G=%d, k=%d, %d repeats (median)\n", cfg.n_in,
                cfg.n_out, cfg.batch, cfg.num_rbf, cfg.grid_size, cfg.spline_order, cfg.repeats);
    std::printf("%-12s %12s %14s %12s %12s\n", "family", "params", "median_ms", "min_ms", "max_ms");
    for (const auto& row : result.rows)
        std::printf("%-12s %12lld %14.3f %12.3f %12.3f\n", row.family.c_str(),
                    (long long)row.param_count, row.median_seconds * 1e3, row.min_seconds * 1e3,
                    row.max_seconds * 1e3);
    double ratio = result.row("skan").median_seconds / result.row("bspline_kan").median_seconds;
    std::printf("skan / bspline_kan median ratio: %.3f\n", ratio);

    if (!out_path.empty()) {
        json j;
        j["config"] = {{"n_in", cfg.n_in},       {"n_out", cfg.n_out},
                       {"batch", cfg.batch},     {"num_rbf", cfg.num_rbf},
                       {"grid_size", cfg.grid_size}, {"spline_order", cfg.spline_order},
                       {"repeats", cfg.repeats}};
        json rows = json::array();
        for (const auto& row : result.rows)
            rows.push_back({{"family", row.family},
                            {"param_count", row.param_count},
                            {"median_seconds", row.median_seconds},
                            {"min_seconds", row.min_seconds},
                            {"max_seconds", row.max_seconds}});
        j["rows"] = rows;
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_verify(const std::vector<std::string>& datasets) {
    auto results = verify_suite(datasets);
    double total = 0.0;
    for (const auto& r : results) {
        std::printf("[%s] %-48s %6.1fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.seconds, r.detail.c_str());
        total += r.seconds;
    }
    std::printf("%zu checks in %.1fs\n", results.size(), total);
    return all_passed(results) ? 0 : 1;
}

int cmd_split_stats(const std::string& dataset_path, const std::string& task) {
    Dataset data = load_csv_dataset(dataset_path, task_from_string(task));
    std::printf("molecules: %d (skipped %d)\n", data.stats.molecules, data.stats.skipped);

    std::map<std::string, int> groups;
    for (const auto& m : data.molecules) ++groups[m.scaffold];
    std::vector<std::pair<int, std::string>> sized;
    for (const auto& [key, count] : groups) sized.push_back({count, key});
    std::sort(sized.begin(), sized.end(), std::greater<>());

    std::printf("scaffold groups: %zu\n", groups.size());
    std::map<int, int> histogram;  // group size -> how many groups
    for (const auto& [count, key] : sized) ++histogram[count];
    std::printf("group-size histogram (size x count):\n");
    for (auto it = histogram.rbegin(); it != histogram.rend(); ++it)
        std::printf("  %6d x %d\n", it->first, it->second);
    std::printf("largest groups:\n");
    for (size_t i = 0; i < std::min<size_t>(10, sized.size()); ++i)
        std::printf("  %6d  %s\n", sized[i].first,
                    sized[i].second.empty() ? "(acyclic)" : sized[i].second.c_str());

    auto split = scaffold_split(data);
    std::printf("split: train %zu / valid %zu / test %zu%s\n", split.idx.train.size(),
                split.idx.valid.size(), split.idx.test.size(),
                split.scaffold_fallback ? "  (random fallback)" : "");
    return 0;
}

int cmd_gen_data(const std::string& kind, int n, uint64_t seed, int tasks, double missing,
                 const std::string& out) {
    SyntheticSpec spec;
    spec.n_molecules = n;
    spec.seed = seed;
    spec.task = kind == "reg" ? TaskKind::regression : TaskKind::classification;
    spec.n_tasks = tasks;
    spec.missing_frac = missing;
    auto rows = make_synthetic_rows(spec);
    write_synthetic_csv(out, rows);
    std::printf("wrote %zu molecules to %s\n", rows.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"molecular property prediction with KAN-augmented message-passing networks"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run a training experiment from a JSON config");
    std::string config_path;
    train->add_option("--config", config_path, "experiment config JSON")->required();
    std::map<std::string, std::string> overrides;
    std::string ov_seed, ov_epochs, ov_host, ov_update, ov_head, ov_out, ov_name;
    train->add_option("--seed", ov_seed, "run a single seed");
    train->add_option("--epochs", ov_epochs, "override epoch count");
    train->add_option("--host", ov_host, "gcn|gat|gine");
    train->add_option("--update", ov_update, "mlp|skan|bspline_kan|fastkan");
    train->add_option("--head", ov_head, "mlp|skan");
    train->add_option("--out", ov_out, "output directory");
    train->add_option("--name", ov_name, "run name (output file stem)");

    // bench-kan
    auto* bench = app.add_subcommand("bench-kan", "time one forward+backward per KAN family");
    BenchConfig bench_cfg;
    std::string bench_out;
    bench->add_option("--n", bench_cfg.n_in, "layer width (n_in = n_out)");
    bench->add_option("--batch", bench_cfg.batch, "batch rows");
    bench->add_option("--M", bench_cfg.num_rbf, "number of RBFs");
    bench->add_option("--G", bench_cfg.grid_size, "B-spline grid size");
    bench->add_option("--k", bench_cfg.spline_order, "B-spline order");
    bench->add_option("--repeats", bench_cfg.repeats, "timed repetitions (>= 10)");
    bench->add_option("--out", bench_out, "write JSON results here");

    // verify
    auto* verify = app.add_subcommand("verify", "run the invariant and gradient-check suite");
    std::vector<std::string> verify_datasets;
    verify->add_option("--dataset", verify_datasets, "dataset CSV(s) for split checks");

    // split-stats
    auto* stats = app.add_subcommand("split-stats", "print scaffold group histogram for a dataset");
    std::string stats_dataset, stats_task = "classification";
    stats->add_option("--dataset", stats_dataset, "dataset CSV")->required();
    stats->add_option("--task", stats_task, "classification|regression");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a deterministic synthetic dataset CSV");
    std::string gen_kind = "clf", gen_out = "synthetic.csv";
    int gen_n = 1000, gen_tasks = 1;
    uint64_t gen_seed = 7;
    double gen_missing = 0.0;
    gen->add_option("--kind", gen_kind, "clf|reg");
    gen->add_option("--n", gen_n, "number of molecules");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--tasks", gen_tasks, "label columns");
    gen->add_option("--missing", gen_missing, "per-cell missing fraction");
    gen->add_option("--out", gen_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            if (!ov_seed.empty()) overrides["seed"] = ov_seed;
            if (!ov_epochs.empty()) overrides["epochs"] = ov_epochs;
            if (!ov_host.empty()) overrides["host"] = ov_host;
            if (!ov_update.empty()) overrides["update"] = ov_update;
            if (!ov_head.empty()) overrides["head"] = ov_head;
            if (!ov_out.empty()) overrides["out"] = ov_out;
            if (!ov_name.empty()) overrides["name"] = ov_name;
            return cmd_train(config_path, overrides);
        }
        if (*bench) {
            bench_cfg.n_out = bench_cfg.n_in;
            return cmd_bench(bench_cfg, bench_out);
        }
        if (*verify) return cmd_verify(verify_datasets);
        if (*stats) return cmd_split_stats(stats_dataset, stats_task);
        if (*gen) return cmd_gen_data(gen_kind, gen_n, gen_seed, gen_tasks, gen_missing, gen_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
