#pragma once

// Report serialization (JSON via nlohmann) and binary model checkpoints.
// Checkpoints are a flat list of (name, shape, f64 data) records and must
// round-trip byte-exactly.

#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "molkan/training.hpp"

namespace molkan {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'K', 'C', 'K', 'P', 'T', '0', '1'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
bool read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return bool(in);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cannot write checkpoint: " + path);
    out.write(detail::kCheckpointMagic, 8);
    detail::write_pod(out, uint32_t(params.size()));
    for (const Parameter* p : params) {
        detail::write_pod(out, uint32_t(p->name.size()));
        out.write(p->name.data(), std::streamsize(p->name.size()));
        detail::write_pod(out, uint32_t(p->value.shape.size()));
        for (int d : p->value.shape) detail::write_pod(out, uint32_t(d));
        out.write(reinterpret_cast<const char*>(p->value.ptr()),
                  std::streamsize(sizeof(double) * size_t(p->value.size())));
    }
}

// Loads by name; every record must match an existing parameter with the same
// shape (strict: checkpoints are not partial).
inline void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot read checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        throw ContractError("not a checkpoint file: " + path);
    uint32_t count = 0;
    detail::read_pod(in, count);
    std::unordered_map<std::string, Parameter*> by_name;
    for (Parameter* p : params) by_name[p->name] = p;
    for (uint32_t r = 0; r < count; ++r) {
        uint32_t name_len = 0;
        detail::read_pod(in, name_len);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t rank = 0;
        detail::read_pod(in, rank);
        Shape shape;
        for (uint32_t d = 0; d < rank; ++d) {
            uint32_t dim = 0;
            detail::read_pod(in, dim);
            shape.push_back(int(dim));
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ContractError("checkpoint has unknown parameter: " + name);
        Parameter* p = it->second;
        if (p->value.shape != shape)
            throw ContractError("checkpoint shape mismatch for " + name + ": file " +
                                shape_str(shape) + " vs model " + shape_str(p->value.shape));
        in.read(reinterpret_cast<char*>(p->value.ptr()),
                std::streamsize(sizeof(double) * size_t(p->value.size())));
        if (!in) throw ContractError("truncated checkpoint: " + path);
    }
}

// ---------------------------------------------------------------------------
// run reports
// ---------------------------------------------------------------------------

struct RunReport {
    json config_echo;
    std::string environment;
    ParseStats parse_stats;
    int64_t param_count = 0;
    std::string metric_name;  // "roc_auc" | "mae"
    bool scaffold_fallback = false;
    int n_scaffold_groups = 0;
    std::vector<SeedRunResult> seeds;

    std::vector<double> per_seed_test() const {
        std::vector<double> v;
        for (const auto& s : seeds)
            if (!s.diverged && std::isfinite(s.test_metric)) v.push_back(s.test_metric);
        return v;
    }
    std::optional<double> mean_test() const {
        auto v = per_seed_test();
        if (v.empty()) return std::nullopt;
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    }
    // sample standard deviation across seeds; absent for fewer than two runs
    std::optional<double> std_test() const {
        auto v = per_seed_test();
        if (v.size() < 2) return std::nullopt;
        double m = *mean_test();
        double s2 = 0;
        for (double x : v) s2 += (x - m) * (x - m);
        return std::sqrt(s2 / double(v.size() - 1));
    }
};

namespace detail {

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json metric_curve(const std::vector<double>& v) {
    json arr = json::array();
    for (double x : v) arr.push_back(finite_or_null(x));
    return arr;
}

}  // namespace detail

inline json report_to_json(const RunReport& r) {
    json seeds = json::array();
    json timing = json::array();
    for (const auto& s : r.seeds) {
        json js;
        js["seed"] = s.seed;
        js["train_loss"] = detail::metric_curve(s.train_loss);
        js["valid_metric"] = detail::metric_curve(s.valid_metric);
        js["selected_epoch"] = s.selected_epoch;
        js["test_metric"] = detail::finite_or_null(s.test_metric);
        js["skipped_updates"] = s.skipped_updates;
        if (s.diverged) js["error"] = s.error;
        seeds.push_back(js);
        json jt;
        jt["seed"] = s.seed;
        jt["epoch_seconds"] = s.epoch_seconds;
        timing.push_back(jt);
    }

    json metrics;
    metrics["name"] = r.metric_name;
    json per_seed = json::array();
    for (double v : r.per_seed_test()) per_seed.push_back(v);
    metrics["per_seed_test"] = per_seed;
    auto m = r.mean_test();
    auto sd = r.std_test();
    metrics["mean"] = m ? json(*m) : json(nullptr);
    metrics["std"] = sd ? json(*sd) : json(nullptr);

    json parse;
    parse["rows_read"] = r.parse_stats.rows_read;
    parse["molecules"] = r.parse_stats.molecules;
    parse["skipped"] = r.parse_stats.skipped;
    parse["skip_reasons"] = r.parse_stats.skip_reasons;

    json out;
    out["config"] = r.config_echo;
    out["environment"] = r.environment;
    out["parse_stats"] = parse;
    out["param_count"] = r.param_count;
    out["split"] = {{"scaffold_fallback", r.scaffold_fallback},
                    {"n_scaffold_groups", r.n_scaffold_groups}};
    out["metrics"] = metrics;  // deterministic given (config, seeds)
    out["seeds"] = seeds;
    out["timing"] = timing;    // wall-clock, machine-dependent
    return out;
}

inline void write_report(const std::string& path, const RunReport& r) {
    std::ofstream out(path);
    if (!out) throw ContractError("cannot write report: " + path);
    out << report_to_json(r).dump(2) << "\n";
}

// flat summary: one row per completed seed
inline void write_summary_csv(const std::string& path, const RunReport& r) {
    std::ofstream out(path);
    if (!out) throw ContractError("cannot write summary: " + path);
    out << "seed,test_metric,epoch_time_s,param_count\n";
    out.precision(12);
    for (const auto& s : r.seeds) {
        if (s.diverged) continue;
        double mean_epoch = 0.0;
        for (double t : s.epoch_seconds) mean_epoch += t;
        if (!s.epoch_seconds.empty()) mean_epoch /= double(s.epoch_seconds.size());
        out << s.seed << "," << s.test_metric << "," << mean_epoch << "," << s.param_count << "\n";
    }
}

}  // namespace molkan
