#pragma once

// Supervised training over molecular datasets: scaffold-grouped splitting,
// masked multitask losses, per-epoch validation with best-checkpoint
// selection, and deterministic seeded runs.

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "molkan/metrics.hpp"
#include "molkan/molgraph.hpp"
#include "molkan/mpnn.hpp"
#include "molkan/optim.hpp"
#include "molkan/rng.hpp"

namespace molkan {

enum class TaskKind { classification, regression };

inline const char* to_string(TaskKind t) {
    return t == TaskKind::classification ? "classification" : "regression";
}

struct Molecule {
    MolecularGraph graph;
    FeatureMatrices features;
    std::string scaffold;
    std::vector<double> labels;  // n_tasks entries
    std::vector<double> mask;    // 1 present, 0 missing
};

struct ParseStats {
    int rows_read = 0;
    int molecules = 0;
    int skipped = 0;
    std::map<std::string, int> skip_reasons;
};

struct Dataset {
    TaskKind task = TaskKind::classification;
    int n_tasks = 0;
    std::vector<std::string> task_names;
    std::vector<Molecule> molecules;
    ParseStats stats;

    int size() const { return int(molecules.size()); }
};

// ---------------------------------------------------------------------------
// scaffold split
// ---------------------------------------------------------------------------

struct SplitIndices {
    std::vector<int> train, valid, test;
};

struct SplitResult {
    SplitIndices idx;
    bool scaffold_fallback = false;  // random split used instead
    int n_groups = 0;
};

// Seeded random partition with nonempty splits.
inline SplitIndices random_split(int n, double f_train = 0.8, double f_valid = 0.1,
                                 uint64_t seed = 0) {
    if (n < 3) throw ContractError("random_split: dataset too small");
    SplitIndices idx;
    std::vector<int> order(size_t(n), 0);
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;
    Rng rng(seed ^ 0x5ca ^ (uint64_t(n) << 20));
    rng.shuffle(order);
    int n_train = int(std::llround(f_train * n));
    int n_valid = int(std::llround((f_train + f_valid) * n)) - n_train;
    n_train = std::max(1, std::min(n_train, n - 2));
    n_valid = std::max(1, std::min(n_valid, n - n_train - 1));
    for (int i = 0; i < n; ++i) {
        if (i < n_train)
            idx.train.push_back(order[size_t(i)]);
        else if (i < n_train + n_valid)
            idx.valid.push_back(order[size_t(i)]);
        else
            idx.test.push_back(order[size_t(i)]);
    }
    return idx;
}

// Group molecules by scaffold key, sort groups by (size desc, key asc), fill
// train until >= 80% of molecules, then valid until >= 90%, remainder test.
// Datasets with fewer than 3 groups, or a greedy result with an empty split,
// fall back to a seeded random split.
inline SplitResult scaffold_split(const Dataset& data, double f_train = 0.8, double f_valid = 0.1,
                                  uint64_t fallback_seed = 0) {
    const int n = data.size();
    if (n < 3) throw ContractError("scaffold_split: dataset too small");

    std::map<std::string, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[data.molecules[size_t(i)].scaffold].push_back(i);

    SplitResult result;
    result.n_groups = int(groups.size());

    auto random_fallback = [&] {
        result.scaffold_fallback = true;
        result.idx = random_split(n, f_train, f_valid, fallback_seed);
    };

    if (result.n_groups < 3) {
        random_fallback();
        return result;
    }

    std::vector<std::pair<std::string, std::vector<int>>> ordered(groups.begin(), groups.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.second.size() != b.second.size()) return a.second.size() > b.second.size();
        return a.first < b.first;
    });

    const double target_train = f_train * n;
    const double target_valid = (f_train + f_valid) * n;
    for (const auto& [key, members] : ordered) {
        if (double(result.idx.train.size()) < target_train)
            result.idx.train.insert(result.idx.train.end(), members.begin(), members.end());
        else if (double(result.idx.train.size() + result.idx.valid.size()) < target_valid)
            result.idx.valid.insert(result.idx.valid.end(), members.begin(), members.end());
        else
            result.idx.test.insert(result.idx.test.end(), members.begin(), members.end());
    }
    if (result.idx.train.empty() || result.idx.valid.empty() || result.idx.test.empty())
        random_fallback();
    return result;
}

// ---------------------------------------------------------------------------
// regression target normalization (train statistics only)
// ---------------------------------------------------------------------------

struct TaskNormalization {
    std::vector<double> mean, stdev;
    bool clamped = false;  // zero-variance task hit

    static TaskNormalization identity(int n_tasks) {
        TaskNormalization norm;
        norm.mean.assign(size_t(n_tasks), 0.0);
        norm.stdev.assign(size_t(n_tasks), 1.0);
        return norm;
    }

    static TaskNormalization fit(const Dataset& data, const std::vector<int>& train_idx) {
        TaskNormalization norm = identity(data.n_tasks);
        for (int t = 0; t < data.n_tasks; ++t) {
            double s = 0.0, s2 = 0.0, cnt = 0.0;
            for (int i : train_idx) {
                const Molecule& m = data.molecules[size_t(i)];
                if (m.mask[size_t(t)] == 0.0) continue;
                s += m.labels[size_t(t)];
                s2 += m.labels[size_t(t)] * m.labels[size_t(t)];
                cnt += 1.0;
            }
            if (cnt > 0) {
                double mu = s / cnt;
                double var = std::max(0.0, s2 / cnt - mu * mu);
                double sd = std::sqrt(var);
                if (sd <= 0.0) {
                    sd = 1.0;
                    norm.clamped = true;
                }
                norm.mean[size_t(t)] = mu;
                norm.stdev[size_t(t)] = sd;
            }
        }
        return norm;
    }

    double normalize(double y, int t) const { return (y - mean[size_t(t)]) / stdev[size_t(t)]; }
    double denormalize(double z, int t) const { return z * stdev[size_t(t)] + mean[size_t(t)]; }
};

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double lr = 1e-3;
    int eval_batch_size = 256;
};

struct SeedRunResult {
    uint64_t seed = 0;
    std::vector<double> train_loss;    // per epoch
    std::vector<double> valid_metric;  // per epoch (NaN when not evaluable)
    int selected_epoch = -1;
    double test_metric = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> epoch_seconds;
    int64_t param_count = 0;
    int64_t skipped_updates = 0;
    bool diverged = false;
    std::string error;
};

namespace detail {

struct LabelTensors {
    Tensor labels, mask;
};

inline LabelTensors label_tensors(const Dataset& data, const std::vector<int>& idx,
                                  const TaskNormalization* norm) {
    const int b = int(idx.size());
    Tensor labels = Tensor::zeros({b, data.n_tasks});
    Tensor mask = Tensor::zeros({b, data.n_tasks});
    for (int r = 0; r < b; ++r) {
        const Molecule& m = data.molecules[size_t(idx[size_t(r)])];
        for (int t = 0; t < data.n_tasks; ++t) {
            double y = m.labels[size_t(t)];
            labels.ptr()[size_t(r) * data.n_tasks + t] = norm ? norm->normalize(y, t) : y;
            mask.ptr()[size_t(r) * data.n_tasks + t] = m.mask[size_t(t)];
        }
    }
    return {std::move(labels), std::move(mask)};
}

inline BatchedGraph batch_from_indices(const Dataset& data, const std::vector<int>& idx) {
    std::vector<const MolecularGraph*> gs;
    std::vector<const FeatureMatrices*> fs;
    gs.reserve(idx.size());
    fs.reserve(idx.size());
    for (int i : idx) {
        gs.push_back(&data.molecules[size_t(i)].graph);
        fs.push_back(&data.molecules[size_t(i)].features);
    }
    return batch_graphs(gs, fs);
}

// forward a whole split in evaluation batches; rows in index order
inline std::vector<double> predict_split(GnnModel& model, const Dataset& data,
                                         const std::vector<int>& idx, int eval_batch) {
    std::vector<double> out;
    out.reserve(idx.size() * size_t(data.n_tasks));
    for (size_t pos = 0; pos < idx.size(); pos += size_t(eval_batch)) {
        std::vector<int> chunk(idx.begin() + long(pos),
                               idx.begin() + long(std::min(idx.size(), pos + size_t(eval_batch))));
        BatchedGraph batch = batch_from_indices(data, chunk);
        Tape tape;
        Tensor y = model.forward(tape, batch);
        out.insert(out.end(), y.data->begin(), y.data->end());
    }
    return out;
}

}  // namespace detail

// Metric over a split: macro ROC-AUC for classification (higher better), or
// macro MAE in original units for regression (lower better). Absent when no
// task is evaluable.
inline std::optional<double> evaluate_split(GnnModel& model, const Dataset& data,
                                            const std::vector<int>& idx,
                                            const TaskNormalization& norm, int eval_batch = 256) {
    if (idx.empty()) return std::nullopt;
    std::vector<double> pred = detail::predict_split(model, data, idx, eval_batch);
    auto lt = detail::label_tensors(data, idx, nullptr);
    if (data.task == TaskKind::classification) {
        auto res = roc_auc(pred, *lt.labels.data, *lt.mask.data, int(idx.size()), data.n_tasks);
        return res.macro;
    }
    for (size_t r = 0; r < idx.size(); ++r)
        for (int t = 0; t < data.n_tasks; ++t)
            pred[r * size_t(data.n_tasks) + size_t(t)] =
                norm.denormalize(pred[r * size_t(data.n_tasks) + size_t(t)], t);
    return mae_macro(pred, *lt.labels.data, *lt.mask.data, int(idx.size()), data.n_tasks);
}

// final_model, when given, receives the selected (best-validation) weights
inline SeedRunResult train_loop(const GnnConfig& model_cfg, const Dataset& data,
                                const SplitIndices& split, const TrainConfig& cfg, uint64_t seed,
                                GnnModel* final_model = nullptr) {
    SeedRunResult result;
    result.seed = seed;

    GnnModel model = GnnModel::build(model_cfg, seed);
    auto params = model.parameters();
    result.param_count = model.parameter_count();
    Adam opt(params, AdamConfig{.lr = cfg.lr});

    TaskNormalization norm = data.task == TaskKind::regression
                                 ? TaskNormalization::fit(data, split.train)
                                 : TaskNormalization::identity(data.n_tasks);

    const bool higher_better = data.task == TaskKind::classification;
    double best_metric = higher_better ? -std::numeric_limits<double>::infinity()
                                       : std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_params;

    Rng shuffle_rng(seed * 0x9e3779b9ULL + 1);
    std::vector<int> order = split.train;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int64_t loss_count = 0;
        for (size_t pos = 0; pos < order.size(); pos += size_t(cfg.batch_size)) {
            std::vector<int> chunk(
                order.begin() + long(pos),
                order.begin() + long(std::min(order.size(), pos + size_t(cfg.batch_size))));
            BatchedGraph batch = detail::batch_from_indices(data, chunk);
            auto lt = detail::label_tensors(
                data, chunk, data.task == TaskKind::regression ? &norm : nullptr);

            Tape tape;
            Tensor logits = model.forward(tape, batch);
            Tensor loss = data.task == TaskKind::classification
                              ? bce_with_logits(logits, lt.labels, lt.mask)
                              : masked_mse(logits, lt.labels, lt.mask);
            double loss_val = loss.item();
            if (!std::isfinite(loss_val)) {
                result.diverged = true;
                result.error = "non-finite training loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(pos / size_t(cfg.batch_size));
                return result;
            }
            loss_sum += loss_val * double(chunk.size());
            loss_count += int64_t(chunk.size());
            tape.backward(loss);
            opt.step();
        }
        result.train_loss.push_back(loss_count ? loss_sum / double(loss_count) : 0.0);

        auto vm = evaluate_split(model, data, split.valid, norm, cfg.eval_batch_size);
        result.valid_metric.push_back(vm ? *vm : std::numeric_limits<double>::quiet_NaN());
        bool improved = vm && (higher_better ? *vm > best_metric : *vm < best_metric);
        if (improved) {
            best_metric = *vm;
            result.selected_epoch = epoch;
            best_params.clear();
            for (Parameter* p : params) best_params.push_back(*p->value.data);
        }

        auto t1 = std::chrono::steady_clock::now();
        result.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }

    if (!best_params.empty()) {
        for (size_t i = 0; i < params.size(); ++i) *params[i]->value.data = best_params[i];
    } else {
        result.selected_epoch = cfg.epochs - 1;  // no evaluable valid metric: keep final weights
    }
    auto tm = evaluate_split(model, data, split.test, norm, cfg.eval_batch_size);
    result.test_metric = tm ? *tm : std::numeric_limits<double>::quiet_NaN();
    result.skipped_updates = opt.skipped_updates();
    if (final_model) *final_model = std::move(model);
    return result;
}

}  // namespace molkan
