#pragma once

// Evaluation metrics: ROC-AUC via the tie-corrected rank-sum statistic
// (O(n log n)), per-task with a missing-label mask, and MAE helpers.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "molkan/tensor.hpp"

namespace molkan {

// AUC for one task: probability a random positive outscores a random
// negative, ties counted half. Requires at least one positive and one
// negative; otherwise the task is not evaluable.
inline std::optional<double> roc_auc_single(const std::vector<double>& scores,
                                            const std::vector<double>& labels) {
    const size_t n = scores.size();
    if (labels.size() != n) throw ContractError("roc_auc: scores/labels length mismatch");
    size_t n_pos = 0;
    for (double y : labels) n_pos += (y > 0.5) ? 1 : 0;
    size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = int(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores[size_t(a)] < scores[size_t(b)]; });

    // average ranks over tie groups (1-based ranks)
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[size_t(order[j + 1])] == scores[size_t(order[i])]) ++j;
        double avg_rank = 0.5 * double(i + 1 + j + 1);
        for (size_t r = i; r <= j; ++r)
            if (labels[size_t(order[r])] > 0.5) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    double auc = (rank_sum_pos - double(n_pos) * (double(n_pos) + 1.0) / 2.0) /
                 (double(n_pos) * double(n_neg));
    return auc;
}

struct RocAucResult {
    std::vector<std::optional<double>> per_task;
    std::optional<double> macro;  // absent when no task is evaluable
};

// scores/labels/mask: B x T row-major. Tasks without both classes among the
// unmasked rows are skipped and excluded from the macro average.
inline RocAucResult roc_auc(const std::vector<double>& scores, const std::vector<double>& labels,
                            const std::vector<double>& mask, int n_rows, int n_tasks) {
    if (int64_t(scores.size()) != int64_t(n_rows) * n_tasks || labels.size() != scores.size() ||
        mask.size() != scores.size())
        throw ContractError("roc_auc: size mismatch");
    RocAucResult result;
    double total = 0.0;
    int valid = 0;
    for (int t = 0; t < n_tasks; ++t) {
        std::vector<double> s, y;
        for (int r = 0; r < n_rows; ++r) {
            size_t idx = size_t(r) * n_tasks + t;
            if (mask[idx] == 0.0) continue;
            s.push_back(scores[idx]);
            y.push_back(labels[idx]);
        }
        auto auc = s.empty() ? std::nullopt : roc_auc_single(s, y);
        if (auc) {
            total += *auc;
            ++valid;
        }
        result.per_task.push_back(auc);
    }
    if (valid > 0) result.macro = total / valid;
    return result;
}

// Per-task mean absolute error over unmasked entries, in original units when
// the caller de-normalizes first.
inline std::vector<std::optional<double>> mae_per_task(const std::vector<double>& pred,
                                                       const std::vector<double>& target,
                                                       const std::vector<double>& mask, int n_rows,
                                                       int n_tasks) {
    std::vector<std::optional<double>> out;
    for (int t = 0; t < n_tasks; ++t) {
        double s = 0.0;
        int cnt = 0;
        for (int r = 0; r < n_rows; ++r) {
            size_t idx = size_t(r) * n_tasks + t;
            if (mask[idx] == 0.0) continue;
            s += std::abs(pred[idx] - target[idx]);
            ++cnt;
        }
        out.push_back(cnt > 0 ? std::optional<double>(s / cnt) : std::nullopt);
    }
    return out;
}

inline std::optional<double> mae_macro(const std::vector<double>& pred,
                                       const std::vector<double>& target,
                                       const std::vector<double>& mask, int n_rows, int n_tasks) {
    auto per = mae_per_task(pred, target, mask, n_rows, n_tasks);
    double s = 0.0;
    int valid = 0;
    for (auto& v : per)
        if (v) {
            s += *v;
            ++valid;
        }
    return valid > 0 ? std::optional<double>(s / valid) : std::nullopt;
}

}  // namespace molkan
