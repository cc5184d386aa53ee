#pragma once

// Aggregated invariant suite behind the `verify` subcommand: gradient checks
// for every tape-op kind, every KAN family and every (host, update, head)
// model combination, spline partition of unity, end-to-end permutation
// invariance, rank-sum ROC-AUC against the quadratic pairwise oracle,
// scaffold-split disjointness, and batching transparency.

#include <chrono>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "molkan/bspline.hpp"
#include "molkan/dataset.hpp"
#include "molkan/grad_check.hpp"
#include "molkan/kan.hpp"
#include "molkan/metrics.hpp"
#include "molkan/mpnn.hpp"
#include "molkan/synthetic.hpp"
#include "molkan/training.hpp"

namespace molkan {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

namespace verify_detail {

inline Parameter rand_param(const std::string& name, Shape shape, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
    return Parameter::uniform(name, std::move(shape), lo, hi, rng);
}

struct OpCase {
    std::string name;
    std::function<double(Rng&)> worst_rel_err;
};

// one grad-check scenario per registered op kind
inline std::vector<OpCase> op_grad_cases() {
    std::vector<OpCase> cases;
    auto add_case = [&](const char* name, std::function<double(Rng&)> fn) {
        cases.push_back(OpCase{name, std::move(fn)});
    };

    add_case("add", [](Rng& rng) {
        Parameter a = rand_param("a", {3, 4}, rng), b = rand_param("b", {3, 4}, rng);
        return grad_check([&](Tape& t) { return mean(add(t.watch(a), t.watch(b))); }, {&a, &b})
            .max_rel_err;
    });
    add_case("sub", [](Rng& rng) {
        Parameter a = rand_param("a", {3, 4}, rng), b = rand_param("b", {3, 4}, rng);
        return grad_check([&](Tape& t) { return mean(sub(t.watch(a), t.watch(b))); }, {&a, &b})
            .max_rel_err;
    });
    add_case("mul", [](Rng& rng) {
        Parameter a = rand_param("a", {3, 4}, rng), b = rand_param("b", {3, 4}, rng);
        return grad_check([&](Tape& t) { return mean(mul(t.watch(a), t.watch(b))); }, {&a, &b})
            .max_rel_err;
    });
    add_case("matmul", [](Rng& rng) {
        Parameter a = rand_param("a", {3, 4}, rng), b = rand_param("b", {4, 2}, rng);
        return grad_check([&](Tape& t) { return mean(matmul(t.watch(a), t.watch(b))); }, {&a, &b})
            .max_rel_err;
    });
    add_case("matmul_transposed", [](Rng& rng) {
        Parameter a = rand_param("a", {4, 3}, rng), b = rand_param("b", {2, 4}, rng);
        return grad_check(
                   [&](Tape& t) { return mean(matmul(t.watch(a), t.watch(b), true, true)); },
                   {&a, &b})
            .max_rel_err;
    });
    add_case("exp", [](Rng& rng) {
        Parameter x = rand_param("x", {4, 5}, rng);
        return grad_check([&](Tape& t) { return mean(exp(t.watch(x))); }, {&x}).max_rel_err;
    });
    add_case("square", [](Rng& rng) {
        Parameter x = rand_param("x", {4, 5}, rng);
        return grad_check([&](Tape& t) { return mean(square(t.watch(x))); }, {&x}).max_rel_err;
    });
    add_case("silu", [](Rng& rng) {
        Parameter x = rand_param("x", {4, 5}, rng);
        return grad_check([&](Tape& t) { return mean(silu(t.watch(x))); }, {&x}).max_rel_err;
    });
    add_case("relu", [](Rng& rng) {
        Parameter x("x", Tensor::zeros({4, 5}));
        for (auto& v : *x.value.data) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 2.0);
        return grad_check([&](Tape& t) { return mean(relu(t.watch(x))); }, {&x}).max_rel_err;
    });
    add_case("leaky_relu", [](Rng& rng) {
        Parameter x("x", Tensor::zeros({4, 5}));
        for (auto& v : *x.value.data) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 2.0);
        return grad_check([&](Tape& t) { return mean(leaky_relu(t.watch(x))); }, {&x}).max_rel_err;
    });
    add_case("sum", [](Rng& rng) {
        Parameter x = rand_param("x", {4, 5}, rng);
        return grad_check([&](Tape& t) { return sum(square(t.watch(x))); }, {&x}).max_rel_err;
    });
    add_case("mean", [](Rng& rng) {
        Parameter x = rand_param("x", {4, 5}, rng);
        return grad_check([&](Tape& t) { return mean(square(t.watch(x))); }, {&x}).max_rel_err;
    });
    add_case("concat", [](Rng& rng) {
        Parameter a = rand_param("a", {2, 3}, rng), b = rand_param("b", {2, 3}, rng);
        return grad_check(
                   [&](Tape& t) {
                       return add(mean(silu(concat({t.watch(a), t.watch(b)}, 0))),
                                  mean(square(concat({t.watch(a), t.watch(b)}, 1))));
                   },
                   {&a, &b})
            .max_rel_err;
    });
    add_case("slice", [](Rng& rng) {
        Parameter a = rand_param("a", {5, 3}, rng);
        return grad_check([&](Tape& t) { return mean(square(slice(t.watch(a), 1, 4))); }, {&a})
            .max_rel_err;
    });
    add_case("scatter_add", [](Rng& rng) {
        Parameter a = rand_param("a", {5, 3}, rng);
        std::vector<int> idx = {0, 1, 0, 2, 1};
        return grad_check([&](Tape& t) { return mean(square(scatter_add(t.watch(a), idx, 3))); },
                          {&a})
            .max_rel_err;
    });
    add_case("gather_rows", [](Rng& rng) {
        Parameter a = rand_param("a", {4, 3}, rng);
        std::vector<int> idx = {3, 0, 0, 2};
        return grad_check([&](Tape& t) { return mean(silu(gather_rows(t.watch(a), idx))); }, {&a})
            .max_rel_err;
    });
    add_case("broadcast", [](Rng& rng) {
        Parameter row = rand_param("row", {1, 4}, rng), col = rand_param("col", {3, 1}, rng);
        return grad_check(
                   [&](Tape& t) {
                       return mean(mul(broadcast(t.watch(row), {3, 4}),
                                       broadcast(t.watch(col), {3, 4})));
                   },
                   {&row, &col})
            .max_rel_err;
    });
    add_case("reshape", [](Rng& rng) {
        Parameter a = rand_param("a", {2, 6}, rng);
        return grad_check([&](Tape& t) { return mean(square(reshape(t.watch(a), {3, 4}))); }, {&a})
            .max_rel_err;
    });
    add_case("rbf_basis", [](Rng& rng) {
        Parameter x = rand_param("x", {3, 2}, rng);
        Parameter c = rand_param("c", {4}, rng);
        Parameter lbw = rand_param("lbw", {4}, rng, -0.5, 0.5);
        return grad_check(
                   [&](Tape& t) {
                       return mean(rbf_basis(t.watch(x), t.watch(c), t.watch(lbw)));
                   },
                   {&x, &c, &lbw})
            .max_rel_err;
    });
    add_case("bspline_features", [](Rng& rng) {
        Parameter x = rand_param("x", {3, 2}, rng, -1.8, 1.8);
        auto knots = make_uniform_knots(5, 3, 2.0);
        return grad_check(
                   [&](Tape& t) { return mean(square(bspline_features(t.watch(x), knots, 3))); },
                   {&x})
            .max_rel_err;
    });
    add_case("segment_softmax", [](Rng& rng) {
        Parameter l = rand_param("l", {6}, rng);
        std::vector<int> seg = {0, 0, 1, 1, 1, 2};
        return grad_check(
                   [&](Tape& t) { return mean(square(segment_softmax(t.watch(l), seg, 3))); }, {&l})
            .max_rel_err;
    });
    add_case("bce_with_logits", [](Rng& rng) {
        Parameter z = rand_param("z", {4, 3}, rng);
        Tensor y = Tensor::from_vector({1, 0, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0}, {4, 3});
        Tensor m = Tensor::from_vector({1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 1, 0}, {4, 3});
        return grad_check([&](Tape& t) { return bce_with_logits(t.watch(z), y, m); }, {&z})
            .max_rel_err;
    });
    add_case("masked_mse", [](Rng& rng) {
        Parameter p = rand_param("p", {4, 2}, rng);
        Tensor y = Tensor::from_vector({0.5, -1, 2, 0.25, -0.75, 1.5, 0, 1}, {4, 2});
        Tensor m = Tensor::from_vector({1, 0, 1, 1, 1, 1, 0, 1}, {4, 2});
        return grad_check([&](Tape& t) { return masked_mse(t.watch(p), y, m); }, {&p}).max_rel_err;
    });
    return cases;
}

inline BatchedGraph single_molecule_batch(const MolecularGraph& g, const FeatureMatrices& f) {
    return batch_graphs({&g}, {&f});
}

template <class F>
CheckResult timed(const std::string& name, F&& body) {
    CheckResult r;
    r.name = name;
    auto t0 = std::chrono::steady_clock::now();
    try {
        r.detail = body();
        r.passed = true;
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = e.what();
    }
    auto t1 = std::chrono::steady_clock::now();
    r.seconds = std::chrono::duration<double>(t1 - t0).count();
    return r;
}

struct CheckFailure : std::runtime_error {
    explicit CheckFailure(const std::string& s) : std::runtime_error(s) {}
};

}  // namespace verify_detail

// Gradient check over every op kind, 20 random draws each, rel err <= 1e-6.
inline CheckResult check_op_gradients() {
    return verify_detail::timed("op gradient checks", [] {
        double worst = 0.0;
        std::string worst_op;
        for (const auto& c : verify_detail::op_grad_cases()) {
            for (int trial = 0; trial < 20; ++trial) {
                Rng rng(uint64_t(1000 * trial + 17));
                double e = c.worst_rel_err(rng);
                if (e >= worst) {
                    worst = e;
                    worst_op = c.name;
                }
            }
        }
        if (worst >= 1e-6)
            throw verify_detail::CheckFailure("op " + worst_op + " rel err " +
                                              std::to_string(worst));
        return "22 op kinds, worst rel err " + std::to_string(worst) + " (" + worst_op + ")";
    });
}

// Each KAN family on a random 4 -> 4 layer at tol 1e-4, including SKAN
// center/bandwidth gradients and input gradients.
inline CheckResult check_layer_gradients() {
    return verify_detail::timed("kan layer gradient checks", [] {
        KanConfig cfg;
        cfg.num_rbf = 4;
        cfg.grid_size = 5;
        Rng xr(21);
        Parameter x = Parameter::uniform("x", {3, 4}, -1.8, 1.8, xr);
        double worst = 0.0;
        std::string worst_fam;
        for (auto family : {KanFamily::bspline, KanFamily::fastkan, KanFamily::skan}) {
            auto layer = init_layer(family, "l", 4, 4, cfg, 123);
            auto params = kan_parameters(layer);
            params.push_back(&x);
            auto rep = grad_check(
                [&](Tape& t) { return mean(kan_forward(layer, t, t.watch(x))); }, params);
            if (rep.max_rel_err >= worst) {
                worst = rep.max_rel_err;
                worst_fam = to_string(family);
            }
            if (rep.max_rel_err >= 1e-4)
                throw verify_detail::CheckFailure(std::string(to_string(family)) + " rel err " +
                                                  std::to_string(rep.max_rel_err) + " at " +
                                                  rep.worst.param);
        }
        return "3 families, worst rel err " + std::to_string(worst) + " (" + worst_fam + ")";
    });
}

// Every (host, update, head) combination on a <= 5-node molecule at tol 1e-4
// (atol 1e-8 absorbs finite-difference noise on near-zero entries).
inline CheckResult check_model_gradients() {
    return verify_detail::timed("model gradient checks (24 combinations)", [] {
        auto g = parse_smiles("C(=O)O");
        auto f = featurize(g);
        auto batch = verify_detail::single_molecule_batch(g, f);
        double worst = 0.0;
        std::string worst_combo;
        for (GnnHost host : {GnnHost::gcn, GnnHost::gat, GnnHost::gine}) {
            for (UpdateKind update : {UpdateKind::mlp, UpdateKind::skan, UpdateKind::bspline_kan,
                                      UpdateKind::fastkan}) {
                for (HeadKind head : {HeadKind::mlp, HeadKind::skan}) {
                    GnnConfig cfg;
                    cfg.host = host;
                    cfg.update_kind = update;
                    cfg.head_kind = head;
                    cfg.hidden = 4;
                    cfg.depth = 2;
                    cfg.num_rbf = 3;
                    cfg.grid_size = 4;
                    cfg.n_tasks = 2;
                    GnnModel model = GnnModel::build(cfg, 81);
                    auto params = model.parameters();
                    auto rep = grad_check([&](Tape& t) { return mean(model.forward(t, batch)); },
                                          params, 1e-5, 1e-4, 1e-8);
                    std::string combo = std::string(to_string(host)) + "/" + to_string(update) +
                                        "/" + to_string(head);
                    if (rep.max_rel_err >= worst) {
                        worst = rep.max_rel_err;
                        worst_combo = combo;
                    }
                    if (rep.max_rel_err >= 1e-4)
                        throw verify_detail::CheckFailure(combo + " rel err " +
                                                          std::to_string(rep.max_rel_err) +
                                                          " at " + rep.worst.param);
                }
            }
        }
        return "24 combinations, worst rel err " + std::to_string(worst) + " (" + worst_combo + ")";
    });
}

// sum_j B_j(x) == 1 within 1e-12 across the valid domain for k <= 5
inline CheckResult check_partition_of_unity() {
    return verify_detail::timed("b-spline partition of unity", [] {
        Rng rng(5);
        double worst = 0.0;
        for (int k = 1; k <= 5; ++k) {
            for (int g : {3, 6, 10}) {
                auto knots = make_uniform_knots(g, k, 2.0);
                for (int trial = 0; trial < 100; ++trial) {
                    double x = rng.uniform(-2.0, 2.0);
                    auto b = bspline_basis(x, knots, k);
                    double s = 0.0;
                    for (double v : b) s += v;
                    worst = std::max(worst, std::abs(s - 1.0));
                }
            }
        }
        if (worst > 1e-12)
            throw verify_detail::CheckFailure("max deviation " + std::to_string(worst));
        return "k in [1,5], max |sum - 1| = " + std::to_string(worst);
    });
}

// end-to-end invariance of predictions under node relabeling, tol 1e-10,
// 100 random molecules per host
inline CheckResult check_permutation_invariance() {
    return verify_detail::timed("permutation invariance (100 molecules x 3 hosts)", [] {
        SyntheticSpec spec;
        spec.n_molecules = 100;
        spec.seed = 2025;
        auto rows = make_synthetic_rows(spec);
        Rng rng(33);
        double worst = 0.0;
        for (GnnHost host : {GnnHost::gcn, GnnHost::gat, GnnHost::gine}) {
            GnnConfig cfg;
            cfg.host = host;
            cfg.hidden = 8;
            cfg.depth = 2;
            cfg.num_rbf = 3;
            cfg.n_tasks = 1;
            GnnModel model = GnnModel::build(cfg, 7);
            for (const auto& row : rows) {
                auto g = parse_smiles(row.smiles);
                auto f = featurize(g);
                auto batch = verify_detail::single_molecule_batch(g, f);
                const int n = batch.n_nodes;
                std::vector<int> perm(size_t(n), 0);
                for (int v = 0; v < n; ++v) perm[size_t(v)] = v;
                rng.shuffle(perm);

                BatchedGraph permuted = batch;
                permuted.H = Tensor::zeros({n, kNodeFeatureDim});
                for (int v = 0; v < n; ++v)
                    std::copy(batch.H.ptr() + size_t(v) * kNodeFeatureDim,
                              batch.H.ptr() + size_t(v + 1) * kNodeFeatureDim,
                              permuted.H.ptr() + size_t(perm[size_t(v)]) * kNodeFeatureDim);
                for (size_t e = 0; e < batch.edge_src.size(); ++e) {
                    permuted.edge_src[e] = perm[size_t(batch.edge_src[e])];
                    permuted.edge_dst[e] = perm[size_t(batch.edge_dst[e])];
                }

                Tape t1, t2;
                Tensor y1 = model.forward(t1, batch);
                Tensor y2 = model.forward(t2, permuted);
                for (int i = 0; i < y1.size(); ++i)
                    worst = std::max(worst, std::abs((*y1.data)[i] - (*y2.data)[i]));
            }
        }
        if (worst > 1e-10)
            throw verify_detail::CheckFailure("max deviation " + std::to_string(worst));
        return "max |y - y_perm| = " + std::to_string(worst);
    });
}

// rank-sum ROC-AUC equals the O(n^2) pairwise oracle to 1e-12 on 200 random
// tie-containing instances up to n = 500
inline CheckResult check_roc_auc_oracle() {
    return verify_detail::timed("roc-auc rank-sum vs pairwise oracle", [] {
        Rng rng(2718);
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            int n = 2 + rng.uniform_int(499);
            std::vector<double> scores, labels;
            bool has_pos = false, has_neg = false;
            for (int i = 0; i < n; ++i) {
                scores.push_back(std::round(rng.uniform(-1, 1) * 8) / 8.0);
                double y = rng.uniform() < 0.4 ? 1.0 : 0.0;
                has_pos |= y > 0.5;
                has_neg |= y < 0.5;
                labels.push_back(y);
            }
            if (!has_pos) labels[0] = 1.0;
            if (!has_neg) labels[size_t(n - 1)] = 0.0;

            double wins = 0.0;
            int n_pos = 0, n_neg = 0;
            for (size_t i = 0; i < scores.size(); ++i) {
                if (labels[i] > 0.5) {
                    ++n_pos;
                    for (size_t j = 0; j < scores.size(); ++j) {
                        if (labels[j] > 0.5) continue;
                        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
                    }
                } else {
                    ++n_neg;
                }
            }
            double oracle = wins / (double(n_pos) * double(n_neg));
            double fast = *roc_auc_single(scores, labels);
            worst = std::max(worst, std::abs(fast - oracle));
        }
        if (worst > 1e-12)
            throw verify_detail::CheckFailure("max |fast - oracle| = " + std::to_string(worst));
        return "200 instances, max deviation " + std::to_string(worst);
    });
}

// scaffold split is a partition and scaffold-disjoint on every dataset given
// (falls back to a synthetic dataset when none are supplied)
inline CheckResult check_split_disjointness(const std::vector<std::string>& dataset_csvs) {
    return verify_detail::timed("scaffold split partition + disjointness", [&] {
        std::vector<std::pair<std::string, Dataset>> datasets;
        if (dataset_csvs.empty()) {
            SyntheticSpec spec;
            spec.n_molecules = 500;
            spec.seed = 12;
            datasets.emplace_back("synthetic-500", make_synthetic_dataset(spec));
        } else {
            for (const auto& path : dataset_csvs) {
                try {
                    datasets.emplace_back(path, load_csv_dataset(path, TaskKind::classification));
                } catch (const ConfigError&) {
                    // BACE ships its SMILES under `mol`
                    datasets.emplace_back(
                        path, load_csv_dataset(path, TaskKind::classification, {}, "mol"));
                }
            }
        }
        std::string detail;
        for (auto& [name, data] : datasets) {
            auto s1 = scaffold_split(data);
            auto s2 = scaffold_split(data);
            if (s1.idx.train != s2.idx.train || s1.idx.valid != s2.idx.valid ||
                s1.idx.test != s2.idx.test)
                throw verify_detail::CheckFailure(name + ": split not deterministic");

            std::vector<int> seen(size_t(data.size()), 0);
            for (int i : s1.idx.train) ++seen[size_t(i)];
            for (int i : s1.idx.valid) ++seen[size_t(i)];
            for (int i : s1.idx.test) ++seen[size_t(i)];
            for (int v : seen)
                if (v != 1) throw verify_detail::CheckFailure(name + ": not a partition");

            if (!s1.scaffold_fallback) {
                std::set<std::string> tr, va, te;
                for (int i : s1.idx.train) tr.insert(data.molecules[size_t(i)].scaffold);
                for (int i : s1.idx.valid) va.insert(data.molecules[size_t(i)].scaffold);
                for (int i : s1.idx.test) te.insert(data.molecules[size_t(i)].scaffold);
                for (const auto& k : va)
                    if (tr.count(k))
                        throw verify_detail::CheckFailure(name + ": scaffold in train and valid");
                for (const auto& k : te)
                    if (tr.count(k) || va.count(k))
                        throw verify_detail::CheckFailure(name + ": scaffold in test and elsewhere");
            }
            detail += name + " (" + std::to_string(s1.n_groups) + " groups) ";
        }
        return detail;
    });
}

// model forward on a batch equals per-graph forwards, 50 random batches
inline CheckResult check_batching_transparency() {
    return verify_detail::timed("batching transparency (50 batches)", [] {
        SyntheticSpec spec;
        spec.n_molecules = 120;
        spec.seed = 99;
        Dataset data = make_synthetic_dataset(spec);
        GnnConfig cfg;
        cfg.hidden = 8;
        cfg.depth = 2;
        cfg.num_rbf = 3;
        cfg.n_tasks = 1;
        GnnModel model = GnnModel::build(cfg, 3);
        Rng rng(44);
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            int b = 2 + rng.uniform_int(7);
            std::vector<int> idx;
            for (int i = 0; i < b; ++i) idx.push_back(rng.uniform_int(data.size()));
            auto batch = detail::batch_from_indices(data, idx);
            Tape t;
            Tensor y = model.forward(t, batch);
            for (int i = 0; i < b; ++i) {
                auto single = detail::batch_from_indices(data, {idx[size_t(i)]});
                Tape ts;
                Tensor yi = model.forward(ts, single);
                worst = std::max(worst, std::abs(yi(0, 0) - y(i, 0)));
            }
        }
        if (worst > 1e-10)
            throw verify_detail::CheckFailure("max deviation " + std::to_string(worst));
        return "max |batched - single| = " + std::to_string(worst);
    });
}

inline std::vector<CheckResult> verify_suite(const std::vector<std::string>& dataset_csvs = {}) {
    std::vector<CheckResult> results;
    results.push_back(check_op_gradients());
    results.push_back(check_layer_gradients());
    results.push_back(check_model_gradients());
    results.push_back(check_partition_of_unity());
    results.push_back(check_permutation_invariance());
    results.push_back(check_roc_auc_oracle());
    results.push_back(check_split_disjointness(dataset_csvs));
    results.push_back(check_batching_transparency());
    return results;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

}  // namespace molkan
