#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "molkan/synthetic.hpp"
#include "molkan/training.hpp"

using namespace molkan;

// O(n^2) pairwise oracle: (wins + half-ties) / (n_pos * n_neg)
static double pairwise_auc_oracle(const std::vector<double>& scores,
                                  const std::vector<double>& labels) {
    double wins = 0.0;
    int n_pos = 0, n_neg = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] > 0.5) {
            ++n_pos;
            for (size_t j = 0; j < scores.size(); ++j) {
                if (labels[j] > 0.5) continue;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        } else {
            ++n_neg;
        }
    }
    return wins / (double(n_pos) * double(n_neg));
}

TEST(AdamOpt, HandEvaluatedFirstStep) {
    Parameter p("p", Tensor::scalar(1.0));
    Adam opt({&p}, AdamConfig{.lr = 1e-3});
    p.grad[0] = 1.0;
    opt.step();
    // t=1: mhat = g, vhat = g^2; delta = -lr * g / (sqrt(g^2) + eps) ~ -1e-3
    EXPECT_NEAR((*p.value.data)[0], 1.0 - 1e-3, 1e-10);
    EXPECT_DOUBLE_EQ(p.grad[0], 0.0);  // gradients zeroed after the step
}

TEST(AdamOpt, ZeroGradLeavesParameterUnchanged) {
    Parameter p("p", Tensor::scalar(0.5));
    Adam opt({&p});
    opt.step();
    EXPECT_DOUBLE_EQ((*p.value.data)[0], 0.5);
}

TEST(AdamOpt, IdenticalStatesMoveIdentically) {
    Parameter a("a", Tensor::scalar(0.3));
    Parameter b("b", Tensor::scalar(0.3));
    Adam opt({&a, &b}, AdamConfig{.lr = 5e-3});
    for (int step = 0; step < 5; ++step) {
        a.grad[0] = 0.7 + step;
        b.grad[0] = 0.7 + step;
        opt.step();
        EXPECT_DOUBLE_EQ((*a.value.data)[0], (*b.value.data)[0]);
    }
}

TEST(AdamOpt, NonFiniteGradientSkipsParameter) {
    Parameter p("p", Tensor::scalar(1.0));
    Adam opt({&p});
    p.grad[0] = std::numeric_limits<double>::quiet_NaN();
    opt.step();
    EXPECT_DOUBLE_EQ((*p.value.data)[0], 1.0);
    EXPECT_EQ(opt.skipped_updates(), 1);
    p.grad[0] = 1.0;
    opt.step();
    EXPECT_LT((*p.value.data)[0], 1.0);
}

TEST(RocAuc, TrivialCases) {
    EXPECT_DOUBLE_EQ(*roc_auc_single({0.9, 0.1}, {1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(*roc_auc_single({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}), 0.5);
    // pairs: (0.8 vs 0.6) win, (0.4 vs 0.6) loss -> 0.5
    EXPECT_DOUBLE_EQ(*roc_auc_single({0.8, 0.6, 0.4}, {1, 0, 1}), 0.5);
    EXPECT_FALSE(roc_auc_single({0.8, 0.6}, {1, 1}).has_value());
}

TEST(RocAuc, MatchesPairwiseOracleWithTies) {
    Rng rng(2718);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + rng.uniform_int(499);
        std::vector<double> scores, labels;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores produce plenty of ties
            scores.push_back(std::round(rng.uniform(-1, 1) * 8) / 8.0);
            double y = rng.uniform() < 0.4 ? 1.0 : 0.0;
            has_pos |= y > 0.5;
            has_neg |= y < 0.5;
            labels.push_back(y);
        }
        if (!has_pos) labels[0] = 1.0;
        if (!has_neg) labels[size_t(n - 1)] = 0.0;
        auto fast = roc_auc_single(scores, labels);
        ASSERT_TRUE(fast.has_value());
        EXPECT_NEAR(*fast, pairwise_auc_oracle(scores, labels), 1e-12) << "trial " << trial;
    }
}

TEST(RocAuc, MaskedMultitaskMacro) {
    // task 0 separable, task 1 all same label among unmasked -> skipped
    std::vector<double> scores = {0.9, 0.2, 0.8, 0.1, 0.7, 0.6, 0.5, 0.4};
    std::vector<double> labels = {1, 1, 0, 1, 1, 1, 0, 1};
    std::vector<double> mask = {1, 1, 1, 0, 1, 1, 1, 0};
    auto res = roc_auc(scores, labels, mask, 4, 2);
    ASSERT_TRUE(res.per_task[0].has_value());
    EXPECT_FALSE(res.per_task[1].has_value());
    EXPECT_DOUBLE_EQ(*res.macro, *res.per_task[0]);

    std::vector<double> none_mask(8, 0.0);
    auto absent = roc_auc(scores, labels, none_mask, 4, 2);
    EXPECT_FALSE(absent.macro.has_value());
}

TEST(Mae, TrivialAndRoundTrip) {
    std::vector<double> pred = {1, 2, 3};
    std::vector<double> tgt = {1, 2, 3};
    std::vector<double> mask = {1, 1, 1};
    EXPECT_DOUBLE_EQ(*mae_macro(pred, tgt, mask, 3, 1), 0.0);

    std::vector<double> pred2 = {1, 1};
    std::vector<double> tgt2 = {0, 2};
    std::vector<double> mask2 = {1, 1};
    EXPECT_DOUBLE_EQ(*mae_macro(pred2, tgt2, mask2, 2, 1), 1.0);

    TaskNormalization norm;
    norm.mean = {3.7};
    norm.stdev = {2.4};
    for (double y : {-5.0, 0.0, 1.7, 42.0})
        EXPECT_NEAR(norm.denormalize(norm.normalize(y, 0), 0), y, 1e-12);
}

TEST(Normalization, ZeroStdClampedWithFlag) {
    Dataset data;
    data.task = TaskKind::regression;
    data.n_tasks = 1;
    for (int i = 0; i < 4; ++i) {
        Molecule m;
        m.labels = {5.0};
        m.mask = {1.0};
        data.molecules.push_back(std::move(m));
    }
    auto norm = TaskNormalization::fit(data, {0, 1, 2, 3});
    EXPECT_TRUE(norm.clamped);
    EXPECT_DOUBLE_EQ(norm.stdev[0], 1.0);
    EXPECT_DOUBLE_EQ(norm.mean[0], 5.0);
}

// ---------------------------------------------------------------------------

namespace {

Dataset tiny_dataset_with_scaffolds(const std::vector<std::string>& scaffolds) {
    Dataset data;
    data.task = TaskKind::classification;
    data.n_tasks = 1;
    for (const auto& s : scaffolds) {
        Molecule m;
        m.scaffold = s;
        m.labels = {0.0};
        m.mask = {1.0};
        data.molecules.push_back(std::move(m));
    }
    return data;
}

}  // namespace

TEST(ScaffoldSplit, TenSingletonsGive811) {
    std::vector<std::string> keys;
    for (int i = 0; i < 10; ++i) keys.push_back("s" + std::to_string(i));
    auto data = tiny_dataset_with_scaffolds(keys);
    auto split = scaffold_split(data);
    EXPECT_FALSE(split.scaffold_fallback);
    EXPECT_EQ(split.idx.train.size(), 8u);
    EXPECT_EQ(split.idx.valid.size(), 1u);
    EXPECT_EQ(split.idx.test.size(), 1u);
    // deterministic assignment order by key: s0..s7 train, s8 valid, s9 test
    EXPECT_EQ(data.molecules[size_t(split.idx.valid[0])].scaffold, "s8");
    EXPECT_EQ(data.molecules[size_t(split.idx.test[0])].scaffold, "s9");
}

TEST(ScaffoldSplit, SingleScaffoldTriggersFallback) {
    auto data = tiny_dataset_with_scaffolds(std::vector<std::string>(20, "only"));
    auto split = scaffold_split(data);
    EXPECT_TRUE(split.scaffold_fallback);
    EXPECT_FALSE(split.idx.train.empty());
    EXPECT_FALSE(split.idx.valid.empty());
    EXPECT_FALSE(split.idx.test.empty());
}

TEST(ScaffoldSplit, PartitionAndDisjointnessOnSynthetic) {
    SyntheticSpec spec;
    spec.n_molecules = 400;
    spec.seed = 11;
    Dataset data = make_synthetic_dataset(spec);
    auto split = scaffold_split(data);
    EXPECT_FALSE(split.scaffold_fallback);

    std::vector<int> seen(size_t(data.size()), 0);
    for (int i : split.idx.train) ++seen[size_t(i)];
    for (int i : split.idx.valid) ++seen[size_t(i)];
    for (int i : split.idx.test) ++seen[size_t(i)];
    for (int v : seen) EXPECT_EQ(v, 1);  // partition: disjoint and complete

    std::set<std::string> train_keys, valid_keys, test_keys;
    for (int i : split.idx.train) train_keys.insert(data.molecules[size_t(i)].scaffold);
    for (int i : split.idx.valid) valid_keys.insert(data.molecules[size_t(i)].scaffold);
    for (int i : split.idx.test) test_keys.insert(data.molecules[size_t(i)].scaffold);
    for (const auto& k : valid_keys) EXPECT_EQ(train_keys.count(k), 0u);
    for (const auto& k : test_keys) {
        EXPECT_EQ(train_keys.count(k), 0u);
        EXPECT_EQ(valid_keys.count(k), 0u);
    }

    // deterministic across calls
    auto split2 = scaffold_split(data);
    EXPECT_EQ(split.idx.train, split2.idx.train);
    EXPECT_EQ(split.idx.test, split2.idx.test);
}

TEST(MaskedLoss, PerturbingMaskedLabelChangesNothing) {
    GnnConfig cfg;
    cfg.hidden = 6;
    cfg.depth = 1;
    cfg.num_rbf = 3;
    cfg.n_tasks = 2;
    GnnModel model = GnnModel::build(cfg, 5);

    SyntheticSpec spec;
    spec.n_molecules = 6;
    spec.seed = 3;
    Dataset data = make_synthetic_dataset(spec);
    std::vector<int> idx = {0, 1, 2, 3};
    auto batch = detail::batch_from_indices(data, idx);

    Tensor labels = Tensor::from_vector({1, 0, 0, 1, 1, 0, 0, 1}, {4, 2});
    Tensor mask = Tensor::from_vector({1, 0, 1, 1, 0, 1, 1, 1}, {4, 2});

    auto run = [&](double masked_value) {
        Tensor lab = labels;
        lab.data = std::make_shared<std::vector<double>>(*labels.data);
        (*lab.data)[1] = masked_value;  // masked entry (row 0, task 1)
        for (Parameter* p : model.parameters()) p->zero_grad();
        Tape tape;
        Tensor loss = bce_with_logits(model.forward(tape, batch), lab, mask);
        tape.backward(loss);
        std::vector<double> grads;
        for (Parameter* p : model.parameters())
            grads.insert(grads.end(), p->grad.begin(), p->grad.end());
        return std::make_pair(loss.item(), grads);
    };
    auto [l1, g1] = run(0.0);
    auto [l2, g2] = run(123.0);
    EXPECT_EQ(l1, l2);  // bit-identical
    ASSERT_EQ(g1.size(), g2.size());
    for (size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g1[i], g2[i]);
}

TEST(TrainLoop, LossDecreasesOnSeparableToy) {
    // two molecules, cleanly separable by structure
    Dataset data;
    data.task = TaskKind::classification;
    data.n_tasks = 1;
    for (int rep = 0; rep < 8; ++rep) {
        for (const char* smi : {"c1ccccc1N", "CCCC"}) {
            Molecule m;
            m.graph = parse_smiles(smi);
            m.features = featurize(m.graph);
            m.scaffold = murcko_scaffold(m.graph);
            m.labels = {std::string(smi).find('1') != std::string::npos ? 1.0 : 0.0};
            m.mask = {1.0};
            data.molecules.push_back(std::move(m));
        }
    }
    SplitIndices split;
    for (int i = 0; i < data.size(); ++i) {
        if (i < 12)
            split.train.push_back(i);
        else if (i < 14)
            split.valid.push_back(i);
        else
            split.test.push_back(i);
    }
    GnnConfig mcfg;
    mcfg.hidden = 8;
    mcfg.depth = 1;
    mcfg.num_rbf = 3;
    TrainConfig tcfg;
    tcfg.epochs = 4;
    tcfg.batch_size = 12;
    tcfg.lr = 1e-3;
    auto result = train_loop(mcfg, data, split, tcfg, 1);
    ASSERT_FALSE(result.diverged) << result.error;
    ASSERT_EQ(result.train_loss.size(), 4u);
    EXPECT_LT(result.train_loss[1], result.train_loss[0]);
    EXPECT_LT(result.train_loss.back(), result.train_loss.front());
}

TEST(TrainLoop, DeterministicGivenSeed) {
    SyntheticSpec spec;
    spec.n_molecules = 150;
    spec.seed = 21;
    Dataset data = make_synthetic_dataset(spec);
    auto split = scaffold_split(data);
    GnnConfig mcfg;
    mcfg.hidden = 6;
    mcfg.depth = 1;
    mcfg.num_rbf = 3;
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 16;

    auto r1 = train_loop(mcfg, data, split.idx, tcfg, 42);
    auto r2 = train_loop(mcfg, data, split.idx, tcfg, 42);
    ASSERT_FALSE(r1.diverged);
    EXPECT_EQ(r1.train_loss, r2.train_loss);  // bit-identical
    ASSERT_EQ(r1.valid_metric.size(), r2.valid_metric.size());
    for (size_t e = 0; e < r1.valid_metric.size(); ++e) {
        ASSERT_FALSE(std::isnan(r1.valid_metric[e])) << "validation metric absent";
        EXPECT_EQ(r1.valid_metric[e], r2.valid_metric[e]);
    }
    EXPECT_EQ(r1.test_metric, r2.test_metric);
    EXPECT_EQ(r1.selected_epoch, r2.selected_epoch);
}

TEST(Synthetic, DeterministicGenerationAndCsvRoundTrip) {
    SyntheticSpec spec;
    spec.n_molecules = 50;
    spec.seed = 31;
    spec.n_tasks = 2;
    spec.missing_frac = 0.2;
    auto rows1 = make_synthetic_rows(spec);
    auto rows2 = make_synthetic_rows(spec);
    ASSERT_EQ(rows1.size(), rows2.size());
    for (size_t i = 0; i < rows1.size(); ++i) EXPECT_EQ(rows1[i].smiles, rows2[i].smiles);

    auto tmp = std::filesystem::temp_directory_path() / "molkan_synth_test.csv";
    write_synthetic_csv(tmp.string(), rows1);
    Dataset loaded = load_csv_dataset(tmp.string(), TaskKind::classification);
    EXPECT_EQ(loaded.n_tasks, 2);
    EXPECT_EQ(loaded.stats.molecules, int(rows1.size()));
    EXPECT_EQ(loaded.stats.skipped, 0);
    // missing cells surface as mask zeros
    int missing = 0;
    for (const auto& m : loaded.molecules)
        for (double v : m.mask) missing += v == 0.0;
    EXPECT_GT(missing, 0);
    std::filesystem::remove(tmp);
}

TEST(LoadCsv, ErrorsAndSkips) {
    auto tmp = std::filesystem::temp_directory_path() / "molkan_csv_test.csv";
    {
        std::ofstream out(tmp);
        out << "smiles,y\nCCO,1\nnot_a_smiles_%%,0\nc1ccccc1,1\n";
    }
    Dataset d = load_csv_dataset(tmp.string(), TaskKind::classification);
    EXPECT_EQ(d.stats.molecules, 2);
    EXPECT_EQ(d.stats.skipped, 1);
    EXPECT_EQ(d.stats.skip_reasons.at("smiles_parse_error"), 1);

    {
        std::ofstream out(tmp);
        out << "mol,y\nCCO,1\n";
    }
    EXPECT_THROW(load_csv_dataset(tmp.string(), TaskKind::classification), ConfigError);
    std::filesystem::remove(tmp);
}
