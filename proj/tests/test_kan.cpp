#include <gtest/gtest.h>

#include <cmath>

#include "molkan/grad_check.hpp"
#include "molkan/kan.hpp"

using namespace molkan;

namespace {

// Independent oracle: textbook recursive Cox-de Boor, no shortcuts. Kept
// separate from the production evaluation path on purpose.
double naive_cox_de_boor(int j, int k, double x, const std::vector<double>& knots) {
    if (k == 0) return (x >= knots[size_t(j)] && x < knots[size_t(j + 1)]) ? 1.0 : 0.0;
    double left = 0.0, right = 0.0;
    double d1 = knots[size_t(j + k)] - knots[size_t(j)];
    double d2 = knots[size_t(j + k + 1)] - knots[size_t(j + 1)];
    if (d1 > 0) left = (x - knots[size_t(j)]) / d1 * naive_cox_de_boor(j, k - 1, x, knots);
    if (d2 > 0) right = (knots[size_t(j + k + 1)] - x) / d2 * naive_cox_de_boor(j + 1, k - 1, x, knots);
    return left + right;
}

}  // namespace

TEST(BSplineBasis, DegreeZeroIsIntervalIndicator) {
    auto knots = make_uniform_knots(4, 1, 2.0);  // k=1 so degree-0 triangle is exercised inside
    // direct check of the recursion base through the oracle
    for (int j = 0; j < int(knots.size()) - 1; ++j) {
        double mid = 0.5 * (knots[j] + knots[j + 1]);
        EXPECT_DOUBLE_EQ(naive_cox_de_boor(j, 0, mid, knots), 1.0);
        if (j > 0) {
            EXPECT_DOUBLE_EQ(naive_cox_de_boor(j - 1, 0, mid, knots), 0.0);
        }
    }
}

TEST(BSplineBasis, MatchesRecursiveOracle) {
    for (int k = 1; k <= 5; ++k) {
        for (int g : {3, 5, 8}) {
            auto knots = make_uniform_knots(g, k, 2.0);
            for (double x : {-1.999, -1.2, -0.4, 0.0, 0.3, 1.1, 1.87}) {
                auto mine = bspline_basis(x, knots, k);
                for (int j = 0; j < g + k; ++j) {
                    EXPECT_NEAR(mine[j], naive_cox_de_boor(j, k, x, knots), 1e-12)
                        << "k=" << k << " g=" << g << " x=" << x << " j=" << j;
                }
            }
        }
    }
}

TEST(BSplineBasis, CardinalCubicValues) {
    // uniform cardinal cubic basis: value 2/3 at its center knot, 1/6 one
    // knot spacing away
    const int g = 8, k = 3;
    auto knots = make_uniform_knots(g, k, 2.0);
    const double h = knots[1] - knots[0];
    // basis j has support [knots[j], knots[j+4]], center knots[j+2]
    for (int j = 2; j < g + k - 2; ++j) {
        double center = knots[j + 2];
        if (center - h < -2.0 || center + h > 2.0) continue;  // stay inside the clamp-free domain
        auto at_center = bspline_basis(center, knots, k);
        auto at_plus = bspline_basis(center + h, knots, k);
        auto at_minus = bspline_basis(center - h, knots, k);
        EXPECT_NEAR(at_center[j], 2.0 / 3.0, 1e-12);
        EXPECT_NEAR(at_plus[j], 1.0 / 6.0, 1e-12);
        EXPECT_NEAR(at_minus[j], 1.0 / 6.0, 1e-12);
    }
}

TEST(BSplineBasis, PartitionOfUnity) {
    Rng rng(5);
    for (int k = 1; k <= 5; ++k) {
        auto knots = make_uniform_knots(6, k, 2.0);
        for (int trial = 0; trial < 50; ++trial) {
            double x = rng.uniform(-2.0, 2.0);
            auto b = bspline_basis(x, knots, k);
            double s = 0.0;
            for (double v : b) s += v;
            EXPECT_NEAR(s, 1.0, 1e-12) << "k=" << k << " x=" << x;
        }
    }
}

TEST(BSplineBasis, OutOfRangeClampsToBoundary) {
    auto knots = make_uniform_knots(5, 3, 2.0);
    auto far = bspline_basis(10.0, knots, 3);
    auto edge = bspline_basis(2.0, knots, 3);
    for (size_t j = 0; j < far.size(); ++j) EXPECT_DOUBLE_EQ(far[j], edge[j]);
}

TEST(BSplineBasis, DerivativeMatchesFiniteDifference) {
    auto knots = make_uniform_knots(6, 3, 2.0);
    const double h = 1e-6;
    for (double x : {-1.7, -0.9, -0.05, 0.6, 1.3, 1.9}) {
        auto d = bspline_basis_derivative(x, knots, 3);
        auto up = bspline_basis(x + h, knots, 3);
        auto dn = bspline_basis(x - h, knots, 3);
        for (size_t j = 0; j < d.size(); ++j)
            EXPECT_NEAR(d[j], (up[j] - dn[j]) / (2 * h), 1e-6) << "x=" << x << " j=" << j;
    }
}

// ---------------------------------------------------------------------------

TEST(RbfActivation, ClosedFormValues) {
    // exp(0) = 1 at the center; exp(-1/2) one bandwidth away
    Tensor x = Tensor::from_vector({0.7}, {1, 1});
    Tensor c = Tensor::from_vector({0.7}, {1});
    Tensor lbw = Tensor::from_vector({std::log(0.9)}, {1});
    EXPECT_NEAR(rbf_basis(x, c, lbw).item(), 1.0, 1e-15);

    Tensor x2 = Tensor::from_vector({0.7 + 0.9}, {1, 1});
    EXPECT_NEAR(rbf_basis(x2, c, lbw).item(), std::exp(-0.5), 1e-15);
    EXPECT_NEAR(std::exp(-0.5), 0.606530659, 1e-9);
}

TEST(SkanLayer, ZeroRbfWeightsReduceToSiluBranch) {
    Rng rng(1);
    SkanLayer layer("l", 3, 3, 4, rng);
    std::fill(layer.rbf_weight.value.data->begin(), layer.rbf_weight.value.data->end(), 0.0);
    // identity pattern on the base weight
    std::fill(layer.base_weight.value.data->begin(), layer.base_weight.value.data->end(), 0.0);
    for (int i = 0; i < 3; ++i) (*layer.base_weight.value.data)[i * 3 + i] = 1.0;

    Tensor x = Tensor::from_vector({0.5, -1.0, 2.0}, {1, 3});
    Tape tape;
    Tensor y = layer.forward(tape, x);
    for (int i = 0; i < 3; ++i) {
        double v = (*x.data)[i];
        EXPECT_NEAR((*y.data)[i], v / (1.0 + std::exp(-v)), 1e-15);
    }
}

TEST(SkanLayer, SingleRbfUnit) {
    // 1 -> 1 layer, M=1, c=0, bw=1, w_r=2, w_b=0, x=0 -> 2.0
    Rng rng(2);
    SkanLayer layer("l", 1, 1, 1, rng);
    (*layer.centers.value.data)[0] = 0.0;
    (*layer.log_bandwidths.value.data)[0] = 0.0;  // bw = 1
    (*layer.rbf_weight.value.data)[0] = 2.0;
    (*layer.base_weight.value.data)[0] = 0.0;
    Tape tape;
    Tensor y = layer.forward(tape, Tensor::from_vector({0.0}, {1, 1}));
    EXPECT_DOUBLE_EQ(y.item(), 2.0);
}

TEST(SkanLayer, ColumnMismatchThrows) {
    Rng rng(3);
    SkanLayer layer("l", 3, 2, 4, rng);
    Tape tape;
    EXPECT_THROW(layer.forward(tape, Tensor::zeros({1, 4})), ShapeError);
}

TEST(ParameterCounts, ClosedForms) {
    Rng rng(4);
    SkanLayer skan("s", 2, 3, 4, rng);
    EXPECT_EQ(skan.parameter_count(), 2 * 3 * 4 + 2 * 3 + 2 * 4);  // 38
    BSplineKanLayer bsp("b", 2, 3, 5, 3, rng);
    EXPECT_EQ(bsp.parameter_count(), 2 * 3 * 8 + 6 + 6);  // 60
    FastKanLayer fast("f", 2, 3, 4, rng);
    EXPECT_EQ(fast.parameter_count(), 24 + 6);  // 30
}

TEST(ParameterCounts, EnumerationEqualsClosedFormAcrossGrid) {
    Rng rng(6);
    for (int n_in : {1, 2, 5, 7}) {
        for (int n_out : {1, 3, 6}) {
            for (int m : {3, 8}) {
                SkanLayer s("s", n_in, n_out, m, rng);
                int64_t enumerated = 0;
                for (Parameter* p : s.parameters()) enumerated += p->size();
                EXPECT_EQ(enumerated, int64_t(n_in) * n_out * m + int64_t(n_in) * n_out + 2 * m);

                FastKanLayer f("f", n_in, n_out, m, rng);
                enumerated = 0;
                for (Parameter* p : f.parameters()) enumerated += p->size();
                EXPECT_EQ(enumerated, int64_t(n_in) * n_out * m + int64_t(n_in) * n_out);
            }
            for (int g : {4, 8}) {
                BSplineKanLayer bl("b", n_in, n_out, g, 3, rng);
                int64_t enumerated = 0;
                for (Parameter* p : bl.parameters()) enumerated += p->size();
                EXPECT_EQ(enumerated, int64_t(n_in) * n_out * (g + 3) + 2 * int64_t(n_in) * n_out);
            }
        }
    }
}

TEST(ParameterCounts, SkanSmallerThanBSpline) {
    // count(SKAN, M=8) < count(BSplineKAN, G=8, k=3) for equal dims
    Rng rng(7);
    for (int n : {3, 4, 16, 64}) {
        SkanLayer s("s", n, n, 8, rng);
        BSplineKanLayer b("b", n, n, 8, 3, rng);
        EXPECT_LT(s.parameter_count(), b.parameter_count()) << "n=" << n;
    }
}

TEST(Init, DeterministicGivenSeed) {
    auto l1 = init_layer(KanFamily::skan, "x", 4, 4, KanConfig{}, 42);
    auto l2 = init_layer(KanFamily::skan, "x", 4, 4, KanConfig{}, 42);
    auto& s1 = std::get<SkanLayer>(l1);
    auto& s2 = std::get<SkanLayer>(l2);
    EXPECT_EQ(*s1.rbf_weight.value.data, *s2.rbf_weight.value.data);
    EXPECT_EQ(*s1.base_weight.value.data, *s2.base_weight.value.data);
}

TEST(Init, CentersEvenlySpacedAndBoundsHold) {
    Rng rng(9);
    SkanLayer s("s", 3, 5, 5, rng);
    std::vector<double> expect = {-2, -1, 0, 1, 2};
    for (int j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ((*s.centers.value.data)[j], expect[j]);

    double bound = std::sqrt(6.0 / (3 + 5));
    for (double v : *s.rbf_weight.value.data) {
        EXPECT_GE(v, -bound);
        EXPECT_LE(v, bound);
    }
    EXPECT_THROW(SkanLayer("bad", 0, 3, 4, rng), ContractError);
}

TEST(Families, SkanFrozenAtFastKanValuesMatchesFastKan) {
    Rng rng_a(11);
    FastKanLayer fast("f", 4, 3, 6, rng_a);
    Rng rng_b(11);
    SkanLayer skan("s", 4, 3, 6, rng_b);
    // identical weights by construction (same seed, same draw order); pin
    // centers/bandwidths to FastKAN's fixed values
    *skan.centers.value.data = *fast.centers.data;
    *skan.log_bandwidths.value.data = *fast.log_bandwidth.data;

    Rng rng_x(13);
    Tensor x = Tensor::zeros({5, 4});
    for (auto& v : *x.data) v = rng_x.uniform(-2.0, 2.0);
    Tape t1, t2;
    Tensor y1 = fast.forward(t1, x);
    Tensor y2 = skan.forward(t2, x);
    for (int i = 0; i < y1.size(); ++i) EXPECT_NEAR((*y1.data)[i], (*y2.data)[i], 1e-12);
}

TEST(Families, InterchangeableShapeContract) {
    Rng rng(15);
    KanConfig cfg;
    for (auto family : {KanFamily::bspline, KanFamily::fastkan, KanFamily::skan}) {
        auto layer = init_layer(family, "l", 6, 4, cfg, 99);
        Tape tape;
        Tensor y = kan_forward(layer, tape, Tensor::zeros({3, 6}));
        EXPECT_EQ(y.shape, (Shape{3, 4})) << to_string(family);
    }
}

TEST(Gradients, AllFamiliesPassGradCheckOn4x4) {
    KanConfig cfg;
    cfg.num_rbf = 4;
    cfg.grid_size = 5;
    Rng rng_x(21);
    Tensor x = Tensor::zeros({3, 4});
    for (auto& v : *x.data) v = rng_x.uniform(-1.8, 1.8);

    for (auto family : {KanFamily::bspline, KanFamily::fastkan, KanFamily::skan}) {
        auto layer = init_layer(family, "l", 4, 4, cfg, 123);
        auto params = kan_parameters(layer);
        auto rep = grad_check([&](Tape& t) { return mean(kan_forward(layer, t, x)); }, params);
        EXPECT_LT(rep.max_rel_err, 1e-4)
            << to_string(family) << " worst " << rep.worst.param << "[" << rep.worst.index << "]";
    }
}

TEST(Gradients, SkanInputGradientFlowsThroughRbf) {
    // also exercises d/dx through the basis (input from an upstream param)
    Rng rng(31);
    SkanLayer layer("l", 4, 4, 5, rng);
    Parameter x = Parameter::uniform("x", {3, 4}, -1.5, 1.5, rng);
    std::vector<Parameter*> params = layer.parameters();
    params.push_back(&x);
    auto rep = grad_check([&](Tape& t) { return mean(layer.forward(t, t.watch(x))); }, params);
    EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst.param;
}

TEST(Gradients, BSplineInputGradient) {
    Rng rng(33);
    BSplineKanLayer layer("l", 3, 2, 6, 3, rng);
    Parameter x = Parameter::uniform("x", {4, 3}, -1.5, 1.5, rng);
    std::vector<Parameter*> params = layer.parameters();
    params.push_back(&x);
    auto rep = grad_check([&](Tape& t) { return mean(layer.forward(t, t.watch(x))); }, params);
    EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst.param;
}

TEST(KanNetworkT, WidthsChainAndCount) {
    Rng rng(41);
    KanConfig cfg;
    cfg.num_rbf = 4;
    KanNetwork<SkanLayer> net("net", {2, 5, 1}, cfg, rng);
    EXPECT_EQ(net.layers.size(), 2u);
    EXPECT_EQ(net.layers[0].n_out, net.layers[1].n_in);
    int64_t expect = (2 * 5 * 4 + 2 * 5 + 2 * 4) + (5 * 1 * 4 + 5 * 1 + 2 * 4);
    EXPECT_EQ(net.parameter_count(), expect);

    Tape tape;
    Tensor y = net.forward(tape, Tensor::zeros({7, 2}));
    EXPECT_EQ(y.shape, (Shape{7, 1}));
}
