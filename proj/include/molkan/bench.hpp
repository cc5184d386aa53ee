#pragma once

// Timing benchmark across the three KAN layer families: one forward+backward
// of a single layer on identical random batches, single thread, warm-ups
// excluded, median reported.

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#include "molkan/kan.hpp"

namespace molkan {

struct BenchRow {
    std::string family;
    int64_t param_count = 0;
    double median_seconds = 0.0;
    double min_seconds = 0.0;
    double max_seconds = 0.0;
};

struct BenchConfig {
    int n_in = 64;
    int n_out = 64;
    int batch = 128;
    int num_rbf = 8;    // M
    int grid_size = 8;  // G
    int spline_order = 3;
    int repeats = 20;
    int warmup = 3;
    uint64_t seed = 17;
};

struct BenchResult {
    BenchConfig config;
    std::vector<BenchRow> rows;

    const BenchRow& row(const std::string& family) const {
        for (const auto& r : rows)
            if (r.family == family) return r;
        throw ContractError("bench: no such family " + family);
    }
};

namespace detail {

template <class LayerT>
BenchRow bench_layer(LayerT& layer, const Tensor& x, int repeats, int warmup) {
    auto once = [&] {
        Tape tape;
        Tensor y = layer.forward(tape, x);
        Tensor root = mean(y);
        tape.backward(root);
        return root.item();
    };
    volatile double sink = 0.0;
    for (int i = 0; i < warmup; ++i) sink = sink + once();
    std::vector<double> times;
    times.reserve(size_t(repeats));
    for (int i = 0; i < repeats; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        sink = sink + once();
        auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    BenchRow row;
    row.param_count = layer.parameter_count();
    row.median_seconds = times[times.size() / 2];
    row.min_seconds = times.front();
    row.max_seconds = times.back();
    (void)sink;
    return row;
}

}  // namespace detail

inline BenchResult bench_kan_variants(const BenchConfig& cfg) {
    if (cfg.repeats < 10) throw ContractError("bench: repeats must be >= 10");
    BenchResult result;
    result.config = cfg;

    Rng xrng(cfg.seed);
    Tensor x = Tensor::zeros({cfg.batch, cfg.n_in});
    for (auto& v : *x.data) v = xrng.uniform(-2.0, 2.0);

    {
        Rng rng(cfg.seed + 1);
        BSplineKanLayer layer("bench.bspline", cfg.n_in, cfg.n_out, cfg.grid_size,
                              cfg.spline_order, rng);
        BenchRow row = detail::bench_layer(layer, x, cfg.repeats, cfg.warmup);
        row.family = "bspline_kan";
        result.rows.push_back(row);
    }
    {
        Rng rng(cfg.seed + 2);
        FastKanLayer layer("bench.fastkan", cfg.n_in, cfg.n_out, cfg.num_rbf, rng);
        BenchRow row = detail::bench_layer(layer, x, cfg.repeats, cfg.warmup);
        row.family = "fastkan";
        result.rows.push_back(row);
    }
    {
        Rng rng(cfg.seed + 3);
        SkanLayer layer("bench.skan", cfg.n_in, cfg.n_out, cfg.num_rbf, rng);
        BenchRow row = detail::bench_layer(layer, x, cfg.repeats, cfg.warmup);
        row.family = "skan";
        result.rows.push_back(row);
    }
    return result;
}

}  // namespace molkan
