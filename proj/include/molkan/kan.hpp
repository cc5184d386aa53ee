#pragma once

// The three KAN layer families as interchangeable differentiable maps
// R^n_in -> R^n_out:
//
//   BSplineKanLayer   phi(x) = w_b * silu(x) + w_s * sum_j coeff_j * B_j(x)
//   FastKanLayer      phi(x) = w_b * silu(x) + sum_j w_r * exp(-((x-c_j)/bw)^2 / 2),
//                     fixed evenly-spaced centers, fixed bandwidth
//   SkanLayer         same residual form but centers and bandwidths are
//                     learnable (bandwidths stored as logs so they stay
//                     strictly positive)
//
// Outputs sum the per-input activations: out[o] = sum_i phi_{o,i}(x[i]).

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "molkan/bspline.hpp"
#include "molkan/rng.hpp"
#include "molkan/tensor.hpp"

namespace molkan {

enum class KanFamily { bspline, fastkan, skan };

inline const char* to_string(KanFamily f) {
    switch (f) {
        case KanFamily::bspline: return "bspline_kan";
        case KanFamily::fastkan: return "fastkan";
        case KanFamily::skan: return "skan";
    }
    return "?";
}

struct KanConfig {
    int num_rbf = 8;      // M, 3..8 recommended
    int grid_size = 8;    // G (B-spline family)
    int spline_order = 3; // k
    double grid_range = 2.0;
};

namespace detail {

inline double xavier_bound(int n_in, int n_out) { return std::sqrt(6.0 / (n_in + n_out)); }

inline void check_dims(const char* what, int n_in, int n_out) {
    if (n_in < 1 || n_out < 1)
        throw ContractError(std::string(what) + ": dimensions must be positive, got " +
                            std::to_string(n_in) + " -> " + std::to_string(n_out));
}

// evenly spaced on [-range, range]; a single point sits at 0
inline std::vector<double> even_centers(int m, double range) {
    std::vector<double> c(size_t(m), 0.0);
    for (int j = 0; j < m; ++j) c[size_t(j)] = m == 1 ? 0.0 : -range + 2.0 * range * j / (m - 1);
    return c;
}

inline double center_spacing(int m, double range) { return m == 1 ? range : 2.0 * range / (m - 1); }

}  // namespace detail

// ---------------------------------------------------------------------------

struct SkanLayer {
    int n_in = 0, n_out = 0, num_rbf = 0;
    double grid_range = 2.0;
    Parameter centers;         // [M]
    Parameter log_bandwidths;  // [M]; bandwidth = exp(stored) > 0 always
    Parameter rbf_weight;      // [n_out, n_in * M]
    Parameter base_weight;     // [n_out, n_in]

    SkanLayer() = default;
    SkanLayer(const std::string& name, int in, int out, int m, Rng& rng, double range = 2.0)
        : n_in(in), n_out(out), num_rbf(m), grid_range(range) {
        detail::check_dims("SkanLayer", in, out);
        if (m < 1) throw ContractError("SkanLayer: number of RBFs must be positive");
        centers = Parameter(name + ".centers",
                            Tensor::from_vector(detail::even_centers(m, range), {m}));
        double bw0 = detail::center_spacing(m, range);
        log_bandwidths =
            Parameter(name + ".log_bandwidths", Tensor::full({m}, std::log(bw0)));
        double b = detail::xavier_bound(in, out);
        rbf_weight = Parameter::uniform(name + ".rbf_weight", {out, in * m}, -b, b, rng);
        base_weight = Parameter::uniform(name + ".base_weight", {out, in}, -b, b, rng);
    }

    std::vector<double> bandwidths() const {
        std::vector<double> bw(size_t(num_rbf), 0.0);
        for (int j = 0; j < num_rbf; ++j) bw[size_t(j)] = std::exp((*log_bandwidths.value.data)[size_t(j)]);
        return bw;
    }

    Tensor forward(Tape& tape, const Tensor& x) {
        if (x.rank() != 2 || x.shape[1] != n_in)
            throw ShapeError("SkanLayer", "expected " + std::to_string(n_in) + " columns, got " +
                                              shape_str(x.shape));
        Tensor base = matmul(silu(x), tape.watch(base_weight), false, true);
        Tensor feats = rbf_basis(x, tape.watch(centers), tape.watch(log_bandwidths));
        return add(base, matmul(feats, tape.watch(rbf_weight), false, true));
    }

    std::vector<Parameter*> parameters() {
        return {&centers, &log_bandwidths, &rbf_weight, &base_weight};
    }
    int64_t parameter_count() const {
        return centers.size() + log_bandwidths.size() + rbf_weight.size() + base_weight.size();
    }
};

// ---------------------------------------------------------------------------

struct FastKanLayer {
    int n_in = 0, n_out = 0, num_rbf = 0;
    double grid_range = 2.0;
    Tensor centers;        // fixed [M]
    Tensor log_bandwidth;  // fixed [M], all entries log(center spacing)
    Parameter rbf_weight;  // [n_out, n_in * M]
    Parameter base_weight; // [n_out, n_in]

    FastKanLayer() = default;
    FastKanLayer(const std::string& name, int in, int out, int m, Rng& rng, double range = 2.0)
        : n_in(in), n_out(out), num_rbf(m), grid_range(range) {
        detail::check_dims("FastKanLayer", in, out);
        if (m < 1) throw ContractError("FastKanLayer: number of RBFs must be positive");
        centers = Tensor::from_vector(detail::even_centers(m, range), {m});
        log_bandwidth = Tensor::full({m}, std::log(detail::center_spacing(m, range)));
        double b = detail::xavier_bound(in, out);
        rbf_weight = Parameter::uniform(name + ".rbf_weight", {out, in * m}, -b, b, rng);
        base_weight = Parameter::uniform(name + ".base_weight", {out, in}, -b, b, rng);
    }

    double bandwidth() const { return std::exp((*log_bandwidth.data)[0]); }

    Tensor forward(Tape& tape, const Tensor& x) {
        if (x.rank() != 2 || x.shape[1] != n_in)
            throw ShapeError("FastKanLayer", "expected " + std::to_string(n_in) + " columns, got " +
                                                 shape_str(x.shape));
        Tensor base = matmul(silu(x), tape.watch(base_weight), false, true);
        Tensor feats = rbf_basis(x, centers, log_bandwidth);  // constants: no grads
        return add(base, matmul(feats, tape.watch(rbf_weight), false, true));
    }

    std::vector<Parameter*> parameters() { return {&rbf_weight, &base_weight}; }
    int64_t parameter_count() const { return rbf_weight.size() + base_weight.size(); }
};

// ---------------------------------------------------------------------------

struct BSplineKanLayer {
    int n_in = 0, n_out = 0, grid_size = 0, order = 0;
    double grid_range = 2.0;
    std::vector<double> knots;  // fixed uniform knot vector, G + 2k + 1 entries
    Parameter spline_coeffs;    // [n_out, n_in, G + k]
    Parameter base_weight;      // [n_out, n_in]
    Parameter spline_scale;     // [n_out, n_in]

    BSplineKanLayer() = default;
    BSplineKanLayer(const std::string& name, int in, int out, int g, int k, Rng& rng,
                    double range = 2.0)
        : n_in(in), n_out(out), grid_size(g), order(k), grid_range(range) {
        detail::check_dims("BSplineKanLayer", in, out);
        knots = make_uniform_knots(g, k, range);
        double b = detail::xavier_bound(in, out);
        spline_coeffs = Parameter::uniform(name + ".spline_coeffs", {out, in, g + k}, -b, b, rng);
        base_weight = Parameter::uniform(name + ".base_weight", {out, in}, -b, b, rng);
        spline_scale = Parameter::uniform(name + ".spline_scale", {out, in}, -b, b, rng);
    }

    int num_basis() const { return grid_size + order; }

    Tensor forward(Tape& tape, const Tensor& x) {
        if (x.rank() != 2 || x.shape[1] != n_in)
            throw ShapeError("BSplineKanLayer", "expected " + std::to_string(n_in) +
                                                    " columns, got " + shape_str(x.shape));
        Tensor base = matmul(silu(x), tape.watch(base_weight), false, true);
        Tensor feats = bspline_features(x, knots, order);  // B x (n_in * (G+k))
        // effective weight over features: w_s[o,i] * coeff[o,i,j]
        int nb = num_basis();
        Tensor scale3 = broadcast(reshape(tape.watch(spline_scale), {n_out, n_in, 1}),
                                  {n_out, n_in, nb});
        Tensor w_eff = reshape(mul(scale3, tape.watch(spline_coeffs)), {n_out, n_in * nb});
        return add(base, matmul(feats, w_eff, false, true));
    }

    std::vector<Parameter*> parameters() { return {&spline_coeffs, &base_weight, &spline_scale}; }
    int64_t parameter_count() const {
        return spline_coeffs.size() + base_weight.size() + spline_scale.size();
    }
};

// ---------------------------------------------------------------------------

using AnyKanLayer = std::variant<BSplineKanLayer, FastKanLayer, SkanLayer>;

inline AnyKanLayer init_layer(KanFamily family, const std::string& name, int n_in, int n_out,
                              const KanConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    switch (family) {
        case KanFamily::bspline:
            return BSplineKanLayer(name, n_in, n_out, cfg.grid_size, cfg.spline_order, rng,
                                   cfg.grid_range);
        case KanFamily::fastkan:
            return FastKanLayer(name, n_in, n_out, cfg.num_rbf, rng, cfg.grid_range);
        case KanFamily::skan:
        default:
            return SkanLayer(name, n_in, n_out, cfg.num_rbf, rng, cfg.grid_range);
    }
}

inline Tensor kan_forward(AnyKanLayer& layer, Tape& tape, const Tensor& x) {
    return std::visit([&](auto& l) { return l.forward(tape, x); }, layer);
}
inline std::vector<Parameter*> kan_parameters(AnyKanLayer& layer) {
    return std::visit([](auto& l) { return l.parameters(); }, layer);
}
inline int64_t kan_parameter_count(const AnyKanLayer& layer) {
    return std::visit([](const auto& l) { return l.parameter_count(); }, layer);
}

// A stack of KAN layers of one family; adjacent widths chain.
template <class LayerT>
struct KanNetwork {
    std::vector<int> widths;  // [n0, n1, ..., nL]
    std::vector<LayerT> layers;

    KanNetwork() = default;
    KanNetwork(const std::string& name, std::vector<int> w, const KanConfig& cfg, Rng& rng)
        : widths(std::move(w)) {
        if (widths.size() < 2) throw ContractError("KanNetwork: need at least two widths");
        for (size_t l = 0; l + 1 < widths.size(); ++l) {
            if constexpr (std::is_same_v<LayerT, SkanLayer>)
                layers.emplace_back(name + ".l" + std::to_string(l), widths[l], widths[l + 1],
                                    cfg.num_rbf, rng, cfg.grid_range);
            else if constexpr (std::is_same_v<LayerT, FastKanLayer>)
                layers.emplace_back(name + ".l" + std::to_string(l), widths[l], widths[l + 1],
                                    cfg.num_rbf, rng, cfg.grid_range);
            else
                layers.emplace_back(name + ".l" + std::to_string(l), widths[l], widths[l + 1],
                                    cfg.grid_size, cfg.spline_order, rng, cfg.grid_range);
        }
    }

    Tensor forward(Tape& tape, Tensor x) {
        for (auto& l : layers) x = l.forward(tape, x);
        return x;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps;
        for (auto& l : layers)
            for (Parameter* p : l.parameters()) ps.push_back(p);
        return ps;
    }
    int64_t parameter_count() const {
        int64_t n = 0;
        for (const auto& l : layers) n += l.parameter_count();
        return n;
    }
};

}  // namespace molkan
