#pragma once

// Uniform B-spline basis evaluation (Cox-de Boor) and its batched,
// differentiable feature expansion.
//
// The knot vector covers [-range, range] with G intervals and is extended by
// k knots on each side: G + 2k + 1 knots total, G + k basis functions.
// Inputs outside [-range, range] are clamped to the boundary before
// evaluation, so every input activates a full set of basis values and the
// partition of unity holds on the whole clamped domain.

#include <cmath>
#include <vector>

#include "molkan/tensor.hpp"

namespace molkan {

inline std::vector<double> make_uniform_knots(int grid_size, int order, double range = 2.0) {
    if (grid_size < 1 || order < 1) throw ContractError("make_uniform_knots: G and k must be positive");
    const double h = 2.0 * range / grid_size;
    std::vector<double> knots(size_t(grid_size + 2 * order + 1));
    for (int i = 0; i < int(knots.size()); ++i) knots[size_t(i)] = -range + (i - order) * h;
    return knots;
}

namespace detail {

// de Boor triangle: writes the k+1 nonzero basis values N_{iv-k..iv, k}(x)
// into nz (size k+1). iv is the knot interval containing x.
inline void bspline_nonzero(double x, const std::vector<double>& knots, int k, int iv, double* nz) {
    // scratch small enough for stack (k <= 8 in practice)
    double left[16], right[16];
    nz[0] = 1.0;
    for (int d = 1; d <= k; ++d) {
        left[d] = x - knots[size_t(iv + 1 - d)];
        right[d] = knots[size_t(iv + d)] - x;
        double saved = 0.0;
        for (int r = 0; r < d; ++r) {
            double tmp = nz[r] / (right[r + 1] + left[d - r]);
            nz[r] = saved + right[r + 1] * tmp;
            saved = left[d - r] * tmp;
        }
        nz[d] = saved;
    }
}

struct BsplineDomain {
    double lo, hi;  // valid (clamped) evaluation domain
    int first_iv, last_iv;
};

inline BsplineDomain bspline_domain(const std::vector<double>& knots, int k) {
    const int n_knots = int(knots.size());
    return BsplineDomain{knots[size_t(k)], knots[size_t(n_knots - 1 - k)], k, n_knots - 2 - k};
}

inline int find_interval(double x, const std::vector<double>& knots, int k) {
    auto dom = bspline_domain(knots, k);
    const double h = knots[1] - knots[0];
    int iv = k + int(std::floor((x - dom.lo) / h));
    if (iv < dom.first_iv) iv = dom.first_iv;
    if (iv > dom.last_iv) iv = dom.last_iv;
    return iv;
}

}  // namespace detail

// Dense basis vector: all G+k basis functions evaluated at x (clamped).
inline std::vector<double> bspline_basis(double x, const std::vector<double>& knots, int k) {
    const int n_basis = int(knots.size()) - k - 1;
    auto dom = detail::bspline_domain(knots, k);
    x = std::min(std::max(x, dom.lo), dom.hi);
    int iv = detail::find_interval(x, knots, k);
    double nz[16];
    detail::bspline_nonzero(x, knots, k, iv, nz);
    std::vector<double> out(size_t(n_basis), 0.0);
    for (int r = 0; r <= k; ++r) out[size_t(iv - k + r)] = nz[r];
    return out;
}

// Dense vector of first derivatives dB_j/dx at x. Points clamped to the
// boundary report zero derivative (the clamped extension is constant there).
inline std::vector<double> bspline_basis_derivative(double x, const std::vector<double>& knots,
                                                    int k) {
    const int n_basis = int(knots.size()) - k - 1;
    std::vector<double> out(size_t(n_basis), 0.0);
    auto dom = detail::bspline_domain(knots, k);
    if (x < dom.lo || x > dom.hi) return out;
    int iv = detail::find_interval(x, knots, k);
    // degree k-1 triangle, then the standard derivative combination
    double lower[16];
    detail::bspline_nonzero(x, knots, k - 1, iv, lower);
    for (int r = 0; r <= k; ++r) {
        int j = iv - k + r;
        double term1 = 0.0, term2 = 0.0;
        // N_{j,k-1} is nonzero for j in [iv-k+1, iv]
        if (j >= iv - k + 1) term1 = lower[j - (iv - k + 1)] / (knots[size_t(j + k)] - knots[size_t(j)]);
        if (j + 1 <= iv) term2 = lower[j + 1 - (iv - k + 1)] / (knots[size_t(j + k + 1)] - knots[size_t(j + 1)]);
        out[size_t(j)] = k * (term1 - term2);
    }
    return out;
}

// Batched differentiable expansion: x is B x n, output is B x (n * n_basis)
// with column layout i * n_basis + j. Knots are fixed; gradients flow to x.
inline Tensor bspline_features(const Tensor& x, const std::vector<double>& knots, int k) {
    if (x.rank() != 2) throw ShapeError("bspline_features", "x must be rank 2");
    if (k < 1 || k > 8) throw ContractError("bspline_features: order must be in [1, 8]");
    const int B = x.shape[0], n = x.shape[1];
    const int n_basis = int(knots.size()) - k - 1;
    auto dom = detail::bspline_domain(knots, k);

    std::vector<double> out(size_t(B) * n * n_basis, 0.0);
    const double* px = x.ptr();
    double nz[16];
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < n; ++i) {
            double xv = px[size_t(b) * n + i];
            double xc = std::min(std::max(xv, dom.lo), dom.hi);
            int iv = detail::find_interval(xc, knots, k);
            detail::bspline_nonzero(xc, knots, k, iv, nz);
            double* row = out.data() + (size_t(b) * n + i) * n_basis;
            for (int r = 0; r <= k; ++r) row[iv - k + r] = nz[r];
        }

    Tensor r = detail::make_result({B, n * n_basis}, std::move(out), x.tape);
    if (!x.tape) return r;
    r.node = x.tape->record("bspline_features", {x.node}, r.size());
    if (x.node >= 0) {
        x.tape->set_backward(r.node, [x, knots, k, B, n, n_basis, id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& gx = t.grad_buf(x.node);
            const double* px = x.ptr();
            for (int b = 0; b < B; ++b)
                for (int i = 0; i < n; ++i) {
                    double xv = px[size_t(b) * n + i];
                    auto deriv = bspline_basis_derivative(xv, knots, k);
                    const double* grow = g.data() + (size_t(b) * n + i) * n_basis;
                    double acc = 0.0;
                    for (int j = 0; j < n_basis; ++j)
                        if (deriv[size_t(j)] != 0.0) acc += grow[j] * deriv[size_t(j)];
                    gx[size_t(b) * n + i] += acc;
                }
        });
    }
    return r;
}

}  // namespace molkan
