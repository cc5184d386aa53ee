#pragma once

// Molecular graphs and everything derived from them: node/edge feature
// matrices, Bemis-Murcko scaffold keys (ring systems + linkers, hashed with
// Weisfeiler-Leman refinement), and disjoint-union batching.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "molkan/tensor.hpp"

namespace molkan {

enum class Element { B, C, N, O, P, S, F, Cl, Br, I, Other };
constexpr int kNumElements = 11;

enum class BondOrder { Single, Double, Triple, Aromatic };
constexpr int kNumBondOrders = 4;

inline double bond_order_value(BondOrder o) {
    switch (o) {
        case BondOrder::Single: return 1.0;
        case BondOrder::Double: return 2.0;
        case BondOrder::Triple: return 3.0;
        case BondOrder::Aromatic: return 1.5;
    }
    return 1.0;
}

struct Atom {
    Element element = Element::C;
    bool aromatic = false;
    int formal_charge = 0;            // clamped to [-2, +2]
    std::optional<int> explicit_h;    // from bracket spec
    int degree = 0;                   // filled after parse
    int implicit_h = 0;               // computed
};

struct Bond {
    int a = 0, b = 0;
    BondOrder order = BondOrder::Single;
};

struct MolecularGraph {
    std::vector<Atom> atoms;
    std::vector<Bond> bonds;
    // both directions of every bond; edge 2k and 2k+1 belong to bond k
    std::vector<int> edge_src, edge_dst;
    std::string source_smiles;
    bool valence_warning = false;  // implicit H clamped to 0 somewhere

    int num_atoms() const { return int(atoms.size()); }
    int num_edges() const { return int(edge_src.size()); }

    void rebuild_edge_index() {
        edge_src.clear();
        edge_dst.clear();
        for (const Bond& b : bonds) {
            edge_src.push_back(b.a);
            edge_dst.push_back(b.b);
            edge_src.push_back(b.b);
            edge_dst.push_back(b.a);
        }
    }
};

// Node features, 28 dims: element one-hot (11) | degree 0-5 one-hot (6) |
// formal charge -2..+2 one-hot (5) | aromatic flag (1) | implicit H 0-4
// one-hot (5). Edge features: bond order one-hot (4), same in both
// directions.
constexpr int kNodeFeatureDim = 28;
constexpr int kEdgeFeatureDim = 4;

struct FeatureMatrices {
    Tensor H;  // N x 28
    Tensor E;  // 2|bonds| x 4
};

inline FeatureMatrices featurize(const MolecularGraph& g) {
    const int n = g.num_atoms();
    Tensor H = Tensor::zeros({n, kNodeFeatureDim});
    for (int v = 0; v < n; ++v) {
        const Atom& a = g.atoms[size_t(v)];
        double* row = H.ptr() + size_t(v) * kNodeFeatureDim;
        row[int(a.element)] = 1.0;
        row[11 + std::min(a.degree, 5)] = 1.0;
        row[17 + std::clamp(a.formal_charge, -2, 2) + 2] = 1.0;
        if (a.aromatic) row[22] = 1.0;
        row[23 + std::min(a.implicit_h, 4)] = 1.0;
    }
    const int e = g.num_edges();
    Tensor E = Tensor::zeros({e, kEdgeFeatureDim});
    for (int k = 0; k < e; ++k) {
        const Bond& b = g.bonds[size_t(k / 2)];
        E.ptr()[size_t(k) * kEdgeFeatureDim + int(b.order)] = 1.0;
    }
    return FeatureMatrices{std::move(H), std::move(E)};
}

// ---------------------------------------------------------------------------
// Bemis-Murcko scaffold via iterative deletion of degree<=1 atoms, keyed by a
// Weisfeiler-Leman hash
// ---------------------------------------------------------------------------

namespace detail {

inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
    return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace detail

// Scaffold key: "" for acyclic molecules, otherwise a WL hash over the
// scaffold subgraph with (element, aromatic) node colors and bond-order edge
// labels, refined |V_scaffold| rounds.
inline std::string murcko_scaffold(const MolecularGraph& g) {
    const int n = g.num_atoms();
    std::vector<char> kept(size_t(n), 1);
    std::vector<int> degree(size_t(n), 0);
    for (const Bond& b : g.bonds) {
        ++degree[size_t(b.a)];
        ++degree[size_t(b.b)];
    }
    // strip degree<=1 atoms until fixpoint: leaves rings plus linkers
    bool changed = true;
    while (changed) {
        changed = false;
        for (int v = 0; v < n; ++v) {
            if (kept[size_t(v)] && degree[size_t(v)] <= 1) {
                kept[size_t(v)] = 0;
                changed = true;
                for (const Bond& b : g.bonds) {
                    if (b.a == v && kept[size_t(b.b)]) --degree[size_t(b.b)];
                    if (b.b == v && kept[size_t(b.a)]) --degree[size_t(b.a)];
                }
                degree[size_t(v)] = 0;
            }
        }
    }
    int n_kept = 0;
    for (char k : kept) n_kept += k;
    if (n_kept == 0) return "";

    // adjacency restricted to the scaffold
    std::vector<std::vector<std::pair<int, int>>> adj(static_cast<size_t>(n));  // (neighbor, order)
    for (const Bond& b : g.bonds) {
        if (!kept[size_t(b.a)] || !kept[size_t(b.b)]) continue;
        adj[size_t(b.a)].push_back({b.b, int(b.order)});
        adj[size_t(b.b)].push_back({b.a, int(b.order)});
    }

    std::vector<uint64_t> color(size_t(n), 0);
    for (int v = 0; v < n; ++v) {
        if (!kept[size_t(v)]) continue;
        uint64_t h = detail::mix64(uint64_t(int(g.atoms[size_t(v)].element)) * 2 +
                                   (g.atoms[size_t(v)].aromatic ? 1 : 0) + 1);
        color[size_t(v)] = h;
    }
    std::vector<uint64_t> next(size_t(n), 0);
    for (int round = 0; round < n_kept; ++round) {
        for (int v = 0; v < n; ++v) {
            if (!kept[size_t(v)]) continue;
            std::vector<uint64_t> sig;
            sig.reserve(adj[size_t(v)].size());
            for (auto [u, lbl] : adj[size_t(v)])
                sig.push_back(detail::hash_combine(uint64_t(lbl) + 1, color[size_t(u)]));
            std::sort(sig.begin(), sig.end());
            uint64_t h = color[size_t(v)];
            for (uint64_t s : sig) h = detail::hash_combine(h, s);
            next[size_t(v)] = h;
        }
        color = next;
    }

    std::vector<uint64_t> multiset;
    for (int v = 0; v < n; ++v)
        if (kept[size_t(v)]) multiset.push_back(color[size_t(v)]);
    std::sort(multiset.begin(), multiset.end());
    uint64_t h = detail::mix64(uint64_t(n_kept));
    for (uint64_t c : multiset) h = detail::hash_combine(h, c);
    return detail::hex64(h);
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

struct BatchedGraph {
    Tensor H;                   // total nodes x 28
    Tensor E;                   // total edges x 4
    std::vector<int> edge_src;  // offsets applied
    std::vector<int> edge_dst;
    std::vector<int> graph_id;  // node -> molecule index within the batch
    int n_graphs = 0;
    int n_nodes = 0;

    std::vector<double> graph_inv_counts() const {
        std::vector<double> counts(size_t(n_graphs), 0.0);
        for (int gid : graph_id) counts[size_t(gid)] += 1.0;
        for (auto& c : counts) c = c > 0 ? 1.0 / c : 0.0;
        return counts;
    }
};

inline BatchedGraph batch_graphs(const std::vector<const MolecularGraph*>& graphs,
                                 const std::vector<const FeatureMatrices*>& features) {
    if (graphs.empty()) throw ContractError("batch_graphs: empty list");
    if (graphs.size() != features.size())
        throw ContractError("batch_graphs: graphs/features length mismatch");
    BatchedGraph batch;
    batch.n_graphs = int(graphs.size());
    int total_nodes = 0, total_edges = 0;
    for (const auto* g : graphs) {
        total_nodes += g->num_atoms();
        total_edges += g->num_edges();
    }
    batch.n_nodes = total_nodes;
    batch.H = Tensor::zeros({total_nodes, kNodeFeatureDim});
    batch.E = Tensor::zeros({total_edges, kEdgeFeatureDim});
    batch.edge_src.reserve(size_t(total_edges));
    batch.edge_dst.reserve(size_t(total_edges));
    batch.graph_id.reserve(size_t(total_nodes));

    int node_off = 0, edge_off = 0;
    for (int gi = 0; gi < batch.n_graphs; ++gi) {
        const MolecularGraph& g = *graphs[size_t(gi)];
        const FeatureMatrices& f = *features[size_t(gi)];
        std::copy(f.H.ptr(), f.H.ptr() + f.H.size(),
                  batch.H.ptr() + size_t(node_off) * kNodeFeatureDim);
        std::copy(f.E.ptr(), f.E.ptr() + f.E.size(),
                  batch.E.ptr() + size_t(edge_off) * kEdgeFeatureDim);
        for (int e = 0; e < g.num_edges(); ++e) {
            batch.edge_src.push_back(g.edge_src[size_t(e)] + node_off);
            batch.edge_dst.push_back(g.edge_dst[size_t(e)] + node_off);
        }
        for (int v = 0; v < g.num_atoms(); ++v) batch.graph_id.push_back(gi);
        node_off += g.num_atoms();
        edge_off += g.num_edges();
    }
    return batch;
}

}  // namespace molkan
