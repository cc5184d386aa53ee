#pragma once

// GNN-SKAN / GNN-SKAN+ message passing over batched molecular graphs.
//
// Per layer: aggregate neighbor messages under the host's semantics (GCN
// symmetric normalization, GAT multi-head attention with edge features, GINE
// relu-sum), then update h <- Block((1 + eps) * h + m) where Block is a
// two-layer SKAN (or FastKAN / B-spline KAN / plain MLP). Readout is the
// per-graph mean; the head is a 2-layer MLP or a 2-layer SKAN ("+" variant).

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "molkan/kan.hpp"
#include "molkan/molgraph.hpp"
#include "molkan/tensor.hpp"

namespace molkan {

enum class GnnHost { gcn, gat, gine };
enum class UpdateKind { mlp, skan, bspline_kan, fastkan };
enum class HeadKind { mlp, skan };

inline const char* to_string(GnnHost h) {
    switch (h) {
        case GnnHost::gcn: return "gcn";
        case GnnHost::gat: return "gat";
        case GnnHost::gine: return "gine";
    }
    return "?";
}
inline const char* to_string(UpdateKind u) {
    switch (u) {
        case UpdateKind::mlp: return "mlp";
        case UpdateKind::skan: return "skan";
        case UpdateKind::bspline_kan: return "bspline_kan";
        case UpdateKind::fastkan: return "fastkan";
    }
    return "?";
}
inline const char* to_string(HeadKind h) { return h == HeadKind::mlp ? "mlp" : "skan"; }

struct GnnConfig {
    GnnHost host = GnnHost::gine;
    int depth = 2;
    int hidden = 256;
    UpdateKind update_kind = UpdateKind::skan;
    HeadKind head_kind = HeadKind::mlp;  // skan => GNN-SKAN+
    int num_rbf = 8;                     // M
    int grid_size = 8;                   // B-spline update family
    int spline_order = 3;
    int n_tasks = 1;
    int gat_heads = 4;
    bool skan_in_aggregation = false;    // ablation axis

    void validate() const {
        if (depth < 1 || hidden < 1 || n_tasks < 1 || gat_heads < 1)
            throw ContractError("GnnConfig: depth, hidden, n_tasks and gat_heads must be >= 1");
    }
    KanConfig kan() const {
        KanConfig k;
        k.num_rbf = num_rbf;
        k.grid_size = grid_size;
        k.spline_order = spline_order;
        return k;
    }
};

struct Linear {
    Parameter weight;  // [out, in]
    Parameter bias;    // [out]
    int n_in = 0, n_out = 0;

    Linear() = default;
    Linear(const std::string& name, int in, int out, Rng& rng) : n_in(in), n_out(out) {
        double b = detail::xavier_bound(in, out);
        weight = Parameter::uniform(name + ".weight", {out, in}, -b, b, rng);
        bias = Parameter::zeros(name + ".bias", {out});
    }

    Tensor forward(Tape& tape, const Tensor& x) {
        Tensor y = matmul(x, tape.watch(weight), false, true);
        return add(y, broadcast(reshape(tape.watch(bias), {1, n_out}), y.shape));
    }
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }
    int64_t parameter_count() const { return weight.size() + bias.size(); }
};

// linear -> relu -> linear
struct MlpBlock {
    Linear l0, l1;

    MlpBlock() = default;
    MlpBlock(const std::string& name, int in, int hidden, int out, Rng& rng)
        : l0(name + ".l0", in, hidden, rng), l1(name + ".l1", hidden, out, rng) {}

    Tensor forward(Tape& tape, const Tensor& x) { return l1.forward(tape, relu(l0.forward(tape, x))); }
    std::vector<Parameter*> parameters() {
        auto ps = l0.parameters();
        for (Parameter* p : l1.parameters()) ps.push_back(p);
        return ps;
    }
    int64_t parameter_count() const { return l0.parameter_count() + l1.parameter_count(); }
};

using UpdateBlock = std::variant<MlpBlock, KanNetwork<SkanLayer>, KanNetwork<FastKanLayer>,
                                 KanNetwork<BSplineKanLayer>>;
using HeadBlock = std::variant<MlpBlock, KanNetwork<SkanLayer>>;

namespace detail {

inline Tensor block_forward(UpdateBlock& b, Tape& t, const Tensor& x) {
    return std::visit([&](auto& blk) { return blk.forward(t, x); }, b);
}
inline Tensor block_forward(HeadBlock& b, Tape& t, const Tensor& x) {
    return std::visit([&](auto& blk) { return blk.forward(t, x); }, b);
}
template <class V>
std::vector<Parameter*> block_parameters(V& b) {
    return std::visit([](auto& blk) { return blk.parameters(); }, b);
}
template <class V>
int64_t block_parameter_count(const V& b) {
    return std::visit([](const auto& blk) { return blk.parameter_count(); }, b);
}

}  // namespace detail

struct MessagePassingLayer {
    GnnHost host = GnnHost::gine;
    int hidden = 0;
    bool use_epsilon = false;          // GIN-style self-loop weighting
    Parameter epsilon;                 // [1], init 0
    std::vector<Parameter> gat_proj;   // per head [hidden, hidden]
    std::vector<Parameter> gat_attn;   // per head [3 * hidden]
    std::optional<SkanLayer> agg_skan; // transforms edge payloads when enabled
    UpdateBlock update;

    MessagePassingLayer() = default;
    MessagePassingLayer(const std::string& name, const GnnConfig& cfg, Rng& rng)
        : host(cfg.host), hidden(cfg.hidden) {
        // classic GCN/GAT have no self-loop epsilon in their MLP form
        use_epsilon = cfg.update_kind != UpdateKind::mlp || cfg.host == GnnHost::gine;
        if (use_epsilon) epsilon = Parameter::zeros(name + ".epsilon", {1});
        if (host == GnnHost::gat) {
            double b = detail::xavier_bound(hidden, hidden);
            for (int k = 0; k < cfg.gat_heads; ++k) {
                gat_proj.push_back(Parameter::uniform(name + ".gat_proj" + std::to_string(k),
                                                      {hidden, hidden}, -b, b, rng));
                gat_attn.push_back(Parameter::uniform(name + ".gat_attn" + std::to_string(k),
                                                      {3 * hidden}, -b, b, rng));
            }
        }
        if (cfg.skan_in_aggregation)
            agg_skan.emplace(name + ".agg_skan", hidden, hidden, cfg.num_rbf, rng);

        switch (cfg.update_kind) {
            case UpdateKind::mlp:
                update = MlpBlock(name + ".update", hidden, hidden, hidden, rng);
                break;
            case UpdateKind::skan:
                update = KanNetwork<SkanLayer>(name + ".update", {hidden, hidden, hidden},
                                               cfg.kan(), rng);
                break;
            case UpdateKind::fastkan:
                update = KanNetwork<FastKanLayer>(name + ".update", {hidden, hidden, hidden},
                                                  cfg.kan(), rng);
                break;
            case UpdateKind::bspline_kan:
                update = KanNetwork<BSplineKanLayer>(name + ".update", {hidden, hidden, hidden},
                                                     cfg.kan(), rng);
                break;
        }
    }

    // host aggregation; isolated nodes receive zero messages
    Tensor aggregate(Tape& tape, const Tensor& h, const Tensor& e_emb, const BatchedGraph& batch) {
        const int n = batch.n_nodes;
        if (host == GnnHost::gat) return aggregate_gat(tape, h, e_emb, batch);

        Tensor payload = add(gather_rows(h, batch.edge_src), e_emb);  // h_u + e_uv per edge
        if (host == GnnHost::gine) payload = relu(payload);
        if (agg_skan) payload = agg_skan->forward(tape, payload);
        if (host == GnnHost::gcn) {
            // 1/sqrt((deg(u)+1)(deg(v)+1)) as a fixed per-edge coefficient
            std::vector<double> deg(size_t(n), 0.0);
            for (int v : batch.edge_dst) deg[size_t(v)] += 1.0;
            Tensor coef = Tensor::zeros({int(batch.edge_src.size()), 1});
            for (size_t e = 0; e < batch.edge_src.size(); ++e)
                coef.ptr()[e] = 1.0 / std::sqrt((deg[size_t(batch.edge_src[e])] + 1.0) *
                                                (deg[size_t(batch.edge_dst[e])] + 1.0));
            payload = mul(payload, broadcast(coef, payload.shape));
        }
        return scatter_add(payload, batch.edge_dst, n);
    }

    // h <- Block((1 + eps) * h + m)
    Tensor update_state(Tape& tape, const Tensor& h, const Tensor& m) {
        Tensor x = use_epsilon
                       ? add(mul(h, broadcast(add(tape.watch(epsilon), Tensor::scalar(1.0)), h.shape)), m)
                       : add(h, m);
        return detail::block_forward(update, tape, x);
    }

    Tensor forward(Tape& tape, const Tensor& h, const Tensor& e_emb, const BatchedGraph& batch) {
        return update_state(tape, h, aggregate(tape, h, e_emb, batch));
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps;
        if (use_epsilon) ps.push_back(&epsilon);
        for (auto& p : gat_proj) ps.push_back(&p);
        for (auto& p : gat_attn) ps.push_back(&p);
        if (agg_skan)
            for (Parameter* p : agg_skan->parameters()) ps.push_back(p);
        for (Parameter* p : detail::block_parameters(update)) ps.push_back(p);
        return ps;
    }
    int64_t parameter_count() const {
        int64_t c = use_epsilon ? 1 : 0;
        for (const auto& p : gat_proj) c += p.size();
        for (const auto& p : gat_attn) c += p.size();
        if (agg_skan) c += agg_skan->parameter_count();
        return c + detail::block_parameter_count(update);
    }

private:
    Tensor aggregate_gat(Tape& tape, const Tensor& h, const Tensor& e_emb,
                         const BatchedGraph& batch) {
        const int n = batch.n_nodes;
        const int heads = int(gat_proj.size());
        Tensor accum;
        for (int k = 0; k < heads; ++k) {
            Tensor wh = matmul(h, tape.watch(gat_proj[size_t(k)]), false, true);
            Tensor whu = gather_rows(wh, batch.edge_src);
            Tensor whv = gather_rows(wh, batch.edge_dst);
            Tensor z = concat({whv, whu, e_emb}, 1);  // E x 3H
            Tensor logits =
                matmul(z, reshape(tape.watch(gat_attn[size_t(k)]), {3 * hidden, 1}));
            Tensor alpha = segment_softmax(leaky_relu(logits), batch.edge_dst, n);
            Tensor payload = agg_skan ? agg_skan->forward(tape, whu) : whu;
            Tensor weighted = mul(payload, broadcast(alpha, payload.shape));
            Tensor mk = scatter_add(weighted, batch.edge_dst, n);
            accum = k == 0 ? mk : add(accum, mk);
        }
        return mul(accum, Tensor::scalar(1.0 / heads));
    }
};

struct GnnModel {
    GnnConfig cfg;
    Linear node_embed;  // 28 -> hidden
    Linear edge_embed;  // 4 -> hidden, shared across layers
    std::vector<MessagePassingLayer> layers;
    HeadBlock head;

    GnnModel() = default;

    static GnnModel build(const GnnConfig& cfg, uint64_t seed) {
        cfg.validate();
        GnnModel model;
        model.cfg = cfg;
        Rng rng(seed);
        model.node_embed = Linear("node_embed", kNodeFeatureDim, cfg.hidden, rng);
        model.edge_embed = Linear("edge_embed", kEdgeFeatureDim, cfg.hidden, rng);
        for (int d = 0; d < cfg.depth; ++d)
            model.layers.emplace_back("layers." + std::to_string(d), cfg, rng);
        if (cfg.head_kind == HeadKind::mlp)
            model.head = MlpBlock("head", cfg.hidden, cfg.hidden, cfg.n_tasks, rng);
        else
            model.head = KanNetwork<SkanLayer>("head", {cfg.hidden, cfg.hidden, cfg.n_tasks},
                                               cfg.kan(), rng);
        return model;
    }

    // Algorithm 1: embed -> D x (aggregate, update) -> mean readout -> head
    Tensor forward(Tape& tape, const BatchedGraph& batch) {
        Tensor h = node_embed.forward(tape, batch.H);
        Tensor e = edge_embed.forward(tape, batch.E);
        for (auto& layer : layers) h = layer.forward(tape, h, e, batch);
        Tensor g = readout(tape, h, batch);
        return detail::block_forward(head, tape, g);
    }

    // per-graph arithmetic mean of final node states
    static Tensor readout(Tape&, const Tensor& h, const BatchedGraph& batch) {
        Tensor sums = scatter_add(h, batch.graph_id, batch.n_graphs);
        Tensor inv = Tensor::from_vector(batch.graph_inv_counts(), {batch.n_graphs, 1});
        return mul(sums, broadcast(inv, sums.shape));
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps;
        for (Parameter* p : node_embed.parameters()) ps.push_back(p);
        for (Parameter* p : edge_embed.parameters()) ps.push_back(p);
        for (auto& l : layers)
            for (Parameter* p : l.parameters()) ps.push_back(p);
        for (Parameter* p : detail::block_parameters(head)) ps.push_back(p);
        return ps;
    }
    int64_t parameter_count() const {
        int64_t c = node_embed.parameter_count() + edge_embed.parameter_count();
        for (const auto& l : layers) c += l.parameter_count();
        return c + detail::block_parameter_count(head);
    }
};

}  // namespace molkan
