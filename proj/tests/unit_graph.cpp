#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "fedlmf/errors.hpp"
#include "fedlmf/gcn.hpp"
#include "fedlmf/graph.hpp"
#include "fedlmf/model.hpp"
#include "fedlmf/rng.hpp"
#include "test_helpers.hpp"

using namespace fedlmf;
using namespace fedlmf::testing;

namespace {

/// Reference evaluation of the convolution formula with plain loops,
/// independent of the tape implementation.
NDArray reference_conv(const std::vector<Edge>& edges, int n, const NDArray& h, const NDArray& w,
                       const std::vector<double>& bias) {
    std::map<int, std::vector<std::pair<int, double>>> nbrs;
    std::map<int, int> degree;
    for (const Edge& e : edges) {
        nbrs[e.src].push_back({e.dst, e.weight});
        degree[e.src] += 1;
        if (e.src != e.dst) {
            nbrs[e.dst].push_back({e.src, e.weight});
            degree[e.dst] += 1;
        }
    }
    const std::size_t d = w.cols();
    const NDArray hw = matmul(h, w);
    NDArray out = NDArray::zeros({static_cast<std::size_t>(n), d});
    for (int u = 0; u < n; ++u) {
        std::vector<double> acc(bias.begin(), bias.end());
        for (const auto& [v, weight] : nbrs[u]) {
            const double norm = std::sqrt(static_cast<double>(degree[u])) *
                                std::sqrt(static_cast<double>(degree[v]));
            for (std::size_t k = 0; k < d; ++k)
                acc[k] += weight / norm * hw.at(static_cast<std::size_t>(v), k);
        }
        for (std::size_t k = 0; k < d; ++k)
            out.at(static_cast<std::size_t>(u), k) = std::max(0.0, acc[k]);
    }
    return out;
}

CPHG toy_graph() {
    CPHG g;
    g.n_companies = 2;
    g.n_positions = 2;
    g.cc = {{0, 1, 2.0}};
    g.pp = {{0, 1, 1.0}};
    g.cp = {{0, 0, 1.0}, {0, 1, 3.0}, {1, 1, 2.0}};
    return g;
}

}  // namespace

TEST_CASE("split_subgraphs") {
    SUBCASE("edge conservation") {
        const CPHG g = toy_graph();
        const SubgraphViews v = split_subgraphs(g);
        CHECK(v.cc_only.edge_count() + v.pp_only.edge_count() + v.cp_only.edge_count() == g.edge_count());
        CHECK(v.cc_only.pp.empty());
        CHECK(v.cc_only.cp.empty());
        CHECK(v.cp_only.cc.empty());
    }

    SUBCASE("cp-only graph leaves cc and pp views empty") {
        CPHG g;
        g.n_companies = 2;
        g.n_positions = 1;
        g.cp = {{0, 0, 1.0}, {1, 0, 1.0}};
        const SubgraphViews v = split_subgraphs(g);
        CHECK(v.cc_only.edge_count() == 0);
        CHECK(v.pp_only.edge_count() == 0);
        CHECK(v.cp_only.edge_count() == 2);
    }

    SUBCASE("empty graph gives three empty views") {
        CPHG g;
        g.n_companies = 3;
        g.n_positions = 2;
        const SubgraphViews v = split_subgraphs(g);
        CHECK(v.cc_only.edge_count() == 0);
        CHECK(v.pp_only.edge_count() == 0);
        CHECK(v.cp_only.edge_count() == 0);
    }

    SUBCASE("invalid edges are rejected") {
        CPHG g;
        g.n_companies = 2;
        g.n_positions = 1;
        g.cc = {{0, 5, 1.0}};
        CHECK_THROWS_AS(validate(g), ContractError);
        g.cc = {{0, 1, -1.0}};
        CHECK_THROWS_AS(validate(g), ContractError);
    }
}

TEST_CASE("hetero_conv") {
    SUBCASE("isolated node with zero bias gives a zero row") {
        CPHG g;
        g.n_companies = 2;
        g.n_positions = 0;
        g.cc = {};  // both nodes isolated
        const GraphOperators ops = build_operators(g);
        Tape t;
        const Var h = t.input(NDArray::matrix(2, 2, {1, 2, 3, 4}));
        const Var w = t.input(NDArray::identity(2));
        const Var b = t.input(NDArray::zeros({2}));
        const Var out = hetero_conv(t, ops.cc, h, w, b);
        for (const double v : t.value(out).data) CHECK(v == 0.0);
    }

    SUBCASE("isolated node with bias gives relu(b)") {
        CPHG g;
        g.n_companies = 1;
        g.n_positions = 0;
        const GraphOperators ops = build_operators(g);
        Tape t;
        const Var h = t.input(NDArray::matrix(1, 2, {5, 5}));
        const Var w = t.input(NDArray::identity(2));
        const Var b = t.input(NDArray({2}, {0.7, -0.3}));
        const Var out = hetero_conv(t, ops.cc, h, w, b);
        CHECK(t.value(out).data[0] == doctest::Approx(0.7));
        CHECK(t.value(out).data[1] == 0.0);
    }

    SUBCASE("single edge with unit weight and identity W passes the neighbor feature") {
        CPHG g;
        g.n_companies = 2;
        g.n_positions = 0;
        g.cc = {{0, 1, 1.0}};
        const GraphOperators ops = build_operators(g);
        Tape t;
        const Var h = t.input(NDArray::matrix(2, 2, {0, 0, 1, 0}));  // h_v = [1, 0]
        const Var w = t.input(NDArray::identity(2));
        const Var b = t.input(NDArray::zeros({2}));
        const Var out = hetero_conv(t, ops.cc, h, w, b);
        CHECK(t.value(out).at(0, 0) == doctest::Approx(1.0));
        CHECK(t.value(out).at(0, 1) == doctest::Approx(0.0));
    }

    SUBCASE("star graph: center collects leaves scaled by 1/sqrt(3)") {
        CPHG g;
        g.n_companies = 4;  // node 0 center, 1..3 leaves
        g.n_positions = 0;
        g.cc = {{0, 1, 1.0}, {0, 2, 1.0}, {0, 3, 1.0}};
        const GraphOperators ops = build_operators(g);
        Tape t;
        NDArray feats = NDArray::zeros({4, 3});
        feats.at(1, 0) = 1.0;  // e_1
        feats.at(2, 1) = 1.0;  // e_2
        feats.at(3, 2) = 1.0;  // e_3
        const Var out = hetero_conv(t, ops.cc, t.input(feats), t.input(NDArray::identity(3)),
                                    t.input(NDArray::zeros({3})));
        const double expect = 1.0 / std::sqrt(3.0);
        for (std::size_t k = 0; k < 3; ++k) CHECK(t.value(out).at(0, k) == doctest::Approx(expect));
    }

    SUBCASE("matches the reference formula on a random graph") {
        Rng rng(31);
        CPHG g;
        g.n_companies = 6;
        g.n_positions = 0;
        for (int a = 0; a < 6; ++a)
            for (int b = a + 1; b < 6; ++b)
                if (rng.uniform() < 0.5) g.cc.push_back({a, b, rng.uniform(0.5, 3.0)});
        const GraphOperators ops = build_operators(g);
        NDArray h = NDArray::zeros({6, 3});
        NDArray w = NDArray::zeros({3, 3});
        std::vector<double> bias = {0.1, -0.2, 0.05};
        for (double& v : h.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
        Tape t;
        const Var out = hetero_conv(t, ops.cc, t.input(h), t.input(w), t.input(NDArray({3}, bias)));
        const NDArray want = reference_conv(g.cc, 6, h, w, bias);
        for (std::size_t i = 0; i < want.data.size(); ++i)
            CHECK(t.value(out).data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

namespace {

struct CellFixture {
    ModelConfig cfg;
    ParameterSet params;
    std::vector<GraphOperators> ops;

    static CellFixture make(const DyCPGraph& dg, std::uint64_t seed) {
        CellFixture f;
        f.cfg.dim_g = 3;
        f.ops = build_operators(dg);
        f.params = init_params(f.cfg, dg.n_companies, dg.n_positions, static_cast<int>(dg.length()), seed);
        return f;
    }
};

/// Reference cell built on the reference conv.
std::pair<NDArray, NDArray> reference_cell(const CPHG& g, const NDArray& hc, const NDArray& hp,
                                           const ParameterSet& p) {
    const int nc = g.n_companies, np = g.n_positions;
    const std::size_t d = hc.cols();
    const NDArray cc = reference_conv(g.cc, nc, hc, p.at("gcn.cc.w"), p.at("gcn.cc.b").data);
    const NDArray pp = reference_conv(g.pp, np, hp, p.at("gcn.pp.w"), p.at("gcn.pp.b").data);
    NDArray stacked = NDArray::zeros({static_cast<std::size_t>(nc + np), d});
    std::copy(hc.data.begin(), hc.data.end(), stacked.data.begin());
    std::copy(hp.data.begin(), hp.data.end(), stacked.data.begin() + static_cast<long>(nc * d));
    std::vector<Edge> cp_mapped;
    for (const Edge& e : g.cp) cp_mapped.push_back({e.src, nc + e.dst, e.weight});
    const NDArray cp = reference_conv(cp_mapped, nc + np, stacked, p.at("gcn.cp.w"), p.at("gcn.cp.b").data);

    NDArray out_c = NDArray::zeros({static_cast<std::size_t>(nc), d});
    NDArray out_p = NDArray::zeros({static_cast<std::size_t>(np), d});
    for (int u = 0; u < nc; ++u)
        for (std::size_t k = 0; k < d; ++k)
            out_c.at(static_cast<std::size_t>(u), k) =
                0.5 * (cp.at(static_cast<std::size_t>(u), k) + cc.at(static_cast<std::size_t>(u), k));
    for (int u = 0; u < np; ++u)
        for (std::size_t k = 0; k < d; ++k)
            out_p.at(static_cast<std::size_t>(u), k) =
                0.5 * (cp.at(static_cast<std::size_t>(nc + u), k) + pp.at(static_cast<std::size_t>(u), k));
    return {out_c, out_p};
}

}  // namespace

TEST_CASE("cp_hgcn_cell") {
    DyCPGraph dg;
    dg.n_companies = 2;
    dg.n_positions = 2;
    dg.snapshots = {toy_graph()};
    const CellFixture f = CellFixture::make(dg, 41);

    SUBCASE("all-zero inputs and zero biases give zero outputs") {
        ParameterSet zb = f.params;
        for (const char* name : {"gcn.cc.b", "gcn.pp.b", "gcn.cp.b"})
            for (double& v : zb.at(name).data) v = 0.0;
        Tape t;
        const BoundParams bp = bind(t, zb);
        const GcnWeights w = bind_gcn_weights(bp);
        const Var hc = t.constant(NDArray::zeros({2, 3}));
        const Var hp = t.constant(NDArray::zeros({2, 3}));
        const auto [oc, op] = cp_hgcn_cell(t, f.ops[0], hc, hp, w);
        for (const double v : t.value(oc).data) CHECK(v == 0.0);
        for (const double v : t.value(op).data) CHECK(v == 0.0);
    }

    SUBCASE("toy graph matches the hand-built mean of two convolutions") {
        Rng rng(43);
        NDArray hc = NDArray::zeros({2, 3});
        NDArray hp = NDArray::zeros({2, 3});
        for (double& v : hc.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : hp.data) v = rng.uniform(-1.0, 1.0);
        Tape t;
        const BoundParams bp = bind(t, f.params);
        const GcnWeights w = bind_gcn_weights(bp);
        const auto [oc, op] = cp_hgcn_cell(t, f.ops[0], t.constant(hc), t.constant(hp), w);
        const auto [rc, rp] = reference_cell(dg.snapshots[0], hc, hp, f.params);
        for (std::size_t i = 0; i < rc.data.size(); ++i)
            CHECK(t.value(oc).data[i] == doctest::Approx(rc.data[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < rp.data.size(); ++i)
            CHECK(t.value(op).data[i] == doctest::Approx(rp.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("dycp_hgcn_unroll") {
    DyCPGraph dg;
    dg.n_companies = 2;
    dg.n_positions = 2;
    dg.snapshots = {toy_graph(), toy_graph(), toy_graph()};
    const CellFixture f = CellFixture::make(dg, 47);

    SUBCASE("T=1 is a single cell application; T=3 equals three compositions") {
        Tape t;
        const BoundParams bp = bind(t, f.params);
        const GcnWeights w = bind_gcn_weights(bp);
        const Var hc0 = bp.at("gcn.h0.company");
        const Var hp0 = bp.at("gcn.h0.position");
        const auto unrolled = dycp_hgcn_unroll(t, f.ops, hc0, hp0, w);
        REQUIRE(unrolled.size() == 3);

        NDArray hc = t.value(hc0);
        NDArray hp = t.value(hp0);
        for (std::size_t step = 0; step < 3; ++step) {
            const auto [rc, rp] = reference_cell(dg.snapshots[step], hc, hp, f.params);
            for (std::size_t i = 0; i < rc.data.size(); ++i)
                CHECK(t.value(unrolled[step].first).data[i] == doctest::Approx(rc.data[i]).epsilon(1e-11));
            for (std::size_t i = 0; i < rp.data.size(); ++i)
                CHECK(t.value(unrolled[step].second).data[i] == doctest::Approx(rp.data[i]).epsilon(1e-11));
            hc = rc;
            hp = rp;
        }
    }

    SUBCASE("identical snapshots with a fixed point stay constant") {
        // The zero embedding is a fixed point when biases are zero.
        ParameterSet zb = f.params;
        for (const char* name : {"gcn.cc.b", "gcn.pp.b", "gcn.cp.b"})
            for (double& v : zb.at(name).data) v = 0.0;
        Tape t;
        const BoundParams bp = bind(t, zb);
        const GcnWeights w = bind_gcn_weights(bp);
        const Var z_c = t.constant(NDArray::zeros({2, 3}));
        const Var z_p = t.constant(NDArray::zeros({2, 3}));
        const auto unrolled = dycp_hgcn_unroll(t, f.ops, z_c, z_p, w);
        for (const auto& [hc, hp] : unrolled) {
            for (const double v : t.value(hc).data) CHECK(v == 0.0);
            for (const double v : t.value(hp).data) CHECK(v == 0.0);
        }
    }
}

TEST_CASE("node-id permutation equivariance") {
    Rng rng(53);
    CPHG g;
    g.n_companies = 5;
    g.n_positions = 3;
    for (int a = 0; a < 5; ++a)
        for (int b = a + 1; b < 5; ++b)
            if (rng.uniform() < 0.6) g.cc.push_back({a, b, rng.uniform(0.5, 2.0)});
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            if (rng.uniform() < 0.6) g.pp.push_back({a, b, rng.uniform(0.5, 2.0)});
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 3; ++b)
            if (rng.uniform() < 0.5) g.cp.push_back({a, b, rng.uniform(0.5, 2.0)});

    const std::vector<int> perm_c = {2, 0, 4, 1, 3};  // new id of old company i
    const std::vector<int> perm_p = {1, 2, 0};

    CPHG gp;
    gp.n_companies = 5;
    gp.n_positions = 3;
    for (const Edge& e : g.cc) gp.cc.push_back({perm_c[e.src], perm_c[e.dst], e.weight});
    for (const Edge& e : g.pp) gp.pp.push_back({perm_p[e.src], perm_p[e.dst], e.weight});
    for (const Edge& e : g.cp) gp.cp.push_back({perm_c[e.src], perm_p[e.dst], e.weight});

    NDArray hc = NDArray::zeros({5, 2}), hp = NDArray::zeros({3, 2});
    for (double& v : hc.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : hp.data) v = rng.uniform(-1.0, 1.0);
    NDArray hc_p = NDArray::zeros({5, 2}), hp_p = NDArray::zeros({3, 2});
    for (int i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            hc_p.at(static_cast<std::size_t>(perm_c[i]), k) = hc.at(static_cast<std::size_t>(i), k);
    for (int i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            hp_p.at(static_cast<std::size_t>(perm_p[i]), k) = hp.at(static_cast<std::size_t>(i), k);

    ModelConfig mc;
    mc.dim_g = 2;
    const ParameterSet params = init_params(mc, 5, 3, 1, 59);

    auto run = [&params](const CPHG& graph, const NDArray& c0, const NDArray& p0) {
        Tape t;
        const BoundParams bp = bind(t, params);
        const GcnWeights w = bind_gcn_weights(bp);
        const GraphOperators ops = build_operators(graph);
        const auto [oc, op] = cp_hgcn_cell(t, ops, t.constant(c0), t.constant(p0), w);
        return std::make_pair(t.value(oc), t.value(op));
    };
    const auto [oc, op] = run(g, hc, hp);
    const auto [oc_p, op_p] = run(gp, hc_p, hp_p);

    for (int i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(oc_p.at(static_cast<std::size_t>(perm_c[i]), k) ==
                  doctest::Approx(oc.at(static_cast<std::size_t>(i), k)).epsilon(1e-12));
    for (int i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(op_p.at(static_cast<std::size_t>(perm_p[i]), k) ==
                  doctest::Approx(op.at(static_cast<std::size_t>(i), k)).epsilon(1e-12));
}

TEST_CASE("gradients flow through a two-timestamp unroll") {
    DyCPGraph dg;
    dg.n_companies = 2;
    dg.n_positions = 2;
    dg.snapshots = {toy_graph(), toy_graph()};
    ModelConfig mc;
    mc.dim_g = 2;
    ParameterSet params;
    // Only the graph parameters, bound to a small random start.
    const ParameterSet full = init_params(mc, 2, 2, 2, 61);
    for (const char* name : {"gcn.cc.w", "gcn.cc.b", "gcn.pp.w", "gcn.pp.b", "gcn.cp.w", "gcn.cp.b",
                             "gcn.h0.company", "gcn.h0.position"})
        params.set(name, full.at(name));
    // Nonzero biases so relu paths are active.
    for (double& v : params.at("gcn.cc.b").data) v = 0.3;
    for (double& v : params.at("gcn.pp.b").data) v = 0.2;
    for (double& v : params.at("gcn.cp.b").data) v = 0.1;

    const std::vector<GraphOperators> ops = build_operators(dg);
    const LossFn fn = [&ops](Tape& t, const BoundParams& bp) {
        const GcnWeights w = bind_gcn_weights(bp);
        const auto unrolled = dycp_hgcn_unroll(t, ops, bp.at("gcn.h0.company"), bp.at("gcn.h0.position"), w);
        Var acc = t.sum_all(unrolled.back().first);
        acc = t.add(acc, t.sum_all(unrolled.back().second));
        const Var sq = t.sum_all(t.mul(unrolled.back().second, unrolled.back().second));
        return t.add(acc, sq);
    };
    const ParameterSet got = loss_gradient(fn, params);
    const ParameterSet want = finite_difference_gradient(fn, params);
    CHECK(max_rel_error(got, want) < 1e-4);
}
