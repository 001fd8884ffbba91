#include "fedlmf/graph.hpp"

#include <cmath>
#include <string>

#include "fedlmf/errors.hpp"

namespace fedlmf {

namespace {
void check_edges(const std::vector<Edge>& edges, int n_src, int n_dst, const char* kind) {
    for (const Edge& e : edges) {
        if (e.src < 0 || e.src >= n_src || e.dst < 0 || e.dst >= n_dst)
            throw ContractError(std::string(kind) + " edge endpoint out of range");
        if (e.weight <= 0.0) throw ContractError(std::string(kind) + " edge weight must be positive");
    }
}
}  // namespace

void validate(const CPHG& g) {
    if (g.n_companies < 0 || g.n_positions < 0) throw ContractError("negative node count");
    check_edges(g.cc, g.n_companies, g.n_companies, "cc");
    check_edges(g.pp, g.n_positions, g.n_positions, "pp");
    check_edges(g.cp, g.n_companies, g.n_positions, "cp");
}

void validate(const DyCPGraph& g) {
    for (const CPHG& snap : g.snapshots) {
        if (snap.n_companies != g.n_companies || snap.n_positions != g.n_positions)
            throw ContractError("snapshot node universe differs from the declared one");
        validate(snap);
    }
}

SubgraphViews split_subgraphs(const CPHG& g) {
    SubgraphViews v;
    v.cc_only = CPHG{g.n_companies, g.n_positions, g.cc, {}, {}};
    v.pp_only = CPHG{g.n_companies, g.n_positions, {}, g.pp, {}};
    v.cp_only = CPHG{g.n_companies, g.n_positions, {}, {}, g.cp};
    return v;
}

namespace {
/// Dense normalized adjacency over n nodes from an undirected edge list with
/// endpoints already mapped into [0, n).
NDArray normalize_view(const std::vector<std::pair<std::pair<int, int>, double>>& edges, int n) {
    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    for (const auto& [uv, w] : edges) {
        (void)w;
        degree[static_cast<std::size_t>(uv.first)] += 1;
        if (uv.first != uv.second) degree[static_cast<std::size_t>(uv.second)] += 1;
    }
    NDArray a = NDArray::zeros({static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
    for (const auto& [uv, w] : edges) {
        const int u = uv.first, v = uv.second;
        const double norm = std::sqrt(static_cast<double>(degree[static_cast<std::size_t>(u)])) *
                            std::sqrt(static_cast<double>(degree[static_cast<std::size_t>(v)]));
        const double val = w / norm;
        a.data[static_cast<std::size_t>(u) * n + v] += val;
        if (u != v) a.data[static_cast<std::size_t>(v) * n + u] += val;
    }
    return a;
}
}  // namespace

GraphOperators build_operators(const CPHG& g) {
    validate(g);
    GraphOperators ops;

    std::vector<std::pair<std::pair<int, int>, double>> cc;
    for (const Edge& e : g.cc) cc.push_back({{e.src, e.dst}, e.weight});
    ops.cc = normalize_view(cc, g.n_companies);

    std::vector<std::pair<std::pair<int, int>, double>> pp;
    for (const Edge& e : g.pp) pp.push_back({{e.src, e.dst}, e.weight});
    ops.pp = normalize_view(pp, g.n_positions);

    std::vector<std::pair<std::pair<int, int>, double>> cp;
    for (const Edge& e : g.cp) cp.push_back({{e.src, g.n_companies + e.dst}, e.weight});
    ops.cpcp = normalize_view(cp, g.n_companies + g.n_positions);

    return ops;
}

std::vector<GraphOperators> build_operators(const DyCPGraph& g) {
    validate(g);
    std::vector<GraphOperators> out;
    out.reserve(g.snapshots.size());
    for (const CPHG& snap : g.snapshots) out.push_back(build_operators(snap));
    return out;
}

}  // namespace fedlmf
