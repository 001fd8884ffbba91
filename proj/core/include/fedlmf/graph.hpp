#pragma once

#include <cstddef>
#include <vector>

#include "fedlmf/ndarray.hpp"

namespace fedlmf {

/// Weighted undirected edge between nodes identified within their kind.
struct Edge {
    int src = 0;
    int dst = 0;
    double weight = 1.0;
};

/// Company-Position Heterogeneous Graph: one snapshot with three edge
/// classes. Edge weights are hop counts for that month and must be positive.
struct CPHG {
    int n_companies = 0;
    int n_positions = 0;
    std::vector<Edge> cc;  // company-company
    std::vector<Edge> pp;  // position-position
    std::vector<Edge> cp;  // company-position (src is a company, dst a position)

    std::size_t edge_count() const { return cc.size() + pp.size() + cp.size(); }
};

/// Snapshots over a shared node universe; all snapshots have identical node
/// sets, edges may vary.
struct DyCPGraph {
    int n_companies = 0;
    int n_positions = 0;
    std::vector<CPHG> snapshots;

    std::size_t length() const { return snapshots.size(); }
};

/// Throws ContractError if endpoints are out of range, weights are
/// non-positive, or snapshot node counts disagree.
void validate(const CPHG& g);
void validate(const DyCPGraph& g);

/// Three homogeneous-edge views of one snapshot sharing the node ids.
struct SubgraphViews {
    CPHG cc_only;
    CPHG pp_only;
    CPHG cp_only;
};

SubgraphViews split_subgraphs(const CPHG& g);

/// Symmetrically normalized dense adjacency for one edge-type view:
/// A[u][v] = w_uv / (sqrt(|N_u|) sqrt(|N_v|)) with neighbor counts taken
/// within this view only. The bipartite view is materialized over the
/// combined node ordering (companies first, then positions).
struct GraphOperators {
    NDArray cc;    // n_companies x n_companies
    NDArray pp;    // n_positions x n_positions
    NDArray cpcp;  // (n_companies + n_positions)^2
};

GraphOperators build_operators(const CPHG& g);
std::vector<GraphOperators> build_operators(const DyCPGraph& g);

/// Per-timestamp company and position embeddings (rows ordered by node id).
struct NodeEmbeddings {
    NDArray companies;  // |V_C| x dim_g
    NDArray positions;  // |V_P| x dim_g
};

}  // namespace fedlmf
