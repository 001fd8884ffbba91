#pragma once

#include <utility>
#include <vector>

#include "fedlmf/graph.hpp"
#include "fedlmf/tape.hpp"

namespace fedlmf {

/// Shared convolution weights: one (W, b) pair per edge-type convolution,
/// reused across every timestamp (recurrent cell semantics).
struct GcnWeights {
    Var cc_w, cc_b;
    Var pp_w, pp_b;
    Var cp_w, cp_b;
};

GcnWeights bind_gcn_weights(const BoundParams& params);

/// One edge-type graph convolution:
///   h_u = relu(b + sum_{v in N_u} w_uv / (sqrt|N_u| sqrt|N_v|) (h_v W))
/// realized as relu(A_norm (H W) + b) with A_norm the precomputed normalized
/// adjacency of that view. An isolated node row is relu(b).
Var hetero_conv(Tape& tape, const NDArray& a_norm, Var h_in, Var w, Var b);

/// One recurrent cell: company rows are the mean of the bipartite and the
/// company-company convolution outputs; position rows the mean of the
/// bipartite and the position-position outputs. The bipartite convolution
/// updates both kinds with one weight matrix.
std::pair<Var, Var> cp_hgcn_cell(Tape& tape, const GraphOperators& ops, Var h_c_prev, Var h_p_prev,
                                 const GcnWeights& w);

/// Unrolls the cell over all snapshots: H^t = cell(G^t, H^{t-1}), t = 1..T,
/// emitted in order. Initial embeddings are learnable leaves.
std::vector<std::pair<Var, Var>> dycp_hgcn_unroll(Tape& tape, const std::vector<GraphOperators>& ops,
                                                  Var h_c0, Var h_p0, const GcnWeights& w);

}  // namespace fedlmf
