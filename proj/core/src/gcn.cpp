#include "fedlmf/gcn.hpp"

namespace fedlmf {

GcnWeights bind_gcn_weights(const BoundParams& params) {
    GcnWeights w;
    w.cc_w = params.at("gcn.cc.w");
    w.cc_b = params.at("gcn.cc.b");
    w.pp_w = params.at("gcn.pp.w");
    w.pp_b = params.at("gcn.pp.b");
    w.cp_w = params.at("gcn.cp.w");
    w.cp_b = params.at("gcn.cp.b");
    return w;
}

Var hetero_conv(Tape& tape, const NDArray& a_norm, Var h_in, Var w, Var b) {
    const Var adj = tape.constant(a_norm);
    const Var hw = tape.matmul(h_in, w);
    const Var agg = tape.matmul(adj, hw);
    return tape.relu(tape.add_rowvec(agg, b));
}

std::pair<Var, Var> cp_hgcn_cell(Tape& tape, const GraphOperators& ops, Var h_c_prev, Var h_p_prev,
                                 const GcnWeights& w) {
    const std::size_t nc = tape.value(h_c_prev).rows();
    const std::size_t np = tape.value(h_p_prev).rows();

    const Var cc_out = hetero_conv(tape, ops.cc, h_c_prev, w.cc_w, w.cc_b);
    const Var pp_out = hetero_conv(tape, ops.pp, h_p_prev, w.pp_w, w.pp_b);

    const Var stacked = tape.concat_rows({h_c_prev, h_p_prev});
    const Var cp_out = hetero_conv(tape, ops.cpcp, stacked, w.cp_w, w.cp_b);
    const Var cp_c = tape.slice_rows(cp_out, 0, nc);
    const Var cp_p = tape.slice_rows(cp_out, nc, nc + np);

    const Var h_c = tape.scale(tape.add(cp_c, cc_out), 0.5);
    const Var h_p = tape.scale(tape.add(cp_p, pp_out), 0.5);
    return {h_c, h_p};
}

std::vector<std::pair<Var, Var>> dycp_hgcn_unroll(Tape& tape, const std::vector<GraphOperators>& ops,
                                                  Var h_c0, Var h_p0, const GcnWeights& w) {
    std::vector<std::pair<Var, Var>> out;
    out.reserve(ops.size());
    Var hc = h_c0;
    Var hp = h_p0;
    for (const GraphOperators& op : ops) {
        auto [nc, np] = cp_hgcn_cell(tape, op, hc, hp, w);
        hc = nc;
        hp = np;
        out.push_back({hc, hp});
    }
    return out;
}

}  // namespace fedlmf
