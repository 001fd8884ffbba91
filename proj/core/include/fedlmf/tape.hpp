#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedlmf/ndarray.hpp"
#include "fedlmf/param_set.hpp"

namespace fedlmf {

class Tape;

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Records primitive operations in topological order (an input always
/// precedes its consumer, enforced by construction) and replays them in
/// reverse for the backward pass, visiting each node exactly once.
///
/// Every forward result is checked for NaN/Inf and a NumericsError is raised
/// on the first non-finite value. All reductions accumulate left to right so
/// that identical op sequences give bit-identical results.
///
/// Single-writer: one Tape per execution context; concurrent clients each
/// hold their own Tape.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf.
    Var input(NDArray value);
    /// Non-differentiable leaf.
    Var constant(NDArray value);

    const NDArray& value(Var v) const;
    const NDArray& adjoint(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    // -- primitives ---------------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                      // elementwise
    Var scale(Var a, double c);
    Var add_rowvec(Var m, Var v);               // broadcast a row vector over rows
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var relu(Var a);
    Var exp(Var a);
    Var softmax_rows(Var a);
    Var log_softmax_rows(Var a);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, std::size_t r0, std::size_t r1);   // rows [r0, r1)
    Var slice_cols(Var a, std::size_t c0, std::size_t c1);   // cols [c0, c1)
    Var mean_rows(Var a);                       // mean over axis 0 -> 1 x cols
    Var sum_all(Var a);                         // -> 1 x 1
    /// Masked weighted sum of rows: out = sum_i weights[i] * rows[i], with
    /// weights a column vector conforming to the row count. The mask is the
    /// row selection the caller applied (typically via slice_rows).
    Var masked_weighted_sum(Var rows, Var weights);
    /// Row-wise layer normalization with learnable gain/bias (1-D, one per column).
    Var layer_norm_rows(Var a, Var gain, Var bias, double eps);

    /// Reverse pass from a scalar loss. Throws ContractError if `loss` is not
    /// scalar. Adjoints of unreached nodes stay zero.
    void backward(Var loss);

private:
    struct Node {
        NDArray value;
        NDArray adj;
        bool requires_grad = false;
        std::vector<int> inputs;
        std::function<void(Tape&, const Node&)> back;  // empty for leaves
    };

    Var push(NDArray value, bool requires_grad, std::vector<int> inputs,
             std::function<void(Tape&, const Node&)> back);
    NDArray& adj_of(int id) { return nodes_[static_cast<std::size_t>(id)].adj; }
    const NDArray& val_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool rg(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
    void check(Var v) const;

    std::vector<Node> nodes_;
};

/// Parameters bound onto a tape as differentiable leaves. Lookups are logged
/// so tests can assert which parameters a code path reads (e.g. that demand
/// and supply share one encoder).
struct BoundParams {
    const Tape* tape = nullptr;
    std::map<std::string, Var> vars;
    mutable std::set<std::string>* access_log = nullptr;

    Var at(const std::string& name) const;
};

BoundParams bind(Tape& tape, const ParameterSet& params);

/// Gradients of a scalar loss with respect to bound parameters; entries
/// unreached by the loss get zeros of the matching shape.
ParameterSet gradients(Tape& tape, Var loss, const BoundParams& bound, const ParameterSet& params);

/// Builds the loss graph for a given parameter binding; used by the
/// re-evaluation driven operations below.
using LossFn = std::function<Var(Tape&, const BoundParams&)>;

double loss_value(const LossFn& fn, const ParameterSet& params);
ParameterSet loss_gradient(const LossFn& fn, const ParameterSet& params);

/// Hessian-vector product by central finite differences of the gradient:
/// (grad(theta + eps v) - grad(theta - eps v)) / (2 eps) with
/// eps = 1e-4 / max(1, ||v||_2). Zero-norm v returns a zero set.
ParameterSet hvp(const LossFn& fn, const ParameterSet& params, const ParameterSet& v);

}  // namespace fedlmf
