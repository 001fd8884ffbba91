#include "fedlmf/tape.hpp"

#include <cmath>
#include <memory>

#include "fedlmf/errors.hpp"

namespace fedlmf {

void Tape::check(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw ContractError("Var does not belong to this tape");
}

Var Tape::push(NDArray value, bool requires_grad, std::vector<int> inputs,
               std::function<void(Tape&, const Node&)> back) {
    if (!value.all_finite()) throw NumericsError("non-finite value in forward op");
    Node n;
    n.value = std::move(value);
    n.adj = NDArray::zeros(n.value.shape);
    n.requires_grad = requires_grad;
    n.inputs = std::move(inputs);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(NDArray value) { return push(std::move(value), true, {}, {}); }
Var Tape::constant(NDArray value) { return push(std::move(value), false, {}, {}); }

const NDArray& Tape::value(Var v) const {
    check(v);
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

const NDArray& Tape::adjoint(Var v) const {
    check(v);
    return nodes_[static_cast<std::size_t>(v.id)].adj;
}

Var Tape::add(Var a, Var b) {
    check(a); check(b);
    const NDArray& va = val_of(a.id);
    const NDArray& vb = val_of(b.id);
    if (!va.same_shape(vb)) throw ShapeError("add " + va.shape_str() + " vs " + vb.shape_str());
    NDArray out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    const int ia = a.id, ib = b.id;
    return push(std::move(out), rg(a) || rg(b), {ia, ib}, [ia, ib](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        NDArray& gb = t.adj_of(ib);
        for (std::size_t i = 0; i < n.adj.data.size(); ++i) {
            ga.data[i] += n.adj.data[i];
            gb.data[i] += n.adj.data[i];
        }
    });
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
    check(a); check(b);
    const NDArray& va = val_of(a.id);
    const NDArray& vb = val_of(b.id);
    if (!va.same_shape(vb)) throw ShapeError("mul " + va.shape_str() + " vs " + vb.shape_str());
    NDArray out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    const int ia = a.id, ib = b.id;
    return push(std::move(out), rg(a) || rg(b), {ia, ib}, [ia, ib](Tape& t, const Node& n) {
        const NDArray& va2 = t.val_of(ia);
        const NDArray& vb2 = t.val_of(ib);
        NDArray& ga = t.adj_of(ia);
        NDArray& gb = t.adj_of(ib);
        for (std::size_t i = 0; i < n.adj.data.size(); ++i) {
            ga.data[i] += n.adj.data[i] * vb2.data[i];
            gb.data[i] += n.adj.data[i] * va2.data[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    check(a);
    NDArray out = val_of(a.id);
    for (double& v : out.data) v *= c;
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia, c](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        for (std::size_t i = 0; i < n.adj.data.size(); ++i) ga.data[i] += c * n.adj.data[i];
    });
}

Var Tape::add_rowvec(Var m, Var v) {
    check(m); check(v);
    const NDArray& vm = val_of(m.id);
    const NDArray& vv = val_of(v.id);
    if (vv.numel() != vm.cols()) throw ShapeError("add_rowvec " + vm.shape_str() + " + " + vv.shape_str());
    NDArray out = vm;
    const std::size_t rows = vm.rows(), cols = vm.cols();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] += vv.data[c];
    const int im = m.id, iv = v.id;
    return push(std::move(out), rg(m) || rg(v), {im, iv}, [im, iv, rows, cols](Tape& t, const Node& n) {
        NDArray& gm = t.adj_of(im);
        NDArray& gv = t.adj_of(iv);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                gm.data[r * cols + c] += n.adj.data[r * cols + c];
                gv.data[c] += n.adj.data[r * cols + c];
            }
    });
}

Var Tape::matmul(Var a, Var b) {
    check(a); check(b);
    NDArray out = fedlmf::matmul(val_of(a.id), val_of(b.id));
    const int ia = a.id, ib = b.id;
    return push(std::move(out), rg(a) || rg(b), {ia, ib}, [ia, ib](Tape& t, const Node& n) {
        const NDArray& va = t.val_of(ia);
        const NDArray& vb = t.val_of(ib);
        // dA += dC * B^T ; dB += A^T * dC
        const NDArray da = fedlmf::matmul(n.adj, fedlmf::transpose(vb));
        const NDArray db = fedlmf::matmul(fedlmf::transpose(va), n.adj);
        NDArray& ga = t.adj_of(ia);
        NDArray& gb = t.adj_of(ib);
        for (std::size_t i = 0; i < da.data.size(); ++i) ga.data[i] += da.data[i];
        for (std::size_t i = 0; i < db.data.size(); ++i) gb.data[i] += db.data[i];
    });
}

Var Tape::transpose(Var a) {
    check(a);
    NDArray out = fedlmf::transpose(val_of(a.id));
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia](Tape& t, const Node& n) {
        const NDArray gt = fedlmf::transpose(n.adj);
        NDArray& ga = t.adj_of(ia);
        for (std::size_t i = 0; i < gt.data.size(); ++i) ga.data[i] += gt.data[i];
    });
}

Var Tape::relu(Var a) {
    check(a);
    NDArray out = val_of(a.id);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia](Tape& t, const Node& n) {
        const NDArray& va = t.val_of(ia);
        NDArray& ga = t.adj_of(ia);
        for (std::size_t i = 0; i < n.adj.data.size(); ++i)
            if (va.data[i] > 0.0) ga.data[i] += n.adj.data[i];
    });
}

Var Tape::exp(Var a) {
    check(a);
    NDArray out = val_of(a.id);
    for (double& v : out.data) v = std::exp(v);
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        for (std::size_t i = 0; i < n.adj.data.size(); ++i)
            ga.data[i] += n.adj.data[i] * n.value.data[i];
    });
}

namespace {
void softmax_row(const double* x, double* y, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        s += y[i];
    }
    for (std::size_t i = 0; i < n; ++i) y[i] /= s;
}
}  // namespace

Var Tape::softmax_rows(Var a) {
    check(a);
    const NDArray& va = val_of(a.id);
    NDArray out = va;
    const std::size_t rows = va.rows(), cols = va.cols();
    for (std::size_t r = 0; r < rows; ++r)
        softmax_row(va.data.data() + r * cols, out.data.data() + r * cols, cols);
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia, rows, cols](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = n.value.data.data() + r * cols;
            const double* dy = n.adj.data.data() + r * cols;
            double dys = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dys += dy[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c)
                ga.data[r * cols + c] += y[c] * (dy[c] - dys);
        }
    });
}

Var Tape::log_softmax_rows(Var a) {
    check(a);
    const NDArray& va = val_of(a.id);
    NDArray out = va;
    const std::size_t rows = va.rows(), cols = va.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = va.data.data() + r * cols;
        double* y = out.data.data() + r * cols;
        double mx = x[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < cols; ++c) y[c] = x[c] - lse;
    }
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia, rows, cols](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = n.value.data.data() + r * cols;   // log-probs
            const double* dy = n.adj.data.data() + r * cols;
            double dys = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dys += dy[c];
            for (std::size_t c = 0; c < cols; ++c)
                ga.data[r * cols + c] += dy[c] - std::exp(y[c]) * dys;
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty list");
    std::size_t rows = 0;
    const std::size_t cols = val_of(parts[0].id).cols();
    bool any_rg = false;
    std::vector<int> ids;
    for (const Var p : parts) {
        check(p);
        const NDArray& vp = val_of(p.id);
        if (vp.cols() != cols) throw ShapeError("concat_rows: column mismatch");
        rows += vp.rows();
        any_rg = any_rg || rg(p);
        ids.push_back(p.id);
    }
    NDArray out = NDArray::zeros({rows, cols});
    std::size_t r = 0;
    for (const Var p : parts) {
        const NDArray& vp = val_of(p.id);
        std::copy(vp.data.begin(), vp.data.end(), out.data.begin() + static_cast<long>(r * cols));
        r += vp.rows();
    }
    return push(std::move(out), any_rg, ids, [ids, cols](Tape& t, const Node& n) {
        std::size_t r0 = 0;
        for (const int id : ids) {
            NDArray& g = t.adj_of(id);
            const std::size_t nr = t.val_of(id).rows();
            for (std::size_t i = 0; i < nr * cols; ++i) g.data[i] += n.adj.data[r0 * cols + i];
            r0 += nr;
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty list");
    const std::size_t rows = val_of(parts[0].id).rows();
    std::size_t cols = 0;
    bool any_rg = false;
    std::vector<int> ids;
    for (const Var p : parts) {
        check(p);
        const NDArray& vp = val_of(p.id);
        if (vp.rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += vp.cols();
        any_rg = any_rg || rg(p);
        ids.push_back(p.id);
    }
    NDArray out = NDArray::zeros({rows, cols});
    std::size_t c0 = 0;
    for (const Var p : parts) {
        const NDArray& vp = val_of(p.id);
        const std::size_t pc = vp.cols();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < pc; ++c) out.data[r * cols + c0 + c] = vp.data[r * pc + c];
        c0 += pc;
    }
    return push(std::move(out), any_rg, ids, [ids, rows, cols](Tape& t, const Node& n) {
        std::size_t c0b = 0;
        for (const int id : ids) {
            NDArray& g = t.adj_of(id);
            const std::size_t pc = t.val_of(id).cols();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < pc; ++c) g.data[r * pc + c] += n.adj.data[r * cols + c0b + c];
            c0b += pc;
        }
    });
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
    check(a);
    const NDArray& va = val_of(a.id);
    if (r0 >= r1 || r1 > va.rows()) throw ShapeError("slice_rows out of range");
    const std::size_t cols = va.cols();
    NDArray out = NDArray::zeros({r1 - r0, cols});
    std::copy(va.data.begin() + static_cast<long>(r0 * cols), va.data.begin() + static_cast<long>(r1 * cols),
              out.data.begin());
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia, r0, cols](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        for (std::size_t i = 0; i < n.adj.data.size(); ++i) ga.data[r0 * cols + i] += n.adj.data[i];
    });
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
    check(a);
    const NDArray& va = val_of(a.id);
    if (c0 >= c1 || c1 > va.cols()) throw ShapeError("slice_cols out of range");
    const std::size_t rows = va.rows(), cols = va.cols(), w = c1 - c0;
    NDArray out = NDArray::zeros({rows, w});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) out.data[r * w + c] = va.data[r * cols + c0 + c];
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia, c0, rows, cols, w](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) ga.data[r * cols + c0 + c] += n.adj.data[r * w + c];
    });
}

Var Tape::mean_rows(Var a) {
    check(a);
    const NDArray& va = val_of(a.id);
    const std::size_t rows = va.rows(), cols = va.cols();
    NDArray out = NDArray::zeros({1, cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.data[c] += va.data[r * cols + c];
    for (double& v : out.data) v /= static_cast<double>(rows);
    const int ia = a.id;
    return push(std::move(out), rg(a), {ia}, [ia, rows, cols](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) ga.data[r * cols + c] += inv * n.adj.data[c];
    });
}

Var Tape::sum_all(Var a) {
    check(a);
    const NDArray& va = val_of(a.id);
    double s = 0.0;
    for (const double v : va.data) s += v;
    const int ia = a.id;
    return push(NDArray::scalar(s), rg(a), {ia}, [ia](Tape& t, const Node& n) {
        NDArray& ga = t.adj_of(ia);
        for (double& g : ga.data) g += n.adj.data[0];
    });
}

Var Tape::masked_weighted_sum(Var rows, Var weights) {
    check(rows); check(weights);
    const NDArray& h = val_of(rows.id);
    const NDArray& w = val_of(weights.id);
    const std::size_t nr = h.rows(), cols = h.cols();
    if (w.numel() != nr) throw ShapeError("masked_weighted_sum: weights " + w.shape_str() +
                                          " vs rows " + h.shape_str());
    NDArray out = NDArray::zeros({1, cols});
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.data[c] += w.data[r] * h.data[r * cols + c];
    const int ih = rows.id, iw = weights.id;
    return push(std::move(out), rg(rows) || rg(weights), {ih, iw}, [ih, iw, nr, cols](Tape& t, const Node& n) {
        const NDArray& hv = t.val_of(ih);
        const NDArray& wv = t.val_of(iw);
        NDArray& gh = t.adj_of(ih);
        NDArray& gw = t.adj_of(iw);
        for (std::size_t r = 0; r < nr; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                gh.data[r * cols + c] += wv.data[r] * n.adj.data[c];
                acc += hv.data[r * cols + c] * n.adj.data[c];
            }
            gw.data[r] += acc;
        }
    });
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
    check(a); check(gain); check(bias);
    const NDArray& x = val_of(a.id);
    const NDArray& g = val_of(gain.id);
    const NDArray& b = val_of(bias.id);
    const std::size_t rows = x.rows(), cols = x.cols();
    if (g.numel() != cols || b.numel() != cols) throw ShapeError("layer_norm_rows: gain/bias size");
    NDArray out = NDArray::zeros({rows, cols});
    NDArray xhat = NDArray::zeros({rows, cols});
    std::vector<double> inv_sigma(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (std::size_t c = 0; c < cols; ++c) {
            const double xh = (xr[c] - mu) * is;
            xhat.data[r * cols + c] = xh;
            out.data[r * cols + c] = g.data[c] * xh + b.data[c];
        }
    }
    const int ia = a.id, ig = gain.id, ib = bias.id;
    auto xhat_s = std::make_shared<NDArray>(std::move(xhat));
    auto is_s = std::make_shared<std::vector<double>>(std::move(inv_sigma));
    return push(std::move(out), rg(a) || rg(gain) || rg(bias), {ia, ig, ib},
                [ia, ig, ib, rows, cols, xhat_s, is_s](Tape& t, const Node& n) {
        const NDArray& gv = t.val_of(ig);
        NDArray& ga = t.adj_of(ia);
        NDArray& gg = t.adj_of(ig);
        NDArray& gb = t.adj_of(ib);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* dy = n.adj.data.data() + r * cols;
            const double* xh = xhat_s->data.data() + r * cols;
            double m1 = 0.0, m2 = 0.0;   // mean(dxhat), mean(dxhat * xhat)
            for (std::size_t c = 0; c < cols; ++c) {
                const double dxh = dy[c] * gv.data[c];
                m1 += dxh;
                m2 += dxh * xh[c];
                gg.data[c] += dy[c] * xh[c];
                gb.data[c] += dy[c];
            }
            m1 /= static_cast<double>(cols);
            m2 /= static_cast<double>(cols);
            const double is = (*is_s)[r];
            for (std::size_t c = 0; c < cols; ++c) {
                const double dxh = dy[c] * gv.data[c];
                ga.data[r * cols + c] += is * (dxh - m1 - xh[c] * m2);
            }
        }
    });
}

void Tape::backward(Var loss) {
    check(loss);
    Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (!ln.value.is_scalar()) throw ContractError("backward: loss must be scalar");
    for (Node& n : nodes_) std::fill(n.adj.data.begin(), n.adj.data.end(), 0.0);
    ln.adj.data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.requires_grad && n.back) n.back(*this, n);
    }
}

Var BoundParams::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("no bound parameter named '" + name + "'");
    if (access_log) access_log->insert(name);
    return it->second;
}

BoundParams bind(Tape& tape, const ParameterSet& params) {
    BoundParams bp;
    bp.tape = &tape;
    for (const auto& [name, arr] : params) bp.vars[name] = tape.input(arr);
    return bp;
}

ParameterSet gradients(Tape& tape, Var loss, const BoundParams& bound, const ParameterSet& params) {
    tape.backward(loss);
    ParameterSet out;
    for (const auto& [name, arr] : params) {
        auto it = bound.vars.find(name);
        if (it == bound.vars.end()) {
            out.set(name, NDArray::zeros(arr.shape));
        } else {
            out.set(name, tape.adjoint(it->second));
        }
    }
    return out;
}

double loss_value(const LossFn& fn, const ParameterSet& params) {
    Tape tape;
    const BoundParams bp = bind(tape, params);
    const Var loss = fn(tape, bp);
    const NDArray& v = tape.value(loss);
    if (!v.is_scalar()) throw ContractError("loss_value: loss must be scalar");
    return v.data[0];
}

ParameterSet loss_gradient(const LossFn& fn, const ParameterSet& params) {
    Tape tape;
    const BoundParams bp = bind(tape, params);
    const Var loss = fn(tape, bp);
    return gradients(tape, loss, bp, params);
}

ParameterSet hvp(const LossFn& fn, const ParameterSet& params, const ParameterSet& v) {
    if (!same_structure(params, v)) throw ContractError("hvp: v does not match params");
    const double vnorm = l2_norm(v);
    if (vnorm == 0.0) return zeros_like(params);
    const double eps = 1e-4 / std::max(1.0, vnorm);
    ParameterSet plus = params;
    axpy(plus, eps, v);
    ParameterSet minus = params;
    axpy(minus, -eps, v);
    ParameterSet gp = loss_gradient(fn, plus);
    const ParameterSet gm = loss_gradient(fn, minus);
    axpy(gp, -1.0, gm);
    scale_inplace(gp, 1.0 / (2.0 * eps));
    return gp;
}

}  // namespace fedlmf
