#include "fedlmf/model.hpp"

#include <cmath>

#include "fedlmf/errors.hpp"

namespace fedlmf {

void validate(const ModelConfig& cfg) {
    if (cfg.dim_t % cfg.n_heads != 0) throw ConfigError("dim_t must be divisible by n_heads");
    if (cfg.n_classes < 2) throw ConfigError("need at least two trend classes");
    if (cfg.dim_t < 1 || cfg.dim_g < 1 || cfg.ff_dim < 1 || cfg.n_layers < 1 || cfg.mlp_out_dim < 1 ||
        cfg.l_min < 1)
        throw ConfigError("model dimensions must be positive");
}

namespace {

struct ParamSpec {
    std::string name;
    std::vector<std::size_t> shape;
    enum Kind { Weight, Bias, Gain } kind;
};

void mlp2_specs(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t in, std::size_t out) {
    specs.push_back({prefix + ".l1.w", {in, out}, ParamSpec::Weight});
    specs.push_back({prefix + ".l1.b", {out}, ParamSpec::Bias});
    specs.push_back({prefix + ".l2.w", {out, out}, ParamSpec::Weight});
    specs.push_back({prefix + ".l2.b", {out}, ParamSpec::Bias});
}

}  // namespace

ParameterSet init_params(const ModelConfig& cfg, int nc, int np, int t_total, std::uint64_t seed) {
    validate(cfg);
    const std::size_t dt = static_cast<std::size_t>(cfg.dim_t);
    const std::size_t dg = static_cast<std::size_t>(cfg.dim_g);
    const std::size_t ff = static_cast<std::size_t>(cfg.ff_dim);
    const std::size_t m = static_cast<std::size_t>(cfg.mlp_out_dim);
    const std::size_t ny = static_cast<std::size_t>(cfg.n_classes);

    std::vector<ParamSpec> specs;
    mlp2_specs(specs, "dsajd.cp", 2 * dg, m);
    mlp2_specs(specs, "dsajd.zeta", 2 * dt + m, m);
    specs.push_back({"dsajd.merge.demand.w", {dt + m, dt}, ParamSpec::Weight});
    specs.push_back({"dsajd.merge.supply.w", {dt + m, dt}, ParamSpec::Weight});
    specs.push_back({"dsajd.window_attn", {static_cast<std::size_t>(t_total), 1}, ParamSpec::Weight});
    mlp2_specs(specs, "embed.value", 1, m);
    mlp2_specs(specs, "embed.fuse", m + 2 * dg, dt);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "encoder.l" + std::to_string(l);
        for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
            specs.push_back({pre + w, {dt, dt}, ParamSpec::Weight});
        for (const char* b : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
            specs.push_back({pre + b, {dt}, ParamSpec::Bias});
        specs.push_back({pre + ".ln1.g", {dt}, ParamSpec::Gain});
        specs.push_back({pre + ".ln1.b", {dt}, ParamSpec::Bias});
        specs.push_back({pre + ".ln2.g", {dt}, ParamSpec::Gain});
        specs.push_back({pre + ".ln2.b", {dt}, ParamSpec::Bias});
        specs.push_back({pre + ".ff.w1", {dt, ff}, ParamSpec::Weight});
        specs.push_back({pre + ".ff.b1", {ff}, ParamSpec::Bias});
        specs.push_back({pre + ".ff.w2", {ff, dt}, ParamSpec::Weight});
        specs.push_back({pre + ".ff.b2", {dt}, ParamSpec::Bias});
    }
    for (const char* kind : {"cc", "pp", "cp"}) {
        specs.push_back({std::string("gcn.") + kind + ".w", {dg, dg}, ParamSpec::Weight});
        specs.push_back({std::string("gcn.") + kind + ".b", {dg}, ParamSpec::Bias});
    }
    specs.push_back({"gcn.h0.company", {static_cast<std::size_t>(nc), dg}, ParamSpec::Weight});
    specs.push_back({"gcn.h0.position", {static_cast<std::size_t>(np), dg}, ParamSpec::Weight});
    mlp2_specs(specs, "head.demand", dt, ny);
    mlp2_specs(specs, "head.supply", dt, ny);

    ParameterSet params;
    for (const ParamSpec& s : specs) params.set(s.name, NDArray::zeros(s.shape));

    std::map<std::string, ParamSpec::Kind> kinds;
    for (const ParamSpec& s : specs) kinds[s.name] = s.kind;

    // Fill in name order so initialization is independent of spec listing
    // order. The uniform fan-based rule applies to every free parameter,
    // biases included (a 1-D bias counts one input); layer-norm gains start
    // at the identity.
    Rng rng(Rng::derive(seed, "init"));
    for (auto& [name, arr] : params) {
        const ParamSpec::Kind kind = kinds.at(name);
        if (kind == ParamSpec::Gain) {
            for (double& v : arr.data) v = 1.0;
            continue;
        }
        if (kind == ParamSpec::Bias &&
            (name.find(".ln1.") != std::string::npos || name.find(".ln2.") != std::string::npos)) {
            continue;  // layer-norm shifts start at zero
        }
        const double fan_in = static_cast<double>(arr.rows());
        const double fan_out = static_cast<double>(arr.cols());
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        // The graph convolution weights are applied recurrently across the
        // whole unroll; their init must keep the per-step operator gain below
        // one or long horizons overflow. Target row sums around 0.6.
        if (name.rfind("gcn.", 0) == 0 && (name == "gcn.cc.w" || name == "gcn.pp.w" || name == "gcn.cp.w"))
            bound = 1.2 / fan_out;
        // The Poisson likelihood term grows as exp(-eta): initial logits must
        // stay small or the first unnormalized inner step leaves the stable
        // region. A quarter-scale output layer keeps eta above roughly -3.
        if (name.rfind("head.", 0) == 0 && name.find(".l2.") != std::string::npos) bound *= 0.25;
        for (double& v : arr.data) v = rng.uniform(-bound, bound);
    }
    return params;
}

int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

Var mlp2(Tape& tape, const BoundParams& p, const std::string& prefix, Var x) {
    const Var h = tape.relu(tape.add_rowvec(tape.matmul(x, p.at(prefix + ".l1.w")), p.at(prefix + ".l1.b")));
    return tape.add_rowvec(tape.matmul(h, p.at(prefix + ".l2.w")), p.at(prefix + ".l2.b"));
}

Var embed_elements(Tape& tape, const BoundParams& p, const ModelConfig& cfg,
                   const std::vector<double>& window, Var company_rows, Var position_rows) {
    const std::size_t L = window.size();
    if (tape.value(company_rows).rows() != L || tape.value(position_rows).rows() != L)
        throw ContractError("embed_elements: embedding rows do not cover the window");
    (void)cfg;
    NDArray scalars = NDArray::zeros({L, 1});
    scalars.data = window;
    const Var v = mlp2(tape, p, "embed.value", tape.constant(std::move(scalars)));
    const Var cat = tape.concat_cols({v, company_rows, position_rows});
    return mlp2(tape, p, "embed.fuse", cat);
}

namespace {

Var attention_block(Tape& tape, const BoundParams& p, const ModelConfig& cfg, const std::string& pre,
                    Var x, std::vector<Var>* attention_out) {
    const std::size_t dh = static_cast<std::size_t>(cfg.dim_t / cfg.n_heads);
    const Var q = tape.add_rowvec(tape.matmul(x, p.at(pre + ".attn.wq")), p.at(pre + ".attn.bq"));
    const Var k = tape.add_rowvec(tape.matmul(x, p.at(pre + ".attn.wk")), p.at(pre + ".attn.bk"));
    const Var v = tape.add_rowvec(tape.matmul(x, p.at(pre + ".attn.wv")), p.at(pre + ".attn.bv"));
    std::vector<Var> heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        const Var qh = tape.slice_cols(q, c0, c0 + dh);
        const Var kh = tape.slice_cols(k, c0, c0 + dh);
        const Var vh = tape.slice_cols(v, c0, c0 + dh);
        const Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        const Var attn = tape.softmax_rows(scores);
        if (attention_out) attention_out->push_back(attn);
        heads.push_back(tape.matmul(attn, vh));
    }
    const Var merged = tape.concat_cols(heads);
    return tape.add_rowvec(tape.matmul(merged, p.at(pre + ".attn.wo")), p.at(pre + ".attn.bo"));
}

}  // namespace

Var encode_sequence(Tape& tape, const BoundParams& p, const ModelConfig& cfg, Var elements,
                    std::vector<Var>* attention_out) {
    const std::size_t L = tape.value(elements).rows();
    const Var pe = tape.constant(positional_encoding_table(L, static_cast<std::size_t>(cfg.dim_t)));
    Var x = tape.add(elements, pe);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "encoder.l" + std::to_string(l);
        const Var attn = attention_block(tape, p, cfg, pre, x, attention_out);
        x = tape.layer_norm_rows(tape.add(x, attn), p.at(pre + ".ln1.g"), p.at(pre + ".ln1.b"), cfg.ln_eps);
        const Var h = tape.relu(tape.add_rowvec(tape.matmul(x, p.at(pre + ".ff.w1")), p.at(pre + ".ff.b1")));
        const Var ff = tape.add_rowvec(tape.matmul(h, p.at(pre + ".ff.w2")), p.at(pre + ".ff.b2"));
        x = tape.layer_norm_rows(tape.add(x, ff), p.at(pre + ".ln2.g"), p.at(pre + ".ln2.b"), cfg.ln_eps);
    }
    return tape.mean_rows(x);
}

Var window_embed(Tape& tape, Var attn_full, Var rows_full, int t1, int t2, bool normalize) {
    const std::size_t t_len = tape.value(attn_full).rows();
    if (t1 < 0 || t2 < t1 || static_cast<std::size_t>(t2) >= t_len)
        throw ContractError("window_embed: timestamps out of range");
    if (tape.value(rows_full).rows() != t_len)
        throw ContractError("window_embed: weight/row length mismatch");
    Var a = tape.slice_rows(attn_full, static_cast<std::size_t>(t1), static_cast<std::size_t>(t2) + 1);
    if (normalize) a = tape.transpose(tape.softmax_rows(tape.transpose(a)));
    const Var rows = tape.slice_rows(rows_full, static_cast<std::size_t>(t1), static_cast<std::size_t>(t2) + 1);
    return tape.masked_weighted_sum(rows, a);
}

Var fuse_zeta(Tape& tape, const BoundParams& p, Var h_d, Var h_s, Var h_c_win, Var h_p_win) {
    const Var inner = mlp2(tape, p, "dsajd.cp", tape.concat_cols({h_c_win, h_p_win}));
    return mlp2(tape, p, "dsajd.zeta", tape.concat_cols({h_d, h_s, inner}));
}

Var attentive_merge(Tape& tape, Var w, Var h, Var zeta) {
    return tape.matmul(tape.concat_cols({h, zeta}), w);
}

ModelGraph begin_forward(Tape& tape, const BoundParams& p, const ModelConfig& cfg,
                         const std::vector<GraphOperators>& ops) {
    ModelGraph mg;
    mg.cfg = &cfg;
    mg.ops = &ops;
    const GcnWeights w = bind_gcn_weights(p);
    mg.embeds = dycp_hgcn_unroll(tape, ops, p.at("gcn.h0.company"), p.at("gcn.h0.position"), w);
    mg.window_attn = p.at("dsajd.window_attn");
    return mg;
}

SampleVars sample_forward(Tape& tape, const BoundParams& p, ModelGraph& mg, const TrendSample& s) {
    const ModelConfig& cfg = *mg.cfg;
    const int t1 = s.global_t1, t2 = s.global_t2;
    if (t1 < 0 || t2 < t1 || static_cast<std::size_t>(t2) >= mg.embeds.size())
        throw ContractError("sample window outside the graph horizon");

    const std::size_t c = static_cast<std::size_t>(s.company_id);
    const std::size_t pos = static_cast<std::size_t>(s.position_id);

    std::vector<Var> c_rows, p_rows;
    for (int t = t1; t <= t2; ++t) {
        c_rows.push_back(tape.slice_rows(mg.embeds[static_cast<std::size_t>(t)].first, c, c + 1));
        p_rows.push_back(tape.slice_rows(mg.embeds[static_cast<std::size_t>(t)].second, pos, pos + 1));
    }
    const Var c_stack = tape.concat_rows(c_rows);
    const Var p_stack = tape.concat_rows(p_rows);

    const Var elem_d = embed_elements(tape, p, cfg, s.demand_window, c_stack, p_stack);
    const Var elem_s = embed_elements(tape, p, cfg, s.supply_window, c_stack, p_stack);
    const Var h_d = encode_sequence(tape, p, cfg, elem_d);
    const Var h_s = encode_sequence(tape, p, cfg, elem_s);

    // Window weights over the sample's global span; the row stacks are
    // already the masked selection.
    Var a = tape.slice_rows(mg.window_attn, static_cast<std::size_t>(t1), static_cast<std::size_t>(t2) + 1);
    if (cfg.normalize_window_attn) a = tape.transpose(tape.softmax_rows(tape.transpose(a)));
    const Var hc_win = tape.masked_weighted_sum(c_stack, a);
    const Var hp_win = tape.masked_weighted_sum(p_stack, a);

    const Var zeta = fuse_zeta(tape, p, h_d, h_s, hc_win, hp_win);
    const Var hat_d = attentive_merge(tape, p.at("dsajd.merge.demand.w"), h_d, zeta);
    const Var hat_s = attentive_merge(tape, p.at("dsajd.merge.supply.w"), h_s, zeta);

    SampleVars out;
    out.eta_demand = tape.log_softmax_rows(mlp2(tape, p, "head.demand", hat_d));
    out.eta_supply = tape.log_softmax_rows(mlp2(tape, p, "head.supply", hat_s));
    return out;
}

Var position_embedding_mean(Tape& tape, const ModelGraph& mg) {
    std::vector<Var> rows;
    rows.reserve(mg.embeds.size());
    for (const auto& [hc, hp] : mg.embeds) rows.push_back(hp);
    return tape.mean_rows(tape.concat_rows(rows));
}

std::vector<PredictionOutput> predict(const ParameterSet& params, const ModelConfig& cfg,
                                      const std::vector<GraphOperators>& ops,
                                      const std::vector<TrendSample>& samples) {
    std::vector<PredictionOutput> out;
    out.reserve(samples.size());
    // Chunked so tapes stay small on large splits.
    const std::size_t chunk = 256;
    for (std::size_t base = 0; base < samples.size(); base += chunk) {
        Tape tape;
        const BoundParams bp = bind(tape, params);
        ModelGraph mg = begin_forward(tape, bp, cfg, ops);
        const std::size_t end = std::min(samples.size(), base + chunk);
        for (std::size_t i = base; i < end; ++i) {
            const SampleVars sv = sample_forward(tape, bp, mg, samples[i]);
            PredictionOutput po;
            po.eta_demand = tape.value(sv.eta_demand).data;
            po.eta_supply = tape.value(sv.eta_supply).data;
            po.y_demand = argmax_lowest(po.eta_demand);
            po.y_supply = argmax_lowest(po.eta_supply);
            out.push_back(std::move(po));
        }
    }
    return out;
}

std::vector<double> client_feature(const ParameterSet& params, const ModelConfig& cfg,
                                   const std::vector<GraphOperators>& ops) {
    Tape tape;
    const BoundParams bp = bind(tape, params);
    const ModelGraph mg = begin_forward(tape, bp, cfg, ops);
    return tape.value(position_embedding_mean(tape, mg)).data;
}

}  // namespace fedlmf
