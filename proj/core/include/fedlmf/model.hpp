#pragma once

#include <string>
#include <vector>

#include "fedlmf/data.hpp"
#include "fedlmf/gcn.hpp"
#include "fedlmf/graph.hpp"
#include "fedlmf/rng.hpp"
#include "fedlmf/tape.hpp"

namespace fedlmf {

struct ModelConfig {
    int dim_t = 16;        // element embedding dim
    int dim_g = 4;         // graph node embedding dim
    int n_heads = 4;
    int ff_dim = 16;
    int n_layers = 2;
    int mlp_out_dim = 4;   // output dim of every other MLP
    int n_classes = 5;     // |Y|
    int l_min = 12;
    bool normalize_window_attn = false;  // masked softmax over the window weights
    double ln_eps = 1e-5;
};

void validate(const ModelConfig& cfg);

/// All trainable parameters for a node universe of nc companies, np positions
/// and t_total months. Weights are Xavier-uniform from the seed, biases zero,
/// layer-norm gains one.
ParameterSet init_params(const ModelConfig& cfg, int nc, int np, int t_total, std::uint64_t seed);

struct PredictionOutput {
    std::vector<double> eta_demand;  // |Y| log-probabilities
    std::vector<double> eta_supply;
    int y_demand = 0;                // argmax labels, ties to the lowest index
    int y_supply = 0;
};

int argmax_lowest(const std::vector<double>& v);

// ---- tape-side builders ----------------------------------------------------

/// Two-layer MLP (linear, relu, linear) with hidden size equal to output
/// size; parameter names are <prefix>.l1.w/.l1.b/.l2.w/.l2.b.
Var mlp2(Tape& tape, const BoundParams& p, const std::string& prefix, Var x);

/// Per-element embedding: scalar -> MLP, concatenated with the element's
/// temporal company and position embeddings, then a second MLP into dim_t.
Var embed_elements(Tape& tape, const BoundParams& p, const ModelConfig& cfg,
                   const std::vector<double>& window, Var company_rows, Var position_rows);

/// Transformer encoder (sinusoidal positional encoding, post-norm residual
/// layers) pooled by mean over positions. One parameter set serves both the
/// demand and the supply sequence. `attention_out`, when given, collects the
/// per-layer per-head attention matrices for inspection.
Var encode_sequence(Tape& tape, const BoundParams& p, const ModelConfig& cfg, Var elements,
                    std::vector<Var>* attention_out = nullptr);

/// Time-evolving window embedding h^{t1,t2} = sum_{t=t1..t2} A_t H_t over
/// global timestamps (no normalization unless the config enables the masked
/// softmax variant). Throws ContractError when the window is out of range.
Var window_embed(Tape& tape, Var attn_full, Var rows_full, int t1, int t2, bool normalize);

/// Company-position-aware joint feature: MLP(h_D || h_S || MLP(h_c || h_p)).
Var fuse_zeta(Tape& tape, const BoundParams& p, Var h_d, Var h_s, Var h_c_win, Var h_p_win);

/// Attentive merge of a sequence embedding with the joint feature:
/// h_hat = [h ; zeta] w.
Var attentive_merge(Tape& tape, Var w, Var h, Var zeta);

/// One forward pass shared by a batch: graph unroll plus per-sample paths.
struct ModelGraph {
    const ModelConfig* cfg = nullptr;
    const std::vector<GraphOperators>* ops = nullptr;
    std::vector<std::pair<Var, Var>> embeds;  // H_C^t, H_P^t per timestamp
    Var window_attn;
};

ModelGraph begin_forward(Tape& tape, const BoundParams& p, const ModelConfig& cfg,
                         const std::vector<GraphOperators>& ops);

struct SampleVars {
    Var eta_demand;  // 1 x |Y| log-probabilities
    Var eta_supply;
};

SampleVars sample_forward(Tape& tape, const BoundParams& p, ModelGraph& mg, const TrendSample& s);

/// Mean of the dynamic position embeddings over positions and timestamps
/// (the partial-parameter view used by the regularizer and by clustering).
Var position_embedding_mean(Tape& tape, const ModelGraph& mg);

// ---- numeric front ends -----------------------------------------------------

std::vector<PredictionOutput> predict(const ParameterSet& params, const ModelConfig& cfg,
                                      const std::vector<GraphOperators>& ops,
                                      const std::vector<TrendSample>& samples);

/// Numeric theta-tilde for a parameter set (dim_g values).
std::vector<double> client_feature(const ParameterSet& params, const ModelConfig& cfg,
                                   const std::vector<GraphOperators>& ops);

}  // namespace fedlmf
