#pragma once

#include <vector>

#include "fedlmf/data.hpp"
#include "fedlmf/model.hpp"
#include "fedlmf/tape.hpp"

namespace fedlmf {

/// Stirling approximation of log y!: y ln y - y + 0.5 ln(2 pi y), with
/// st(0) = 0.
double stirling_log_factorial(int y);

/// Exact ln y! for oracle comparisons.
double exact_log_factorial(int y);

/// Which form of the classification loss to use.
enum class LossVariant {
    Poisson,      // exp(-eta_y) - y eta_y + st(y)
    StandardNll,  // -eta_y
};

/// Per-sample classification loss on one head's log-probabilities.
Var classification_loss(Tape& tape, Var eta, int label, LossVariant variant);

/// Numeric counterpart used by evaluation and by unit oracles.
double classification_loss_value(const std::vector<double>& eta, int label, LossVariant variant);

/// Proximal term (mu/2) || theta_tilde_now - theta_tilde_prev ||^2 on the
/// mean dynamic position embedding.
Var reg_loss(Tape& tape, Var theta_tilde_now, const NDArray& theta_tilde_prev, double mu);

struct LossBreakdown {
    double classification_demand = 0.0;
    double classification_supply = 0.0;
    double regularization = 0.0;
    double total = 0.0;
};

struct LossSettings {
    double lambda = 1.0;
    double mu = 0.01;
    LossVariant variant = LossVariant::Poisson;
};

struct BatchLossVars {
    Var total;
    Var classification_demand;
    Var classification_supply;
    Var regularization;
};

/// Batch loss: mean per-sample classification loss for each head plus
/// lambda times the proximal term. Gradients flow through all three parts.
/// Throws ContractError on an empty batch.
BatchLossVars total_loss(Tape& tape, const BoundParams& p, ModelGraph& mg,
                         const std::vector<TrendSample>& batch, const NDArray& theta_tilde_prev,
                         const LossSettings& settings);

LossBreakdown extract_breakdown(const Tape& tape, const BatchLossVars& vars);

}  // namespace fedlmf
