#pragma once

#include "fedlmf/param_set.hpp"
#include "fedlmf/tape.hpp"

namespace fedlmf {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;  // decoupled
};

struct LrDecay {
    double factor = 0.9;
    int step = 4;
};

struct MetaConfig {
    double alpha = 0.01;       // inner learning rate
    double beta = 0.01;        // meta learning rate
    bool first_order = false;  // drop the Hessian-vector term
    bool plain_sgd = false;    // literal theta - beta * grad instead of Adam
    AdamConfig adam;
    LrDecay lr_decay;
};

void validate(const MetaConfig& cfg);

/// lr(n) = base * factor^floor(n / step), n counted from zero.
double lr_schedule(double base_lr, const LrDecay& decay, long round);

struct AdamState {
    ParameterSet m;
    ParameterSet v;
    long step = 0;
};

AdamState make_adam_state(const ParameterSet& params);

/// Standard Adam with bias correction and decoupled weight decay; lr_override
/// replaces cfg.lr when nonnegative.
void adam_step(AdamState& state, ParameterSet& params, const ParameterSet& grads,
               const AdamConfig& cfg, double lr_override = -1.0);

/// theta' = theta - alpha * grad
ParameterSet inner_step(const ParameterSet& params, const ParameterSet& grad, double alpha);

/// Meta-gradient (I - alpha H_support) grad_query(theta - alpha grad_support(theta)),
/// with the Hessian-vector product taken by finite differences. first_order
/// returns grad_query(theta') unchanged.
ParameterSet meta_gradient(const LossFn& support, const LossFn& query, const ParameterSet& params,
                           double alpha, bool first_order);

/// Outer update theta - beta * meta_grad; plain SGD when requested, otherwise
/// routed through Adam with lr = beta.
void meta_update(AdamState& state, ParameterSet& params, const ParameterSet& meta_grad,
                 const MetaConfig& cfg, double beta);

}  // namespace fedlmf
