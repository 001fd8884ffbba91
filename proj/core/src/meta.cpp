#include "fedlmf/meta.hpp"

#include <cmath>

#include "fedlmf/errors.hpp"

namespace fedlmf {

void validate(const MetaConfig& cfg) {
    if (cfg.alpha < 0.0 || cfg.beta <= 0.0) throw ConfigError("meta rates must be positive (alpha may be zero)");
    if (cfg.lr_decay.step < 1) throw ConfigError("lr decay step must be >= 1");
}

double lr_schedule(double base_lr, const LrDecay& decay, long round) {
    if (round < 0) throw ContractError("lr_schedule: negative round");
    return base_lr * std::pow(decay.factor, static_cast<double>(round / decay.step));
}

AdamState make_adam_state(const ParameterSet& params) {
    AdamState s;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    s.step = 0;
    return s;
}

void adam_step(AdamState& state, ParameterSet& params, const ParameterSet& grads,
               const AdamConfig& cfg, double lr_override) {
    if (!same_structure(params, grads)) throw ContractError("adam_step: grads do not match params");
    const double lr = lr_override >= 0.0 ? lr_override : cfg.lr;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    auto ip = params.begin();
    auto ig = grads.begin();
    auto im = state.m.begin();
    auto iv = state.v.begin();
    for (; ip != params.end(); ++ip, ++ig, ++im, ++iv) {
        for (std::size_t i = 0; i < ip->second.data.size(); ++i) {
            const double g = ig->second.data[i];
            double& m = im->second.data[i];
            double& v = iv->second.data[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            double& th = ip->second.data[i];
            th -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
            th -= lr * cfg.weight_decay * th;
        }
    }
}

ParameterSet inner_step(const ParameterSet& params, const ParameterSet& grad, double alpha) {
    ParameterSet out = params;
    axpy(out, -alpha, grad);
    return out;
}

ParameterSet meta_gradient(const LossFn& support, const LossFn& query, const ParameterSet& params,
                           double alpha, bool first_order) {
    const ParameterSet g_support = loss_gradient(support, params);
    const ParameterSet adapted = inner_step(params, g_support, alpha);
    ParameterSet g_query = loss_gradient(query, adapted);
    if (first_order || alpha == 0.0) return g_query;
    const ParameterSet hv = hvp(support, params, g_query);
    axpy(g_query, -alpha, hv);
    return g_query;
}

void meta_update(AdamState& state, ParameterSet& params, const ParameterSet& meta_grad,
                 const MetaConfig& cfg, double beta) {
    if (cfg.plain_sgd) {
        axpy(params, -beta, meta_grad);
        return;
    }
    adam_step(state, params, meta_grad, cfg.adam, beta);
}

}  // namespace fedlmf
