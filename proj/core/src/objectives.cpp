#include "fedlmf/objectives.hpp"

#include <cmath>

#include "fedlmf/errors.hpp"

namespace fedlmf {

double stirling_log_factorial(int y) {
    if (y < 0) throw ContractError("stirling_log_factorial: negative y");
    if (y == 0) return 0.0;
    const double yd = static_cast<double>(y);
    return yd * std::log(yd) - yd + 0.5 * std::log(2.0 * 3.14159265358979323846 * yd);
}

double exact_log_factorial(int y) {
    if (y < 0) throw ContractError("exact_log_factorial: negative y");
    double s = 0.0;
    for (int k = 2; k <= y; ++k) s += std::log(static_cast<double>(k));
    return s;
}

Var classification_loss(Tape& tape, Var eta, int label, LossVariant variant) {
    const NDArray& v = tape.value(eta);
    if (label < 0 || static_cast<std::size_t>(label) >= v.cols())
        throw ContractError("label out of range");
    const Var eta_y = tape.slice_cols(eta, static_cast<std::size_t>(label), static_cast<std::size_t>(label) + 1);
    if (variant == LossVariant::StandardNll) return tape.scale(eta_y, -1.0);
    // exp(-eta_y) - y * eta_y + st(y)
    const Var term1 = tape.exp(tape.scale(eta_y, -1.0));
    const Var term2 = tape.scale(eta_y, -static_cast<double>(label));
    const Var st = tape.constant(NDArray::scalar(stirling_log_factorial(label)));
    return tape.add(tape.add(term1, term2), st);
}

double classification_loss_value(const std::vector<double>& eta, int label, LossVariant variant) {
    if (label < 0 || static_cast<std::size_t>(label) >= eta.size())
        throw ContractError("label out of range");
    const double ey = eta[static_cast<std::size_t>(label)];
    if (variant == LossVariant::StandardNll) return -ey;
    return std::exp(-ey) - static_cast<double>(label) * ey + stirling_log_factorial(label);
}

Var reg_loss(Tape& tape, Var theta_tilde_now, const NDArray& theta_tilde_prev, double mu) {
    const Var prev = tape.constant(theta_tilde_prev);
    const Var diff = tape.sub(theta_tilde_now, prev);
    return tape.scale(tape.sum_all(tape.mul(diff, diff)), mu / 2.0);
}

BatchLossVars total_loss(Tape& tape, const BoundParams& p, ModelGraph& mg,
                         const std::vector<TrendSample>& batch, const NDArray& theta_tilde_prev,
                         const LossSettings& settings) {
    if (batch.empty()) throw ContractError("total_loss: empty batch");

    Var sum_d{}, sum_s{};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const SampleVars sv = sample_forward(tape, p, mg, batch[i]);
        const Var ld = classification_loss(tape, sv.eta_demand, batch[i].demand_label, settings.variant);
        const Var ls = classification_loss(tape, sv.eta_supply, batch[i].supply_label, settings.variant);
        sum_d = i == 0 ? ld : tape.add(sum_d, ld);
        sum_s = i == 0 ? ls : tape.add(sum_s, ls);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());

    BatchLossVars out;
    out.classification_demand = tape.scale(sum_d, inv);
    out.classification_supply = tape.scale(sum_s, inv);
    out.regularization = reg_loss(tape, position_embedding_mean(tape, mg), theta_tilde_prev, settings.mu);
    out.total = tape.add(tape.add(out.classification_demand, out.classification_supply),
                         tape.scale(out.regularization, settings.lambda));
    return out;
}

LossBreakdown extract_breakdown(const Tape& tape, const BatchLossVars& vars) {
    LossBreakdown b;
    b.classification_demand = tape.value(vars.classification_demand).data[0];
    b.classification_supply = tape.value(vars.classification_supply).data[0];
    b.regularization = tape.value(vars.regularization).data[0];
    b.total = tape.value(vars.total).data[0];
    return b;
}

}  // namespace fedlmf
