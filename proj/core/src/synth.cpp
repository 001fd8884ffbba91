#include "fedlmf/synth.hpp"

#include <algorithm>
#include <cmath>

#include "fedlmf/errors.hpp"
#include "fedlmf/rng.hpp"

namespace fedlmf {

void validate(const SynthConfig& cfg) {
    if (cfg.n_companies < 1 || cfg.n_positions < 1) throw ConfigError("need at least one company and position");
    if (cfg.n_regimes < 1 || cfg.n_regimes > cfg.n_companies)
        throw ConfigError("n_regimes must be in [1, n_companies]");
    if (cfg.t_total < cfg.l_min + 2) throw ConfigError("t_total must be at least l_min + 2");
    if (cfg.demand_supply_coupling < 0.0 || cfg.demand_supply_coupling > 1.0)
        throw ConfigError("demand_supply_coupling must be in [0, 1]");
    if (cfg.noise_scale < 0.0) throw ConfigError("noise_scale must be nonnegative");
    if (cfg.longtail_exponent < 0.0) throw ConfigError("longtail_exponent must be nonnegative");
}

int regime_of(int company_id, int n_regimes) { return company_id % n_regimes; }

int regime_lag(int regime) { return regime; }

namespace {

constexpr double kTau = 6.283185307179586;

/// Regime trend shapes with distinct month-over-month label structure:
/// a boom-bust ramp (steady rises, sharp crash), a seasonal sine, and a
/// bust-boom decline (steady falls, sharp recovery). Same-looking local
/// windows continue differently across regimes, which is what makes naive
/// cross-regime averaging conflict-prone. Cycles are staggered by position
/// (hiring waves roll through roles), so each position carries its own
/// regime fingerprint.
double regime_base(int regime, int position, int t, double phase_shift) {
    // Cycle periods exceed the window length and the geometric ramps are
    // self-similar, so a normalized window looks the same at every phase of
    // the cycle: when the next turn comes is pure regime timing, which is
    // what makes cross-regime averaging costly and regime grouping valuable.
    switch (regime % 3) {
        case 0: {  // boom-bust: steady geometric rises, sharp crash
            const int period = 16 + 2 * (regime / 3);
            const int ph = (t + 2 * position) % period;
            return std::pow(1.18, ph);
        }
        case 1: {  // seasonal swing
            const double period = 14.0 + 3.0 * (regime / 3);
            return 1.0 + 0.5 * std::sin(kTau * t / period + phase_shift + 0.5 * position);
        }
        default: {  // bust-boom: steady geometric declines, sharp recovery
            const int period = 18 + 2 * (regime / 3);
            const int ph = (t + 2 * position) % period;
            return std::pow(1.16, period - 1 - ph);
        }
    }
}

double position_share(int p, int n_positions) {
    double total = 0.0;
    for (int q = 0; q < n_positions; ++q) total += std::pow(q + 1.0, -0.7);
    return std::pow(p + 1.0, -0.7) / total;
}

}  // namespace

SynthOutput synth_generate(const SynthConfig& cfg) {
    validate(cfg);
    SynthOutput out;

    const int nc = cfg.n_companies, np = cfg.n_positions, T = cfg.t_total;

    out.regimes.resize(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) out.regimes[static_cast<std::size_t>(c)] = regime_of(c, cfg.n_regimes);

    // Per-company volume: power law over company rank, floored so the
    // smallest companies still emit usable counts.
    const double v0 = 6000.0;
    std::vector<double> volume(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c)
        volume[static_cast<std::size_t>(c)] =
            std::max(60.0, v0 * std::pow(static_cast<double>(c + 1), -cfg.longtail_exponent));

    // Per-company idiosyncratic phase.
    Rng company_rng(Rng::derive(cfg.seed, "synth.company"));
    std::vector<double> psi(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) psi[static_cast<std::size_t>(c)] = company_rng.uniform(0.0, kTau);

    const double wiggle_amp = 0.04;

    for (int c = 0; c < nc; ++c) {
        const int r = out.regimes[static_cast<std::size_t>(c)];
        const double phase = kTau * static_cast<double>(r) / static_cast<double>(cfg.n_regimes);
        const int lag = regime_lag(r);

        for (int p = 0; p < np; ++p) {
            const double level = volume[static_cast<std::size_t>(c)] * position_share(p, np);
            Rng rng(Rng::derive(cfg.seed, "synth.series", static_cast<std::uint64_t>(c) * 1000 + p));

            std::vector<double> demand_raw(static_cast<std::size_t>(T));
            for (int t = 0; t < T; ++t) {
                const double base = regime_base(r, p, t, phase) +
                                    wiggle_amp * std::sin(kTau * t / 30.0 + psi[static_cast<std::size_t>(c)]);
                const double noisy = level * std::max(0.05, base) * std::exp(cfg.noise_scale * rng.normal());
                demand_raw[static_cast<std::size_t>(t)] = noisy;
            }

            RawSeries s;
            s.company_id = c;
            s.position_id = p;
            s.start_timestamp = 0;
            s.demand.resize(static_cast<std::size_t>(T));
            s.supply.resize(static_cast<std::size_t>(T));
            for (int t = 0; t < T; ++t) {
                s.demand[static_cast<std::size_t>(t)] = std::max(0.0, std::round(demand_raw[static_cast<std::size_t>(t)]));
                const int ts = std::max(0, t - lag);
                const double mix = cfg.demand_supply_coupling * demand_raw[static_cast<std::size_t>(ts)] +
                                   (1.0 - cfg.demand_supply_coupling) * level * std::exp(cfg.noise_scale * rng.normal());
                s.supply[static_cast<std::size_t>(t)] = std::max(0.0, std::round(mix));
            }
            out.series.push_back(std::move(s));
        }
    }

    // Dynamic company-position graph: fixed edge presence, month-jittered
    // weights. Intra-regime hopping strictly outweighs cross-regime hopping.
    // Weights are hop intensities kept at O(1) so the normalized convolution
    // operator stays contractive over a long unroll.
    Rng graph_rng(Rng::derive(cfg.seed, "synth.graph"));
    struct CcBase { int a, b; double w; };
    std::vector<CcBase> cc_base;
    for (int a = 0; a < nc; ++a) {
        for (int b = a + 1; b < nc; ++b) {
            const bool same = out.regimes[static_cast<std::size_t>(a)] == out.regimes[static_cast<std::size_t>(b)];
            if (same) {
                cc_base.push_back({a, b, graph_rng.uniform(1.0, 1.6)});
            } else if (graph_rng.uniform() < 0.3) {
                cc_base.push_back({a, b, graph_rng.uniform(0.1, 0.4)});
            }
        }
    }
    struct PpBase { int a, b; double w; };
    std::vector<PpBase> pp_base;
    for (int p = 0; p < np; ++p) {
        if (np > 1) pp_base.push_back({p, (p + 1) % np, graph_rng.uniform(0.4, 0.9)});
        if (np > 2 && graph_rng.uniform() < 0.5) pp_base.push_back({p, (p + 2) % np, graph_rng.uniform(0.2, 0.5)});
    }

    out.graph.n_companies = nc;
    out.graph.n_positions = np;
    out.graph.snapshots.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Rng month_rng(Rng::derive(cfg.seed, "synth.graph.month", static_cast<std::uint64_t>(t)));
        CPHG snap;
        snap.n_companies = nc;
        snap.n_positions = np;
        for (const CcBase& e : cc_base)
            snap.cc.push_back({e.a, e.b, e.w * month_rng.uniform(0.9, 1.1)});
        for (const PpBase& e : pp_base)
            snap.pp.push_back({e.a, e.b, e.w * month_rng.uniform(0.9, 1.1)});
        for (int c = 0; c < nc; ++c) {
            for (int p = 0; p < np; ++p) {
                const double level = volume[static_cast<std::size_t>(c)] * position_share(p, np);
                // log-compressed hiring intensity in roughly [0.3, 1.6]
                const double w = 0.3 + 0.18 * std::log1p(level * 0.05);
                snap.cp.push_back({c, p, w * month_rng.uniform(0.8, 1.2)});
            }
        }
        out.graph.snapshots.push_back(std::move(snap));
    }

    return out;
}

}  // namespace fedlmf
