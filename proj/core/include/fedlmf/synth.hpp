#pragma once

#include <utility>
#include <vector>

#include "fedlmf/data.hpp"

namespace fedlmf {

/// Synthetic labor-market generator. Each company belongs to one latent
/// regime; demand follows a regime trend plus regime-phased seasonality with
/// multiplicative noise; supply couples to lagged demand; per-company volumes
/// follow a power law; job-hopping edges are stronger within a regime than
/// across regimes. Deterministic given cfg.seed.
struct SynthOutput {
    std::vector<RawSeries> series;
    DyCPGraph graph;
    std::vector<int> regimes;  // per company
};

SynthOutput synth_generate(const SynthConfig& cfg);

/// Regime of a company under the generator's round-robin assignment.
int regime_of(int company_id, int n_regimes);

/// Supply lags demand by the regime index (regime 0 has zero lag).
int regime_lag(int regime);

}  // namespace fedlmf
