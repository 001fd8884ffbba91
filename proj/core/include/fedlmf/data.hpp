#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedlmf/graph.hpp"

namespace fedlmf {

/// Monthly demand/supply counts for one (company, position) pair.
struct RawSeries {
    int company_id = 0;
    int position_id = 0;
    int start_timestamp = 0;           // global month index of the first entry
    std::vector<double> demand;        // nonnegative counts
    std::vector<double> supply;        // same length as demand

    std::size_t length() const { return demand.size(); }
};

/// One supervised instance: aligned normalized windows plus next-step trend
/// labels. global_t2 = global_t1 + window length - 1.
struct TrendSample {
    int company_id = 0;
    int position_id = 0;
    int global_t1 = 0;
    int global_t2 = 0;
    std::vector<double> demand_window;  // length L, min-max normalized per window
    std::vector<double> supply_window;  // length L
    int demand_label = 0;               // in {0 .. n_classes-1}
    int supply_label = 0;
};

/// Window plus the raw values needed to label it; segmentation emits these,
/// labeling consumes them.
struct WindowDraft {
    TrendSample sample;
    double demand_last = 0.0, demand_next = 0.0;
    double supply_last = 0.0, supply_next = 0.0;
};

/// One company's private data with a chronological train/validation/test split.
struct ClientDataset {
    int company_id = 0;
    std::vector<TrendSample> train;
    std::vector<TrendSample> validation;
    std::vector<TrendSample> test;

    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

/// Synthetic generator configuration.
struct SynthConfig {
    int n_companies = 30;
    int n_positions = 11;
    int t_total = 60;                       // months
    int n_regimes = 3;                      // planted client groups
    double longtail_exponent = 2.0;
    double demand_supply_coupling = 0.8;    // in [0, 1]
    double noise_scale = 0.1;
    std::uint64_t seed = 1;

    int l_min = 12;                         // window length used downstream
};

void validate(const SynthConfig& cfg);

/// Everything one experiment consumes: per-client samples, the shared graph,
/// and generator metadata (planted regimes never enter training features).
struct FederatedDataset {
    std::vector<ClientDataset> clients;
    DyCPGraph graph;
    SynthConfig config;                     // echo of the generating config
    std::vector<int> regimes;               // regime id per company
    std::vector<int> dropped_companies;     // companies removed for empty train splits
};

}  // namespace fedlmf
