#pragma once

#include <array>
#include <vector>

#include "fedlmf/data.hpp"

namespace fedlmf {

/// Default bin edges on the relative change r = (next - last) / (last + 1e-6):
/// sharply decreasing | steady decreasing | stable | steady increasing | sharply increasing.
inline constexpr std::array<double, 4> kDefaultTrendThresholds = {-0.5, -0.1, 0.1, 0.5};

/// Sliding windows of length l_min with stride 1; each window min-max
/// normalized into [0, 1] (constant windows map to all zeros); the raw values
/// at the window end and one step past it are retained for labeling. A series
/// shorter than l_min + 1 yields an empty list, never an exception.
std::vector<WindowDraft> segment_and_normalize(const RawSeries& series, int l_min);

/// Bin index of the relative change among the ascending thresholds
/// (0 = sharply decreasing ... 4 = sharply increasing).
int quantize_trend(double last_value, double next_value,
                   const std::array<double, 4>& thresholds = kDefaultTrendThresholds);

/// Segmentation plus labeling of both tasks.
std::vector<TrendSample> build_samples(const RawSeries& series, int l_min,
                                       const std::array<double, 4>& thresholds = kDefaultTrendThresholds);

/// One ClientDataset per company with a chronological 70/10/20 split; window
/// end-times never straddle a split boundary, so every test window ends
/// strictly later than every train window. Clients whose train split comes
/// out empty are dropped and reported.
struct PartitionResult {
    std::vector<ClientDataset> clients;
    std::vector<int> dropped_companies;
};

PartitionResult partition_clients(const std::vector<TrendSample>& samples);

}  // namespace fedlmf
