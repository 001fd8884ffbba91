#include "fedlmf/preprocess.hpp"

#include <algorithm>
#include <map>

#include "fedlmf/errors.hpp"

namespace fedlmf {

namespace {
std::vector<double> minmax_normalize(const std::vector<double>& w) {
    double lo = w[0], hi = w[0];
    for (const double v : w) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<double> out(w.size(), 0.0);
    if (hi > lo) {
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = (w[i] - lo) / (hi - lo);
    }
    return out;
}
}  // namespace

std::vector<WindowDraft> segment_and_normalize(const RawSeries& series, int l_min) {
    std::vector<WindowDraft> out;
    if (l_min < 1) throw ContractError("l_min must be positive");
    const std::size_t len = series.length();
    if (series.supply.size() != len) throw ContractError("demand/supply length mismatch");
    const std::size_t L = static_cast<std::size_t>(l_min);
    if (len < L + 1) return out;  // too short: one step is reserved for the label

    for (std::size_t start = 0; start + L < len; ++start) {
        WindowDraft d;
        d.sample.company_id = series.company_id;
        d.sample.position_id = series.position_id;
        d.sample.global_t1 = series.start_timestamp + static_cast<int>(start);
        d.sample.global_t2 = d.sample.global_t1 + l_min - 1;

        std::vector<double> dw(series.demand.begin() + static_cast<long>(start),
                               series.demand.begin() + static_cast<long>(start + L));
        std::vector<double> sw(series.supply.begin() + static_cast<long>(start),
                               series.supply.begin() + static_cast<long>(start + L));
        d.demand_last = dw.back();
        d.supply_last = sw.back();
        d.demand_next = series.demand[start + L];
        d.supply_next = series.supply[start + L];
        d.sample.demand_window = minmax_normalize(dw);
        d.sample.supply_window = minmax_normalize(sw);
        out.push_back(std::move(d));
    }
    return out;
}

int quantize_trend(double last_value, double next_value, const std::array<double, 4>& thresholds) {
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (thresholds[i] <= thresholds[i - 1]) throw ContractError("thresholds must be ascending");
    }
    const double r = (next_value - last_value) / (last_value + 1e-6);
    int label = 0;
    for (const double t : thresholds) {
        if (r >= t) ++label;
    }
    return label;
}

std::vector<TrendSample> build_samples(const RawSeries& series, int l_min,
                                       const std::array<double, 4>& thresholds) {
    std::vector<TrendSample> out;
    for (WindowDraft& d : segment_and_normalize(series, l_min)) {
        d.sample.demand_label = quantize_trend(d.demand_last, d.demand_next, thresholds);
        d.sample.supply_label = quantize_trend(d.supply_last, d.supply_next, thresholds);
        out.push_back(std::move(d.sample));
    }
    return out;
}

PartitionResult partition_clients(const std::vector<TrendSample>& samples) {
    std::map<int, std::vector<TrendSample>> by_company;
    for (const TrendSample& s : samples) by_company[s.company_id].push_back(s);

    PartitionResult result;
    for (auto& [company, list] : by_company) {
        std::sort(list.begin(), list.end(), [](const TrendSample& a, const TrendSample& b) {
            if (a.global_t2 != b.global_t2) return a.global_t2 < b.global_t2;
            if (a.position_id != b.position_id) return a.position_id < b.position_id;
            return a.global_t1 < b.global_t1;
        });

        // Bucket by window end time and split whole buckets so that the
        // chronological boundary is strict.
        std::vector<std::pair<int, std::vector<TrendSample>>> buckets;
        for (const TrendSample& s : list) {
            if (buckets.empty() || buckets.back().first != s.global_t2)
                buckets.push_back({s.global_t2, {}});
            buckets.back().second.push_back(s);
        }

        const double total = static_cast<double>(list.size());
        ClientDataset ds;
        ds.company_id = company;
        std::size_t placed = 0;
        for (auto& [t2, bucket] : buckets) {
            const double frac_before = static_cast<double>(placed) / total;
            std::vector<TrendSample>* dest = &ds.test;
            if (frac_before < 0.7) dest = &ds.train;
            else if (frac_before < 0.8) dest = &ds.validation;
            placed += bucket.size();
            dest->insert(dest->end(), bucket.begin(), bucket.end());
        }

        if (ds.train.empty()) {
            result.dropped_companies.push_back(company);
        } else {
            result.clients.push_back(std::move(ds));
        }
    }
    return result;
}

}  // namespace fedlmf
