#pragma once

#include <vector>

namespace fedlmf {

struct TaskMetrics {
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    double auroc = 0.0;
};

/// Binary AUROC of positive-class scores, trapezoidal over tie groups
/// (equivalent to pairwise counting with half credit for ties). Returns -1
/// when either class is absent.
double binary_auroc(const std::vector<double>& scores, const std::vector<char>& is_positive);

/// Micro accuracy, support-weighted one-vs-rest F1, and support-weighted
/// one-vs-rest AUROC over per-class scores (callers pass exp(eta)).
/// Classes absent from the truth are skipped in the F1/AUROC weighting.
TaskMetrics compute_metrics(const std::vector<int>& y_true,
                            const std::vector<std::vector<double>>& class_scores, int n_classes);

}  // namespace fedlmf
