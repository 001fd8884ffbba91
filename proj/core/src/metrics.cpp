#include "fedlmf/metrics.hpp"

#include <algorithm>
#include <cstddef>

#include "fedlmf/errors.hpp"

namespace fedlmf {

double binary_auroc(const std::vector<double>& scores, const std::vector<char>& is_positive) {
    if (scores.size() != is_positive.size()) throw ContractError("binary_auroc: size mismatch");
    const std::size_t n = scores.size();
    long pos = 0;
    for (const char b : is_positive) pos += b ? 1 : 0;
    const long neg = static_cast<long>(n) - pos;
    if (pos == 0 || neg == 0) return -1.0;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    // Sweep descending scores; trapezoid over each tie group.
    double area = 0.0;
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        double group_tp = 0.0, group_fp = 0.0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (is_positive[order[j]]) group_tp += 1.0;
            else group_fp += 1.0;
            ++j;
        }
        area += group_fp * (tp + group_tp / 2.0);
        tp += group_tp;
        fp += group_fp;
        i = j;
    }
    (void)fp;
    return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

TaskMetrics compute_metrics(const std::vector<int>& y_true,
                            const std::vector<std::vector<double>>& class_scores, int n_classes) {
    const std::size_t n = y_true.size();
    if (class_scores.size() != n) throw ContractError("compute_metrics: size mismatch");
    if (n == 0) return {};

    std::vector<int> y_pred(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double>& s = class_scores[i];
        int best = 0;
        for (int c = 1; c < n_classes; ++c)
            if (s[static_cast<std::size_t>(c)] > s[static_cast<std::size_t>(best)]) best = c;
        y_pred[i] = best;
    }

    TaskMetrics out;
    long correct = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (y_pred[i] == y_true[i]) ++correct;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    // Support-weighted F1.
    double f1_sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        long tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool truth = y_true[i] == c;
            const bool pred = y_pred[i] == c;
            if (truth) ++support;
            if (truth && pred) ++tp;
            if (!truth && pred) ++fp;
            if (truth && !pred) ++fn;
        }
        if (support == 0) continue;
        const double denom = 2.0 * tp + fp + fn;
        const double f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
        f1_sum += f1 * static_cast<double>(support) / static_cast<double>(n);
    }
    out.weighted_f1 = f1_sum;

    // Support-weighted one-vs-rest AUROC; classes without both positives and
    // negatives are skipped and the weights renormalized over the rest.
    double auc_sum = 0.0;
    double weight_sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> scores(n);
        std::vector<char> positive(n);
        long support = 0;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = class_scores[i][static_cast<std::size_t>(c)];
            positive[i] = y_true[i] == c ? 1 : 0;
            if (positive[i]) ++support;
        }
        const double auc = binary_auroc(scores, positive);
        if (auc < 0.0) continue;
        auc_sum += auc * static_cast<double>(support);
        weight_sum += static_cast<double>(support);
    }
    out.auroc = weight_sum > 0.0 ? auc_sum / weight_sum : 0.0;
    return out;
}

}  // namespace fedlmf
