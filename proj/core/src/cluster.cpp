#include "fedlmf/cluster.hpp"

#include <algorithm>
#include <cmath>

#include "fedlmf/errors.hpp"

namespace fedlmf {

void LossWindow::push(double loss) {
    values_.push_back(loss);
    while (values_.size() > capacity_) values_.pop_front();
}

std::pair<double, double> loss_window_stats(const LossWindow& w) {
    if (w.empty()) throw ContractError("loss_window_stats: empty window");
    const auto& v = w.values();
    double mu = 0.0;
    for (const double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double var = 0.0;
    for (const double x : v) var += (x - mu) * (x - mu);
    var /= static_cast<double>(v.size());
    return {mu, std::max(var, 1e-12)};
}

double convergence_degree(double l_now, double mu, double var) {
    if (var <= 0.0) throw ContractError("convergence_degree: variance must be positive");
    const double z = (l_now - mu) / std::sqrt(var);
    const double phi = 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
    const double rho = 1.0 - 2.0 * std::fabs(phi - 0.5);
    return std::max(rho, 1e-300);  // keep rho in (0, 1]
}

int cluster_count(long n, double rho, int n_clients) {
    if (n < 1) throw ContractError("cluster_count: round index must be >= 1");
    if (n_clients < 1) throw ContractError("cluster_count: need at least one client");
    const double raw = 1.0 + std::sqrt(static_cast<double>(n)) * std::exp(rho);
    const long floored = static_cast<long>(std::floor(raw));
    return static_cast<int>(std::min<long>(floored, n_clients));
}

NDArray affinity(const std::vector<ClientFeature>& features, double sigma_rbf) {
    const std::size_t n = features.size();
    if (n < 2) throw ContractError("affinity: need at least two clients");
    const std::size_t d = features[0].theta_tilde.size();
    for (const ClientFeature& f : features)
        if (f.theta_tilde.size() != d) throw ContractError("affinity: feature dimensions differ");

    std::vector<double> sq(n * n, 0.0);
    std::vector<double> off_diag;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = features[i].theta_tilde[k] - features[j].theta_tilde[k];
                s += diff * diff;
            }
            sq[i * n + j] = sq[j * n + i] = s;
            off_diag.push_back(s);
        }
    }

    double sigma = sigma_rbf;
    if (sigma <= 0.0) {
        std::sort(off_diag.begin(), off_diag.end());
        const double median = off_diag[off_diag.size() / 2];
        sigma = std::sqrt(std::max(median, 1e-300) / 2.0);
    }

    NDArray s = NDArray::zeros({n, n});
    const double denom = 2.0 * sigma * sigma;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            s.data[i * n + j] = std::exp(-sq[i * n + j] / denom);
    return s;
}

NDArray normalized_laplacian(const NDArray& s) {
    const std::size_t n = s.rows();
    if (s.cols() != n) throw ContractError("normalized_laplacian: matrix must be square");
    std::vector<double> degree(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) degree[i] += s.data[i * n + j];
    for (const double d : degree)
        if (d <= 0.0) throw ContractError("normalized_laplacian: zero-degree row");

    NDArray l = NDArray::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double norm = std::sqrt(degree[i]) * std::sqrt(degree[j]);
            const double w = s.data[i * n + j] / norm;
            l.data[i * n + j] = (i == j ? 1.0 : 0.0) - w;
        }
    }
    return l;
}

namespace {

double off_diagonal_norm(const NDArray& a) {
    const std::size_t n = a.rows();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) s += a.data[i * n + j] * a.data[i * n + j];
    return std::sqrt(s);
}

}  // namespace

EigResult jacobi_eigendecompose(const NDArray& symmetric) {
    const std::size_t n = symmetric.rows();
    if (symmetric.cols() != n) throw ContractError("jacobi: matrix must be square");
    double scale = 0.0;
    for (const double v : symmetric.data) scale = std::max(scale, std::fabs(v));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::fabs(symmetric.data[i * n + j] - symmetric.data[j * n + i]) > 1e-12 * std::max(1.0, scale))
                throw ContractError("jacobi: matrix is not symmetric");

    NDArray a = symmetric;
    NDArray v = NDArray::identity(n);

    const double tol = 1e-10;
    const int max_sweeps = 128;
    int sweep = 0;
    while (off_diagonal_norm(a) >= tol) {
        if (++sweep > max_sweeps) throw NumericsError("jacobi: did not converge");
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a.data[p * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = a.data[p * n + p];
                const double aqq = a.data[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                a.data[p * n + q] = 0.0;
                a.data[q * n + p] = 0.0;
                a.data[p * n + p] = app - t * apq;
                a.data[q * n + q] = aqq + t * apq;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r != p && r != q) {
                        const double arp = a.data[r * n + p];
                        const double arq = a.data[r * n + q];
                        a.data[r * n + p] = a.data[p * n + r] = arp - s * (arq + tau * arp);
                        a.data[r * n + q] = a.data[q * n + r] = arq + s * (arp - tau * arq);
                    }
                    const double vrp = v.data[r * n + p];
                    const double vrq = v.data[r * n + q];
                    v.data[r * n + p] = vrp - s * (vrq + tau * vrp);
                    v.data[r * n + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&a, n](std::size_t x, std::size_t y) { return a.data[x * n + x] < a.data[y * n + y]; });

    EigResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = NDArray::zeros({n, n});
    for (std::size_t k = 0; k < n; ++k) {
        out.eigenvalues[k] = a.data[order[k] * n + order[k]];
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors.data[r * n + k] = v.data[r * n + order[k]];
    }
    return out;
}

NDArray sym_eigs(const NDArray& symmetric, int k) {
    const std::size_t n = symmetric.rows();
    if (k < 1 || static_cast<std::size_t>(k) > n) throw ContractError("sym_eigs: k out of range");
    const EigResult eig = jacobi_eigendecompose(symmetric);
    NDArray v = NDArray::zeros({static_cast<std::size_t>(k), n});
    for (int row = 0; row < k; ++row)
        for (std::size_t c = 0; c < n; ++c)
            v.data[static_cast<std::size_t>(row) * n + c] = eig.eigenvectors.data[c * n + static_cast<std::size_t>(row)];
    return v;
}

namespace {

/// Pivot order of a column-pivoted Householder QR of a (modified in place).
std::vector<int> cpqr_pivots(NDArray a, int steps) {
    const std::size_t k = a.rows(), n = a.cols();
    std::vector<int> perm(n);
    for (std::size_t j = 0; j < n; ++j) perm[j] = static_cast<int>(j);

    const std::size_t limit = std::min<std::size_t>(static_cast<std::size_t>(steps), std::min(k, n));
    for (std::size_t step = 0; step < limit; ++step) {
        // Greedy pivot: largest residual column norm below the current row.
        std::size_t best = step;
        double best_norm = -1.0;
        for (std::size_t j = step; j < n; ++j) {
            double s = 0.0;
            for (std::size_t r = step; r < k; ++r) s += a.data[r * n + j] * a.data[r * n + j];
            if (s > best_norm + 1e-15) {
                best_norm = s;
                best = j;
            }
        }
        if (best != step) {
            for (std::size_t r = 0; r < k; ++r) std::swap(a.data[r * n + step], a.data[r * n + best]);
            std::swap(perm[step], perm[best]);
        }

        // Householder reflector for the pivot column.
        double norm = 0.0;
        for (std::size_t r = step; r < k; ++r) norm += a.data[r * n + step] * a.data[r * n + step];
        norm = std::sqrt(norm);
        if (norm < 1e-300) continue;
        std::vector<double> u(k - step);
        const double a0 = a.data[step * n + step];
        const double alpha = a0 >= 0.0 ? -norm : norm;
        u[0] = a0 - alpha;
        for (std::size_t r = step + 1; r < k; ++r) u[r - step] = a.data[r * n + step];
        double unorm2 = 0.0;
        for (const double x : u) unorm2 += x * x;
        if (unorm2 < 1e-300) continue;
        for (std::size_t j = step; j < n; ++j) {
            double proj = 0.0;
            for (std::size_t r = step; r < k; ++r) proj += u[r - step] * a.data[r * n + j];
            const double f = 2.0 * proj / unorm2;
            for (std::size_t r = step; r < k; ++r) a.data[r * n + j] -= f * u[r - step];
        }
    }
    return perm;
}

/// Polar factor U of a square matrix C = U H (H PSD) via the symmetric
/// eigendecomposition of C^T C. Falls back to the identity on rank
/// deficiency.
NDArray polar_factor(const NDArray& c, bool* degenerate) {
    const std::size_t m = c.rows();
    const NDArray ctc = matmul(transpose(c), c);
    const EigResult eig = jacobi_eigendecompose(ctc);
    const double lmax = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues.back();
    if (lmax <= 0.0 || eig.eigenvalues.front() < 1e-12 * lmax) {
        if (degenerate) *degenerate = true;
        return NDArray::identity(m);
    }
    // U = C B diag(1/sqrt(lambda)) B^T
    NDArray scaled = eig.eigenvectors;  // columns B
    for (std::size_t col = 0; col < m; ++col) {
        const double inv = 1.0 / std::sqrt(eig.eigenvalues[col]);
        for (std::size_t r = 0; r < m; ++r) scaled.data[r * m + col] *= inv;
    }
    return matmul(matmul(c, scaled), transpose(eig.eigenvectors));
}

}  // namespace

CpqrResult cpqr_assign_full(const NDArray& v, int m, bool literal_polar) {
    const std::size_t k = v.rows(), n = v.cols();
    if (m < 1 || static_cast<std::size_t>(m) > n) throw ContractError("cpqr_assign: m out of range");
    if (static_cast<std::size_t>(m) != k) throw ContractError("cpqr_assign: expected k == m eigenvector rows");

    CpqrResult out;
    out.pivots = cpqr_pivots(v, m);

    const std::size_t mm = static_cast<std::size_t>(m);
    if (literal_polar) {
        // Literal reading: polar-factorize the permutation selection itself.
        // A permutation block is already orthogonal, so U carries no
        // information from the eigenvector geometry.
        out.selected = NDArray::identity(mm);
        out.polar_u = polar_factor(out.selected, &out.degenerate);
    } else {
        out.selected = NDArray::zeros({mm, mm});
        for (std::size_t col = 0; col < mm; ++col) {
            const std::size_t src = static_cast<std::size_t>(out.pivots[col]);
            for (std::size_t r = 0; r < mm; ++r) out.selected.data[r * mm + col] = v.data[r * n + src];
        }
        out.polar_u = polar_factor(out.selected, &out.degenerate);
    }

    const NDArray scores = matmul(transpose(out.polar_u), v);  // m x n
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double best_val = -1.0;
        for (int j = 0; j < m; ++j) {
            const double val = std::fabs(scores.data[static_cast<std::size_t>(j) * n + i]);
            if (val > best_val + 1e-15) {
                best_val = val;
                best = j;
            }
        }
        out.labels[i] = best;
    }
    return out;
}

std::vector<int> cpqr_assign(const NDArray& v, int m, bool literal_polar) {
    return cpqr_assign_full(v, m, literal_polar).labels;
}

ParameterSet cluster_fedavg(const std::vector<const ParameterSet*>& members) {
    if (members.empty()) throw ContractError("cluster_fedavg: empty cluster");
    return mean_of(members);
}

CacResult cac_round(const std::vector<CacInput>& clients, long round, double l_now,
                    const LossWindow& window, const CacConfig& cfg) {
    if (clients.empty()) throw ContractError("cac_round: no active clients");
    const int n_active = static_cast<int>(clients.size());

    CacResult result;
    result.plan.round = round;

    double rho = 1.0;
    if (round >= cfg.warmup_rounds && !window.empty()) {
        const auto [mu, var] = loss_window_stats(window);
        rho = convergence_degree(l_now, mu, var);
    }
    result.plan.rho = rho;

    int m = cfg.pin_m > 0 ? std::min(cfg.pin_m, n_active) : cluster_count(round, rho, n_active);
    result.plan.m = m;

    std::vector<int> labels(clients.size(), 0);
    if (m == 1) {
        // global FedAvg
    } else if (m == n_active) {
        for (std::size_t i = 0; i < clients.size(); ++i) labels[i] = static_cast<int>(i);
    } else {
        std::vector<ClientFeature> features;
        features.reserve(clients.size());
        for (const CacInput& c : clients) features.push_back({c.client_id, c.feature});
        const NDArray s = affinity(features, cfg.sigma_rbf);
        const NDArray lap = normalized_laplacian(s);
        const NDArray v = sym_eigs(lap, m);
        labels = cpqr_assign(v, m, cfg.literal_polar);
    }

    for (std::size_t i = 0; i < clients.size(); ++i)
        result.plan.assignment[clients[i].client_id] = labels[i];

    // Per-cluster unweighted FedAvg; every member receives its cluster mean.
    result.updated.resize(clients.size());
    for (int cluster = 0; cluster < m; ++cluster) {
        std::vector<const ParameterSet*> members;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < clients.size(); ++i) {
            if (labels[i] == cluster) {
                members.push_back(clients[i].params);
                idx.push_back(i);
            }
        }
        if (members.empty()) continue;  // CPQR may leave a cluster empty
        const ParameterSet mean = cluster_fedavg(members);
        for (const std::size_t i : idx) result.updated[i] = mean;
    }
    return result;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw ContractError("adjusted_rand_index: size mismatch");
    const std::size_t n = a.size();
    if (n < 2) return 1.0;

    std::map<std::pair<int, int>, long> cells;
    std::map<int, long> rows, cols;
    for (std::size_t i = 0; i < n; ++i) {
        cells[{a[i], b[i]}] += 1;
        rows[a[i]] += 1;
        cols[b[i]] += 1;
    }
    auto choose2 = [](long x) { return static_cast<double>(x) * (x - 1) / 2.0; };
    double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, c] : cells) sum_cells += choose2(c);
    for (const auto& [key, c] : rows) sum_rows += choose2(c);
    for (const auto& [key, c] : cols) sum_cols += choose2(c);
    const double total = choose2(static_cast<long>(n));
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;  // both partitions trivial
    return (sum_cells - expected) / (max_index - expected);
}

}  // namespace fedlmf
