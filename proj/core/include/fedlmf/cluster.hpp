#pragma once

#include <deque>
#include <map>
#include <utility>
#include <vector>

#include "fedlmf/ndarray.hpp"
#include "fedlmf/param_set.hpp"

namespace fedlmf {

/// Ring of the last tau global mean training losses.
class LossWindow {
public:
    explicit LossWindow(std::size_t capacity = 5) : capacity_(capacity) {}
    void push(double loss);
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    const std::deque<double>& values() const { return values_; }

private:
    std::size_t capacity_;
    std::deque<double> values_;
};

/// Mean and population variance of the window, variance floored at 1e-12.
/// Throws ContractError on an empty window.
std::pair<double, double> loss_window_stats(const LossWindow& w);

/// Appearance probability of the current loss under N(mu, var):
/// rho = 1 - 2 |Phi((l - mu)/sigma) - 1/2|, clamped into (0, 1].
double convergence_degree(double l_now, double mu, double var);

/// m = min(floor(1 + sqrt(n) e^rho), n_clients) for round n >= 1.
int cluster_count(long n, double rho, int n_clients);

/// Client feature for the affinity computation: the mean of that client's
/// dynamic position embedding rows.
struct ClientFeature {
    int client_id = 0;
    std::vector<double> theta_tilde;
};

/// RBF affinity s_ij = exp(-||f_i - f_j||^2 / (2 sigma^2)); sigma <= 0 picks
/// the median heuristic sqrt(median pairwise squared distance / 2).
NDArray affinity(const std::vector<ClientFeature>& features, double sigma_rbf = 0.0);

/// L = D^{-1/2} (D - W) D^{-1/2} with W = S. Throws ContractError on a
/// zero-degree row (cannot occur for an RBF affinity with unit diagonal).
NDArray normalized_laplacian(const NDArray& s);

/// Full symmetric eigendecomposition by cyclic Jacobi rotations, iterated
/// until the off-diagonal Frobenius norm drops below 1e-10.
struct EigResult {
    std::vector<double> eigenvalues;  // ascending
    NDArray eigenvectors;             // columns, same order
};

EigResult jacobi_eigendecompose(const NDArray& symmetric);

/// Orthonormal eigenvectors of the k smallest eigenvalues, returned
/// row-stacked (k x N) ready for the CPQR step.
NDArray sym_eigs(const NDArray& symmetric, int k);

/// Column-pivoted QR based assignment. Pivot columns of V seed the cluster
/// representatives; the polar factor of the selected m x m block aligns the
/// embedding, and each client takes argmax_j |U^T V|_{j,i} (ties to the
/// lowest j). The literal variant polar-factorizes the permutation selection
/// itself, which is orthogonal already and therefore degenerate; it is kept
/// behind the flag for demonstration.
struct CpqrResult {
    std::vector<int> pivots;   // CPQR pivot order over columns of V
    NDArray selected;          // m x m matrix that was polar-factorized
    NDArray polar_u;           // orthogonal factor
    bool degenerate = false;   // rank-deficient fallback U = I was taken
    std::vector<int> labels;   // cluster per client (column of V)
};

CpqrResult cpqr_assign_full(const NDArray& v, int m, bool literal_polar = false);
std::vector<int> cpqr_assign(const NDArray& v, int m, bool literal_polar = false);

/// Unweighted mean of the member parameter sets. Throws on an empty cluster.
ParameterSet cluster_fedavg(const std::vector<const ParameterSet*>& members);

struct ClusterPlan {
    long round = 0;
    double rho = 1.0;
    int m = 1;
    std::map<int, int> assignment;  // client id -> cluster in [0, m)
};

struct CacConfig {
    std::size_t tau = 5;
    int warmup_rounds = 10;   // rho pinned to 1 before this round
    double sigma_rbf = 0.0;   // 0 = median heuristic
    int pin_m = 0;            // 0 = use the convergence formula
    bool literal_polar = false;
};

struct CacInput {
    int client_id = 0;
    const ParameterSet* params = nullptr;
    std::vector<double> feature;  // theta tilde
};

struct CacResult {
    ClusterPlan plan;
    std::vector<ParameterSet> updated;  // parallel to the input order
};

/// One aggregation round: convergence degree -> cluster count -> affinity ->
/// normalized Laplacian -> eigenvectors (k = m) -> CPQR assignment ->
/// per-cluster FedAvg. m == 1 short-circuits to global FedAvg and
/// m == n_clients to a no-op with singleton clusters.
CacResult cac_round(const std::vector<CacInput>& clients, long round, double l_now,
                    const LossWindow& window, const CacConfig& cfg);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace fedlmf
