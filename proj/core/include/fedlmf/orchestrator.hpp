#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedlmf/cluster.hpp"
#include "fedlmf/config.hpp"
#include "fedlmf/data.hpp"
#include "fedlmf/metrics.hpp"
#include "fedlmf/rng.hpp"

namespace fedlmf {

/// One company's federated state. Optimizer state and the generator stream
/// are private to the client; nothing here is shared across clients, which is
/// what makes parallel local rounds safe.
struct ClientState {
    int client_id = 0;
    ClientDataset data;
    ParameterSet params;
    AdamState optimizer;
    Rng rng{0};

    double last_train_loss = 1.0;
    double last_val_loss = 1.0;       // drives sampling when not freshly trained
    bool sampled_this_round = false;
    double sampling_prob = 0.0;
    std::vector<double> fedprox_anchor;  // theta tilde of the last received aggregate
};

struct RoundReport {
    long round = 0;
    std::vector<int> sampled_ids;
    std::map<int, double> train_losses;
    double global_mean_loss = 0.0;
    std::optional<ClusterPlan> plan;
    double ari_vs_planted = -1.0;  // -1 when undefined (no clustering this round)
    TaskMetrics val_demand;
    TaskMetrics val_supply;

    double val_mean_accuracy() const { return 0.5 * (val_demand.accuracy + val_supply.accuracy); }
};

struct ExperimentResult {
    std::vector<RoundReport> rounds;
    TaskMetrics test_demand;
    TaskMetrics test_supply;
    std::map<int, ParameterSet> final_params;
    long completed_rounds = 0;
    bool early_stopped = false;
    double wall_seconds = 0.0;

    double test_mean_accuracy() const { return 0.5 * (test_demand.accuracy + test_supply.accuracy); }
};

// ---- individual operations (also driven directly by tests) -----------------

/// Distinct indices of N clients drawn without replacement, inclusion driven
/// by the probabilities (weighted reservoir, key u^{1/p}); output ascending.
std::vector<std::size_t> sample_clients(const std::vector<double>& probs, std::size_t n, Rng& rng);

/// Softmax of the losses with max subtraction.
std::vector<double> update_sampling_probs(const std::vector<double>& losses);

enum class Split { Train, Validation, Test };

struct EvalOutcome {
    TaskMetrics demand;
    TaskMetrics supply;
    std::map<int, double> per_client_loss;  // mean classification loss on the split
};

class Orchestrator {
public:
    Orchestrator(ExperimentConfig cfg, const FederatedDataset& data);

    /// One client's pass: loss on the support half, inner adaptation, meta
    /// gradient on the query half, outer update (or a plain Adam step when
    /// meta-personalization is off). Returns the recorded train loss.
    double local_round(ClientState& client, long round);

    /// Metrics over all clients on a split, personalized by one adaptation
    /// step when configured.
    EvalOutcome evaluate(Split split, long round) const;

    /// Full training loop with per-round persistence when out_dir is given.
    ExperimentResult run(const std::string& out_dir = "");

    const std::vector<ClientState>& clients() const { return clients_; }
    const ExperimentConfig& config() const { return cfg_; }

private:
    struct Resolved {
        bool use_meta = false;
        double lambda = 0.0;
        bool aggregate = false;  // any server-side averaging at all
        int pin_m = 0;           // forced cluster count (1 for plain FedAvg)
        bool fedprox_anchor = false;
    };

    Resolved resolve() const;
    ParameterSet adapt_for_eval(const ClientState& client, long round) const;
    std::vector<TrendSample> draw_batch(ClientState& client) const;

    ExperimentConfig cfg_;
    std::vector<ClientState> clients_;
    std::vector<GraphOperators> ops_;
    std::vector<int> regimes_;  // per company id
    LossWindow window_;
    Resolved mode_;
};

/// Plain-text persistence of per-client parameter sets.
void save_client_params(const std::map<int, ParameterSet>& params, const std::string& path);
std::map<int, ParameterSet> load_client_params(const std::string& path);

/// Mean accuracy / F1 / AUROC across the two tasks.
TaskMetrics mean_metrics(const TaskMetrics& a, const TaskMetrics& b);

}  // namespace fedlmf
