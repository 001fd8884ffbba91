#pragma once

#include <cstdint>
#include <string>

#include "fedlmf/cluster.hpp"
#include "fedlmf/data.hpp"
#include "fedlmf/meta.hpp"
#include "fedlmf/model.hpp"
#include "fedlmf/objectives.hpp"

namespace fedlmf {

enum class Scheme { Global, Local, FedAvg, FedProx, Mpcac };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct Ablations {
    bool no_rl = false;   // drop the regularization loss
    bool no_mp = false;   // drop meta-personalization
    bool no_cac = false;  // replace clustering with plain FedAvg
};

struct TrainConfig {
    int rounds = 60;
    double sampling_rate = 0.3;  // r
    int batch_size = 64;
    bool eval_adapt = true;      // one adaptation step before evaluation
    int eval_batch = 64;         // adaptation batch cap
    int early_stop_patience = 20;
    int threads = 1;
};

struct ExperimentConfig {
    int version = 1;
    Scheme scheme = Scheme::Mpcac;
    std::uint64_t seed = 1;
    Ablations ablations;
    ModelConfig model;
    MetaConfig meta;
    LossSettings loss;
    CacConfig cac;
    TrainConfig train;
    SynthConfig synth;
};

void validate(const ExperimentConfig& cfg);

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);
std::string experiment_config_json(const ExperimentConfig& cfg);

}  // namespace fedlmf
