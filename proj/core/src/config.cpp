#include "fedlmf/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "fedlmf/errors.hpp"

namespace fedlmf {

using nlohmann::json;

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::Global: return "global";
        case Scheme::Local: return "local";
        case Scheme::FedAvg: return "fedavg";
        case Scheme::FedProx: return "fedprox";
        case Scheme::Mpcac: return "mpcac";
    }
    return "mpcac";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "global") return Scheme::Global;
    if (s == "local") return Scheme::Local;
    if (s == "fedavg") return Scheme::FedAvg;
    if (s == "fedprox") return Scheme::FedProx;
    if (s == "mpcac") return Scheme::Mpcac;
    throw ConfigError("unknown scheme '" + s + "'");
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.version != 1) throw ConfigError("unsupported config version");
    if (cfg.train.sampling_rate <= 0.0 || cfg.train.sampling_rate > 1.0)
        throw ConfigError("sampling_rate must be in (0, 1]");
    if (cfg.train.rounds < 1) throw ConfigError("rounds must be >= 1");
    if (cfg.train.batch_size < 1 || cfg.train.eval_batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (cfg.train.threads < 1) throw ConfigError("threads must be >= 1");
    validate(cfg.model);
    validate(cfg.meta);
    validate(cfg.synth);
}

namespace {

json to_json(const ExperimentConfig& c) {
    json j;
    j["version"] = c.version;
    j["scheme"] = to_string(c.scheme);
    j["seed"] = c.seed;
    j["ablations"] = {{"no_rl", c.ablations.no_rl}, {"no_mp", c.ablations.no_mp}, {"no_cac", c.ablations.no_cac}};
    j["model"] = {
        {"dim_t", c.model.dim_t},       {"dim_g", c.model.dim_g},
        {"n_heads", c.model.n_heads},   {"ff_dim", c.model.ff_dim},
        {"n_layers", c.model.n_layers}, {"mlp_out_dim", c.model.mlp_out_dim},
        {"n_classes", c.model.n_classes},
        {"l_min", c.model.l_min},       {"normalize_window_attn", c.model.normalize_window_attn},
        {"ln_eps", c.model.ln_eps},
    };
    j["meta"] = {
        {"alpha", c.meta.alpha},
        {"beta", c.meta.beta},
        {"first_order", c.meta.first_order},
        {"plain_sgd", c.meta.plain_sgd},
        {"adam",
         {{"lr", c.meta.adam.lr},
          {"beta1", c.meta.adam.beta1},
          {"beta2", c.meta.adam.beta2},
          {"eps", c.meta.adam.eps},
          {"weight_decay", c.meta.adam.weight_decay}}},
        {"lr_decay", {{"factor", c.meta.lr_decay.factor}, {"step", c.meta.lr_decay.step}}},
    };
    j["loss"] = {
        {"lambda", c.loss.lambda},
        {"mu", c.loss.mu},
        {"variant", c.loss.variant == LossVariant::Poisson ? "poisson" : "standard_nll"},
    };
    j["cac"] = {
        {"tau", c.cac.tau},
        {"warmup_rounds", c.cac.warmup_rounds},
        {"sigma_rbf", c.cac.sigma_rbf},
        {"pin_m", c.cac.pin_m},
        {"literal_polar", c.cac.literal_polar},
    };
    j["train"] = {
        {"rounds", c.train.rounds},
        {"sampling_rate", c.train.sampling_rate},
        {"batch_size", c.train.batch_size},
        {"eval_adapt", c.train.eval_adapt},
        {"eval_batch", c.train.eval_batch},
        {"early_stop_patience", c.train.early_stop_patience},
        {"threads", c.train.threads},
    };
    j["synth"] = {
        {"n_companies", c.synth.n_companies},
        {"n_positions", c.synth.n_positions},
        {"t_total", c.synth.t_total},
        {"n_regimes", c.synth.n_regimes},
        {"longtail_exponent", c.synth.longtail_exponent},
        {"demand_supply_coupling", c.synth.demand_supply_coupling},
        {"noise_scale", c.synth.noise_scale},
        {"seed", c.synth.seed},
        {"l_min", c.synth.l_min},
    };
    return j;
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    read_if(j, "version", c.version);
    if (j.contains("scheme")) c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    read_if(j, "seed", c.seed);
    if (j.contains("ablations")) {
        const json& a = j.at("ablations");
        read_if(a, "no_rl", c.ablations.no_rl);
        read_if(a, "no_mp", c.ablations.no_mp);
        read_if(a, "no_cac", c.ablations.no_cac);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        read_if(m, "dim_t", c.model.dim_t);
        read_if(m, "dim_g", c.model.dim_g);
        read_if(m, "n_heads", c.model.n_heads);
        read_if(m, "ff_dim", c.model.ff_dim);
        read_if(m, "n_layers", c.model.n_layers);
        read_if(m, "mlp_out_dim", c.model.mlp_out_dim);
        read_if(m, "n_classes", c.model.n_classes);
        read_if(m, "l_min", c.model.l_min);
        read_if(m, "normalize_window_attn", c.model.normalize_window_attn);
        read_if(m, "ln_eps", c.model.ln_eps);
    }
    if (j.contains("meta")) {
        const json& m = j.at("meta");
        read_if(m, "alpha", c.meta.alpha);
        read_if(m, "beta", c.meta.beta);
        read_if(m, "first_order", c.meta.first_order);
        read_if(m, "plain_sgd", c.meta.plain_sgd);
        if (m.contains("adam")) {
            const json& a = m.at("adam");
            read_if(a, "lr", c.meta.adam.lr);
            read_if(a, "beta1", c.meta.adam.beta1);
            read_if(a, "beta2", c.meta.adam.beta2);
            read_if(a, "eps", c.meta.adam.eps);
            read_if(a, "weight_decay", c.meta.adam.weight_decay);
        }
        if (m.contains("lr_decay")) {
            const json& d = m.at("lr_decay");
            read_if(d, "factor", c.meta.lr_decay.factor);
            read_if(d, "step", c.meta.lr_decay.step);
        }
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        read_if(l, "lambda", c.loss.lambda);
        read_if(l, "mu", c.loss.mu);
        if (l.contains("variant")) {
            const std::string v = l.at("variant").get<std::string>();
            if (v == "poisson") c.loss.variant = LossVariant::Poisson;
            else if (v == "standard_nll") c.loss.variant = LossVariant::StandardNll;
            else throw ConfigError("unknown loss variant '" + v + "'");
        }
    }
    if (j.contains("cac")) {
        const json& k = j.at("cac");
        read_if(k, "tau", c.cac.tau);
        read_if(k, "warmup_rounds", c.cac.warmup_rounds);
        read_if(k, "sigma_rbf", c.cac.sigma_rbf);
        read_if(k, "pin_m", c.cac.pin_m);
        read_if(k, "literal_polar", c.cac.literal_polar);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        read_if(t, "rounds", c.train.rounds);
        read_if(t, "sampling_rate", c.train.sampling_rate);
        read_if(t, "batch_size", c.train.batch_size);
        read_if(t, "eval_adapt", c.train.eval_adapt);
        read_if(t, "eval_batch", c.train.eval_batch);
        read_if(t, "early_stop_patience", c.train.early_stop_patience);
        read_if(t, "threads", c.train.threads);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        read_if(s, "n_companies", c.synth.n_companies);
        read_if(s, "n_positions", c.synth.n_positions);
        read_if(s, "t_total", c.synth.t_total);
        read_if(s, "n_regimes", c.synth.n_regimes);
        read_if(s, "longtail_exponent", c.synth.longtail_exponent);
        read_if(s, "demand_supply_coupling", c.synth.demand_supply_coupling);
        read_if(s, "noise_scale", c.synth.noise_scale);
        read_if(s, "seed", c.synth.seed);
        read_if(s, "l_min", c.synth.l_min);
    }
    return c;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    ExperimentConfig cfg = from_json(j);
    validate(cfg);
    return cfg;
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    f << to_json(cfg).dump(2) << '\n';
}

std::string experiment_config_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

}  // namespace fedlmf
