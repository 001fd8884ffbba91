#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fedlmf/cluster.hpp"
#include "fedlmf/config.hpp"
#include "fedlmf/dataset_io.hpp"
#include "fedlmf/errors.hpp"
#include "fedlmf/orchestrator.hpp"
#include "fedlmf/preprocess.hpp"
#include "fedlmf/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedlmf;

namespace {

std::string resolve_out_dir(const std::string& cli_value, const std::string& fallback) {
    if (!cli_value.empty()) return cli_value;
    if (const char* env = std::getenv("FEDLMF_OUT")) {
        if (*env) return std::string(env) + "/" + fallback;
    }
    return "runs/" + fallback;
}

FederatedDataset build_dataset(const SynthConfig& cfg) {
    const SynthOutput synth = synth_generate(cfg);
    std::vector<TrendSample> samples;
    for (const RawSeries& s : synth.series) {
        const auto built = build_samples(s, cfg.l_min);
        samples.insert(samples.end(), built.begin(), built.end());
    }
    PartitionResult part = partition_clients(samples);
    for (const int id : part.dropped_companies)
        std::cerr << "warning: company " << id << " dropped (empty train split)\n";
    FederatedDataset ds;
    ds.clients = std::move(part.clients);
    ds.dropped_companies = std::move(part.dropped_companies);
    ds.graph = synth.graph;
    ds.config = cfg;
    ds.regimes = synth.regimes;
    return ds;
}

json metrics_json(const TaskMetrics& m) {
    return {{"accuracy", m.accuracy}, {"weighted_f1", m.weighted_f1}, {"auroc", m.auroc}};
}

int cmd_synth(const std::string& config_path, std::uint64_t seed, bool seed_set,
              const std::string& out) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    if (seed_set) cfg.synth.seed = seed;
    const FederatedDataset ds = build_dataset(cfg.synth);
    save_dataset(ds, out);
    std::size_t total = 0;
    for (const ClientDataset& c : ds.clients) total += c.total();
    std::cout << "wrote " << ds.clients.size() << " clients, " << total << " samples, "
              << ds.graph.length() << " graph snapshots to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& data_dir,
              const std::string& out) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    cfg.seed = seed;

    FederatedDataset ds;
    if (!data_dir.empty()) {
        ds = load_dataset(data_dir);
        cfg.model.l_min = ds.config.l_min;
    } else {
        cfg.synth.seed = seed;
        ds = build_dataset(cfg.synth);
        cfg.model.l_min = cfg.synth.l_min;
    }

    Orchestrator orch(cfg, ds);
    const ExperimentResult res = orch.run(out);
    std::cout << "scheme=" << to_string(cfg.scheme) << " rounds=" << res.completed_rounds
              << (res.early_stopped ? " (early stop)" : "") << "\n"
              << "test accuracy demand=" << res.test_demand.accuracy
              << " supply=" << res.test_supply.accuracy << " mean=" << res.test_mean_accuracy() << "\n"
              << "outputs in " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& run_dir, const std::string& data_dir, const std::string& split) {
    const ExperimentConfig cfg = load_experiment_config((fs::path(run_dir) / "config.json").string());
    const FederatedDataset ds = load_dataset(data_dir);
    const std::map<int, ParameterSet> params = load_client_params((fs::path(run_dir) / "params.tsv").string());
    const std::vector<GraphOperators> ops = build_operators(ds.graph);

    std::vector<int> yd, ys;
    std::vector<std::vector<double>> sd, ss;
    for (const ClientDataset& c : ds.clients) {
        const auto it = params.find(c.company_id);
        if (it == params.end()) continue;
        const std::vector<TrendSample>* samples = &c.test;
        if (split == "train") samples = &c.train;
        else if (split == "val") samples = &c.validation;
        const std::vector<PredictionOutput> preds = predict(it->second, cfg.model, ops, *samples);
        for (std::size_t i = 0; i < samples->size(); ++i) {
            yd.push_back((*samples)[i].demand_label);
            ys.push_back((*samples)[i].supply_label);
            std::vector<double> pd(preds[i].eta_demand.size()), ps(preds[i].eta_supply.size());
            for (std::size_t k = 0; k < pd.size(); ++k) pd[k] = std::exp(preds[i].eta_demand[k]);
            for (std::size_t k = 0; k < ps.size(); ++k) ps[k] = std::exp(preds[i].eta_supply[k]);
            sd.push_back(std::move(pd));
            ss.push_back(std::move(ps));
        }
    }
    const TaskMetrics md = compute_metrics(yd, sd, cfg.model.n_classes);
    const TaskMetrics ms = compute_metrics(ys, ss, cfg.model.n_classes);
    json out;
    out["split"] = split;
    out["samples"] = yd.size();
    out["demand"] = metrics_json(md);
    out["supply"] = metrics_json(ms);
    out["mean"] = metrics_json(mean_metrics(md, ms));
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_cluster_trace(const std::string& run_dir, const std::string& data_dir) {
    std::ifstream assignments(fs::path(run_dir) / "assignments.csv");
    if (!assignments) throw ConfigError("no assignments.csv in '" + run_dir + "'");
    std::ifstream rounds(fs::path(run_dir) / "rounds.csv");
    if (!rounds) throw ConfigError("no rounds.csv in '" + run_dir + "'");

    std::vector<int> regimes;
    if (!data_dir.empty()) regimes = load_dataset(data_dir).regimes;

    // round -> (client -> cluster)
    std::map<long, std::map<int, int>> by_round;
    std::string line;
    std::getline(assignments, line);  // header
    while (std::getline(assignments, line)) {
        if (line.empty()) continue;
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = line.find(',', c1 + 1);
        by_round[std::stol(line.substr(0, c1))][std::stoi(line.substr(c1 + 1, c2 - c1 - 1))] =
            std::stoi(line.substr(c2 + 1));
    }

    // round -> (rho, m)
    std::map<long, std::pair<std::string, std::string>> round_info;
    std::getline(rounds, line);  // header
    while (std::getline(rounds, line)) {
        if (line.empty()) continue;
        std::vector<std::string> tok;
        std::size_t start = 0;
        for (int i = 0; i < 5; ++i) {
            const std::size_t pos = line.find(',', start);
            tok.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        round_info[std::stol(tok[0])] = {tok[3], tok[4]};
    }

    std::cout << "round,rho,m,assignment,ari_vs_planted\n";
    for (const auto& [round, assignment] : by_round) {
        std::string assign_str;
        std::vector<int> got, want;
        for (const auto& [client, cluster] : assignment) {
            if (!assign_str.empty()) assign_str += ";";
            assign_str += std::to_string(client) + ":" + std::to_string(cluster);
            if (!regimes.empty() && client >= 0 && static_cast<std::size_t>(client) < regimes.size()) {
                got.push_back(cluster);
                want.push_back(regimes[static_cast<std::size_t>(client)]);
            }
        }
        std::string ari = "";
        if (got.size() >= 2) ari = format_double(adjusted_rand_index(got, want));
        const auto info = round_info.count(round) ? round_info.at(round) : std::make_pair(std::string(), std::string());
        std::cout << round << ',' << info.first << ',' << info.second << ',' << assign_str << ',' << ari
                  << "\n";
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, std::uint64_t seed, const std::string& data_dir,
               const std::string& out) {
    ExperimentConfig base;
    if (!config_path.empty()) base = load_experiment_config(config_path);
    base.seed = seed;
    base.scheme = Scheme::Mpcac;

    FederatedDataset ds;
    if (!data_dir.empty()) {
        ds = load_dataset(data_dir);
        base.model.l_min = ds.config.l_min;
    } else {
        base.synth.seed = seed;
        ds = build_dataset(base.synth);
        base.model.l_min = base.synth.l_min;
    }

    struct Variant {
        const char* name;
        Ablations ablations;
    };
    const Variant variants[] = {
        {"full", {}},
        {"no_rl", {true, false, false}},
        {"no_mp", {false, true, false}},
        {"no_cac", {false, false, true}},
    };

    fs::create_directories(out);
    std::ofstream summary(fs::path(out) / "ablation_summary.csv", std::ios::binary);
    summary << "variant,test_acc_demand,test_acc_supply,test_acc_mean,test_f1_mean,test_auroc_mean,rounds\n";
    std::cout << "variant        acc_mean   f1_mean    auroc_mean rounds\n";
    for (const Variant& v : variants) {
        ExperimentConfig cfg = base;
        cfg.ablations = v.ablations;
        Orchestrator orch(cfg, ds);
        const ExperimentResult res = orch.run((fs::path(out) / v.name).string());
        const TaskMetrics mean = mean_metrics(res.test_demand, res.test_supply);
        summary << v.name << ',' << format_double(res.test_demand.accuracy) << ','
                << format_double(res.test_supply.accuracy) << ',' << format_double(mean.accuracy) << ','
                << format_double(mean.weighted_f1) << ',' << format_double(mean.auroc) << ','
                << res.completed_rounds << '\n';
        std::printf("%-14s %-10.4f %-10.4f %-10.4f %ld\n", v.name, mean.accuracy, mean.weighted_f1,
                    mean.auroc, res.completed_rounds);
    }
    std::cout << "summary in " << (fs::path(out) / "ablation_summary.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated labor-market trend forecasting simulator"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, run_dir, split = "test";
    std::uint64_t seed = 1;

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic federated dataset");
    synth->add_option("--config", config_path, "Experiment config (JSON)");
    CLI::Option* synth_seed = synth->add_option("--seed", seed, "Generator seed");
    synth->add_option("--out", out_dir, "Output directory");

    CLI::App* train = app.add_subcommand("train", "Run a federated training experiment");
    train->add_option("--config", config_path, "Experiment config (JSON)");
    train->add_option("--seed", seed, "Experiment seed")->required();
    train->add_option("--data", data_dir, "Dataset directory (generated on the fly when omitted)");
    train->add_option("--out", out_dir, "Output directory");

    CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a finished run on a split");
    evaluate->add_option("--run", run_dir, "Run directory (with params.tsv and config.json)")->required();
    evaluate->add_option("--data", data_dir, "Dataset directory")->required();
    evaluate->add_option("--split", split, "train, val or test")
        ->check(CLI::IsMember({"train", "val", "test"}));

    CLI::App* trace = app.add_subcommand("cluster-trace", "Dump per-round clustering as CSV");
    trace->add_option("--run", run_dir, "Run directory")->required();
    trace->add_option("--data", data_dir, "Dataset directory (for planted-regime ARI)");

    CLI::App* ablate = app.add_subcommand("ablate", "Run the ablation grid (full, no_rl, no_mp, no_cac)");
    ablate->add_option("--config", config_path, "Experiment config (JSON)");
    ablate->add_option("--seed", seed, "Experiment seed")->required();
    ablate->add_option("--data", data_dir, "Dataset directory");
    ablate->add_option("--out", out_dir, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(config_path, seed, synth_seed->count() > 0, resolve_out_dir(out_dir, "dataset"));
        if (train->parsed())
            return cmd_train(config_path, seed, data_dir, resolve_out_dir(out_dir, "train"));
        if (evaluate->parsed()) return cmd_evaluate(run_dir, data_dir, split);
        if (trace->parsed()) return cmd_cluster_trace(run_dir, data_dir);
        if (ablate->parsed())
            return cmd_ablate(config_path, seed, data_dir, resolve_out_dir(out_dir, "ablate"));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
