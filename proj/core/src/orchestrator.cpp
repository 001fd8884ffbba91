#include "fedlmf/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <atomic>
#include <thread>

#include <nlohmann/json.hpp>

#include "fedlmf/dataset_io.hpp"
#include "fedlmf/errors.hpp"
#include "fedlmf/objectives.hpp"

namespace fedlmf {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> sample_clients(const std::vector<double>& probs, std::size_t n, Rng& rng) {
    if (n > probs.size()) throw ContractError("sample_clients: N exceeds client count");
    if (n == 0) throw ContractError("sample_clients: N must be positive");
    // Weighted reservoir (Efraimidis-Spirakis): key = u^{1/p}, take top-N.
    // Compared in log space, ln(u)/p, which is monotone and avoids underflow.
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double u = rng.uniform();
        if (u <= 0.0) u = 1e-300;
        const double p = std::max(probs[i], 1e-300);
        keys.push_back({std::log(u) / p, i});
    }
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(keys[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> update_sampling_probs(const std::vector<double>& losses) {
    if (losses.empty()) throw ContractError("update_sampling_probs: no losses");
    double mx = losses[0];
    for (const double l : losses) mx = std::max(mx, l);
    std::vector<double> probs(losses.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        probs[i] = std::exp(losses[i] - mx);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

TaskMetrics mean_metrics(const TaskMetrics& a, const TaskMetrics& b) {
    return {0.5 * (a.accuracy + b.accuracy), 0.5 * (a.weighted_f1 + b.weighted_f1),
            0.5 * (a.auroc + b.auroc)};
}

Orchestrator::Orchestrator(ExperimentConfig cfg, const FederatedDataset& data) : cfg_(std::move(cfg)) {
    validate(cfg_);
    ops_ = build_operators(data.graph);
    regimes_ = data.regimes;

    const int nc = data.graph.n_companies;
    const int np = data.graph.n_positions;
    const int t_total = static_cast<int>(data.graph.length());
    const ParameterSet init = init_params(cfg_.model, nc, np, t_total, cfg_.seed);

    std::vector<ClientDataset> datasets;
    if (cfg_.scheme == Scheme::Global) {
        // The global upper-bound protocol pools every company's data into one
        // supervised learner.
        ClientDataset pooled;
        pooled.company_id = 0;
        for (const ClientDataset& c : data.clients) {
            pooled.train.insert(pooled.train.end(), c.train.begin(), c.train.end());
            pooled.validation.insert(pooled.validation.end(), c.validation.begin(), c.validation.end());
            pooled.test.insert(pooled.test.end(), c.test.begin(), c.test.end());
        }
        datasets.push_back(std::move(pooled));
    } else {
        datasets = data.clients;
        std::sort(datasets.begin(), datasets.end(),
                  [](const ClientDataset& a, const ClientDataset& b) { return a.company_id < b.company_id; });
    }

    for (ClientDataset& ds : datasets) {
        ClientState cs;
        cs.client_id = ds.company_id;
        cs.data = std::move(ds);
        cs.params = init;
        cs.optimizer = make_adam_state(init);
        cs.rng = Rng(Rng::derive(cfg_.seed, "client", static_cast<std::uint64_t>(cs.client_id)));
        clients_.push_back(std::move(cs));
    }
    if (clients_.empty()) throw ContractError("no clients with training data");

    window_ = LossWindow(cfg_.cac.tau);
    mode_ = resolve();
}

Orchestrator::Resolved Orchestrator::resolve() const {
    Resolved r;
    switch (cfg_.scheme) {
        case Scheme::Global:
            r.use_meta = false;
            r.lambda = 0.0;
            r.aggregate = false;
            break;
        case Scheme::Local:
            r.use_meta = !cfg_.ablations.no_mp;
            r.lambda = cfg_.ablations.no_rl ? 0.0 : cfg_.loss.lambda;
            r.aggregate = false;
            break;
        case Scheme::FedAvg:
            r.use_meta = false;
            r.lambda = 0.0;
            r.aggregate = true;
            r.pin_m = 1;
            break;
        case Scheme::FedProx:
            r.use_meta = false;
            r.lambda = cfg_.loss.lambda;
            r.aggregate = true;
            r.pin_m = 1;
            r.fedprox_anchor = true;
            break;
        case Scheme::Mpcac:
            r.use_meta = !cfg_.ablations.no_mp;
            r.lambda = cfg_.ablations.no_rl ? 0.0 : cfg_.loss.lambda;
            r.aggregate = true;
            r.pin_m = cfg_.ablations.no_cac ? 1 : cfg_.cac.pin_m;
            break;
    }
    return r;
}

std::vector<TrendSample> Orchestrator::draw_batch(ClientState& client) const {
    const std::vector<TrendSample>& train = client.data.train;
    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(cfg_.train.batch_size), train.size());
    const std::vector<std::size_t> idx = client.rng.sample_without_replacement(train.size(), want);
    std::vector<TrendSample> batch;
    batch.reserve(want);
    for (const std::size_t i : idx) batch.push_back(train[i]);
    return batch;
}

namespace {

NDArray tilde_array(const std::vector<double>& v) {
    return NDArray({1, v.size()}, v);
}

}  // namespace

double Orchestrator::local_round(ClientState& client, long round) {
    if (client.data.train.empty()) throw ContractError("local_round: client has no training data");

    const std::vector<double> anchor_vec =
        (mode_.fedprox_anchor && !client.fedprox_anchor.empty())
            ? client.fedprox_anchor
            : client_feature(client.params, cfg_.model, ops_);
    const NDArray anchor = tilde_array(anchor_vec);

    LossSettings settings = cfg_.loss;
    settings.lambda = mode_.lambda;

    const std::vector<TrendSample> batch = draw_batch(client);
    const double lr = lr_schedule(cfg_.meta.beta, cfg_.meta.lr_decay, round - 1);

    auto make_fn = [&](std::vector<TrendSample> samples) -> LossFn {
        return [this, samples = std::move(samples), anchor, settings](Tape& tape, const BoundParams& bp) -> Var {
            ModelGraph mg = begin_forward(tape, bp, cfg_.model, ops_);
            return total_loss(tape, bp, mg, samples, anchor, settings).total;
        };
    };

    if (!mode_.use_meta) {
        Tape tape;
        const BoundParams bp = bind(tape, client.params);
        ModelGraph mg = begin_forward(tape, bp, cfg_.model, ops_);
        const BatchLossVars lv = total_loss(tape, bp, mg, batch, anchor, settings);
        const double loss = tape.value(lv.total).data[0];
        const ParameterSet grads = gradients(tape, lv.total, bp, client.params);
        if (cfg_.meta.plain_sgd) {
            axpy(client.params, -lr, grads);
        } else {
            adam_step(client.optimizer, client.params, grads, cfg_.meta.adam, lr);
        }
        client.last_train_loss = loss;
        return loss;
    }

    // 50/50 support/query split of the shuffled batch; a single-sample batch
    // reuses it for both halves.
    const std::size_t half = batch.size() / 2;
    std::vector<TrendSample> support(batch.begin(), batch.begin() + static_cast<long>(std::max<std::size_t>(half, 1)));
    std::vector<TrendSample> query(batch.begin() + static_cast<long>(half), batch.end());
    if (query.empty()) query = support;

    const LossFn support_fn = make_fn(support);
    const LossFn query_fn = make_fn(query);

    const double support_loss = loss_value(support_fn, client.params);
    const ParameterSet meta_grad =
        meta_gradient(support_fn, query_fn, client.params, cfg_.meta.alpha, cfg_.meta.first_order);
    meta_update(client.optimizer, client.params, meta_grad, cfg_.meta, lr);
    client.last_train_loss = support_loss;
    return support_loss;
}

ParameterSet Orchestrator::adapt_for_eval(const ClientState& client, long round) const {
    if (!cfg_.train.eval_adapt || client.data.train.empty()) return client.params;
    Rng rng(Rng::derive(cfg_.seed, "eval.adapt",
                        static_cast<std::uint64_t>(round) * 1000003ULL + static_cast<std::uint64_t>(client.client_id)));
    const std::vector<TrendSample>& train = client.data.train;
    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(cfg_.train.eval_batch), train.size());
    const std::vector<std::size_t> idx = rng.sample_without_replacement(train.size(), want);
    std::vector<TrendSample> batch;
    for (const std::size_t i : idx) batch.push_back(train[i]);

    LossSettings settings = cfg_.loss;
    settings.lambda = 0.0;  // the proximal term has zero gradient at its own anchor
    const NDArray anchor = NDArray::zeros({1, static_cast<std::size_t>(cfg_.model.dim_g)});
    const LossFn fn = [this, &batch, &anchor, &settings](Tape& tape, const BoundParams& bp) -> Var {
        ModelGraph mg = begin_forward(tape, bp, cfg_.model, ops_);
        return total_loss(tape, bp, mg, batch, anchor, settings).total;
    };
    const ParameterSet grad = loss_gradient(fn, client.params);
    return inner_step(client.params, grad, cfg_.meta.alpha);
}

EvalOutcome Orchestrator::evaluate(Split split, long round) const {
    EvalOutcome out;
    std::vector<int> yd, ys;
    std::vector<std::vector<double>> sd, ss;

    for (const ClientState& client : clients_) {
        const std::vector<TrendSample>* samples = nullptr;
        switch (split) {
            case Split::Train: samples = &client.data.train; break;
            case Split::Validation: samples = &client.data.validation; break;
            case Split::Test: samples = &client.data.test; break;
        }
        if (samples->empty()) {
            out.per_client_loss[client.client_id] = client.last_val_loss;
            continue;
        }
        const ParameterSet params = adapt_for_eval(client, round);
        const std::vector<PredictionOutput> preds = predict(params, cfg_.model, ops_, *samples);

        double loss_sum = 0.0;
        for (std::size_t i = 0; i < samples->size(); ++i) {
            const TrendSample& s = (*samples)[i];
            const PredictionOutput& p = preds[i];
            yd.push_back(s.demand_label);
            ys.push_back(s.supply_label);
            std::vector<double> pd(p.eta_demand.size()), ps(p.eta_supply.size());
            for (std::size_t c = 0; c < pd.size(); ++c) pd[c] = std::exp(p.eta_demand[c]);
            for (std::size_t c = 0; c < ps.size(); ++c) ps[c] = std::exp(p.eta_supply[c]);
            sd.push_back(std::move(pd));
            ss.push_back(std::move(ps));
            loss_sum += classification_loss_value(p.eta_demand, s.demand_label, cfg_.loss.variant) +
                        classification_loss_value(p.eta_supply, s.supply_label, cfg_.loss.variant);
        }
        out.per_client_loss[client.client_id] = loss_sum / static_cast<double>(samples->size());
    }

    out.demand = compute_metrics(yd, sd, cfg_.model.n_classes);
    out.supply = compute_metrics(ys, ss, cfg_.model.n_classes);
    return out;
}

namespace {

std::string joined_ids(const std::vector<int>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) s += ";";
        s += std::to_string(ids[i]);
    }
    return s;
}

void write_round_row(std::ofstream& f, const RoundReport& r) {
    f << r.round << ',' << joined_ids(r.sampled_ids) << ',' << format_double(r.global_mean_loss) << ',';
    if (r.plan) f << format_double(r.plan->rho) << ',' << r.plan->m << ',';
    else f << ",,";
    if (r.ari_vs_planted >= -0.5) f << format_double(r.ari_vs_planted);
    f << ',' << format_double(r.val_demand.accuracy) << ',' << format_double(r.val_supply.accuracy) << ','
      << format_double(r.val_mean_accuracy()) << ',' << format_double(r.val_demand.weighted_f1) << ','
      << format_double(r.val_supply.weighted_f1) << ','
      << format_double(0.5 * (r.val_demand.weighted_f1 + r.val_supply.weighted_f1)) << ','
      << format_double(r.val_demand.auroc) << ',' << format_double(r.val_supply.auroc) << ','
      << format_double(0.5 * (r.val_demand.auroc + r.val_supply.auroc)) << ',';
    bool first = true;
    std::string tl;
    for (const auto& [id, loss] : r.train_losses) {
        if (!first) tl += ";";
        first = false;
        tl += std::to_string(id) + ":" + format_double(loss);
    }
    f << tl << '\n';
    f.flush();
}

constexpr const char* kRoundsHeader =
    "round,sampled,global_mean_loss,rho,m,ari,val_acc_demand,val_acc_supply,val_acc_mean,"
    "val_f1_demand,val_f1_supply,val_f1_mean,val_auroc_demand,val_auroc_supply,val_auroc_mean,"
    "train_losses";

}  // namespace

ExperimentResult Orchestrator::run(const std::string& out_dir) {
    const auto t_start = std::chrono::steady_clock::now();
    ExperimentResult result;

    std::ofstream rounds_csv, assignments_csv;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        rounds_csv.open(fs::path(out_dir) / "rounds.csv", std::ios::binary);
        rounds_csv << kRoundsHeader << '\n';
        assignments_csv.open(fs::path(out_dir) / "assignments.csv", std::ios::binary);
        assignments_csv << "round,client_id,cluster\n";
        save_experiment_config(cfg_, (fs::path(out_dir) / "config.json").string());
    }

    const std::size_t n_clients = clients_.size();
    const std::size_t n_sample = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(n_clients) * cfg_.train.sampling_rate)));

    double best_val_acc = -1.0;
    long best_round = 0;

    try {
        for (long round = 1; round <= cfg_.train.rounds; ++round) {
            // Loss-driven sampling probabilities: freshly trained clients
            // contribute their train loss, the rest their last validation loss.
            std::vector<double> losses(n_clients);
            for (std::size_t i = 0; i < n_clients; ++i)
                losses[i] = clients_[i].sampled_this_round ? clients_[i].last_train_loss
                                                           : clients_[i].last_val_loss;
            const std::vector<double> probs = update_sampling_probs(losses);
            for (std::size_t i = 0; i < n_clients; ++i) {
                clients_[i].sampling_prob = probs[i];
                clients_[i].sampled_this_round = false;
            }

            Rng sample_rng(Rng::derive(cfg_.seed, "sample", static_cast<std::uint64_t>(round)));
            const std::vector<std::size_t> sampled = sample_clients(probs, n_sample, sample_rng);

            // Parallel local rounds; clients share no mutable state and the
            // results are merged in ascending client order.
            std::vector<double> round_losses(sampled.size(), 0.0);
            const int threads = std::min<int>(cfg_.train.threads, static_cast<int>(sampled.size()));
            if (threads <= 1) {
                for (std::size_t k = 0; k < sampled.size(); ++k)
                    round_losses[k] = local_round(clients_[sampled[k]], round);
            } else {
                std::vector<std::thread> pool;
                std::atomic<std::size_t> next{0};
                for (int t = 0; t < threads; ++t) {
                    pool.emplace_back([&]() {
                        while (true) {
                            const std::size_t k = next.fetch_add(1);
                            if (k >= sampled.size()) break;
                            round_losses[k] = local_round(clients_[sampled[k]], round);
                        }
                    });
                }
                for (std::thread& th : pool) th.join();
            }

            RoundReport report;
            report.round = round;
            for (std::size_t k = 0; k < sampled.size(); ++k) {
                ClientState& c = clients_[sampled[k]];
                c.sampled_this_round = true;
                report.sampled_ids.push_back(c.client_id);
                report.train_losses[c.client_id] = round_losses[k];
            }
            double mean_loss = 0.0;
            for (const double l : round_losses) mean_loss += l;
            mean_loss /= static_cast<double>(round_losses.size());
            report.global_mean_loss = mean_loss;

            if (mode_.aggregate) {
                CacConfig cac = cfg_.cac;
                cac.pin_m = mode_.pin_m;
                const bool may_cluster = cac.pin_m == 0 || cac.pin_m > 1;
                std::vector<CacInput> inputs;
                inputs.reserve(sampled.size());
                for (const std::size_t i : sampled) {
                    CacInput in;
                    in.client_id = clients_[i].client_id;
                    in.params = &clients_[i].params;
                    if (may_cluster) in.feature = client_feature(clients_[i].params, cfg_.model, ops_);
                    inputs.push_back(std::move(in));
                }
                CacResult cac_result = cac_round(inputs, round, mean_loss, window_, cac);
                for (std::size_t k = 0; k < sampled.size(); ++k)
                    clients_[sampled[k]].params = std::move(cac_result.updated[k]);
                if (mode_.fedprox_anchor && !sampled.empty()) {
                    const std::vector<double> anchor =
                        client_feature(clients_[sampled[0]].params, cfg_.model, ops_);
                    for (const std::size_t i : sampled) clients_[i].fedprox_anchor = anchor;
                }
                report.plan = std::move(cac_result.plan);

                if (!regimes_.empty() && cfg_.scheme != Scheme::Global) {
                    std::vector<int> got, want;
                    for (const auto& [cid, cluster] : report.plan->assignment) {
                        got.push_back(cluster);
                        want.push_back(regimes_[static_cast<std::size_t>(cid)]);
                    }
                    if (got.size() >= 2) report.ari_vs_planted = adjusted_rand_index(got, want);
                }
            }

            window_.push(mean_loss);

            const EvalOutcome val = evaluate(Split::Validation, round);
            for (ClientState& c : clients_) {
                auto it = val.per_client_loss.find(c.client_id);
                if (it != val.per_client_loss.end()) c.last_val_loss = it->second;
            }
            report.val_demand = val.demand;
            report.val_supply = val.supply;

            if (rounds_csv.is_open()) write_round_row(rounds_csv, report);
            if (assignments_csv.is_open() && report.plan) {
                for (const auto& [cid, cluster] : report.plan->assignment)
                    assignments_csv << round << ',' << cid << ',' << cluster << '\n';
                assignments_csv.flush();
            }

            const double val_acc = report.val_mean_accuracy();
            result.rounds.push_back(std::move(report));
            result.completed_rounds = round;

            if (val_acc > best_val_acc) {
                best_val_acc = val_acc;
                best_round = round;
            } else if (round - best_round >= cfg_.train.early_stop_patience) {
                result.early_stopped = true;
                break;
            }
        }
    } catch (...) {
        // Persist what we have before propagating; partial reports are part
        // of the contract.
        if (!out_dir.empty()) {
            std::ofstream err(fs::path(out_dir) / "error.txt", std::ios::binary);
            err << "experiment aborted after round " << result.completed_rounds << '\n';
        }
        throw;
    }

    const EvalOutcome test = evaluate(Split::Test, cfg_.train.rounds + 1);
    result.test_demand = test.demand;
    result.test_supply = test.supply;
    for (const ClientState& c : clients_) result.final_params[c.client_id] = c.params;

    const auto t_end = std::chrono::steady_clock::now();
    result.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();

    if (!out_dir.empty()) {
        save_client_params(result.final_params, (fs::path(out_dir) / "params.tsv").string());
        json fm;
        fm["test"] = {
            {"demand", {{"accuracy", result.test_demand.accuracy},
                        {"weighted_f1", result.test_demand.weighted_f1},
                        {"auroc", result.test_demand.auroc}}},
            {"supply", {{"accuracy", result.test_supply.accuracy},
                        {"weighted_f1", result.test_supply.weighted_f1},
                        {"auroc", result.test_supply.auroc}}},
            {"mean", {{"accuracy", result.test_mean_accuracy()},
                      {"weighted_f1", 0.5 * (result.test_demand.weighted_f1 + result.test_supply.weighted_f1)},
                      {"auroc", 0.5 * (result.test_demand.auroc + result.test_supply.auroc)}}},
        };
        fm["completed_rounds"] = result.completed_rounds;
        fm["early_stopped"] = result.early_stopped;
        fm["wall_seconds"] = result.wall_seconds;
        double ari_sum = 0.0;
        int ari_n = 0;
        const std::size_t tail = std::min<std::size_t>(10, result.rounds.size());
        for (std::size_t i = result.rounds.size() - tail; i < result.rounds.size(); ++i) {
            if (result.rounds[i].ari_vs_planted >= -0.5) {
                ari_sum += result.rounds[i].ari_vs_planted;
                ++ari_n;
            }
        }
        fm["final_ari_mean"] = ari_n > 0 ? ari_sum / ari_n : -1.0;
        std::ofstream f(fs::path(out_dir) / "final_metrics.json", std::ios::binary);
        f << fm.dump(2) << '\n';
    }

    return result;
}

void save_client_params(const std::map<int, ParameterSet>& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    f << "#fedlmf-params v1\n";
    for (const auto& [client, set] : params) {
        for (const auto& [name, arr] : set) {
            f << client << '\t' << name << '\t';
            for (std::size_t i = 0; i < arr.shape.size(); ++i) {
                if (i) f << 'x';
                f << arr.shape[i];
            }
            f << '\t';
            for (std::size_t i = 0; i < arr.data.size(); ++i) {
                if (i) f << ',';
                f << format_double(arr.data[i]);
            }
            f << '\n';
        }
    }
}

std::map<int, ParameterSet> load_client_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("missing params file '" + path + "'", 0);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(f, line) || line != "#fedlmf-params v1") throw ParseError("bad params header", 1);
    ++lineno;

    std::map<int, ParameterSet> out;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> tok;
        std::size_t start = 0;
        for (int i = 0; i < 3; ++i) {
            const std::size_t pos = line.find('\t', start);
            if (pos == std::string::npos) throw ParseError("expected 4 fields", lineno);
            tok.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        tok.push_back(line.substr(start));

        const int client = std::stoi(tok[0]);
        std::vector<std::size_t> shape;
        {
            std::size_t p = 0;
            while (p < tok[2].size()) {
                const std::size_t x = tok[2].find('x', p);
                const std::string part = tok[2].substr(p, x == std::string::npos ? x : x - p);
                shape.push_back(static_cast<std::size_t>(std::stoul(part)));
                if (x == std::string::npos) break;
                p = x + 1;
            }
        }
        std::vector<double> values;
        {
            std::size_t p = 0;
            while (p <= tok[3].size()) {
                const std::size_t c = tok[3].find(',', p);
                const std::string part = tok[3].substr(p, c == std::string::npos ? c : c - p);
                try {
                    values.push_back(std::stod(part));
                } catch (const std::exception&) {
                    throw ParseError("bad value '" + part + "'", lineno);
                }
                if (c == std::string::npos) break;
                p = c + 1;
            }
        }
        try {
            out[client].set(tok[1], NDArray(shape, values));
        } catch (const ShapeError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return out;
}

}  // namespace fedlmf
