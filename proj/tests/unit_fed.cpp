#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedlmf/dataset_io.hpp"
#include "fedlmf/errors.hpp"
#include "fedlmf/metrics.hpp"
#include "fedlmf/orchestrator.hpp"
#include "fedlmf/preprocess.hpp"
#include "fedlmf/synth.hpp"

using namespace fedlmf;
namespace fs = std::filesystem;

namespace {

FederatedDataset tiny_dataset(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_companies = 6;
    cfg.n_positions = 3;
    cfg.t_total = 20;
    cfg.n_regimes = 2;
    cfg.l_min = 6;
    cfg.seed = seed;
    const SynthOutput synth = synth_generate(cfg);
    std::vector<TrendSample> samples;
    for (const RawSeries& s : synth.series) {
        const auto built = build_samples(s, cfg.l_min);
        samples.insert(samples.end(), built.begin(), built.end());
    }
    PartitionResult part = partition_clients(samples);
    FederatedDataset ds;
    ds.clients = std::move(part.clients);
    ds.graph = synth.graph;
    ds.config = cfg;
    ds.regimes = synth.regimes;
    return ds;
}

ExperimentConfig tiny_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.model.dim_t = 8;
    cfg.model.dim_g = 2;
    cfg.model.n_heads = 2;
    cfg.model.ff_dim = 8;
    cfg.model.n_layers = 1;
    cfg.model.l_min = 6;
    cfg.train.rounds = 3;
    cfg.train.batch_size = 8;
    cfg.train.eval_batch = 8;
    cfg.train.sampling_rate = 0.5;
    cfg.cac.warmup_rounds = 1;
    cfg.synth = SynthConfig{};
    cfg.synth.n_companies = 6;
    cfg.synth.n_positions = 3;
    cfg.synth.t_total = 20;
    cfg.synth.n_regimes = 2;
    cfg.synth.l_min = 6;
    cfg.synth.seed = seed;
    return cfg;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

double pairwise_auroc_oracle(const std::vector<double>& scores, const std::vector<char>& pos) {
    double wins = 0.0;
    long p = 0, n = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!pos[i]) continue;
        ++p;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (pos[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (const char b : pos)
        if (!b) ++n;
    return wins / (static_cast<double>(p) * static_cast<double>(n));
}

}  // namespace

TEST_CASE("sample_clients") {
    SUBCASE("uniform probabilities with r=1 select everyone") {
        Rng rng(1);
        const std::vector<double> probs(7, 1.0 / 7.0);
        const auto sel = sample_clients(probs, 7, rng);
        CHECK(sel.size() == 7);
        for (std::size_t i = 0; i < 7; ++i) CHECK(sel[i] == i);
    }

    SUBCASE("a nearly-certain client is selected in at least 99% of 10^4 draws") {
        std::vector<double> probs(5, 1e-9 / 4.0);
        probs[2] = 1.0 - 1e-9;
        int hits = 0;
        for (std::uint64_t seed = 0; seed < 10000; ++seed) {
            Rng rng(Rng::derive(seed, "mc"));
            const auto sel = sample_clients(probs, 1, rng);
            if (sel[0] == 2) ++hits;
        }
        CHECK(hits >= 9900);
    }

    SUBCASE("same seed gives an identical sample") {
        const std::vector<double> probs = {0.1, 0.4, 0.2, 0.3};
        Rng a(42), b(42);
        CHECK(sample_clients(probs, 2, a) == sample_clients(probs, 2, b));
    }

    SUBCASE("N above the client count raises ContractError") {
        Rng rng(1);
        CHECK_THROWS_AS(sample_clients({0.5, 0.5}, 3, rng), ContractError);
    }
}

TEST_CASE("update_sampling_probs") {
    SUBCASE("equal losses give the uniform distribution") {
        const auto p = update_sampling_probs({2.0, 2.0, 2.0, 2.0});
        for (const double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
    }

    SUBCASE("losses [0, ln 2] give [1/3, 2/3]") {
        const auto p = update_sampling_probs({0.0, std::log(2.0)});
        CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(p[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }

    SUBCASE("adding a constant leaves probabilities unchanged within 1e-12") {
        const auto p1 = update_sampling_probs({0.4, 1.1, 0.2});
        const auto p2 = update_sampling_probs({100.4, 101.1, 100.2});
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(p1[i] - p2[i]) < 1e-12);
    }

    SUBCASE("sums to one") {
        const auto p = update_sampling_probs({5.0, -3.0, 0.7, 2.2});
        double s = 0.0;
        for (const double x : p) s += x;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("metrics") {
    SUBCASE("perfect predictions score 1.0 on all three metrics") {
        const std::vector<int> y = {0, 1, 2, 1, 0};
        std::vector<std::vector<double>> scores;
        for (const int label : y) {
            std::vector<double> s(3, 0.1);
            s[static_cast<std::size_t>(label)] = 0.8;
            scores.push_back(std::move(s));
        }
        const TaskMetrics m = compute_metrics(y, scores, 3);
        CHECK(m.accuracy == doctest::Approx(1.0));
        CHECK(m.weighted_f1 == doctest::Approx(1.0));
        CHECK(m.auroc == doctest::Approx(1.0));
    }

    SUBCASE("constant scores give chance-level AUROC") {
        const std::vector<int> y = {0, 1, 0, 1, 1, 0};
        const std::vector<std::vector<double>> scores(6, {0.5, 0.5});
        const TaskMetrics m = compute_metrics(y, scores, 2);
        CHECK(m.auroc == doctest::Approx(0.5));
    }

    SUBCASE("trapezoidal AUROC agrees with the pairwise-counting oracle to 1e-9") {
        Rng rng(9);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t n = 20;
            std::vector<double> scores(n);
            std::vector<char> pos(n);
            // Quantized scores force plenty of ties.
            for (std::size_t i = 0; i < n; ++i) {
                scores[i] = std::round(rng.uniform() * 4.0) / 4.0;
                pos[i] = rng.uniform() < 0.4 ? 1 : 0;
            }
            bool has_pos = false, has_neg = false;
            for (const char b : pos) (b ? has_pos : has_neg) = true;
            if (!has_pos || !has_neg) continue;
            const double got = binary_auroc(scores, pos);
            const double want = pairwise_auroc_oracle(scores, pos);
            CHECK(std::fabs(got - want) < 1e-9);
        }
    }

    SUBCASE("hand-built six-sample two-class case") {
        const std::vector<double> scores = {0.9, 0.8, 0.8, 0.4, 0.3, 0.1};
        const std::vector<char> pos = {1, 0, 1, 1, 0, 0};
        const double got = binary_auroc(scores, pos);
        CHECK(got == doctest::Approx(pairwise_auroc_oracle(scores, pos)).epsilon(1e-12));
    }

    SUBCASE("a class absent from the truth is skipped in AUROC weighting") {
        const std::vector<int> y = {0, 0, 1, 1};
        std::vector<std::vector<double>> scores = {
            {0.8, 0.1, 0.1}, {0.7, 0.2, 0.1}, {0.2, 0.7, 0.1}, {0.1, 0.8, 0.1}};
        const TaskMetrics m = compute_metrics(y, scores, 3);
        CHECK(m.auroc == doctest::Approx(1.0));
    }
}

TEST_CASE("local_round behavior") {
    const FederatedDataset data = tiny_dataset(5);
    ExperimentConfig cfg = tiny_config(5);
    cfg.scheme = Scheme::Mpcac;

    SUBCASE("clients never mutate each other") {
        Orchestrator orch(cfg, data);
        ClientState c0 = orch.clients()[0];
        const ParameterSet before_other = orch.clients()[1].params;
        Orchestrator orch2(cfg, data);
        // run a round on a copy of client 0 only
        orch2.local_round(c0, 1);
        CHECK(max_abs_diff(before_other, orch2.clients()[1].params) == 0.0);
        CHECK(max_abs_diff(c0.params, orch2.clients()[0].params) > 0.0);
    }

    SUBCASE("training loss trends down over 30 rounds on one client") {
        ExperimentConfig c = cfg;
        c.ablations.no_mp = true;  // plain supervised steps are the cleanest trace
        c.loss.lambda = 0.0;
        Orchestrator orch(c, data);
        ClientState client = orch.clients()[0];
        std::vector<double> losses;
        for (long r = 1; r <= 30; ++r) losses.push_back(orch.local_round(client, r));
        double head = 0.0, tail = 0.0;
        for (int i = 0; i < 10; ++i) {
            head += losses[static_cast<std::size_t>(i)];
            tail += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
        }
        CHECK(std::isfinite(head));
        CHECK(tail < head);
    }
}

TEST_CASE("scheme reductions hold bitwise") {
    const FederatedDataset data = tiny_dataset(7);

    SUBCASE("mpcac with m pinned to 1, no_mp, lambda=0 equals fedavg") {
        ExperimentConfig a = tiny_config(7);
        a.scheme = Scheme::FedAvg;

        ExperimentConfig b = tiny_config(7);
        b.scheme = Scheme::Mpcac;
        b.ablations.no_mp = true;
        b.loss.lambda = 0.0;
        b.cac.pin_m = 1;

        const auto dir_a = fs::temp_directory_path() / "fedlmf_red_a";
        const auto dir_b = fs::temp_directory_path() / "fedlmf_red_b";
        fs::remove_all(dir_a);
        fs::remove_all(dir_b);
        Orchestrator oa(a, data);
        Orchestrator ob(b, data);
        const ExperimentResult ra = oa.run(dir_a.string());
        const ExperimentResult rb = ob.run(dir_b.string());

        CHECK(read_file(dir_a / "rounds.csv") == read_file(dir_b / "rounds.csv"));
        REQUIRE(ra.final_params.size() == rb.final_params.size());
        for (const auto& [id, p] : ra.final_params) CHECK(max_abs_diff(p, rb.final_params.at(id)) == 0.0);
        fs::remove_all(dir_a);
        fs::remove_all(dir_b);
    }

    SUBCASE("mpcac with m pinned to the client count equals local") {
        ExperimentConfig a = tiny_config(7);
        a.scheme = Scheme::Local;

        ExperimentConfig b = tiny_config(7);
        b.scheme = Scheme::Mpcac;
        b.cac.pin_m = 1000;  // clamped to the active client count

        Orchestrator oa(a, data);
        Orchestrator ob(b, data);
        const ExperimentResult ra = oa.run();
        const ExperimentResult rb = ob.run();
        REQUIRE(ra.final_params.size() == rb.final_params.size());
        for (const auto& [id, p] : ra.final_params) CHECK(max_abs_diff(p, rb.final_params.at(id)) == 0.0);
        CHECK(ra.test_mean_accuracy() == rb.test_mean_accuracy());
    }

    SUBCASE("local scheme equals isolated per-client training") {
        ExperimentConfig cfg = tiny_config(7);
        cfg.scheme = Scheme::Local;
        Orchestrator orch(cfg, data);
        const ExperimentResult res = orch.run();

        // Replay one client's active rounds in isolation.
        const int target = res.rounds[0].sampled_ids[0];
        Orchestrator fresh(cfg, data);
        ClientState replay;
        for (const ClientState& c : fresh.clients())
            if (c.client_id == target) replay = c;
        for (const RoundReport& r : res.rounds) {
            for (const int id : r.sampled_ids)
                if (id == target) fresh.local_round(replay, r.round);
        }
        CHECK(max_abs_diff(replay.params, res.final_params.at(target)) == 0.0);

        // And the final parameters differ across clients.
        const auto it0 = res.final_params.begin();
        const auto it1 = std::next(it0);
        CHECK(max_abs_diff(it0->second, it1->second) > 0.0);
    }
}

TEST_CASE("determinism of full runs") {
    const FederatedDataset data = tiny_dataset(9);

    SUBCASE("identical config and seed give byte-identical rounds.csv") {
        ExperimentConfig cfg = tiny_config(9);
        const auto dir_a = fs::temp_directory_path() / "fedlmf_det_a";
        const auto dir_b = fs::temp_directory_path() / "fedlmf_det_b";
        fs::remove_all(dir_a);
        fs::remove_all(dir_b);
        Orchestrator(cfg, data).run(dir_a.string());
        Orchestrator(cfg, data).run(dir_b.string());
        const std::string a = read_file(dir_a / "rounds.csv");
        CHECK(!a.empty());
        CHECK(a == read_file(dir_b / "rounds.csv"));
        CHECK(read_file(dir_a / "assignments.csv") == read_file(dir_b / "assignments.csv"));
        fs::remove_all(dir_a);
        fs::remove_all(dir_b);
    }

    SUBCASE("parallel local rounds match the sequential run byte for byte") {
        ExperimentConfig cfg = tiny_config(9);
        cfg.train.sampling_rate = 1.0;
        const auto dir_a = fs::temp_directory_path() / "fedlmf_thr_a";
        const auto dir_b = fs::temp_directory_path() / "fedlmf_thr_b";
        fs::remove_all(dir_a);
        fs::remove_all(dir_b);
        ExperimentConfig seq = cfg;
        seq.train.threads = 1;
        ExperimentConfig par = cfg;
        par.train.threads = 4;
        Orchestrator(seq, data).run(dir_a.string());
        Orchestrator(par, data).run(dir_b.string());
        CHECK(read_file(dir_a / "rounds.csv") == read_file(dir_b / "rounds.csv"));
        fs::remove_all(dir_a);
        fs::remove_all(dir_b);
    }
}

TEST_CASE("run_experiment output contract") {
    const FederatedDataset data = tiny_dataset(11);
    ExperimentConfig cfg = tiny_config(11);
    cfg.train.rounds = 4;

    const auto dir = fs::temp_directory_path() / "fedlmf_run_out";
    fs::remove_all(dir);
    Orchestrator orch(cfg, data);
    const ExperimentResult res = orch.run(dir.string());

    SUBCASE("per-round reports carry sampled ids, losses and metrics") {
        CHECK(res.completed_rounds == 4);
        for (const RoundReport& r : res.rounds) {
            CHECK(!r.sampled_ids.empty());
            CHECK(std::isfinite(r.global_mean_loss));
            CHECK(r.val_demand.accuracy >= 0.0);
            CHECK(r.val_demand.accuracy <= 1.0);
            CHECK(r.plan.has_value());
            for (const auto& [id, loss] : r.train_losses) CHECK(std::isfinite(loss));
        }
    }

    SUBCASE("output files exist and parse back") {
        CHECK(fs::exists(dir / "rounds.csv"));
        CHECK(fs::exists(dir / "assignments.csv"));
        CHECK(fs::exists(dir / "final_metrics.json"));
        CHECK(fs::exists(dir / "config.json"));
        const std::map<int, ParameterSet> params = load_client_params((dir / "params.tsv").string());
        CHECK(params.size() == res.final_params.size());
        for (const auto& [id, p] : params) CHECK(max_abs_diff(p, res.final_params.at(id)) == 0.0);
    }

    SUBCASE("sampling probabilities stay normalized across rounds") {
        // Loss gaps beyond ~38 underflow the softmax tail, so the top
        // probability can round to exactly 1.0 in doubles.
        double s = 0.0;
        for (const ClientState& c : orch.clients()) {
            CHECK(c.sampling_prob > 0.0);
            CHECK(c.sampling_prob <= 1.0);
            s += c.sampling_prob;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }

    fs::remove_all(dir);
}

TEST_CASE("early stopping on stalled validation accuracy") {
    const FederatedDataset data = tiny_dataset(13);
    ExperimentConfig cfg = tiny_config(13);
    cfg.train.rounds = 40;
    cfg.train.early_stop_patience = 3;
    cfg.meta.adam.lr = 0.0;  // nothing can improve
    cfg.meta.beta = 1e-12;
    Orchestrator orch(cfg, data);
    const ExperimentResult res = orch.run();
    CHECK(res.early_stopped);
    CHECK(res.completed_rounds <= 10);
}

TEST_CASE("global scheme pools every sample into one client") {
    const FederatedDataset data = tiny_dataset(15);
    ExperimentConfig cfg = tiny_config(15);
    cfg.scheme = Scheme::Global;
    Orchestrator orch(cfg, data);
    REQUIRE(orch.clients().size() == 1);
    std::size_t total = 0;
    for (const ClientDataset& c : data.clients) total += c.total();
    CHECK(orch.clients()[0].data.total() == total);
    const ExperimentResult res = orch.run();
    CHECK(res.completed_rounds == cfg.train.rounds);
}
