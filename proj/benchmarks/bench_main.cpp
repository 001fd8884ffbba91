#include <benchmark/benchmark.h>

#include "fedlmf/cluster.hpp"
#include "fedlmf/objectives.hpp"
#include "fedlmf/orchestrator.hpp"
#include "fedlmf/preprocess.hpp"
#include "fedlmf/synth.hpp"

using namespace fedlmf;

namespace {

FederatedDataset bench_dataset(int companies, int months) {
    SynthConfig cfg;
    cfg.n_companies = companies;
    cfg.n_positions = 5;
    cfg.t_total = months;
    cfg.n_regimes = 3;
    cfg.seed = 99;
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

ExperimentConfig bench_config() {
    ExperimentConfig cfg;
    cfg.seed = 99;
    cfg.model.l_min = 12;
    cfg.train.batch_size = 32;
    cfg.train.eval_batch = 32;
    return cfg;
}

void BM_LossGradient(benchmark::State& state) {
    const FederatedDataset ds = bench_dataset(10, 30);
    const ExperimentConfig cfg = bench_config();
    const std::vector<GraphOperators> ops = build_operators(ds.graph);
    const ParameterSet params =
        init_params(cfg.model, ds.graph.n_companies, ds.graph.n_positions,
                    static_cast<int>(ds.graph.length()), cfg.seed);
    std::vector<TrendSample> batch(ds.clients[0].train.begin(),
                                   ds.clients[0].train.begin() + static_cast<long>(state.range(0)));
    const NDArray anchor = NDArray::zeros({1, static_cast<std::size_t>(cfg.model.dim_g)});
    const LossFn fn = [&](Tape& t, const BoundParams& bp) {
        ModelGraph mg = begin_forward(t, bp, cfg.model, ops);
        return total_loss(t, bp, mg, batch, anchor, cfg.loss).total;
    };
    for (auto _ : state) {
        const ParameterSet g = loss_gradient(fn, params);
        benchmark::DoNotOptimize(g);
    }
}
BENCHMARK(BM_LossGradient)->Arg(8)->Arg(32);

void BM_JacobiEig(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(7);
    std::vector<ClientFeature> features;
    for (std::size_t i = 0; i < n; ++i) {
        ClientFeature f;
        f.client_id = static_cast<int>(i);
        for (int k = 0; k < 4; ++k) f.theta_tilde.push_back(rng.uniform(-1.0, 1.0));
        features.push_back(std::move(f));
    }
    const NDArray lap = normalized_laplacian(affinity(features));
    for (auto _ : state) {
        const EigResult r = jacobi_eigendecompose(lap);
        benchmark::DoNotOptimize(r);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_JacobiEig)->Arg(10)->Arg(30)->Arg(100)->Complexity();

void BM_CacRound(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(13);
    std::vector<ParameterSet> storage;
    for (int i = 0; i < n; ++i) {
        ParameterSet p;
        NDArray w = NDArray::zeros({64, 4});
        for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
        p.set("w", std::move(w));
        storage.push_back(std::move(p));
    }
    std::vector<CacInput> inputs;
    for (int i = 0; i < n; ++i) {
        CacInput in;
        in.client_id = i;
        in.params = &storage[static_cast<std::size_t>(i)];
        for (int k = 0; k < 4; ++k) in.feature.push_back(rng.uniform(-1.0, 1.0));
        inputs.push_back(std::move(in));
    }
    LossWindow w(5);
    for (const double x : {1.0, 0.95, 0.9, 0.88, 0.86}) w.push(x);
    CacConfig cfg;
    cfg.warmup_rounds = 1;
    for (auto _ : state) {
        const CacResult r = cac_round(inputs, 20, 0.85, w, cfg);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_CacRound)->Arg(9)->Arg(30);

void BM_LocalRound(benchmark::State& state) {
    const FederatedDataset ds = bench_dataset(10, 30);
    ExperimentConfig cfg = bench_config();
    cfg.train.batch_size = static_cast<int>(state.range(0));
    Orchestrator orch(cfg, ds);
    ClientState client = orch.clients()[0];
    long round = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(orch.local_round(client, round++));
    }
}
BENCHMARK(BM_LocalRound)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
