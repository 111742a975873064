#include <benchmark/benchmark.h>

#include <filesystem>
#include <map>
#include <vector>

#include "gels/agent.hpp"
#include "gels/boosting.hpp"
#include "gels/eval.hpp"
#include "gels/sim.hpp"

using namespace gels;

namespace {

EventTrace bench_event(std::uint32_t n, int minutes, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n_viewers = n;
  cfg.n_offices = 3;
  cfg.minutes = minutes;
  cfg.intra_office_mbps = {20.0, 100.0};
  cfg.inter_office_mbps = {0.05, 1.0};
  cfg.seed = seed;
  return generate_event(cfg);
}

AgentConfig bench_agent(std::uint32_t n) {
  AgentConfig agent;
  agent.embed_dim = 16;
  agent.state_dim = 16;
  agent.hidden_dim = 64;
  agent.n_actions = n;
  return agent;
}

}  // namespace

static void BM_Qoe(benchmark::State& state) {
  const SegmentTrace trace = simulate_segments(default_ladder(), 3.1, 8.0);
  const QoeConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qoe(trace, cfg));
  }
}
BENCHMARK(BM_Qoe);

static void BM_GenerateEvent(benchmark::State& state) {
  const auto n = static_cast<std::uint32_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bench_event(n, 20, seed++));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GenerateEvent)->Arg(30)->Arg(60)->Arg(120)->Complexity();

static void BM_EnvStep(benchmark::State& state) {
  const EventTrace trace = bench_event(60, 20, 7);
  const SimParams sim;
  Environment env(trace, sim, 1);
  std::map<ViewerId, ViewerId> actions;
  for (ViewerId u = 0; u < trace.n; ++u) actions[u] = (u + 7) % trace.n;
  for (auto _ : state) {
    if (env.done()) env.reset(1);
    benchmark::DoNotOptimize(env.step(actions));
  }
}
BENCHMARK(BM_EnvStep);

static void BM_EncodeState(benchmark::State& state) {
  const EventTrace trace = bench_event(60, 20, 7);
  const AgentConfig agent = bench_agent(60);
  ParamStore store(3);
  add_agent_params(store, agent);
  const Neighborhood neigh = neighborhood(trace, 5, 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_state(5, neigh, store, agent));
  }
}
BENCHMARK(BM_EncodeState);

static void BM_TdUpdate(benchmark::State& state) {
  const AgentConfig agent = bench_agent(60);
  ParamStore store(3);
  add_agent_params(store, agent);
  Rng rng(5);
  ReplayBuffer buffer(64);
  for (int i = 0; i < 64; ++i) {
    Transition tr;
    tr.viewer = static_cast<ViewerId>(rng.below(60));
    tr.action = static_cast<ViewerId>(rng.below(60));
    tr.reward = rng.uniform(-3, 5);
    tr.kl_score = rng.uniform(0, 2);
    tr.state.resize(16);
    tr.next_state.resize(16);
    for (double& v : tr.state) v = rng.uniform(-1, 1);
    for (double& v : tr.next_state) v = rng.uniform(-1, 1);
    buffer.insert(std::move(tr));
  }
  TdOptimizer opt(1e-3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(td_update(buffer, store, agent, opt));
  }
}
BENCHMARK(BM_TdUpdate);

static void BM_AdaptOnEvent(benchmark::State& state) {
  const EventTrace trace = bench_event(60, 20, 11);
  const SimParams sim;
  TrainConfig cfg;
  cfg.agent = bench_agent(60);
  cfg.cut = 13;
  ParamStore global(4);
  add_agent_params(global, cfg.agent);
  const EventSplit split = split_event(trace, cfg.cut);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adapt_on_event(global, split, cfg, sim));
  }
}
BENCHMARK(BM_AdaptOnEvent);

static void BM_RocAuc(benchmark::State& state) {
  Rng rng(9);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<int> positives(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    positives[i] = rng.below(2) ? 1 : 0;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(roc_auc(scores, positives));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RocAuc)->Range(64, 16384)->Complexity();

static void BM_TraceRoundTrip(benchmark::State& state) {
  const EventTrace trace = bench_event(60, 20, 13);
  const auto path = std::filesystem::temp_directory_path() / "gels_bench.jsonl";
  for (auto _ : state) {
    save_event_trace(trace, path);
    benchmark::DoNotOptimize(load_event_trace(path));
  }
  std::filesystem::remove(path);
}
BENCHMARK(BM_TraceRoundTrip);

int main(int argc, char** argv) {
  ::benchmark::Initialize(&argc, argv);
  if (::benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  ::benchmark::RunSpecifiedBenchmarks();
  ::benchmark::Shutdown();
  return 0;
}
