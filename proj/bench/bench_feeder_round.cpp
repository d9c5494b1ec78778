// Serial vs OpenMP feeder round: the per-PCC sweeps of one coupling round.
#include <benchmark/benchmark.h>

#include <vector>

#include "tdcosim/feeder_round.hpp"

namespace {

using namespace tdcosim;

std::vector<Feeder> make_feeders(int count, int nodes) {
  std::vector<Feeder> out;
  for (int k = 0; k < count; ++k) {
    SynthFeederSpec spec;
    spec.nodes = nodes;
    spec.total_load = {50.0, 12.0};
    spec.mix = {0.6, 0.2, 0.2};
    spec.seed = 100 + static_cast<std::uint64_t>(k);
    out.push_back(apply_unbalance(synth_feeder(spec), 0.1));
  }
  return out;
}

std::vector<FeederJob> make_jobs(const std::vector<Feeder>& feeders) {
  std::vector<FeederJob> jobs;
  for (std::size_t k = 0; k < feeders.size(); ++k) {
    jobs.push_back({static_cast<BusId>(k), &feeders[k], balanced_phase_voltages(1.02)});
  }
  return jobs;
}

void BM_RoundSerial(benchmark::State& state) {
  const auto feeders = make_feeders(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const auto jobs = make_jobs(feeders);
  for (auto _ : state) benchmark::DoNotOptimize(solve_feeders_serial(jobs, {}));
}

void BM_RoundParallel(benchmark::State& state) {
  const auto feeders = make_feeders(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const auto jobs = make_jobs(feeders);
  for (auto _ : state) benchmark::DoNotOptimize(solve_feeders_parallel(jobs, {}));
}

}  // namespace

BENCHMARK(BM_RoundSerial)->Args({3, 1000})->Args({8, 1000})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RoundParallel)->Args({3, 1000})->Args({8, 1000})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
