#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "audit/assembly.hpp"
#include "audit/permutation.hpp"
#include "audit/sha256.hpp"
#include "audit/simulate.hpp"
#include "audit/stats.hpp"

namespace {

void BM_Sha256_1KiB(benchmark::State& state) {
  const std::string payload(1024, 'x');
  for (auto _ : state) {
    benchmark::DoNotOptimize(audit::Sha256::hash(payload));
  }
  state.SetBytesProcessed(int64_t(state.iterations()) * 1024);
}
BENCHMARK(BM_Sha256_1KiB);

void BM_PermuteOptions(benchmark::State& state) {
  int counter = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(audit::permute_options(
        "bench-seed", "item-" + std::to_string(counter++), "p", 5));
  }
}
BENCHMARK(BM_PermuteOptions);

void BM_AssemblePrompt(benchmark::State& state) {
  const audit::ItemBank bank = audit::make_synthetic_bank(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        audit::assemble_prompt(bank.items[0], "bench-seed",
                               audit::DecoyMode::with_decoys,
                               audit::PoleMode::normal));
  }
}
BENCHMARK(BM_AssemblePrompt);

std::vector<audit::MixedObservation> bench_rows(int providers, int items,
                                                int replicates) {
  audit::SimulationSpec spec;
  spec.mu = 3.0;
  spec.sigma2_provider = 0.1;
  spec.sigma2_item = 0.3;
  spec.sigma2_residual = 0.5;
  spec.n_providers = providers;
  spec.n_items = items;
  spec.n_replicates = replicates;
  spec.sim_seed = "bench";
  std::vector<audit::MixedObservation> rows;
  for (int p = 0; p < providers; ++p) {
    for (int i = 0; i < items; ++i) {
      for (int r = 0; r < replicates; ++r) {
        rows.push_back(audit::MixedObservation{
            "prov-" + std::to_string(p), "item-" + std::to_string(i),
            double(audit::simulated_score(spec, p, 0, i, r,
                                          audit::DecoyMode::probe_only))});
      }
    }
  }
  return rows;
}

void BM_FitMixedLm(benchmark::State& state) {
  const auto rows = bench_rows(int(state.range(0)), int(state.range(1)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(audit::fit_mixedlm(rows));
  }
}
BENCHMARK(BM_FitMixedLm)->Args({6, 20})->Args({15, 40})->Args({30, 60});

void BM_LrtProvider(benchmark::State& state) {
  const auto rows = bench_rows(5, 20, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(audit::lrt_provider(rows));
  }
}
BENCHMARK(BM_LrtProvider);

void BM_KruskalWallis(benchmark::State& state) {
  std::vector<std::vector<double>> groups(4);
  for (int g = 0; g < 4; ++g) {
    for (int i = 0; i < int(state.range(0)); ++i) {
      groups[std::size_t(g)].push_back(double(1 + (i * 7 + g * 3) % 5));
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(audit::kruskal_wallis(groups));
  }
}
BENCHMARK(BM_KruskalWallis)->Arg(100)->Arg(1000);

void BM_Chi2Sf(benchmark::State& state) {
  double x = 0.0;
  for (auto _ : state) {
    x += 0.01;
    if (x > 80.0) {
      x = 0.01;
    }
    benchmark::DoNotOptimize(audit::chi2_sf(x, 4));
  }
}
BENCHMARK(BM_Chi2Sf);

}  // namespace

BENCHMARK_MAIN();
