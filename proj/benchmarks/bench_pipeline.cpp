#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "dxe/biaslens.hpp"
#include "dxe/consensus.hpp"
#include "dxe/gateway.hpp"
#include "dxe/simharness.hpp"

namespace {

const std::filesystem::path kAssets = DXE_BENCH_ASSETS_DIR;

// n models, each listing `depth` candidates drawn from a pool of 40 labels.
std::vector<dxe::ModelResponse> synthetic_responses(int n, int depth, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<dxe::ModelResponse> out;
  for (int m = 0; m < n; ++m) {
    dxe::ModelResponse r;
    r.model_id = "m" + std::to_string(m);
    r.case_id = "bench";
    r.status = dxe::ResponseStatus::Ok;
    for (int k = 0; k < depth; ++k) {
      dxe::DiagnosisCandidate c;
      c.label = "Diagnosis " + std::to_string(rng() % 40);
      c.confidence = static_cast<double>(rng() % 100) / 100.0;
      c.rank = k + 1;
      r.candidates.push_back(c);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void BM_Stratify(benchmark::State& state) {
  const auto responses = synthetic_responses(static_cast<int>(state.range(0)), 8, 1);
  const auto synonyms = dxe::SynonymTable::parse("Diagnosis 1 => diagnosis 2\n");
  for (auto _ : state) benchmark::DoNotOptimize(dxe::stratify(responses, synonyms));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stratify)->Arg(5)->Arg(30)->Arg(120);

void BM_CountMarkers(benchmark::State& state) {
  const auto lexicon = dxe::default_uncertainty_lexicon();
  std::string text;
  const char* sentences[] = {"The picture is possibly inflammatory. ", "We cannot rule out an infection. ",
                             "Imaging is unclear at this point. ", "It might be a drug reaction. ",
                             "Findings are nonspecific overall. "};
  for (int i = 0; static_cast<std::int64_t>(text.size()) < state.range(0); ++i) text += sentences[i % 5];
  for (auto _ : state) benchmark::DoNotOptimize(dxe::count_markers(text, lexicon));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_CountMarkers)->Arg(1 << 10)->Arg(1 << 14)->Arg(1 << 18);

void BM_SimulatedFanout(benchmark::State& state) {
  const auto pop = dxe::load_population((kAssets / "sim" / "population.yaml").string());
  const dxe::RegistrySnapshot snapshot(pop.descriptors());
  const auto cases = dxe::load_case_bundle(kAssets / "cases");
  const auto provider = std::make_shared<dxe::SimulatedProvider>(pop.profiles());
  dxe::QueryPlan plan;
  plan.case_id = cases.front().case_id;
  for (const auto& d : snapshot.models()) plan.model_ids.push_back(d.model_id);
  plan.max_parallel = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    plan.seed = ++seed;
    benchmark::DoNotOptimize(dxe::execute_fanout(plan, cases.front(), snapshot, provider));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(plan.model_ids.size()));
}
BENCHMARK(BM_SimulatedFanout)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
