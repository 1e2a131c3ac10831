#include <benchmark/benchmark.h>

#include <random>

#include "promptrec/corpus.hpp"
#include "promptrec/decoding.hpp"
#include "promptrec/metrics.hpp"
#include "promptrec/trainer.hpp"

using namespace promptrec;

namespace {

Corpus bench_corpus() {
  SynthConfig sc;
  Corpus c;
  c.records = generate_synthetic_records(sc);
  for (const auto& r : c.records) c.features.insert(r.features.begin(), r.features.end());
  return c;
}

Model bench_model(const Corpus& c) {
  return Model::initialize(build_vocabulary(c.records), index_ids(c.records), LmConfig{}, 1, true);
}

void BM_Forward(benchmark::State& state) {
  const Corpus c = bench_corpus();
  const Model m = bench_model(c);
  const auto ex = resolve_examples(c.records, m);
  const auto& lm = m.params.lm;
  const PromptSequence p =
      assemble_prompt(ex[0].user, ex[0].item, ex[0].explanation, m.params.tables, lm.word_embedding,
                      lm.position_embedding);
  for (auto _ : state) benchmark::DoNotOptimize(forward(p.embedded, lm));
}
BENCHMARK(BM_Forward);

void BM_TrainStep(benchmark::State& state) {
  const Corpus c = bench_corpus();
  const Model m = bench_model(c);
  const auto ex = resolve_examples(c.records, m);
  const std::span<const TrainingExample> batch(ex.data(), static_cast<std::size_t>(state.range(0)));
  TrainConfig config;
  for (auto _ : state) {
    Parameters grads = Parameters::zeros_like(m.params);
    benchmark::DoNotOptimize(batch_gradient(m.params, batch, config, grads));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(128);

void BM_Generate(benchmark::State& state) {
  const Corpus c = bench_corpus();
  const Model m = bench_model(c);
  for (auto _ : state) benchmark::DoNotOptimize(generate_tokens(0, 0, m));
}
BENCHMARK(BM_Generate);

void BM_ScoreSamples(benchmark::State& state) {
  const Corpus c = bench_corpus();
  std::mt19937_64 rng(1);
  std::vector<GeneratedSample> samples;
  for (const auto& r : c.records) {
    GeneratedSample s;
    s.generated = c.records[rng() % c.records.size()].explanation;
    s.reference = r.explanation;
    s.features = extract_features(s.generated, c.features);
    samples.push_back(std::move(s));
  }
  for (auto _ : state) benchmark::DoNotOptimize(score_samples(samples, c.features));
}
BENCHMARK(BM_ScoreSamples);

}  // namespace

BENCHMARK_MAIN();
