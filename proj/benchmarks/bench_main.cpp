#include <benchmark/benchmark.h>

#include <numeric>
#include <random>
#include <vector>

#include "protoattend/evaluation.hpp"
#include "protoattend/inference.hpp"
#include "protoattend/simplex.hpp"
#include "protoattend/training.hpp"

namespace {

using namespace protoattend;

std::vector<double> random_scores(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> z(n);
  for (double& v : z) v = dist(rng);
  return z;
}

Dataset random_dataset(std::size_t rows, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  d.features = Tensor({rows, dim});
  for (double& v : d.features.storage()) v = u(rng);
  d.labels.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) d.labels[i] = static_cast<int>(i % classes);
  d.num_classes = classes;
  return d;
}

// MNIST-sized model: 784 -> 256 -> 128, d_att 16, d_out 64.
ModelConfig desk_model(Normalization n) {
  ModelConfig c;
  c.normalization = n;
  return c;
}

void BM_Sparsemax(benchmark::State& state) {
  const auto z = random_scores(static_cast<std::size_t>(state.range(0)), 1);
  std::vector<double> out(z.size()), scratch;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sparsemax_into(z, out, scratch));
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sparsemax)->RangeMultiplier(8)->Range(8, 4096);

void BM_Softmax(benchmark::State& state) {
  const auto z = random_scores(static_cast<std::size_t>(state.range(0)), 2);
  std::vector<double> out(z.size());
  for (auto _ : state) {
    softmax_into(z, out);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Softmax)->RangeMultiplier(8)->Range(8, 4096);

// One optimizer step at the desk recipe: B 64, D_train 256.
void BM_TrainStep(benchmark::State& state) {
  const auto n = state.range(0) == 0 ? Normalization::Softmax : Normalization::Sparsemax;
  const ModelConfig model = desk_model(n);
  TrainConfig config;
  config.batch_size = 64;
  config.candidates_train = 256;
  config.iterations = 1u << 30;
  const Dataset train = random_dataset(2048, model.input_dim, model.num_classes, 3);
  ModelParameters params = ModelParameters::initialize(model, 4);
  AdamState adam = AdamState::for_parameters(params.list());
  Rng rng(5);
  std::vector<std::size_t> batch(config.batch_size);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  std::uint64_t iteration = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(batch, train, params, adam, model, config, iteration++, rng));
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->ArgName("sparsemax")->Unit(benchmark::kMillisecond);

// Batched inference of 256 inputs against a precomputed database of D rows.
void BM_PredictBatch(benchmark::State& state) {
  const ModelConfig model = desk_model(Normalization::Sparsemax);
  const auto d = static_cast<std::size_t>(state.range(0));
  const Dataset train = random_dataset(d, model.input_dim, model.num_classes, 6);
  const Dataset queries = random_dataset(256, model.input_dim, model.num_classes, 7);
  const ModelParameters params = ModelParameters::initialize(model, 8);
  const CandidateDatabase db = inference_database(train, d, 9, params, model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict_batch(queries.features, db, params, model));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_PredictBatch)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

// Encoding a database of D rows once.
void BM_PrecomputeDatabase(benchmark::State& state) {
  const ModelConfig model = desk_model(Normalization::Sparsemax);
  const auto d = static_cast<std::size_t>(state.range(0));
  const Dataset train = random_dataset(d, model.input_dim, model.num_classes, 10);
  const ModelParameters params = ModelParameters::initialize(model, 11);
  Rng rng(12);
  const CandidateDatabase raw = sample_candidate_db(train, d, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(precompute_database(raw, params, model));
  }
}
BENCHMARK(BM_PrecomputeDatabase)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto in = random_scores(n, 13), out = random_scores(n, 14);
  for (double& v : out) v -= 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(in, out));
}
BENCHMARK(BM_RocAuc)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
