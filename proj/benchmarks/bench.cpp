#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "msb/metrics.hpp"
#include "msb/models.hpp"
#include "msb/textpipe.hpp"

namespace {

using msb::nn::Mat;

Mat random_mat(Eigen::Index r, Eigen::Index c, msb::Rng& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void BM_ChunkTokens(benchmark::State& state) {
  std::vector<std::int32_t> ids(static_cast<std::size_t>(state.range(0)));
  std::iota(ids.begin(), ids.end(), 0);
  const msb::textpipe::ChunkerConfig cfg{.sequence_length = 512, .overlap = 50};
  for (auto _ : state) {
    benchmark::DoNotOptimize(msb::textpipe::chunk_tokens(ids, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ChunkTokens)->Arg(1 << 12)->Arg(1 << 16);

void BM_Fuse(benchmark::State& state) {
  msb::Rng rng(1);
  Mat u = random_mat(256, state.range(0), rng);
  Mat v = random_mat(256, state.range(0), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        msb::models::fuse(u, v, msb::models::FusionMethod::kConcatAbsDiffProduct));
  }
}
BENCHMARK(BM_Fuse)->Arg(17)->Arg(128);

void BM_GruForward(benchmark::State& state) {
  msb::Rng rng(2);
  msb::nn::Gru gru("g", 768, 256, rng);
  Mat seq = random_mat(768, state.range(0), rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gru.forward(seq));
  }
}
BENCHMARK(BM_GruForward)->Arg(4)->Arg(16);

void BM_BackboneForward(benchmark::State& state) {
  msb::models::VisualBackbone backbone;
  msb::Rng rng(3);
  msb::nn::FeatureMap grid(3, msb::models::VisualBackbone::kInputSide,
                           msb::models::VisualBackbone::kInputSide);
  grid.data = random_mat(3, grid.height * grid.width, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(backbone.forward_one(grid));
  }
}
BENCHMARK(BM_BackboneForward);

void BM_RocAuc(benchmark::State& state) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<bool> labels;
  std::vector<double> scores;
  for (long i = 0; i < state.range(0); ++i) {
    labels.push_back(rng() % 2 == 0);
    scores.push_back(dist(rng));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(msb::metrics::classification_metrics(labels, scores));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
