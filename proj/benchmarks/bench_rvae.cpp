#include <benchmark/benchmark.h>

#include "rvae/data.hpp"
#include "rvae/eval.hpp"
#include "rvae/numerics.hpp"
#include "rvae/objective.hpp"
#include "rvae/vae_model.hpp"

namespace {

rvae::Matrix random_binary(rvae::Rng& rng, std::size_t rows, std::size_t cols) {
  rvae::Matrix out(rows, cols);
  for (double& v : out.values()) v = rng.uniform() < 0.13 ? 1.0 : 0.0;
  return out;
}

void BM_AffineForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  rvae::Rng rng(1);
  const rvae::Matrix x = rvae::gaussian_sample(rng, n, 784);
  const rvae::Matrix w = rvae::he_normal(rng, 784, 200);
  const rvae::Matrix b(1, 200, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(rvae::affine_forward(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_AffineForward)->Arg(1)->Arg(50)->Arg(200);

void BM_LogMeanExp(benchmark::State& state) {
  rvae::Rng rng(2);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (double& x : v) x = -100.0 + 5.0 * rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(rvae::log_mean_exp(v));
}
BENCHMARK(BM_LogMeanExp)->Arg(200);

void BM_RobustBatchBackward(benchmark::State& state) {
  rvae::Rng rng(3);
  const rvae::VaeParams params = rvae::VaeParams::initialize({}, rng);
  const rvae::Matrix x = random_binary(rng, 200, 784);
  rvae::EpsilonState eps;
  eps.log_eps = -600.0;
  for (auto _ : state) benchmark::DoNotOptimize(rvae::robust_batch_backward(params, x, eps, rng));
  state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_RobustBatchBackward)->Unit(benchmark::kMillisecond);

void BM_ElboBatchBackward(benchmark::State& state) {
  rvae::Rng rng(4);
  const rvae::VaeParams params = rvae::VaeParams::initialize({}, rng);
  const rvae::Matrix x = random_binary(rng, 200, 784);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rvae::elbo_batch_backward(params, x, rvae::ElboEstimator::analytic_kl, rng));
  }
  state.SetItemsProcessed(state.iterations() * 200);
}
BENCHMARK(BM_ElboBatchBackward)->Unit(benchmark::kMillisecond);

void BM_AdamStep(benchmark::State& state) {
  rvae::Rng rng(5);
  rvae::VaeParams params = rvae::VaeParams::initialize({}, rng);
  rvae::VaeParams grads = rvae::VaeParams::initialize({}, rng);
  const auto& const_grads = grads;
  const auto g = const_grads.tensors();
  const auto& const_params = params;
  rvae::AdamState adam = rvae::AdamState::for_params(const_params.tensors());
  auto p = params.tensors();
  for (auto _ : state) rvae::adam_step(p, g, adam, 1e-6);
}
BENCHMARK(BM_AdamStep)->Unit(benchmark::kMicrosecond);

void BM_IwaeExample(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  rvae::Rng rng(6);
  const rvae::VaeParams params = rvae::VaeParams::initialize({}, rng);
  const rvae::Matrix x = random_binary(rng, 1, 784);
  for (auto _ : state) benchmark::DoNotOptimize(rvae::iwae_ll(params, x.row(0), k, rng));
}
BENCHMARK(BM_IwaeExample)->Arg(1)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Binarize(benchmark::State& state) {
  rvae::Rng rng(7);
  rvae::Matrix batch(200, 784);
  for (double& v : batch.values()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(rvae::binarize(batch, rng));
}
BENCHMARK(BM_Binarize)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
