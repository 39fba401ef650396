#include <benchmark/benchmark.h>

#include "mmcvae/kernels.hpp"
#include "mmcvae/model.hpp"
#include "mmcvae/train.hpp"

using namespace mmcvae;

namespace {

Matrix normal_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    return sample_std_normal(rng, rows, cols);
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = normal_matrix(n, n, 1), b = normal_matrix(n, n, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(400);

void BM_MmdBiasedMedian(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix x = normal_matrix(n, 4, 3), y = normal_matrix(n, 4, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mmd_biased(x, y, KernelConfig::median()));
    }
}
BENCHMARK(BM_MmdBiasedMedian)->Arg(128)->Arg(512);

void BM_MmdToConstantGrad(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix x = normal_matrix(n, 2, 5);
    const std::vector<double> c(2, 0.0), gammas{1.0};
    for (auto _ : state) {
        benchmark::DoNotOptimize(mmd_to_constant_with_grad(x, c, gammas));
    }
}
BENCHMARK(BM_MmdToConstantGrad)->Arg(128)->Arg(512);

/// One Adam step on a default-width model with batch 128.
void BM_TrainStep(benchmark::State& state) {
    ModelShape shape;
    shape.input_dim = 20;
    Rng init(6);
    MmcVaeModel model = MmcVaeModel::initialize(shape, init);
    const std::vector<Param*> params = model.trainable_parameters();
    AdamState adam = AdamState::for_params(params);
    const TrainConfig cfg;
    const Matrix x = normal_matrix(128, 20, 7), b = normal_matrix(128, 20, 8);
    Rng noise(9);
    for (auto _ : state) {
        model.zero_grad();
        benchmark::DoNotOptimize(total_loss_backward(model, x, b, cfg.lambda1, cfg.lambda2, cfg.kernel, noise));
        adam_step(params, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
