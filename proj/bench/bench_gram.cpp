#include <benchmark/benchmark.h>

#include "npksd/generator.hpp"
#include "npksd/stein.hpp"

namespace {

// Serial reference vs OpenMP assembly of the same Stein Gram matrix.
// Entries are independent, so the two paths return bit-identical results;
// the benchmark measures the row-parallel speedup.

struct GramInputs {
  npksd::SampleMatrix samples;
  Eigen::MatrixXd scores;
  npksd::Vector weights;
  npksd::KernelConfig kernel;
};

GramInputs make_inputs(int n, int m) {
  const npksd::GeneratorSpec target = npksd::GeneratorSpec::gvd(m, 0.0);
  npksd::Rng rng(42);
  GramInputs in;
  in.samples = target.sample(n, rng);
  in.scores = target.exact_score().score_matrix(in.samples);
  in.weights = npksd::CoordinateWeights::uniform(m).w;
  in.kernel = npksd::KernelConfig::fixed(1.0);
  return in;
}

void bm_stein_gram_serial(benchmark::State& state) {
  const auto in = make_inputs(static_cast<int>(state.range(0)), 20);
  for (auto _ : state) {
    auto gram = npksd::stein_gram(in.samples, in.scores, in.weights, in.kernel,
                                  npksd::QuadForm::ScalarCross,
                                  npksd::Execution::Serial);
    benchmark::DoNotOptimize(gram.data());
  }
}

void bm_stein_gram_parallel(benchmark::State& state) {
  const auto in = make_inputs(static_cast<int>(state.range(0)), 20);
  for (auto _ : state) {
    auto gram = npksd::stein_gram(in.samples, in.scores, in.weights, in.kernel,
                                  npksd::QuadForm::ScalarCross,
                                  npksd::Execution::Parallel);
    benchmark::DoNotOptimize(gram.data());
  }
}

void bm_kernel_gram_serial(benchmark::State& state) {
  const auto in = make_inputs(static_cast<int>(state.range(0)), 20);
  for (auto _ : state) {
    auto gram = npksd::kernel_gram(in.samples, in.kernel, npksd::Execution::Serial);
    benchmark::DoNotOptimize(gram.data());
  }
}

void bm_kernel_gram_parallel(benchmark::State& state) {
  const auto in = make_inputs(static_cast<int>(state.range(0)), 20);
  for (auto _ : state) {
    auto gram = npksd::kernel_gram(in.samples, in.kernel, npksd::Execution::Parallel);
    benchmark::DoNotOptimize(gram.data());
  }
}

}  // namespace

BENCHMARK(bm_stein_gram_serial)->Arg(256)->Arg(512)->Arg(1024);
BENCHMARK(bm_stein_gram_parallel)->Arg(256)->Arg(512)->Arg(1024);
BENCHMARK(bm_kernel_gram_serial)->Arg(512)->Arg(1024);
BENCHMARK(bm_kernel_gram_parallel)->Arg(512)->Arg(1024);

BENCHMARK_MAIN();
