// Serial reference kernels against their OpenMP counterparts, plus a whole
// batch gradient in both execution modes. Set GLOCAL_THREADS to vary threads.
#include <benchmark/benchmark.h>

#include <vector>

#include "glocal/kernels.hpp"
#include "glocal/model.hpp"
#include "glocal/rng.hpp"
#include "glocal/synthetic.hpp"

namespace {

using namespace glocal;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

template <auto Gemm>
void gemm_case(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Softmax>
void softmax_case(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 64;
  const auto x = random_values(rows * cols, 3);
  std::vector<unsigned char> mask(cols, 1);
  std::vector<double> out(rows * cols);
  for (auto _ : state) {
    Softmax(x, mask, 1.0, out, rows, cols);
    benchmark::DoNotOptimize(out.data());
  }
}

struct BatchFixture {
  GlocalModel model;
  Corpus corpus;
  std::vector<const Example*> batch;

  BatchFixture() {
    const auto data = generate_synthetic(SyntheticSpec::standard(80, 50, 7));
    const Vocab vocab = build_vocab(data.train, 1, 50000);
    corpus = encode_corpus(data.train, vocab, 64);
    model = GlocalModel::init(ModelConfig::toy(vocab.size(), 50), 7);
    for (std::size_t i = 0; i < 16; ++i) batch.push_back(&corpus.examples[i]);
  }
};

void batch_gradient(benchmark::State& state, Execution exec) {
  static BatchFixture f;
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradients(f.model, f.batch, LossTerms::both, exec));
}

}  // namespace

BENCHMARK(gemm_case<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(gemm_case<kernels::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(gemm_case<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(gemm_case<kernels::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Arg(64)->Arg(256);
BENCHMARK(softmax_case<kernels::serial::softmax_rows>)->Name("softmax/serial")->Arg(256)->Arg(4096);
BENCHMARK(softmax_case<kernels::parallel::softmax_rows>)->Name("softmax/parallel")->Arg(256)->Arg(4096);
BENCHMARK_CAPTURE(batch_gradient, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(batch_gradient, parallel, Execution::parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
