#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "imml/adam.hpp"
#include "imml/geno_qc.hpp"
#include "imml/rng.hpp"
#include "imml/sphere_gan.hpp"
#include "imml/tensor.hpp"
#include "imml/transformer.hpp"

namespace {

void bm_matmul(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    imml::Rng rng(1);
    imml::Tensor a = imml::Tensor::from_data({n, n}, rng.normal_vec(n * n));
    imml::Tensor b = imml::Tensor::from_data({n, n}, rng.normal_vec(n * n));
    for (auto _ : state) {
        benchmark::DoNotOptimize(imml::matmul(a, b).values().data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(bm_matmul)->Arg(32)->Arg(64)->Arg(128);

void bm_forward_backward(benchmark::State& state) {
    auto b = static_cast<std::size_t>(state.range(0));
    imml::Rng rng(2);
    imml::Tensor x = imml::Tensor::from_data({b, 16}, rng.normal_vec(b * 16));
    imml::Tensor w1 = imml::Tensor::param({16, 32}, rng.normal_vec(16 * 32));
    imml::Tensor b1 = imml::Tensor::param({32}, rng.normal_vec(32));
    imml::Tensor w2 = imml::Tensor::param({32, 1}, rng.normal_vec(32));
    imml::Tensor b2 = imml::Tensor::param({1}, rng.normal_vec(1));
    for (auto _ : state) {
        imml::Tensor h = imml::gelu(imml::linear(x, w1, b1));
        imml::Tensor out = imml::linear(h, w2, b2);
        imml::GradientMap g = imml::backward(imml::mean(imml::square(out)));
        benchmark::DoNotOptimize(g.size());
    }
}
BENCHMARK(bm_forward_backward)->Arg(16)->Arg(64);

void bm_adam_step(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    imml::Rng rng(3);
    imml::Tensor p = imml::Tensor::param({n}, rng.normal_vec(n));
    imml::AdamConfig cfg;
    imml::Adam opt(cfg);
    for (auto _ : state) {
        imml::GradientMap g = imml::backward(imml::sum(imml::square(p)));
        opt.step({p}, g);
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n);
}
BENCHMARK(bm_adam_step)->Arg(1024)->Arg(16384);

// One training step of the tabular backbone: forward on [B, m] features,
// mean-squared readout, full backward pass.
void bm_backbone_step(benchmark::State& state) {
    auto m = static_cast<std::size_t>(state.range(0));
    imml::Rng rng(4);
    imml::BackboneConfig cfg{m, 16, 1, 2, 0.0};
    imml::Rng init = rng.split("init");
    imml::TabularBackbone bb(cfg, init);
    imml::Tensor x = imml::Tensor::from_data({32, m}, rng.split("x").normal_vec(32 * m));
    for (auto _ : state) {
        imml::Tensor z = bb.forward(x);
        imml::GradientMap g = imml::backward(imml::mean(imml::square(z)));
        benchmark::DoNotOptimize(g.size());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 32 * m);
}
BENCHMARK(bm_backbone_step)->Arg(16)->Arg(40)->Arg(60);

// Discriminator scoring: embed, project to the sphere, decompose.
void bm_sphere_score(benchmark::State& state) {
    auto b = static_cast<std::size_t>(state.range(0));
    imml::Rng rng(5);
    imml::Rng init = rng.split("init");
    imml::SphereDiscriminator disc(32, 16, 1.0, init);
    imml::Tensor h = imml::Tensor::from_data({b, 32}, rng.split("h").normal_vec(b * 32));
    for (auto _ : state) {
        benchmark::DoNotOptimize(disc.score(h).scores.values().data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * b);
}
BENCHMARK(bm_sphere_score)->Arg(32)->Arg(256);

// Full genotype pipeline over an n x m dosage matrix with 2% missing calls.
void bm_qc_pipeline(benchmark::State& state) {
    auto snps = static_cast<std::size_t>(state.range(0));
    std::size_t n = 500;
    imml::Rng rng(6);
    imml::GenotypeMatrix g;
    for (std::size_t c = 0; c < snps; ++c) g.snps.push_back("snp" + std::to_string(c));
    for (std::size_t r = 0; r < n; ++r) g.subjects.push_back("s" + std::to_string(r));
    g.values.resize(n * snps);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        double u = rng.uniform();
        g.values[i] = u < 0.02 ? imml::kMissingGenotype
                               : static_cast<std::int8_t>(rng.below(3));
    }
    for (auto _ : state) {
        auto [clean, report] = imml::qc_pipeline(g);
        benchmark::DoNotOptimize(report.surviving);
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n * snps);
}
BENCHMARK(bm_qc_pipeline)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
