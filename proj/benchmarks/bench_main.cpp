#include <benchmark/benchmark.h>

#include "lab/limitlaw.hpp"

using namespace lab;

static void BM_EnumeratePhiDirect(benchmark::State& state) {
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  double T = double(state.range(0));
  for (auto _ : state) {
    auto ball = enumerate_ball_direct(gs, nf, T);
    benchmark::DoNotOptimize(ball.count());
  }
}
BENCHMARK(BM_EnumeratePhiDirect)->Arg(50)->Arg(100)->Arg(200);

static void BM_EnumerateSSDirect(benchmark::State& state) {
  auto ss = gamma_sargent_shapira();
  auto nf = frobenius_norm();
  double T = double(state.range(0));
  for (auto _ : state) {
    auto ball = enumerate_ball_direct(ss, nf, T);
    benchmark::DoNotOptimize(ball.count());
  }
}
BENCHMARK(BM_EnumerateSSDirect)->Arg(50)->Arg(100)->Arg(200);

static void BM_CanonicalClass(benchmark::State& state) {
  Rng rng(1);
  std::vector<Mat> bases;
  for (int q = 0; q < 64; ++q) {
    Mat b(3, 2);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 2; ++c) b(r, c) = rng.uniform(-3, 3);
    bases.push_back(b);
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(canonical_class(bases[i++ % bases.size()]));
  }
}
BENCHMARK(BM_CanonicalClass);

static void BM_FeasibleS(benchmark::State& state) {
  Rng rng(2);
  Mat k = Mat::Identity(3, 3);
  k.topLeftCorner(2, 2) = haar_sample_SO(2, rng);
  SDecomp dec = s_decomposition(k, make_u(2, Vec::Constant(1, 0.7)).mat);
  auto nf = frobenius_norm();
  for (auto _ : state) {
    benchmark::DoNotOptimize(feasible_s(dec, nf, 1000.0, -20.0, 20.0));
  }
}
BENCHMARK(BM_FeasibleS);

static void BM_VolBall(benchmark::State& state) {
  QuadratureSpec spec;
  spec.mc_samples = int(state.range(0));
  spec.seed = 3;
  auto nf = frobenius_norm();
  for (auto _ : state) {
    benchmark::DoNotOptimize(vol_ball_mc(2, nf, 1000.0, spec).value);
  }
}
BENCHMARK(BM_VolBall)->Arg(10000)->Arg(50000);

static void BM_DensityProfile(benchmark::State& state) {
  QuadratureSpec spec;
  spec.mc_samples = 20000;
  spec.grid_m = 64;
  spec.seed = 4;
  auto nf = frobenius_norm();
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval_w_theta0(0.3, nf, spec).values.sum());
  }
}
BENCHMARK(BM_DensityProfile);

static void BM_SamplePredicted(benchmark::State& state) {
  QuadratureSpec spec;
  spec.mc_samples = 10000;
  spec.grid_m = 32;
  spec.seed = 5;
  auto gamma = gamma_phi_sl2z();
  Mat b(3, 2);
  b.col(0) = v_plus(2);
  b.col(1) = std::sqrt(2.0) * Vec::Unit(3, 1);
  Eigen::Vector3d a1 = b.col(0), b1 = b.col(1);
  Mat nrm = a1.cross(b1);
  OrthoPair start = make_ortho_pair(make_lattice(b), make_lattice(nrm));
  PredictedLaw law = classify_start(start, gamma, frobenius_norm(), spec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_predicted(law, 1000, 99).size());
  }
}
BENCHMARK(BM_SamplePredicted);

BENCHMARK_MAIN();
