#include <benchmark/benchmark.h>

#include "qdiff/harness.hpp"

using namespace qdiff;

namespace {

struct Reference {
  LatticeConfig cfg{1, 3};
  HoppingKernel h;
  MarkovModel model;
  PotentialAssignment v;
  DensityMatrixInit rho0;

  Reference() {
    h.set({1}, cplx(1, 0));
    h.set({-1}, cplx(1, 0));
    model = build_cyclic_walk(cfg, 1.0);
    v = potential_from_cell(CellFunction({1.0, 0.0, -1.0}), model);
    rho0 = DensityMatrixInit::pure(WavePacket::delta({0}));
  }
};

const Reference& ref() {
  static Reference r;
  return r;
}

void BM_AssembleFiberGenerator(benchmark::State& state) {
  const Reference& r = ref();
  for (auto _ : state) {
    AugmentedGenerator L = assemble_L({0.1}, {0.7}, r.h, r.v, r.model);
    benchmark::DoNotOptimize(L.matrix.data());
  }
}
BENCHMARK(BM_AssembleFiberGenerator);

void BM_ExactFourierDensity(benchmark::State& state) {
  const Reference& r = ref();
  FiberSystem fibers{r.h, r.v, r.model};
  const double t = static_cast<double>(state.range(0));
  for (auto _ : state) {
    cplx f = exact_fourier_density({0.3}, t, r.rho0, 8, fibers, 1e-9, false);
    benchmark::DoNotOptimize(f);
  }
}
BENCHMARK(BM_ExactFourierDensity)->Arg(1)->Arg(64)->Arg(1024);

void BM_SamplePathEvolve(benchmark::State& state) {
  const Reference& r = ref();
  const double t = 5.0;
  SimulationBox box = make_box(1, default_box_radius(0, r.h, t));
  PathPropagator prop(box, r.h, r.v, r.cfg, r.model.M);
  Vector psi0 = Vector::Zero(box.n());
  psi0(box.index_of({0})) = 1.0;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    PotentialPath path = sample_path(r.model, t, derive_seed(1, seed++));
    Vector psi = psi0;
    double t0 = 0.0;
    for (std::size_t i = 0; i < path.jump_times.size(); ++i) {
      double t1 = i + 1 < path.jump_times.size() ? path.jump_times[i + 1] : t;
      prop.apply(psi, path.states[i], std::min(t1, t) - t0);
      t0 = t1;
      if (t0 >= t) break;
    }
    benchmark::DoNotOptimize(psi.data());
  }
}
BENCHMARK(BM_SamplePathEvolve);

void BM_DiffusionMatrixPoint(benchmark::State& state) {
  const Reference& r = ref();
  SpectralAnalyzer an(r.model, r.h, r.v);
  double p = 0.0;
  for (auto _ : state) {
    RMatrix D = 0.5 * an.hessian_closed_form({p}).H;
    benchmark::DoNotOptimize(D.data());
    p += 1e-3;
  }
}
BENCHMARK(BM_DiffusionMatrixPoint);

void BM_RieszProjectionContour(benchmark::State& state) {
  const Reference& r = ref();
  SpectralAnalyzer an(r.model, r.h, r.v);
  for (auto _ : state) {
    Matrix Q = an.riesz_projection_contour({0.1}, {0.4});
    benchmark::DoNotOptimize(Q.data());
  }
}
BENCHMARK(BM_RieszProjectionContour);

}  // namespace

BENCHMARK_MAIN();
