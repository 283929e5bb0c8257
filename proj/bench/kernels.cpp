// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "mebart/latent.hpp"
#include "mebart/rng.hpp"
#include "mebart/tree.hpp"

using namespace mebart;

namespace {

struct Setup {
  Matrix<double> x_star;
  std::vector<double> target;
  CutpointGrid grid;
  std::vector<Tree> trees;
  HyperParams hp;

  Setup(std::size_t n, std::size_t p, std::size_t m) : x_star(n, p), target(n) {
    Rng rng(11);
    for (double& v : x_star.values()) v = rng.normal(0.0, 0.3);
    for (std::size_t i = 0; i < n; ++i) target[i] = x_star(i, 0) > 0 ? 0.25 : -0.25;
    const std::vector<double> se(p, 0.1);
    grid = CutpointGrid::expanded(x_star, se, 100);
    trees.resize(m);
    for (Tree& t : trees) {
      for (int g = 0; g < 3; ++g) {
        const auto leaves = t.leaves();
        t.grow(leaves[rng.index(leaves.size())], static_cast<std::int32_t>(rng.index(p)), static_cast<std::int32_t>(rng.index(100)));
      }
      for (auto leaf : t.leaves()) t.set_mu(leaf, rng.normal(0.0, 0.02));
    }
    hp.mu_x.assign(p, 0.0);
    hp.sigma_x2.assign(p, 0.09);
    hp.sigma_e2.assign(p, 0.01);
    hp.proposal_sd.assign(p, 0.1);
  }
};

template <bool Parallel>
void evaluate(benchmark::State& st) {
  const Setup s(static_cast<std::size_t>(st.range(0)), 5, 200);
  const Matrix<Cell> cells = s.grid.cells(s.x_star);
  std::vector<double> out(s.x_star.rows());
  for (auto _ : st) {
    if (Parallel) evaluate_rows(s.trees, cells, out);
    else evaluate_rows_serial(s.trees, cells, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void latent_sweep(benchmark::State& st) {
  const Setup s(static_cast<std::size_t>(st.range(0)), 5, 200);
  LatentState state = LatentState::initialize(s.x_star, s.grid);
  std::vector<NodeAssignment> assign;
  for (const Tree& t : s.trees) assign.push_back(NodeAssignment::from_cells(t, state.cells));
  std::vector<double> fit(s.x_star.rows());
  evaluate_rows_serial(s.trees, state.cells, fit);
  std::uint64_t sweep = 0;
  for (auto _ : st) {
    LatentSweepInputs in{s.x_star, s.target, s.trees, s.grid, 0.01, s.hp, 5, sweep++};
    EnsembleCache cache{assign, fit};
    if (Parallel) update_latent_x(state, in, cache);
    else update_latent_x_serial(state, in, cache);
    benchmark::DoNotOptimize(state.x.values().data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(evaluate<false>)->Name("evaluate_rows/serial")->Arg(1000)->Arg(10000);
BENCHMARK(evaluate<true>)->Name("evaluate_rows/openmp")->Arg(1000)->Arg(10000);
BENCHMARK(latent_sweep<false>)->Name("latent_sweep/serial")->Arg(1000)->Arg(10000);
BENCHMARK(latent_sweep<true>)->Name("latent_sweep/openmp")->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
