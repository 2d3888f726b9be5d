#include "resobs/attack.hpp"
#include "resobs/csdecode.hpp"
#include "resobs/harness.hpp"
#include "resobs/l1_solver.hpp"
#include "resobs/model.hpp"
#include "resobs/observer.hpp"
#include "resobs/powergrid.hpp"
#include "resobs/prior.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <string>

using namespace resobs;

namespace {

Vector gaussian(int n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = g(rng);
    return m;
}

struct Ieee14Window {
    model::DiscreteLinearSystem sys;
    model::HorizonOperators ops;
    Vector y;
    Vector u;
    Vector y_newest;
};

Ieee14Window ieee14_window(int window) {
    const auto g = grid::load_grid_case(std::string(RESOBS_SOURCE_DIR) + "/data/ieee14.json");
    Ieee14Window w;
    w.sys = model::discretize(grid::build_reduced_model(g), 0.01);
    w.ops = model::build_horizon_operators(w.sys, window);
    std::mt19937_64 rng(5);
    w.u = Vector(19 * window);
    for (int k = 0; k < window; ++k) w.u.segment(19 * k, 19) << g.dispatch, g.nominal_demand;
    const Vector x0 = gaussian(10, rng, 0.05);
    const Vector clean = model::simulate_outputs(w.sys, x0, w.u, window);
    w.y_newest = clean.tail(19);
    w.y = clean + gaussian(19 * window, rng, 1e-5);
    for (int k = window / 2; k < window; ++k) {
        for (int ch : {7, 9, 12}) w.y(19 * k + ch) += 0.05;
    }
    return w;
}

}  // namespace

static void BM_L1Regression(benchmark::State& state) {
    const int rows = static_cast<int>(state.range(0));
    const int cols = static_cast<int>(state.range(1));
    std::mt19937_64 rng(1);
    const Matrix phi = gaussian(rows, cols, rng);
    Vector r = phi * gaussian(cols, rng) + gaussian(rows, rng, 1e-3);
    for (int i = 0; i < rows / 10; ++i) r(i * 10) += 5.0;
    int iterations = 0;
    for (auto _ : state) {
        const auto res = solve_l1_regression(phi, r, std::nullopt, SolverSettings{});
        iterations = res.iterations;
        benchmark::DoNotOptimize(res.objective);
    }
    state.counters["admm_iterations"] = iterations;
}
BENCHMARK(BM_L1Regression)->Args({40, 4})->Args({200, 10})->Args({950, 10})->Unit(benchmark::kMillisecond);

static void BM_L1DecodeIeee14(benchmark::State& state) {
    const auto w = ieee14_window(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(cs::l1_decode(w.y, w.ops, w.u).objective);
}
BENCHMARK(BM_L1DecodeIeee14)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_QcbpIeee14(benchmark::State& state) {
    const auto w = ieee14_window(static_cast<int>(state.range(0)));
    prior::PriorConfig pc{(0.05 * (w.y_newest.cwiseAbs().array() + 0.1)).matrix(), 0.5, 3};
    const auto p = prior::synth_prior(w.y_newest, pc, 0.99);
    for (auto _ : state) {
        benchmark::DoNotOptimize(observer::solve_qcbp({w.ops, w.y, w.u, p}, SolverSettings{}).objective);
    }
}
BENCHMARK(BM_QcbpIeee14)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_HorizonOperators(benchmark::State& state) {
    const auto g = grid::load_grid_case(std::string(RESOBS_SOURCE_DIR) + "/data/ieee14.json");
    const auto sys = model::discretize(grid::build_reduced_model(g), 0.01);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model::build_horizon_operators(sys, static_cast<int>(state.range(0))).annihilator.data());
    }
}
BENCHMARK(BM_HorizonOperators)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_BddResidue(benchmark::State& state) {
    const auto w = ieee14_window(20);
    const attack::BadDataDetector bdd(w.sys, 0.05);
    const Vector y = w.y.tail(19);
    const Vector u = w.u.tail(19);
    for (auto _ : state) benchmark::DoNotOptimize(bdd.test(y, u).residue);
}
BENCHMARK(BM_BddResidue);

static void BM_Ieee14Scenario(benchmark::State& state) {
    auto cfg = harness::load_scenario_config(std::string(RESOBS_SOURCE_DIR) + "/configs/ieee14_attack.json");
    cfg.run_length = static_cast<int>(state.range(0));
    cfg.attack.onset = cfg.run_length / 2;
    cfg.output_dir.clear();
    for (auto _ : state) benchmark::DoNotOptimize(harness::run_scenario(cfg).metrics.entries.size());
}
BENCHMARK(BM_Ieee14Scenario)->Arg(300)->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
