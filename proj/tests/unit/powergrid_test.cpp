#include "resobs/error.hpp"
#include "resobs/powergrid.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace resobs;
using resobs::testing::source_path;

namespace {

grid::GridCase toy_case(double ground) {
    grid::GeneratorSpec g;
    g.bus = 0;
    g.internal_reactance = 1.0;
    g.inertia = 1.0;
    g.damping = 1.0;
    return grid::make_grid_case("toy", 1, {}, {g}, Vector::Zero(1), Vector::Constant(1, ground));
}

grid::GridCase ieee14() { return grid::load_grid_case(source_path("data/ieee14.json")); }

}  // namespace

TEST(GridCase, Ieee14Structure) {
    const auto g = ieee14();
    EXPECT_EQ(g.n_gen, 5);
    EXPECT_EQ(g.n_bus, 14);
    EXPECT_EQ(g.branches.size(), 20U);
    EXPECT_EQ(g.generator_buses, (std::vector<int>{0, 1, 2, 5, 7}));
    EXPECT_LE((g.laplacian - g.laplacian.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE(g.laplacian.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(g.p_node.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE((g.inertia.diagonal().array() > 0.0).all());
    EXPECT_TRUE((g.damping.diagonal().array() > 0.0).all());
    // total nominal load of the case is 259 MW
    EXPECT_NEAR(-g.nominal_demand.sum(), 2.59, 1e-12);
}

TEST(GridCase, PartitionKeepsZeroRowSums) {
    const auto g = ieee14();
    const Matrix top(g.l_gg().rowwise().sum() + g.l_gl().rowwise().sum());
    EXPECT_LE(top.cwiseAbs().maxCoeff(), 1e-12);
    const Matrix bottom = g.l_lg().rowwise().sum() + (g.l_ll() - Matrix(g.bus_ground.asDiagonal())).rowwise().sum();
    EXPECT_LE(bottom.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GridCase, RejectsBadInput) {
    EXPECT_THROW(grid::grid_case_from_json("{"), Error);
    EXPECT_THROW(grid::grid_case_from_json(R"({"buses": [{"id": 2}], "branches": [], "generators": []})"), Error);
    grid::GeneratorSpec g;
    g.bus = 3;
    EXPECT_THROW(grid::make_grid_case("bad", 2, {}, {g}, Vector::Zero(2), Vector::Zero(2)), Error);
}

TEST(Reduction, ToyCaseByHand) {
    // L = [[1, -1], [-1, 1 + g]]; K = 1 - 1 / (1 + g) = 0.5 for g = 1.
    const auto sys = grid::build_reduced_model(toy_case(1.0));
    Matrix a(2, 2);
    a << 0, 1, -0.5, -1;
    Matrix b(2, 2);
    b << 0, 0, 1, 0.5;
    EXPECT_LE((sys.A - a).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((sys.B - b).cwiseAbs().maxCoeff(), 1e-14);
    Matrix c(2, 2);
    c << 0, 1, 0, 0;
    EXPECT_LE((sys.C - c).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE(sys.D.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Reduction, DecoupledNetwork) {
    // two generators tied only to each other; the single bus hangs on its ground
    grid::GeneratorSpec a;
    a.bus = 0;
    a.internal_reactance = 1.0;
    a.inertia = 1.0;
    a.damping = 1.0;
    auto b = a;
    b.inertia = 2.0;
    auto g = grid::make_grid_case("pair", 1, {}, {a, b}, Vector::Zero(1), Vector::Constant(1, 1.0));
    g.laplacian.setZero();
    g.laplacian << 1, -1, 0, -1, 1, 0, 0, 0, 0;
    const auto sys = grid::build_reduced_model(g);
    Matrix lower(2, 2);
    lower << -1, 1, 0.5, -0.5;
    EXPECT_LE((sys.A.bottomLeftCorner(2, 2) - lower).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE(sys.B.rightCols(1).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE(sys.C.bottomLeftCorner(1, 2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Reduction, KronReducedSymmetricPsd) {
    const auto g = ieee14();
    const Matrix k = grid::kron_reduced(g);
    EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (k + k.transpose()));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(Reduction, UngroundedKronHasZeroRowSums) {
    const auto g = ieee14();
    std::vector<grid::GeneratorSpec> gens;
    for (int i = 0; i < g.n_gen; ++i) {
        grid::GeneratorSpec s;
        s.bus = g.generator_buses[static_cast<std::size_t>(i)];
        s.internal_reactance = -1.0 / g.laplacian(i, g.n_gen + s.bus);
        s.inertia = g.inertia(i, i);
        s.damping = g.damping(i, i);
        gens.push_back(s);
    }
    const auto open = grid::make_grid_case("open", g.n_bus, g.branches, gens, Vector::Zero(g.n_bus),
                                           Vector::Zero(g.n_bus));
    const Matrix k = grid::kron_reduced(open);
    EXPECT_LE(k.rowwise().sum().cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Reduction, Ieee14DiscreteModelIsStable) {
    const auto sys = model::discretize(grid::build_reduced_model(ieee14()), 0.01);
    EXPECT_EQ(sys.states(), 10);
    EXPECT_EQ(sys.outputs(), 19);
    EXPECT_EQ(sys.inputs(), 19);
    EXPECT_LT(spectral_radius(sys.A), 1.0);
    EXPECT_TRUE(model::is_observable(sys));
}

TEST(Reduction, SingularLoadBlockRejected) {
    auto g = toy_case(0.0);
    g.laplacian.setZero();
    try {
        (void)grid::build_reduced_model(g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Reduction);
    }
}

TEST(BusAngles, TrivialCases) {
    const auto g = ieee14();
    EXPECT_EQ(grid::recover_bus_angles(g, Vector::Zero(5), Vector::Zero(14)), Vector::Zero(14));
    std::mt19937_64 rng(1);
    const Vector delta = resobs::testing::random_vector(5, rng, 0.1);
    const Vector balanced = g.l_lg() * delta;
    EXPECT_LE(grid::recover_bus_angles(g, delta, balanced).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BusAngles, SteadyStatePowerFlowResidual) {
    const auto g = ieee14();
    const auto csys = grid::build_reduced_model(g);
    Vector u(19);
    u << g.dispatch, g.nominal_demand;
    const Vector x = grid::equilibrium_state(csys, u);
    EXPECT_LE((csys.A * x + csys.B * u).cwiseAbs().maxCoeff(), 1e-10);
    const Vector theta = grid::recover_bus_angles(g, x.head(5), g.nominal_demand);
    EXPECT_LE(grid::power_flow_residual(g, x.head(5), theta, g.nominal_demand), 1e-10);
    // P_net from the output map equals the branch flows at the recovered angles
    const Vector y = csys.C * x + csys.D * u;
    EXPECT_LE((y.tail(14) - g.p_node * theta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PiControl, ZeroErrorKeepsIntegralTerm) {
    auto pi = grid::PiController::uniform(2, 20.0, 10.0, 1e3);
    pi.integral_state << 0.3, -0.1;
    const Vector pg = grid::pi_control_step(pi, Vector::Zero(2), 0.01);
    EXPECT_NEAR(pg(0), 3.0, 1e-14);
    EXPECT_NEAR(pg(1), -1.0, 1e-14);
}

TEST(PiControl, PureProportional) {
    auto pi = grid::PiController::uniform(1, 20.0, 0.0, 1e3);
    for (int k = 0; k < 5; ++k) {
        EXPECT_NEAR(grid::pi_control_step(pi, Vector::Constant(1, -0.01), 0.01)(0), 0.2, 1e-14);
    }
}

TEST(PiControl, AntiWindupClamp) {
    auto pi = grid::PiController::uniform(1, 0.0, 1.0, 0.05);
    for (int k = 0; k < 100; ++k) (void)grid::pi_control_step(pi, Vector::Constant(1, -1.0), 0.01);
    EXPECT_DOUBLE_EQ(pi.integral_state(0), 0.05);
}

namespace {

EstimateTrace run_plant(const grid::GridCase& g, const model::DiscreteLinearSystem& sys, const Matrix& demand) {
    grid::SimulationSetup setup;
    setup.grid = &g;
    setup.sys = &sys;
    setup.controller = grid::PiController::uniform(g.n_gen, 2.0, 10.0, 1e3);
    setup.controller.integral_state = g.dispatch / 10.0;
    setup.demand = demand;
    setup.horizon_samples = static_cast<int>(demand.cols());
    Vector u0(19);
    u0 << g.dispatch, g.nominal_demand;
    setup.x0 = grid::equilibrium_state(grid::build_reduced_model(g), u0);
    return grid::simulate_closed_loop(setup);
}

}  // namespace

TEST(ClosedLoop, StepLoadFrequencyRecovers) {
    const auto g = ieee14();
    const auto sys = model::discretize(grid::build_reduced_model(g), 0.01);
    const int samples = 3000;
    Matrix demand = g.nominal_demand.replicate(1, samples);
    for (int k = 100; k < samples; ++k) demand(3, k) *= 1.2;
    const auto trace = run_plant(g, sys, demand);
    const Vector omega = trace.samples.back().x_true.tail(5);
    EXPECT_LE(omega.cwiseAbs().maxCoeff(), 1e-3);
    // the step did disturb the frequency
    double peak = 0.0;
    for (const auto& s : trace.samples) peak = std::max(peak, s.x_true.tail(5).cwiseAbs().maxCoeff());
    EXPECT_GT(peak, 1e-3);
}

TEST(ClosedLoop, ConstantDemandConvergesToFixedPoint) {
    const auto g = ieee14();
    const auto sys = model::discretize(grid::build_reduced_model(g), 0.01);
    const int samples = 3000;
    Matrix demand = 1.05 * g.nominal_demand.replicate(1, samples);
    const auto trace = run_plant(g, sys, demand);
    const auto& last = trace.samples.back().x_true;
    const auto& prev = trace.samples[trace.samples.size() - 2].x_true;
    EXPECT_LE((last - prev).norm(), 1e-8);
}

TEST(ClosedLoop, MeasurementIdentityAndAngleResidual) {
    const auto g = ieee14();
    const auto sys = model::discretize(grid::build_reduced_model(g), 0.01);
    const Matrix demand = grid::demand_profile(g, 200, 0.01, 3);
    const auto trace = run_plant(g, sys, demand);
    for (const auto& s : trace.samples) {
        EXPECT_LE((s.y_measured - (sys.C * s.x_true + sys.D * s.u + s.attack)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE(s.theta_residual, 1e-10);
        EXPECT_FALSE(s.alarm);
    }
}

TEST(ClosedLoop, Deterministic) {
    const auto g = ieee14();
    const auto sys = model::discretize(grid::build_reduced_model(g), 0.01);
    const Matrix demand = grid::demand_profile(g, 100, 0.01, 3);
    const auto a = run_plant(g, sys, demand);
    const auto b = run_plant(g, sys, demand);
    for (std::size_t k = 0; k < a.samples.size(); ++k) {
        EXPECT_EQ(a.samples[k].x_true, b.samples[k].x_true);
        EXPECT_EQ(a.samples[k].y_measured, b.samples[k].y_measured);
    }
}

TEST(DemandProfile, BoundsAndSeed) {
    const auto g = ieee14();
    const Matrix d = grid::demand_profile(g, 50, 0.02, 9);
    for (int k = 0; k < 50; ++k) {
        for (int i = 0; i < 14; ++i) {
            EXPECT_LE(std::abs(d(i, k) - g.nominal_demand(i)), 0.02 * std::abs(g.nominal_demand(i)) + 1e-15);
        }
    }
    EXPECT_EQ(d, grid::demand_profile(g, 50, 0.02, 9));
}
