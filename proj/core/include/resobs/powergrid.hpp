#pragma once

#include "resobs/attack.hpp"
#include "resobs/linalg.hpp"
#include "resobs/model.hpp"
#include "resobs/observer.hpp"
#include "resobs/prior.hpp"
#include "resobs/trace.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace resobs::grid {

struct Branch {
    int from = 0;  ///< 0-based bus index
    int to = 0;
    double reactance = 0.0;  ///< p.u.
};

/**
 * Linearized lossless network with n_g generator internal nodes followed by
 * n_b buses. `laplacian` is the susceptance-weighted Laplacian of the full
 * (n_g + n_b)-node graph and has zero row sums. `bus_ground` adds a
 * susceptance from each bus to the angle reference; it enters only the load
 * block used for the algebraic elimination.
 */
struct GridCase {
    std::string name;
    int n_gen = 0;
    int n_bus = 0;
    Matrix laplacian;
    Vector bus_ground;
    Matrix inertia;    ///< diagonal M
    Matrix damping;    ///< diagonal D_g
    Matrix p_node;     ///< n_b x n_b bus injection map (branch Laplacian)
    std::vector<int> generator_buses;
    std::vector<Branch> branches;
    Vector nominal_demand;  ///< bus injection input P_d (loads negative), p.u.
    Vector dispatch;        ///< nominal generator mechanical power, p.u.
    double base_mva = 100.0;

    [[nodiscard]] Matrix l_gg() const { return laplacian.topLeftCorner(n_gen, n_gen); }
    [[nodiscard]] Matrix l_gl() const { return laplacian.topRightCorner(n_gen, n_bus); }
    [[nodiscard]] Matrix l_lg() const { return laplacian.bottomLeftCorner(n_bus, n_gen); }
    /// Bus block including the reference ground.
    [[nodiscard]] Matrix l_ll() const;
    [[nodiscard]] double load_block_condition() const;

    void validate() const;
};

struct GeneratorSpec {
    int bus = 0;  ///< 0-based
    double internal_reactance = 0.25;
    double inertia = 0.1;
    double damping = 0.05;
    double dispatch = 0.0;  ///< p.u.
};

/// Assembles the Laplacian, P_node and the nominal operating point.
GridCase make_grid_case(std::string name, int n_bus, const std::vector<Branch>& branches,
                        const std::vector<GeneratorSpec>& generators, const Vector& bus_load, const Vector& bus_ground,
                        double base_mva = 100.0);

/// Reads a case file (buses, branches with reactances, generators with M, D_g).
GridCase load_grid_case(const std::string& path);
GridCase grid_case_from_json(const std::string& text);

/// Kron-reduced network matrix L_gg - L_gl L_ll^{-1} L_lg.
Matrix kron_reduced(const GridCase& grid);

/// Swing dynamics on x = [delta; omega] with u = [P_g; P_d] and y = [omega; P_net].
model::ContinuousLinearSystem build_reduced_model(const GridCase& grid);

/// theta = -L_ll^{-1} (L_lg delta - P_d).
Vector recover_bus_angles(const GridCase& grid, const Vector& delta, const Vector& p_demand);

/// Residual of L_lg delta + L_ll theta - P_d (max-abs).
double power_flow_residual(const GridCase& grid, const Vector& delta, const Vector& theta, const Vector& p_demand);

/// Steady state of the continuous model for constant input u (A x = -B u).
Vector equilibrium_state(const model::ContinuousLinearSystem& sys, const Vector& u);

struct PiController {
    Vector kp;
    Vector ki;
    Vector integral_state;
    double integral_limit = 1e3;  ///< anti-windup clamp on |integral_state|
    double setpoint = 0.0;

    static PiController uniform(int n_gen, double kp, double ki, double integral_limit);
    void validate() const;
};

/// error = setpoint - omega; integral += error dt (clamped); P_g = kp error + ki integral.
Vector pi_control_step(PiController& ctrl, const Vector& omega, double dt);

using PriorProvider = std::function<prior::AuxiliaryPrior(int k, const Vector& y_clean)>;

struct SimulationSetup {
    const GridCase* grid = nullptr;
    const model::DiscreteLinearSystem* sys = nullptr;
    PiController controller;
    Matrix demand;  ///< n_b x horizon_samples
    int horizon_samples = 0;
    std::optional<attack::AttackPlan> attack;
    std::vector<observer::StateObserver*> observers;
    PriorProvider prior_provider;
    Vector x0;
    double noise_std = 0.0;
    double bdd_threshold = 0.05;
    std::uint64_t seed = 1;
    int warmup = 0;
};

/// Steps the plant under PI frequency control, corrupts P_net channels per the
/// attack plan and feeds every observer.
EstimateTrace simulate_closed_loop(SimulationSetup setup);

/// Constant demand with i.i.d. uniform relative fluctuations in [-fraction, fraction].
Matrix demand_profile(const GridCase& grid, int samples, double fraction, std::uint64_t seed);

}  // namespace resobs::grid
