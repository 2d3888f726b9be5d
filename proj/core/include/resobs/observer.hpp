#pragma once

#include "resobs/csdecode.hpp"
#include "resobs/l1_solver.hpp"
#include "resobs/model.hpp"
#include "resobs/prior.hpp"

#include <deque>
#include <memory>
#include <optional>
#include <string>

namespace resobs::observer {

/// One window of the prior-constrained l1 program.
struct QcbpProblem {
    const model::HorizonOperators& ops;
    Vector y_window;  ///< y_{k-T+1}..y_k stacked, oldest first
    Vector u_window;  ///< u_{k-T+1}..u_k stacked, oldest first
    const prior::AuxiliaryPrior& prior;
};

/**
 * min_x ||y_(T) - H u - phi x||_1
 * s.t.  (phi_last x + h_last u - mu)^T sigma^{-1} (phi_last x + h_last u - mu) <= chi2_m(tau)
 *
 * Returns the estimate of x_{k-T+1}. An unbounded prior radius drops the
 * constraint. Throws InfeasiblePrior if no state meets the constraint.
 */
DecodeResult solve_qcbp(const QcbpProblem& problem, const SolverSettings& settings,
                        const Vector* warm_start = nullptr);

struct HorizonEstimate {
    Vector x_current;  ///< estimate of x_k
    DecodeResult decode;
};

/// solve_qcbp followed by forward propagation to the newest sample.
HorizonEstimate multi_model_estimate(const Vector& y_window, const Vector& u_window, const prior::AuxiliaryPrior& prior,
                                     const model::HorizonOperators& ops, const model::DiscreteLinearSystem& sys,
                                     const SolverSettings& settings, const Vector* warm_start = nullptr);

/// Observer gain with eig(A - K C) = pole_scale * eig(A) when C has full column
/// rank; otherwise a steady-state Kalman gain (identity weights). Throws
/// InvalidGain if the error dynamics are not stable.
Matrix design_luenberger_gain(const model::DiscreteLinearSystem& sys, double pole_scale = 0.5);

/// Throws InvalidGain unless gain is n x m and rho(A - K C) < 1.
void check_luenberger_gain(const model::DiscreteLinearSystem& sys, const Matrix& gain);

/// x+ = A x + B u + K (y - C x - D u).
Vector luenberger_step(const model::DiscreteLinearSystem& sys, const Matrix& gain, const Vector& x_hat,
                       const Vector& u, const Vector& y);

/// Constants of the prior-constrained recovery ceiling.
struct QcbpBoundConstants {
    double k1 = 0.0;
    double k2 = 0.0;
    double k3 = 0.0;
    double delta_2s = 0.0;
    int s = 0;
    int m = 0;
    double sigma_bar = 0.0;
    double radius = 0.0;
};

/// k1 = sqrt(2 radius sigma_bar), k3 = l1_recovery_constant(delta_2s, s),
/// k2 = k3 sqrt((m - s) / (2 radius sigma_bar)).
QcbpBoundConstants make_qcbp_bound_constants(double delta_2s, int s, int m, double sigma_bar, double radius);

/// k1 * sat_1(k2 ||e - e[s]||_2): ceiling on the newest-sample error of the
/// decoded corruption.
double qcbp_error_bound(const QcbpBoundConstants& consts, const Vector& e_window, int s);

// ---------------------------------------------------------------------------
// Streaming observers used by the closed-loop simulation.

struct SampleInput {
    const Vector& y;
    const Vector& u;
    const prior::AuxiliaryPrior* prior = nullptr;
};

struct ObserverOutput {
    std::optional<Vector> estimate;  ///< estimate of x_k, empty while warming up or on failure
    bool failed = false;
    std::string message;
    int iterations = 0;
};

class StateObserver {
public:
    virtual ~StateObserver() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    virtual ObserverOutput step(const SampleInput& sample) = 0;
};

class LuenbergerObserver final : public StateObserver {
public:
    LuenbergerObserver(model::DiscreteLinearSystem sys, Matrix gain, Vector x0, std::string name = "LO");

    [[nodiscard]] std::string name() const override { return name_; }
    ObserverOutput step(const SampleInput& sample) override;

private:
    model::DiscreteLinearSystem sys_;
    Matrix gain_;
    Vector x_hat_;
    std::string name_;
};

/// Moving-horizon l1 observer; with `use_prior` it solves the constrained
/// program, otherwise the unconstrained one.
class MovingHorizonObserver final : public StateObserver {
public:
    MovingHorizonObserver(model::DiscreteLinearSystem sys, std::shared_ptr<const model::HorizonOperators> ops,
                          SolverSettings settings, bool use_prior, std::string name);

    [[nodiscard]] std::string name() const override { return name_; }
    ObserverOutput step(const SampleInput& sample) override;

    void set_warm_start(bool enabled) { warm_start_enabled_ = enabled; }

private:
    model::DiscreteLinearSystem sys_;
    std::shared_ptr<const model::HorizonOperators> ops_;
    SolverSettings settings_;
    bool use_prior_;
    bool warm_start_enabled_ = true;
    std::string name_;
    std::deque<Vector> ys_;
    std::deque<Vector> us_;
    std::optional<Vector> previous_first_;
};

}  // namespace resobs::observer
