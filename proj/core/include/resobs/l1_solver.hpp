#pragma once

#include "resobs/linalg.hpp"

#include <optional>
#include <vector>

namespace resobs {

/// ADMM tuning shared by every l1 decoder in the library.
struct SolverSettings {
    double penalty = 1.0;      ///< ADMM penalty rho
    double abs_tol = 1e-9;
    double rel_tol = 1e-9;
    int max_iter = 20000;
    /// Residual-balancing updates of rho during the first `adapt_iterations`
    /// iterations; rho is frozen afterwards.
    bool adapt_penalty = true;
    int adapt_iterations = 500;
    /// Periodic vertex refit of the iterate on its best-fitted rows, accepted
    /// (and terminating) only when it passes an exact KKT check.
    bool polish = true;
    bool record_merit = false;

    void validate() const;
};

struct DecodeResult {
    Vector x_hat;             ///< recovered (first-sample) state
    Vector e_hat;             ///< recovered error, r - phi * x_hat
    double objective = 0.0;   ///< l1 norm of e_hat (support size for the l0 oracle)
    bool converged = false;
    int iterations = 0;
    std::vector<int> support;  ///< rows flagged as corrupted
    bool non_unique = false;   ///< l0 oracle only: another support fits with a different state
    std::vector<double> merit_history;
};

/// Feasible set { x : ||M x - g||_2^2 <= radius_sq } in whitened coordinates.
struct EllipsoidConstraint {
    Matrix map;     ///< M
    Vector offset;  ///< g
    double radius_sq = 0.0;
};

/**
 * min_x ||r - phi x||_1  s.t. optional ellipsoid constraint.
 *
 * Two-block ADMM on w = r - phi x (soft threshold) and v = M x - g (ball
 * projection); the x-update solves with the cached factor of
 * phi^T phi + M^T M. The constraint rows are rescaled to the size of phi
 * first (same feasible set). Throws InfeasiblePrior when the ellipsoid cannot
 * be met by any x.
 */
DecodeResult solve_l1_regression(const Matrix& phi, const Vector& r,
                                 const std::optional<EllipsoidConstraint>& constraint,
                                 const SolverSettings& settings, const Vector* warm_start = nullptr);

}  // namespace resobs
