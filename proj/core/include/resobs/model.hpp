#pragma once

#include "resobs/linalg.hpp"

namespace resobs::model {

/// dx/dt = A x + B u,  y = C x + D u.
struct ContinuousLinearSystem {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix D;

    [[nodiscard]] int states() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int inputs() const { return static_cast<int>(B.cols()); }
    [[nodiscard]] int outputs() const { return static_cast<int>(C.rows()); }

    /// Throws InvalidModel on inconsistent dimensions or non-finite entries.
    void validate() const;
};

/// x_{k+1} = A x_k + B u_k,  y_k = C x_k + D u_k (+ e_k), sampled every dt seconds.
struct DiscreteLinearSystem {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix D;
    double dt = 0.01;

    [[nodiscard]] int states() const { return static_cast<int>(A.rows()); }
    [[nodiscard]] int inputs() const { return static_cast<int>(B.cols()); }
    [[nodiscard]] int outputs() const { return static_cast<int>(C.rows()); }

    void validate() const;
};

/**
 * Stacked maps for a window of T samples y_{k-T+1}..y_k.
 *
 *   y_(T) = phi * x_{k-T+1} + h * u_(T) + e_(T)
 *
 * The input window u_(T) holds T samples u_{k-T+1}..u_k, oldest first. The
 * last input only reaches the stack through the feedthrough D, so for D = 0
 * the last block column of `h` is zero. `propagator` maps the first T-1
 * inputs of that window onto x_k.
 */
struct HorizonOperators {
    int window = 0;
    Matrix phi;          ///< mT x n: [C; CA; ...; CA^{T-1}]
    Matrix h;            ///< mT x lT, lower block-Toeplitz with D on the diagonal
    Matrix annihilator;  ///< (mT - rank) x mT, orthonormal rows, annihilator * phi = 0
    Matrix propagator;   ///< n x l(T-1): [A^{T-2}B ... AB B]
    Matrix a_power;      ///< A^{T-1}
    Matrix phi_last;     ///< last m rows of phi
    Matrix h_last;       ///< last m rows of h
    bool has_annihilator = false;

    [[nodiscard]] int stacked_outputs() const { return static_cast<int>(phi.rows()); }
};

enum class AnnihilatorPolicy { Require, Optional };

/// Zero-order-hold discretization through the exponential of [[A B],[0 0]] * dt.
DiscreteLinearSystem discretize(const ContinuousLinearSystem& sys, double dt);

/// Throws AnnihilatorUnavailable when T < n or (A, C) is unobservable over the
/// window, unless `policy` is Optional (the annihilator is then left empty).
HorizonOperators build_horizon_operators(const DiscreteLinearSystem& sys, int window,
                                         AnnihilatorPolicy policy = AnnihilatorPolicy::Require);

/// x_k = A^{T-1} x_{k-T+1} + G u_(T-1); `inputs` holds T-1 samples, oldest first.
Vector propagate_estimate(const Vector& x_first, const Vector& inputs,
                          const HorizonOperators& ops, const DiscreteLinearSystem& sys);

/// Rank test of [C; CA; ...; CA^{n-1}].
bool is_observable(const DiscreteLinearSystem& sys, double rel_tol = 1e-10);

/// Stacked observability matrix for `window` samples.
Matrix stacked_observability(const Matrix& a, const Matrix& c, int window);

/// Forward simulation helper: y_(T) for initial state x0, inputs (T samples) and no attack.
Vector simulate_outputs(const DiscreteLinearSystem& sys, const Vector& x0, const Vector& inputs, int window);

}  // namespace resobs::model
