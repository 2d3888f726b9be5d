#pragma once

#include "resobs/l1_solver.hpp"
#include "resobs/linalg.hpp"
#include "resobs/model.hpp"

#include <vector>

namespace resobs::cs {

/// A corruption vector together with its support { i : e_i != 0 }.
struct SparseError {
    Vector values;
    std::vector<int> support;

    static SparseError from_values(const Vector& values);
};

/// Clip x to [-eps, eps].
double sat(double x, double eps);

/// Keeps the s largest-magnitude entries of e (ties go to the lower index).
Vector best_s_term(const Vector& e, int s);

enum class SupportMode {
    TimeVarying,  ///< any s rows of the stacked window
    Fixed,        ///< s channels, attacked at every sample of the window
};

/**
 * Exhaustive l0 decoder: min_x ||y - H u - phi x||_0.
 *
 * Supports are enumerated by increasing size, lexicographically within a size;
 * for each one the complement rows are fitted by least squares. The first
 * support whose complement residual is at most 1e-8 wins. If another support
 * of the same size also fits with a different state, `non_unique` is set.
 */
DecodeResult l0_decode_bruteforce(const Vector& y_stack, const model::HorizonOperators& ops, const Vector& u_stack,
                                  int s_max, SupportMode mode = SupportMode::TimeVarying);

/// Unconstrained l1 decoder min_x ||y - H u - phi x||_1. Rows whose decoded
/// error exceeds 1e-6 (relative) are reported as the support.
DecodeResult l1_decode(const Vector& y_stack, const model::HorizonOperators& ops, const Vector& u_stack,
                       const SolverSettings& settings = {});

/// Restricted isometry constant of F as given (no column normalization).
double rip_constant_bruteforce(const Matrix& f, int s);

/// Error ceiling of l1 decoding for a 2s-RIP constant `delta`:
/// (2/sqrt(s)) ((delta + sqrt(delta (1/sqrt2 - delta))) / (sqrt2 (1/sqrt2 - delta)) + 1) ||e - e[s]||_1.
double l1_recovery_bound(double delta, int s, const Vector& e);

/// Leading constant of `l1_recovery_bound` (the factor multiplying the tail norm).
double l1_recovery_constant(double delta, int s);

/// True when every deletion of 2s channels (across the whole window) leaves
/// the stacked map with rank n.
bool correctability_fixed(const model::DiscreteLinearSystem& sys, int window, int s);

/// True when every deletion of 2s rows of the stacked map leaves rank n.
bool correctability_varying(const model::DiscreteLinearSystem& sys, int window, int s);

inline constexpr double kExactFitResidual = 1e-8;
inline constexpr double kEnumerationGuard = 1e6;
inline constexpr double kFixedCorrectabilityGuard = 1e5;

}  // namespace resobs::cs
