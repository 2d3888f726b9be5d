#pragma once

#include "resobs/linalg.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace resobs::prior {

/// Regularized lower incomplete gamma P(a, x).
double regularized_lower_gamma(double a, double x);

/// P(X <= x) for X ~ chi-squared with `dof` degrees of freedom.
double chi2_cdf(int dof, double x);

/// Inverse of chi2_cdf; tau must lie in (0, 1). Absolute accuracy 1e-10.
double chi2_quantile(int dof, double tau);

/**
 * Gaussian measurement prior N(mu, sigma) with confidence level tau.
 *
 * The feasible set is the Mahalanobis ball of squared radius
 * chi2_quantile(m, tau); tau = 1 gives an unbounded ball.
 */
class AuxiliaryPrior {
public:
    AuxiliaryPrior(Vector mu, Matrix sigma, double tau);

    [[nodiscard]] const Vector& mu() const { return mu_; }
    [[nodiscard]] const Matrix& sigma() const { return sigma_; }
    [[nodiscard]] double tau() const { return tau_; }
    /// Squared Mahalanobis radius.
    [[nodiscard]] double radius() const { return radius_; }
    [[nodiscard]] int dim() const { return static_cast<int>(mu_.size()); }

    /// L^{-1} v where sigma = L L^T.
    [[nodiscard]] Vector whiten(const Vector& v) const;
    [[nodiscard]] Matrix whiten(const Matrix& m) const;

    /// Same mean and covariance with an explicit squared radius.
    [[nodiscard]] AuxiliaryPrior with_radius(double radius) const;

private:
    Vector mu_;
    Matrix sigma_;
    Matrix chol_lower_;
    double tau_;
    double radius_;
};

struct PriorConfig {
    Vector sigma_scale;           ///< per-channel standard deviation
    double offset_fraction = 0.5; ///< |mu_i - y_i| <= offset_fraction * 3 * sigma_i
    std::uint64_t seed = 1;

    void validate() const;
};

/// (y - mu)^T sigma^{-1} (y - mu) through the Cholesky factor.
double mahalanobis_sq(const Vector& y, const AuxiliaryPrior& prior);

/**
 * Synthetic prior around a known measurement: diagonal covariance
 * diag(sigma_scale^2) and mean y_true + d, where d = 3 * offset_fraction *
 * sigma_scale (elementwise) * v for a random unit vector v. The true
 * measurement then sits at Mahalanobis distance^2 exactly 9 offset_fraction^2.
 * Throws Config when that exceeds the chi-squared radius.
 */
AuxiliaryPrior synth_prior(const Vector& y_true, const PriorConfig& cfg, double tau, std::mt19937_64& rng);
AuxiliaryPrior synth_prior(const Vector& y_true, const PriorConfig& cfg, double tau);

/// Largest eigenvalue of the (symmetric positive definite) covariance.
double max_singular_value(const AuxiliaryPrior& prior);

/// JSON document with fields mu, tau and either sigma (matrix) or sigma_scale (vector).
AuxiliaryPrior prior_from_json(const std::string& text);

}  // namespace resobs::prior
