#include "resobs/prior.hpp"

#include "resobs/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

namespace resobs::prior {

using detail::require;

namespace {

double gamma_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper tail Q(a, x) by the modified Lentz continued fraction.
double gamma_continued_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-17) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double chi2_pdf(int dof, double x) {
    if (x <= 0.0) return 0.0;
    const double k = 0.5 * dof;
    return std::exp((k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k));
}

}  // namespace

double regularized_lower_gamma(double a, double x) {
    require(a > 0.0, ErrorCode::Domain, "gamma shape must be positive");
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_series(a, x);
    return 1.0 - gamma_continued_fraction(a, x);
}

double chi2_cdf(int dof, double x) {
    require(dof >= 1, ErrorCode::Domain, "degrees of freedom must be >= 1");
    return regularized_lower_gamma(0.5 * dof, 0.5 * x);
}

double chi2_quantile(int dof, double tau) {
    require(dof >= 1, ErrorCode::Domain, "degrees of freedom must be >= 1");
    if (!(tau > 0.0 && tau < 1.0)) {
        detail::raise(ErrorCode::Domain, "chi-squared probability must lie in (0, 1)");
    }
    double lo = 0.0;
    double hi = std::max(1.0, static_cast<double>(dof));
    while (chi2_cdf(dof, hi) < tau) {
        lo = hi;
        hi *= 2.0;
    }
    double q = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double f = chi2_cdf(dof, q) - tau;
        if (f > 0.0) hi = q; else lo = q;
        const double slope = chi2_pdf(dof, q);
        double next = slope > 0.0 ? q - f / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - q);
        q = next;
        if (step < 1e-13 * std::max(1.0, q) || hi - lo < 1e-13 * std::max(1.0, q)) break;
    }
    return q;
}

AuxiliaryPrior::AuxiliaryPrior(Vector mu, Matrix sigma, double tau)
    : mu_(std::move(mu)), sigma_(std::move(sigma)), tau_(tau), radius_(0.0) {
    const auto m = mu_.size();
    require(m >= 1, ErrorCode::ContractViolation, "prior must have at least one channel");
    require(sigma_.rows() == m && sigma_.cols() == m, ErrorCode::ContractViolation,
            "covariance must be m x m");
    require(mu_.allFinite() && sigma_.allFinite(), ErrorCode::PriorDegenerate, "prior has non-finite entries");
    require(tau_ > 0.0 && tau_ <= 1.0, ErrorCode::Domain, "tau must lie in (0, 1]");
    const double asym = (sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-12 * std::max(1.0, sigma_.cwiseAbs().maxCoeff()), ErrorCode::PriorDegenerate,
            "covariance is not symmetric");
    Eigen::LLT<Matrix> llt(sigma_);
    require(llt.info() == Eigen::Success, ErrorCode::PriorDegenerate, "covariance is not positive definite");
    chol_lower_ = llt.matrixL();
    require(chol_lower_.diagonal().minCoeff() > 0.0, ErrorCode::PriorDegenerate,
            "covariance is not positive definite");
    radius_ = tau_ >= 1.0 ? std::numeric_limits<double>::infinity()
                          : chi2_quantile(static_cast<int>(m), tau_);
}

Vector AuxiliaryPrior::whiten(const Vector& v) const {
    require(v.size() == mu_.size(), ErrorCode::ContractViolation, "dimension mismatch");
    return chol_lower_.triangularView<Eigen::Lower>().solve(v);
}

Matrix AuxiliaryPrior::whiten(const Matrix& m) const {
    require(m.rows() == mu_.size(), ErrorCode::ContractViolation, "dimension mismatch");
    return chol_lower_.triangularView<Eigen::Lower>().solve(m);
}

AuxiliaryPrior AuxiliaryPrior::with_radius(double radius) const {
    require(radius >= 0.0, ErrorCode::ContractViolation, "radius must be non-negative");
    AuxiliaryPrior out = *this;
    out.radius_ = radius;
    return out;
}

void PriorConfig::validate() const {
    require(sigma_scale.size() >= 1, ErrorCode::Config, "sigma_scale must not be empty");
    require((sigma_scale.array() > 0.0).all() && sigma_scale.allFinite(), ErrorCode::Config,
            "sigma_scale entries must be positive");
    require(offset_fraction >= 0.0 && offset_fraction <= 1.0, ErrorCode::Config,
            "offset_fraction must lie in [0, 1]");
}

double mahalanobis_sq(const Vector& y, const AuxiliaryPrior& prior) {
    require(y.size() == prior.dim(), ErrorCode::ContractViolation, "measurement dimension mismatch");
    return prior.whiten(Vector(y - prior.mu())).squaredNorm();
}

AuxiliaryPrior synth_prior(const Vector& y_true, const PriorConfig& cfg, double tau, std::mt19937_64& rng) {
    cfg.validate();
    require(cfg.sigma_scale.size() == y_true.size(), ErrorCode::Config, "sigma_scale length must equal m");
    const auto m = y_true.size();
    const double radius = tau >= 1.0 ? std::numeric_limits<double>::infinity()
                                     : chi2_quantile(static_cast<int>(m), tau);
    const double distance_sq = 9.0 * cfg.offset_fraction * cfg.offset_fraction;
    if (distance_sq > radius) {
        detail::raise(ErrorCode::Config, "offset_fraction places the true measurement outside the prior "
                                         "ellipsoid (9 f^2 = " + std::to_string(distance_sq) +
                                             " > " + std::to_string(radius) + ")");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector dir(m);
    do {
        for (Eigen::Index i = 0; i < m; ++i) dir(i) = normal(rng);
    } while (dir.norm() == 0.0);
    dir.normalize();
    const Vector offset = 3.0 * cfg.offset_fraction * cfg.sigma_scale.cwiseProduct(dir);
    Matrix sigma = cfg.sigma_scale.array().square().matrix().asDiagonal();
    return {y_true + offset, std::move(sigma), tau};
}

AuxiliaryPrior synth_prior(const Vector& y_true, const PriorConfig& cfg, double tau) {
    std::mt19937_64 rng(cfg.seed);
    return synth_prior(y_true, cfg, tau, rng);
}

double max_singular_value(const AuxiliaryPrior& prior) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(prior.sigma(), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(es.eigenvalues().size() - 1);
}

AuxiliaryPrior prior_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        detail::raise(ErrorCode::Config, std::string("prior document: ") + e.what());
    }
    require(doc.contains("mu") && doc.contains("tau"), ErrorCode::Config, "prior document needs mu and tau");
    const auto mu_list = doc.at("mu").get<std::vector<double>>();
    const Vector mu = Eigen::Map<const Vector>(mu_list.data(), static_cast<Eigen::Index>(mu_list.size()));
    const auto m = mu.size();
    Matrix sigma;
    if (doc.contains("sigma")) {
        const auto rows = doc.at("sigma").get<std::vector<std::vector<double>>>();
        require(static_cast<Eigen::Index>(rows.size()) == m, ErrorCode::Config, "sigma must be m x m");
        sigma.resize(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            require(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) == m, ErrorCode::Config,
                    "sigma must be m x m");
            for (Eigen::Index j = 0; j < m; ++j) sigma(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    } else if (doc.contains("sigma_scale")) {
        const auto scale = doc.at("sigma_scale").get<std::vector<double>>();
        require(static_cast<Eigen::Index>(scale.size()) == m, ErrorCode::Config, "sigma_scale must have m entries");
        sigma = Matrix::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i) sigma(i, i) = scale[static_cast<std::size_t>(i)] * scale[static_cast<std::size_t>(i)];
    } else {
        detail::raise(ErrorCode::Config, "prior document needs sigma or sigma_scale");
    }
    return {mu, sigma, doc.at("tau").get<double>()};
}

}  // namespace resobs::prior
