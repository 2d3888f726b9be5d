#include "resobs/attack.hpp"

#include "resobs/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace resobs::attack {

using detail::require;

MagnitudeLaw law_from_string(const std::string& name) {
    if (name == "constant") return MagnitudeLaw::Constant;
    if (name == "ramp") return MagnitudeLaw::Ramp;
    if (name == "random") return MagnitudeLaw::Random;
    detail::raise(ErrorCode::Config, "unknown magnitude law '" + name + "'");
}

const char* to_string(MagnitudeLaw law) {
    switch (law) {
        case MagnitudeLaw::Constant: return "constant";
        case MagnitudeLaw::Ramp: return "ramp";
        case MagnitudeLaw::Random: return "random";
    }
    return "unknown";
}

void AttackPlan::validate(int outputs) const {
    require(!support.empty(), ErrorCode::Config, "attack support is empty");
    require(std::is_sorted(support.begin(), support.end()), ErrorCode::Config, "attack support must be sorted");
    require(std::adjacent_find(support.begin(), support.end()) == support.end(), ErrorCode::Config,
            "attack support has duplicates");
    require(support.front() >= 0 && support.back() < outputs, ErrorCode::Config, "attack channel out of range");
    require(static_cast<std::size_t>(magnitude.size()) == support.size(), ErrorCode::Config,
            "one magnitude per attacked channel");
    require(magnitude.allFinite(), ErrorCode::Config, "attack magnitudes must be finite");
    require(onset >= 0, ErrorCode::Config, "attack onset must be non-negative");
    require(ramp_samples >= 1, ErrorCode::Config, "ramp_samples must be >= 1");
    require(random_low >= 0.0 && random_low <= 1.0, ErrorCode::Config, "random_low must lie in [0, 1]");
    require(stealth_threshold > 0.0, ErrorCode::Config, "stealth threshold must be positive");
    require(leak_weight > 0.0, ErrorCode::Config, "leak weight must be positive");
}

BadDataDetector::BadDataDetector(const model::DiscreteLinearSystem& sys, double threshold)
    : c_(sys.C), d_(sys.D), qr_(sys.C), threshold_(threshold) {
    require(threshold > 0.0, ErrorCode::Config, "residue threshold must be positive");
    qr_.setThreshold(1e-10);
}

ResidueEntry BadDataDetector::test(const Vector& y, const Vector& u) const {
    require(y.size() == c_.rows() && u.size() == d_.cols(), ErrorCode::ContractViolation,
            "residue test dimension mismatch");
    const Vector z = y - d_ * u;
    const Vector x_ls = qr_.solve(z);
    ResidueEntry out;
    out.residue = (z - c_ * x_ls).norm() / std::max(y.norm(), kResidueFloor);
    out.threshold = threshold_;
    out.alarm = out.residue > threshold_;
    return out;
}

ResidueEntry bdd_residue_test(const Vector& y, const Vector& u, const model::DiscreteLinearSystem& sys,
                              double threshold) {
    return BadDataDetector(sys, threshold).test(y, u);
}

double magnitude_profile(const AttackPlan& plan, int k) {
    if (k < plan.onset) return 0.0;
    switch (plan.law) {
        case MagnitudeLaw::Ramp:
            return std::min(1.0, static_cast<double>(k - plan.onset + 1) / plan.ramp_samples);
        case MagnitudeLaw::Constant:
        case MagnitudeLaw::Random:
            return 1.0;
    }
    return 1.0;
}

namespace {

// Range-space vector C c that matches d on the support while penalising its
// entries elsewhere, restricted to the support.
Vector stealth_direction(const AttackPlan& plan, const Matrix& c, const Vector& target) {
    const auto m = c.rows();
    Vector weight = Vector::Constant(m, std::sqrt(plan.leak_weight));
    for (int j : plan.support) weight(j) = 1.0;
    const Matrix wc = weight.asDiagonal() * c;
    const Vector wd = weight.cwiseProduct(target);
    const Vector coeffs = wc.completeOrthogonalDecomposition().solve(wd);
    const Vector range = c * coeffs;
    Vector out = Vector::Zero(m);
    for (int j : plan.support) out(j) = range(j);
    return out;
}

}  // namespace

Vector generate_fdia(const AttackPlan& plan, const model::DiscreteLinearSystem& sys, const Vector& y_clean,
                     const Vector& u, int k, std::mt19937_64& rng, InjectionInfo* info) {
    const int m = sys.outputs();
    plan.validate(m);
    require(y_clean.size() == m, ErrorCode::ContractViolation, "measurement dimension mismatch");
    Vector e = Vector::Zero(m);
    if (info) *info = InjectionInfo{};
    const double profile = magnitude_profile(plan, k);
    if (profile == 0.0) return e;

    Vector target = Vector::Zero(m);
    std::uniform_real_distribution<double> draw(plan.random_low, 1.0);
    for (std::size_t i = 0; i < plan.support.size(); ++i) {
        double scale = profile;
        if (plan.law == MagnitudeLaw::Random) scale *= draw(rng);
        target(plan.support[i]) = scale * plan.magnitude(static_cast<Eigen::Index>(i));
    }
    if (info) info->active = true;
    if (!plan.stealth) return target;

    e = stealth_direction(plan, sys.C, target);
    const BadDataDetector bdd(sys, plan.stealth_threshold);
    const double limit = 0.9 * plan.stealth_threshold;
    auto residue_at = [&](double alpha) { return bdd.test(Vector(y_clean + alpha * e), u).residue; };
    double alpha = 1.0;
    if (residue_at(1.0) > limit) {
        double lo = 0.0;
        double hi = 1.0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (residue_at(mid) <= limit) lo = mid; else hi = mid;
        }
        alpha = lo;
    }
    if (info) info->scale = alpha;
    return alpha * e;
}

std::vector<int> choose_support(const std::vector<int>& candidates, int count, std::uint64_t seed) {
    require(count >= 1 && count <= static_cast<int>(candidates.size()), ErrorCode::Config,
            "attack channel count must lie in [1, number of candidate channels]");
    std::vector<int> pool = candidates;
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(count));
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace resobs::attack
