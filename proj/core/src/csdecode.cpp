#include "resobs/csdecode.hpp"

#include "resobs/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace resobs::cs {

using detail::require;

SparseError SparseError::from_values(const Vector& values) {
    SparseError out{values, {}};
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) != 0.0) out.support.push_back(static_cast<int>(i));
    }
    return out;
}

double sat(double x, double eps) {
    require(eps > 0.0, ErrorCode::Domain, "saturation level must be positive");
    return std::clamp(x, -eps, eps);
}

Vector best_s_term(const Vector& e, int s) {
    require(s >= 0 && s <= e.size(), ErrorCode::ContractViolation, "sparsity out of range");
    std::vector<int> order(static_cast<std::size_t>(e.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&e](int a, int b) { return std::abs(e(a)) > std::abs(e(b)); });
    Vector out = Vector::Zero(e.size());
    for (int i = 0; i < s; ++i) out(order[static_cast<std::size_t>(i)]) = e(order[static_cast<std::size_t>(i)]);
    return out;
}

namespace {

struct Fit {
    bool identifiable = false;
    Vector x;
    double residual = std::numeric_limits<double>::infinity();
};

Fit fit_complement(const Matrix& phi, const Vector& r, const std::vector<int>& removed) {
    const std::vector<int> keep = complement_indices(removed, static_cast<int>(phi.rows()));
    Fit fit;
    if (static_cast<Eigen::Index>(keep.size()) < phi.cols()) return fit;
    const Matrix sub = select_rows(phi, keep);
    Eigen::ColPivHouseholderQR<Matrix> qr(sub);
    qr.setThreshold(1e-10);
    if (qr.rank() < phi.cols()) return fit;
    const Vector rk = select_rows(r, keep);
    fit.identifiable = true;
    fit.x = qr.solve(rk);
    fit.residual = (sub * fit.x - rk).norm();
    return fit;
}

std::vector<int> expand_channels(const std::vector<int>& channels, int m, int window) {
    std::vector<int> rows;
    rows.reserve(channels.size() * static_cast<std::size_t>(window));
    for (int k = 0; k < window; ++k) {
        for (int c : channels) rows.push_back(k * m + c);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

}  // namespace

DecodeResult l0_decode_bruteforce(const Vector& y_stack, const model::HorizonOperators& ops, const Vector& u_stack,
                                  int s_max, SupportMode mode) {
    const Matrix& phi = ops.phi;
    require(y_stack.size() == phi.rows(), ErrorCode::ContractViolation, "measurement stack size mismatch");
    require(u_stack.size() == ops.h.cols(), ErrorCode::ContractViolation, "input stack size mismatch");
    require(s_max >= 0, ErrorCode::ContractViolation, "sparsity budget must be non-negative");
    const int rows = static_cast<int>(phi.rows());
    const int window = ops.window;
    const int m = rows / std::max(window, 1);
    const int universe = mode == SupportMode::Fixed ? m : rows;
    s_max = std::min(s_max, universe);

    double total = 0.0;
    for (int k = 0; k <= s_max; ++k) total += binomial(universe, k);
    if (total > kEnumerationGuard) {
        detail::raise(ErrorCode::OracleTooLarge,
                      "support enumeration needs " + std::to_string(total) + " fits (limit 1e6)");
    }

    const Vector r = y_stack - ops.h * u_stack;
    DecodeResult out;
    Fit best;
    std::vector<int> best_support;
    int evaluated = 0;
    for (int size = 0; size <= s_max; ++size) {
        std::vector<int> comb(static_cast<std::size_t>(size));
        std::iota(comb.begin(), comb.end(), 0);
        bool found = false;
        Vector found_x;
        do {
            const std::vector<int> removed = mode == SupportMode::Fixed ? expand_channels(comb, m, window) : comb;
            const Fit fit = fit_complement(phi, r, removed);
            ++evaluated;
            if (!fit.identifiable) continue;
            if (fit.residual <= kExactFitResidual) {
                if (!found) {
                    found = true;
                    found_x = fit.x;
                    out.x_hat = fit.x;
                    out.support = removed;
                } else if ((fit.x - found_x).norm() > 1e-6 * (1.0 + found_x.norm())) {
                    out.non_unique = true;
                    break;
                }
            } else if (size == s_max && fit.residual < best.residual) {
                best = fit;
                best_support = removed;
            }
        } while (next_combination(comb, universe));
        if (found) {
            out.converged = true;
            out.iterations = evaluated;
            out.e_hat = r - phi * out.x_hat;
            out.objective = static_cast<double>(out.support.size());
            return out;
        }
    }
    out.converged = false;
    out.iterations = evaluated;
    if (best.identifiable) {
        out.x_hat = best.x;
        out.support = best_support;
    } else {
        out.x_hat = phi.completeOrthogonalDecomposition().solve(r);
    }
    out.e_hat = r - phi * out.x_hat;
    out.objective = static_cast<double>((out.e_hat.array().abs() > kExactFitResidual).count());
    return out;
}

DecodeResult l1_decode(const Vector& y_stack, const model::HorizonOperators& ops, const Vector& u_stack,
                       const SolverSettings& settings) {
    require(y_stack.size() == ops.phi.rows(), ErrorCode::ContractViolation, "measurement stack size mismatch");
    require(u_stack.size() == ops.h.cols(), ErrorCode::ContractViolation, "input stack size mismatch");
    require(ops.phi.rows() > ops.phi.cols(), ErrorCode::ContractViolation, "window must hold more rows than states");
    const Vector r = y_stack - ops.h * u_stack;
    return solve_l1_regression(ops.phi, r, std::nullopt, settings);
}

double rip_constant_bruteforce(const Matrix& f, int s) {
    const int cols = static_cast<int>(f.cols());
    require(s >= 1, ErrorCode::ContractViolation, "sparsity must be at least 1");
    s = std::min(s, cols);
    if (binomial(cols, s) > kEnumerationGuard) {
        detail::raise(ErrorCode::OracleTooLarge, "RIP enumeration over C(" + std::to_string(cols) + ", " +
                                                     std::to_string(s) + ") supports exceeds 1e6");
    }
    // By eigenvalue interlacing the extremes over |S| <= s are attained at |S| = s.
    std::vector<int> comb(static_cast<std::size_t>(s));
    std::iota(comb.begin(), comb.end(), 0);
    double delta = 0.0;
    Matrix sub(f.rows(), s);
    do {
        for (int j = 0; j < s; ++j) sub.col(j) = f.col(comb[static_cast<std::size_t>(j)]);
        const Matrix gram = sub.transpose() * sub;
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
        const auto& ev = es.eigenvalues();
        delta = std::max({delta, ev(ev.size() - 1) - 1.0, 1.0 - ev(0)});
    } while (next_combination(comb, cols));
    return delta;
}

double l1_recovery_constant(double delta, int s) {
    const double limit = 1.0 / std::sqrt(2.0);
    require(s >= 1, ErrorCode::ContractViolation, "sparsity must be at least 1");
    if (!(delta >= 0.0 && delta < limit)) {
        detail::raise(ErrorCode::BoundInapplicable,
                      "RIP constant " + std::to_string(delta) + " is not below 1/sqrt(2)");
    }
    const double gap = limit - delta;
    const double inner = (delta + std::sqrt(delta * gap)) / (std::sqrt(2.0) * gap) + 1.0;
    return 2.0 / std::sqrt(static_cast<double>(s)) * inner;
}

double l1_recovery_bound(double delta, int s, const Vector& e) {
    const double k = l1_recovery_constant(delta, s);
    require(s <= e.size(), ErrorCode::ContractViolation, "sparsity exceeds vector length");
    return k * (e - best_s_term(e, s)).lpNorm<1>();
}

namespace {

bool rank_survives_deletions(const Matrix& phi, int universe, int deletions, int m, int window, bool by_channel) {
    const int n = static_cast<int>(phi.cols());
    if (deletions >= universe) return n == 0;
    std::vector<int> comb(static_cast<std::size_t>(deletions));
    std::iota(comb.begin(), comb.end(), 0);
    do {
        const std::vector<int> removed = by_channel ? expand_channels(comb, m, window) : comb;
        const std::vector<int> keep = complement_indices(removed, static_cast<int>(phi.rows()));
        if (static_cast<int>(keep.size()) < n) return false;
        if (numerical_rank(select_rows(phi, keep)) < n) return false;
    } while (next_combination(comb, universe));
    return true;
}

}  // namespace

bool correctability_fixed(const model::DiscreteLinearSystem& sys, int window, int s) {
    sys.validate();
    require(window >= 1 && s >= 0, ErrorCode::ContractViolation, "window >= 1 and s >= 0 required");
    const int m = sys.outputs();
    const int deletions = std::min(2 * s, m);
    if (binomial(m, deletions) > kFixedCorrectabilityGuard) {
        detail::raise(ErrorCode::OracleTooLarge, "channel deletion enumeration exceeds 1e5 patterns");
    }
    const Matrix phi = model::stacked_observability(sys.A, sys.C, window);
    return rank_survives_deletions(phi, m, deletions, m, window, true);
}

bool correctability_varying(const model::DiscreteLinearSystem& sys, int window, int s) {
    sys.validate();
    require(window >= 1 && s >= 0, ErrorCode::ContractViolation, "window >= 1 and s >= 0 required");
    const int rows = sys.outputs() * window;
    const int deletions = std::min(2 * s, rows);
    if (binomial(rows, deletions) > kEnumerationGuard) {
        detail::raise(ErrorCode::OracleTooLarge, "row deletion enumeration exceeds 1e6 patterns");
    }
    const Matrix phi = model::stacked_observability(sys.A, sys.C, window);
    return rank_survives_deletions(phi, rows, deletions, sys.outputs(), window, false);
}

}  // namespace resobs::cs
