#pragma once

#include "resobs/linalg.hpp"
#include "resobs/model.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace resobs::testing {

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
    return m;
}

inline Vector random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
    return random_matrix(n, 1, rng, scale).col(0);
}

/// Rank by Gaussian elimination with partial pivoting, independent of any SVD.
inline int gauss_rank(Matrix m, double rel_tol = 1e-9) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    int rank = 0;
    const int rows = static_cast<int>(m.rows());
    const int cols = static_cast<int>(m.cols());
    for (int c = 0; c < cols && rank < rows; ++c) {
        int pivot = rank;
        for (int r = rank + 1; r < rows; ++r)
            if (std::abs(m(r, c)) > std::abs(m(pivot, c))) pivot = r;
        if (std::abs(m(pivot, c)) <= rel_tol * scale) continue;
        m.row(pivot).swap(m.row(rank));
        for (int r = rank + 1; r < rows; ++r) {
            const double f = m(r, c) / m(rank, c);
            for (int j = c; j < cols; ++j) m(r, j) -= f * m(rank, j);
        }
        ++rank;
    }
    return rank;
}

/// Random discrete system whose A has spectral radius at most `radius`.
inline model::DiscreteLinearSystem random_system(int n, int m, int l, std::mt19937_64& rng, double radius = 0.95,
                                                  bool feedthrough = false) {
    model::DiscreteLinearSystem sys;
    Matrix a = random_matrix(n, n, rng);
    const Eigen::EigenSolver<Matrix> es(a);
    const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
    sys.A = a * (radius / std::max(rho, 1e-12));
    sys.B = random_matrix(n, l, rng);
    sys.C = random_matrix(m, n, rng);
    sys.D = feedthrough ? random_matrix(m, l, rng) : Matrix::Zero(m, l);
    sys.dt = 0.01;
    return sys;
}

/// Composite Simpson rule on [a, b] with `intervals` (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int intervals) {
    const double h = (b - a) / intervals;
    double sum = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) sum += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

/// chi-squared density with k degrees of freedom.
inline double chi2_density(int k, double x) {
    const double half = 0.5 * k;
    if (x < 0.0 || (x == 0.0 && k != 2)) return 0.0;
    return std::pow(x, half - 1.0) * std::exp(-0.5 * x - half * std::log(2.0) - std::lgamma(half));
}

/// CDF by Simpson integration. For k = 1 the density is singular at 0, so the
/// substitution x = t^2 is integrated instead.
inline double chi2_cdf_by_quadrature(int k, double q) {
    if (k == 1) {
        auto g = [](double t) { return 2.0 * std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
        return simpson(g, 0.0, std::sqrt(q), 20000);
    }
    return simpson([k](double x) { return chi2_density(k, x); }, 0.0, q, 200000);
}

/// Root of chi2_cdf_by_quadrature(k, q) = p by bisection.
inline double chi2_quantile_by_quadrature(int k, double p) {
    double lo = 0.0;
    double hi = 10.0 * k + 50.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf_by_quadrature(k, mid) < p) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<int>> all_subsets(int n, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int start) {
        if (static_cast<int>(cur.size()) == k) {
            out.push_back(cur);
            return;
        }
        for (int i = start; i < n; ++i) {
            cur.push_back(i);
            rec(i + 1);
            cur.pop_back();
        }
    };
    rec(0);
    return out;
}

/// min_x ||r - phi x||_1 by enumerating every n-row interpolation vertex.
inline Vector l1_minimizer_by_vertices(const Matrix& phi, const Vector& r, double* objective = nullptr) {
    const int rows = static_cast<int>(phi.rows());
    const int n = static_cast<int>(phi.cols());
    double best = std::numeric_limits<double>::infinity();
    Vector best_x = Vector::Zero(n);
    for (const auto& rows_sel : all_subsets(rows, n)) {
        Matrix sub(n, n);
        Vector rhs(n);
        for (int i = 0; i < n; ++i) {
            sub.row(i) = phi.row(rows_sel[static_cast<std::size_t>(i)]);
            rhs(i) = r(rows_sel[static_cast<std::size_t>(i)]);
        }
        const Eigen::FullPivLU<Matrix> lu(sub);
        if (!lu.isInvertible()) continue;
        const Vector x = lu.solve(rhs);
        const double obj = (r - phi * x).lpNorm<1>();
        if (obj < best) {
            best = obj;
            best_x = x;
        }
    }
    if (objective) *objective = best;
    return best_x;
}

inline std::string source_path(const std::string& relative) {
    return std::string(RESOBS_SOURCE_DIR) + "/" + relative;
}

}  // namespace resobs::testing
