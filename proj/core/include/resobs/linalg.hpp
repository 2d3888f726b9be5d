#pragma once

#include <Eigen/Dense>

#include <vector>

namespace resobs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Rank with singular values below rel_tol * sigma_max treated as zero.
int numerical_rank(const Matrix& m, double rel_tol = 1e-10);

/// Rows of `m` listed in `rows`, in the given order.
Matrix select_rows(const Matrix& m, const std::vector<int>& rows);
Vector select_rows(const Vector& v, const std::vector<int>& rows);

/// Indices in [0, total) not contained in the sorted list `excluded`.
std::vector<int> complement_indices(const std::vector<int>& excluded, int total);

/// Spectral radius via the general eigen solver.
double spectral_radius(const Matrix& a);

/// Binomial coefficient as a double (saturates instead of overflowing).
double binomial(int n, int k);

/// Advances `comb` (sorted, values in [0, n)) to the next k-subset in
/// lexicographic order. Returns false after the last subset.
bool next_combination(std::vector<int>& comb, int n);

bool all_finite(const Matrix& m);

}  // namespace resobs
