#include "resobs/linalg.hpp"

#include "resobs/error.hpp"

#include <algorithm>
#include <cmath>

namespace resobs {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidModel: return "invalid-model";
        case ErrorCode::ContractViolation: return "contract-violation";
        case ErrorCode::AnnihilatorUnavailable: return "annihilator-unavailable";
        case ErrorCode::OracleTooLarge: return "oracle-too-large";
        case ErrorCode::BoundInapplicable: return "bound-inapplicable";
        case ErrorCode::Domain: return "domain";
        case ErrorCode::PriorDegenerate: return "prior-degenerate";
        case ErrorCode::InfeasiblePrior: return "infeasible-prior";
        case ErrorCode::InvalidGain: return "invalid-gain";
        case ErrorCode::Reduction: return "reduction";
        case ErrorCode::Config: return "config";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

namespace detail {
void raise(ErrorCode code, const std::string& what) {
    throw Error(code, std::string(to_string(code)) + ": " + what);
}
}  // namespace detail

int numerical_rank(const Matrix& m, double rel_tol) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double cut = rel_tol * s(0);
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cut) ++r;
    }
    return r;
}

Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

Vector select_rows(const Vector& v, const std::vector<int>& rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
    return out;
}

std::vector<int> complement_indices(const std::vector<int>& excluded, int total) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(std::max(0, total - static_cast<int>(excluded.size()))));
    std::size_t j = 0;
    for (int i = 0; i < total; ++i) {
        while (j < excluded.size() && excluded[j] < i) ++j;
        if (j < excluded.size() && excluded[j] == i) continue;
        out.push_back(i);
    }
    return out;
}

double spectral_radius(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (int i = 1; i <= k; ++i) {
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return std::round(r);
}

bool next_combination(std::vector<int>& comb, int n) {
    const int k = static_cast<int>(comb.size());
    int i = k - 1;
    while (i >= 0 && comb[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return false;
    ++comb[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    return true;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace resobs
