#include "resobs/model.hpp"

#include "resobs/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <string>

namespace resobs::model {

using detail::require;

namespace {

void check_dimensions(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d) {
    const auto n = a.rows();
    require(a.cols() == n, ErrorCode::InvalidModel, "A must be square");
    require(b.rows() == n, ErrorCode::InvalidModel, "B must have as many rows as A");
    require(c.cols() == n, ErrorCode::InvalidModel, "C must have as many columns as A");
    require(d.rows() == c.rows(), ErrorCode::InvalidModel, "D must have as many rows as C");
    require(d.cols() == b.cols(), ErrorCode::InvalidModel, "D must have as many columns as B");
    require(a.allFinite() && b.allFinite() && c.allFinite() && d.allFinite(), ErrorCode::InvalidModel,
            "model matrices contain non-finite entries");
}

}  // namespace

void ContinuousLinearSystem::validate() const { check_dimensions(A, B, C, D); }

void DiscreteLinearSystem::validate() const {
    check_dimensions(A, B, C, D);
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidModel, "sample period must be positive");
}

DiscreteLinearSystem discretize(const ContinuousLinearSystem& sys, double dt) {
    sys.validate();
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidModel, "sample period must be positive");
    const auto n = sys.A.rows();
    const auto l = sys.B.cols();

    Matrix aug = Matrix::Zero(n + l, n + l);
    aug.topLeftCorner(n, n) = sys.A * dt;
    aug.topRightCorner(n, l) = sys.B * dt;
    const Matrix e = aug.exp();

    DiscreteLinearSystem out;
    out.A = e.topLeftCorner(n, n);
    out.B = e.topRightCorner(n, l);
    out.C = sys.C;
    out.D = sys.D;
    out.dt = dt;
    require(out.A.allFinite() && out.B.allFinite(), ErrorCode::InvalidModel, "discretization overflowed");
    return out;
}

Matrix stacked_observability(const Matrix& a, const Matrix& c, int window) {
    const auto m = c.rows();
    const auto n = a.rows();
    Matrix phi(m * window, n);
    Matrix block = c;
    for (int k = 0; k < window; ++k) {
        phi.middleRows(m * k, m) = block;
        block = block * a;
    }
    return phi;
}

HorizonOperators build_horizon_operators(const DiscreteLinearSystem& sys, int window, AnnihilatorPolicy policy) {
    sys.validate();
    require(window >= 1, ErrorCode::ContractViolation, "window length must be at least 1");
    const int n = sys.states();
    const int m = sys.outputs();
    const int l = sys.inputs();
    const int T = window;

    HorizonOperators ops;
    ops.window = T;
    ops.phi = stacked_observability(sys.A, sys.C, T);

    // markov[j] = C A^{j-1} B for j >= 1, markov[0] = D.
    std::vector<Matrix> markov(static_cast<std::size_t>(T));
    markov[0] = sys.D;
    Matrix ca = sys.C;
    for (int j = 1; j < T; ++j) {
        markov[static_cast<std::size_t>(j)] = ca * sys.B;
        ca = ca * sys.A;
    }
    ops.h = Matrix::Zero(m * T, l * T);
    for (int i = 0; i < T; ++i) {
        for (int j = 0; j <= i; ++j) {
            ops.h.block(m * i, l * j, m, l) = markov[static_cast<std::size_t>(i - j)];
        }
    }

    // G = [A^{T-2}B ... AB B]; powers by repeated multiplication.
    ops.propagator = Matrix::Zero(n, l * std::max(T - 1, 0));
    Matrix power = Matrix::Identity(n, n);
    for (int j = T - 2; j >= 0; --j) {
        ops.propagator.middleCols(l * j, l) = power * sys.B;
        power = power * sys.A;
    }
    ops.a_power = Matrix::Identity(n, n);
    for (int k = 0; k < T - 1; ++k) ops.a_power = ops.a_power * sys.A;

    ops.phi_last = ops.phi.bottomRows(m);
    ops.h_last = ops.h.bottomRows(m);

    const bool long_enough = T >= n;
    int rank = 0;
    Eigen::JacobiSVD<Matrix> svd;
    if (long_enough) {
        svd.compute(ops.phi, Eigen::ComputeFullU);
        const auto& s = svd.singularValues();
        const double cut = s.size() > 0 ? 1e-10 * s(0) : 0.0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            if (s(i) > cut) ++rank;
        }
    }
    const bool available = long_enough && rank == n && m * T > n;
    if (!available) {
        if (policy == AnnihilatorPolicy::Require) {
            if (!long_enough) {
                detail::raise(ErrorCode::AnnihilatorUnavailable,
                              "window " + std::to_string(T) + " is shorter than the state dimension " +
                                  std::to_string(n));
            }
            detail::raise(ErrorCode::AnnihilatorUnavailable,
                          "stacked observability map has rank " + std::to_string(rank) + " < " + std::to_string(n));
        }
        return ops;
    }
    ops.annihilator = svd.matrixU().rightCols(m * T - n).transpose();
    ops.has_annihilator = true;
    return ops;
}

Vector propagate_estimate(const Vector& x_first, const Vector& inputs, const HorizonOperators& ops,
                          const DiscreteLinearSystem& sys) {
    require(x_first.size() == sys.states(), ErrorCode::ContractViolation, "state dimension mismatch");
    require(inputs.size() == ops.propagator.cols(), ErrorCode::ContractViolation,
            "input window must hold T-1 samples");
    require(ops.a_power.rows() == sys.states(), ErrorCode::ContractViolation, "operators built for another system");
    Vector x = ops.a_power * x_first;
    if (inputs.size() > 0) x += ops.propagator * inputs;
    return x;
}

bool is_observable(const DiscreteLinearSystem& sys, double rel_tol) {
    const int n = sys.states();
    if (n == 0) return true;
    return numerical_rank(stacked_observability(sys.A, sys.C, n), rel_tol) == n;
}

Vector simulate_outputs(const DiscreteLinearSystem& sys, const Vector& x0, const Vector& inputs, int window) {
    const int m = sys.outputs();
    const int l = sys.inputs();
    require(inputs.size() == static_cast<Eigen::Index>(l) * window, ErrorCode::ContractViolation,
            "input window must hold T samples");
    Vector y(m * window);
    Vector x = x0;
    for (int k = 0; k < window; ++k) {
        const Vector u = inputs.segment(l * k, l);
        y.segment(m * k, m) = sys.C * x + sys.D * u;
        x = sys.A * x + sys.B * u;
    }
    return y;
}

}  // namespace resobs::model
