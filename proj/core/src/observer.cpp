#include "resobs/observer.hpp"

#include "resobs/error.hpp"

#include <cmath>
#include <limits>

namespace resobs::observer {

using detail::require;

DecodeResult solve_qcbp(const QcbpProblem& problem, const SolverSettings& settings, const Vector* warm_start) {
    const auto& ops = problem.ops;
    require(problem.y_window.size() == ops.phi.rows(), ErrorCode::ContractViolation,
            "measurement window does not match the horizon");
    require(problem.u_window.size() == ops.h.cols(), ErrorCode::ContractViolation,
            "input window does not match the horizon");
    require(problem.prior.dim() == ops.phi_last.rows(), ErrorCode::ContractViolation,
            "prior dimension must equal the channel count");

    const Vector r = problem.y_window - ops.h * problem.u_window;
    std::optional<EllipsoidConstraint> constraint;
    if (std::isfinite(problem.prior.radius())) {
        EllipsoidConstraint c;
        c.map = problem.prior.whiten(ops.phi_last);
        c.offset = problem.prior.whiten(Vector(problem.prior.mu() - ops.h_last * problem.u_window));
        c.radius_sq = problem.prior.radius();
        constraint = std::move(c);
    }
    return solve_l1_regression(ops.phi, r, constraint, settings, warm_start);
}

HorizonEstimate multi_model_estimate(const Vector& y_window, const Vector& u_window, const prior::AuxiliaryPrior& prior,
                                     const model::HorizonOperators& ops, const model::DiscreteLinearSystem& sys,
                                     const SolverSettings& settings, const Vector* warm_start) {
    HorizonEstimate out;
    out.decode = solve_qcbp(QcbpProblem{ops, y_window, u_window, prior}, settings, warm_start);
    const auto l = sys.inputs();
    out.x_current = model::propagate_estimate(out.decode.x_hat, u_window.head(l * (ops.window - 1)), ops, sys);
    return out;
}

void check_luenberger_gain(const model::DiscreteLinearSystem& sys, const Matrix& gain) {
    require(gain.rows() == sys.states() && gain.cols() == sys.outputs(), ErrorCode::InvalidGain,
            "observer gain must be n x m");
    const double rho = spectral_radius(sys.A - gain * sys.C);
    if (!(rho < 1.0)) {
        detail::raise(ErrorCode::InvalidGain, "observer error dynamics are unstable (spectral radius " +
                                                  std::to_string(rho) + ")");
    }
}

Matrix design_luenberger_gain(const model::DiscreteLinearSystem& sys, double pole_scale) {
    sys.validate();
    require(pole_scale > 0.0 && pole_scale < 1.0, ErrorCode::InvalidGain, "pole scale must lie in (0, 1)");
    const int n = sys.states();
    const int m = sys.outputs();
    Matrix gain;
    if (numerical_rank(sys.C) == n) {
        // K C = (1 - s) A  =>  A - K C = s A.
        const Matrix c_pinv = sys.C.completeOrthogonalDecomposition().pseudoInverse();
        gain = (1.0 - pole_scale) * sys.A * c_pinv;
    } else {
        // Filter Riccati recursion on A / pole_scale pushes the poles inside |z| < pole_scale.
        const Matrix a = sys.A / pole_scale;
        Matrix p = Matrix::Identity(n, n);
        const Matrix q = Matrix::Identity(n, n);
        const Matrix r = Matrix::Identity(m, m);
        for (int it = 0; it < 100000; ++it) {
            const Matrix s = sys.C * p * sys.C.transpose() + r;
            const Matrix k = a * p * sys.C.transpose() * s.ldlt().solve(Matrix::Identity(m, m));
            const Matrix next = a * p * a.transpose() - k * s * k.transpose() + q;
            const double change = (next - p).cwiseAbs().maxCoeff();
            p = 0.5 * (next + next.transpose());
            if (!p.allFinite()) break;
            if (change <= 1e-12 * std::max(1.0, p.cwiseAbs().maxCoeff())) break;
        }
        const Matrix s = sys.C * p * sys.C.transpose() + r;
        gain = sys.A * p * sys.C.transpose() * s.ldlt().solve(Matrix::Identity(m, m));
    }
    check_luenberger_gain(sys, gain);
    return gain;
}

Vector luenberger_step(const model::DiscreteLinearSystem& sys, const Matrix& gain, const Vector& x_hat,
                       const Vector& u, const Vector& y) {
    require(x_hat.size() == sys.states() && u.size() == sys.inputs() && y.size() == sys.outputs(),
            ErrorCode::ContractViolation, "luenberger_step dimension mismatch");
    return sys.A * x_hat + sys.B * u + gain * (y - sys.C * x_hat - sys.D * u);
}

QcbpBoundConstants make_qcbp_bound_constants(double delta_2s, int s, int m, double sigma_bar, double radius) {
    require(s >= 1 && s <= m, ErrorCode::ContractViolation, "sparsity must lie in [1, m]");
    require(sigma_bar > 0.0 && radius > 0.0, ErrorCode::ContractViolation,
            "sigma_bar and radius must be positive");
    QcbpBoundConstants c;
    c.delta_2s = delta_2s;
    c.s = s;
    c.m = m;
    c.sigma_bar = sigma_bar;
    c.radius = radius;
    c.k3 = cs::l1_recovery_constant(delta_2s, s);
    const double scale = 2.0 * radius * sigma_bar;
    c.k1 = std::sqrt(scale);
    c.k2 = c.k3 * std::sqrt(static_cast<double>(m - s) / scale);
    return c;
}

double qcbp_error_bound(const QcbpBoundConstants& consts, const Vector& e_window, int s) {
    const double limit = 1.0 / std::sqrt(2.0);
    if (!(consts.delta_2s < limit)) {
        detail::raise(ErrorCode::BoundInapplicable, "RIP premise fails");
    }
    const double tail = (e_window - cs::best_s_term(e_window, s)).norm();
    return consts.k1 * cs::sat(consts.k2 * tail, 1.0);
}

LuenbergerObserver::LuenbergerObserver(model::DiscreteLinearSystem sys, Matrix gain, Vector x0, std::string name)
    : sys_(std::move(sys)), gain_(std::move(gain)), x_hat_(std::move(x0)), name_(std::move(name)) {
    check_luenberger_gain(sys_, gain_);
    require(x_hat_.size() == sys_.states(), ErrorCode::ContractViolation, "initial estimate dimension mismatch");
}

ObserverOutput LuenbergerObserver::step(const SampleInput& sample) {
    ObserverOutput out;
    out.estimate = x_hat_;
    x_hat_ = luenberger_step(sys_, gain_, x_hat_, sample.u, sample.y);
    return out;
}

MovingHorizonObserver::MovingHorizonObserver(model::DiscreteLinearSystem sys,
                                             std::shared_ptr<const model::HorizonOperators> ops,
                                             SolverSettings settings, bool use_prior, std::string name)
    : sys_(std::move(sys)), ops_(std::move(ops)), settings_(settings), use_prior_(use_prior), name_(std::move(name)) {
    require(ops_ != nullptr, ErrorCode::ContractViolation, "horizon operators required");
    settings_.validate();
}

ObserverOutput MovingHorizonObserver::step(const SampleInput& sample) {
    const int T = ops_->window;
    const int m = sys_.outputs();
    const int l = sys_.inputs();
    ys_.push_back(sample.y);
    us_.push_back(sample.u);
    Vector dropped_input;
    if (static_cast<int>(ys_.size()) > T) {
        ys_.pop_front();
        dropped_input = us_.front();
        us_.pop_front();
    }
    ObserverOutput out;
    if (static_cast<int>(ys_.size()) < T) return out;

    Vector y_window(m * T);
    Vector u_window(l * T);
    for (int k = 0; k < T; ++k) {
        y_window.segment(m * k, m) = ys_[static_cast<std::size_t>(k)];
        u_window.segment(l * k, l) = us_[static_cast<std::size_t>(k)];
    }

    std::optional<Vector> warm;
    if (warm_start_enabled_ && previous_first_ && dropped_input.size() == l) {
        warm = sys_.A * *previous_first_ + sys_.B * dropped_input;
    }
    try {
        DecodeResult decode;
        const Vector* warm_ptr = warm ? &*warm : nullptr;
        if (use_prior_) {
            require(sample.prior != nullptr, ErrorCode::ContractViolation, "multi-model observer needs a prior");
            decode = solve_qcbp(QcbpProblem{*ops_, y_window, u_window, *sample.prior}, settings_, warm_ptr);
        } else {
            decode = solve_l1_regression(ops_->phi, y_window - ops_->h * u_window, std::nullopt, settings_, warm_ptr);
        }
        previous_first_ = decode.x_hat;
        out.iterations = decode.iterations;
        out.estimate = model::propagate_estimate(decode.x_hat, u_window.head(l * (T - 1)), *ops_, sys_);
        if (!decode.converged) out.message = "iteration cap reached";
    } catch (const Error& e) {
        out.failed = true;
        out.message = e.what();
        previous_first_.reset();
    }
    return out;
}

}  // namespace resobs::observer
