#include "resobs/l1_solver.hpp"

#include "resobs/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace resobs {

using detail::require;

void SolverSettings::validate() const {
    require(penalty > 0.0, ErrorCode::ContractViolation, "ADMM penalty must be positive");
    require(abs_tol > 0.0 && rel_tol > 0.0, ErrorCode::ContractViolation, "tolerances must be positive");
    require(max_iter >= 1, ErrorCode::ContractViolation, "max_iter must be at least 1");
}

namespace {

constexpr int kCertifyEvery = 25;

Vector soft_threshold(const Vector& z, double kappa) {
    return z.unaryExpr([kappa](double v) {
        if (v > kappa) return v - kappa;
        if (v < -kappa) return v + kappa;
        return 0.0;
    });
}

Vector project_ball(const Vector& z, double radius) {
    const double norm = z.norm();
    if (norm <= radius) return z;
    return z * (radius / norm);
}

double violation(const EllipsoidConstraint& c, const Vector& x) {
    return (c.map * x - c.offset).squaredNorm() - c.radius_sq;
}

// Pulls x back along the segment towards the interior point `center` until it
// meets the constraint.
Vector restore_feasibility(const EllipsoidConstraint& c, const Vector& x, const Vector& center) {
    if (violation(c, x) <= 0.0) return x;
    const Vector a = c.map * center - c.offset;
    const Vector b = c.map * (x - center);
    const double qa = b.squaredNorm();
    const double qb = 2.0 * a.dot(b);
    const double qc = a.squaredNorm() - c.radius_sq;
    if (qa <= 0.0) return center;
    const double disc = std::max(qb * qb - 4.0 * qa * qc, 0.0);
    double theta = (-qb + std::sqrt(disc)) / (2.0 * qa);
    theta = std::clamp(theta, 0.0, 1.0);
    Vector out = center + theta * (x - center);
    // Rounding can leave the point a hair outside; shrink until it is inside.
    for (int i = 0; i < 60 && violation(c, out) > 0.0; ++i) {
        theta *= 1.0 - 1e-12 * static_cast<double>(1 << std::min(i, 40));
        out = center + theta * (x - center);
    }
    return out;
}

std::vector<int> flagged_rows(const Vector& e, double threshold) {
    std::vector<int> rows;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        if (std::abs(e(i)) > threshold) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

// Row indices ordered by |e_i|, ties by index.
std::vector<int> rows_by_magnitude(const Vector& e) {
    std::vector<int> order(static_cast<std::size_t>(e.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&e](int a, int b) { return std::abs(e(a)) < std::abs(e(b)); });
    return order;
}

// Greedy pick along `order` of rows that raise the rank, up to rank `target`.
std::vector<int> rank_prefix(const Matrix& phi, const std::vector<int>& order, int target) {
    std::vector<int> rows;
    Matrix basis(phi.cols(), 0);
    for (int idx : order) {
        if (static_cast<int>(rows.size()) >= target) break;
        Vector v = phi.row(idx).transpose();
        const double scale = v.norm();
        if (scale == 0.0) continue;
        if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
        if (v.norm() <= 1e-9 * scale) continue;
        basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
        basis.col(basis.cols() - 1) = v / v.norm();
        rows.push_back(idx);
    }
    return rows;
}

struct Certificate {
    bool optimal = false;
    bool unconstrained_infeasible = false;  ///< the unconstrained optimum violates the constraint
    Vector x;
};

// Checks 0 in -phi^T z + mu * M^T (M x - g) with z in the l1 subdifferential,
// given the rows Z that x fits exactly. mu is a free unknown only when the
// constraint is active.
bool kkt_holds(const Matrix& phi, const Vector& r, const Vector& x, const EllipsoidConstraint* active,
               double zero_tol) {
    const Vector e = r - phi * x;
    std::vector<int> zero;
    Vector rhs = Vector::Zero(phi.cols());
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        if (std::abs(e(i)) <= zero_tol) {
            zero.push_back(static_cast<int>(i));
        } else {
            rhs -= phi.row(i).transpose() * (e(i) > 0.0 ? 1.0 : -1.0);
        }
    }
    const auto nz = static_cast<Eigen::Index>(zero.size());
    const Eigen::Index extra = active != nullptr ? 1 : 0;
    Matrix sys(phi.cols(), nz + extra);
    for (Eigen::Index j = 0; j < nz; ++j) sys.col(j) = phi.row(zero[static_cast<std::size_t>(j)]).transpose();
    if (active != nullptr) sys.col(nz) = -active->map.transpose() * (active->map * x - active->offset);
    if (sys.cols() == 0) return rhs.norm() <= 1e-12;
    const Vector sol = sys.completeOrthogonalDecomposition().solve(rhs);
    const double consistency = (sys * sol - rhs).norm();
    if (consistency > 1e-9 * std::max(1.0, rhs.norm())) return false;
    if (nz > 0 && sol.head(nz).lpNorm<Eigen::Infinity>() > 1.0 + 1e-9) return false;
    return active == nullptr || sol(nz) >= -1e-12;
}

// Exchange descent over vertices of the l1 objective (each vertex fits n rows
// exactly). Leaves the row whose dual weight exceeds 1 and enters the row at
// the weighted-median breakpoint of the resulting line search. Returns the
// vertex once its dual weights certify optimality.
std::optional<Vector> vertex_descent(const Matrix& phi, const Vector& r, std::vector<int> basis, int max_pivots,
                                     double zero_tol) {
    const auto p = phi.rows();
    const auto n = phi.cols();
    std::vector<char> in_basis(static_cast<std::size_t>(p), 0);
    for (int b : basis) in_basis[static_cast<std::size_t>(b)] = 1;
    struct Breakpoint {
        double t;
        double slope_gain;
        int row;
    };
    std::vector<Breakpoint> breaks;
    for (int pivot = 0; pivot <= max_pivots; ++pivot) {
        const Matrix sub = select_rows(phi, basis);
        const Eigen::FullPivLU<Matrix> lu(sub);
        if (lu.rank() < n) return std::nullopt;
        const Vector x = lu.solve(select_rows(r, basis));
        Vector e = r - phi * x;
        Vector g = Vector::Zero(n);
        for (Eigen::Index j = 0; j < p; ++j) {
            if (in_basis[static_cast<std::size_t>(j)]) {
                e(j) = 0.0;
            } else if (std::abs(e(j)) > zero_tol) {
                g -= phi.row(j).transpose() * (e(j) > 0.0 ? 1.0 : -1.0);
            }
        }
        const Vector z = lu.transpose().solve(g);
        Eigen::Index leave = 0;
        const double zmax = z.cwiseAbs().maxCoeff(&leave);
        if (zmax <= 1.0 + 1e-10) {
            if (kkt_holds(phi, r, x, nullptr, zero_tol)) return x;
            return std::nullopt;
        }
        if (pivot == max_pivots) break;
        Vector unit = Vector::Zero(n);
        unit(leave) = z(leave) > 0.0 ? -1.0 : 1.0;
        const Vector d = lu.solve(unit);
        const Vector a = phi * d;
        breaks.clear();
        for (Eigen::Index j = 0; j < p; ++j) {
            if (in_basis[static_cast<std::size_t>(j)] || std::abs(a(j)) < 1e-300) continue;
            if (std::abs(e(j)) <= zero_tol) {
                breaks.push_back({0.0, std::abs(a(j)), static_cast<int>(j)});
            } else {
                const double t = e(j) / a(j);
                if (t > 0.0) breaks.push_back({t, 2.0 * std::abs(a(j)), static_cast<int>(j)});
            }
        }
        std::sort(breaks.begin(), breaks.end(), [](const Breakpoint& l, const Breakpoint& rr) {
            return l.t < rr.t || (l.t == rr.t && l.row < rr.row);
        });
        double slope = 1.0 - zmax;
        int enter = -1;
        for (const auto& b : breaks) {
            slope += b.slope_gain;
            if (slope >= 0.0) {
                enter = b.row;
                break;
            }
        }
        if (enter < 0) return std::nullopt;
        in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(leave)])] = 0;
        basis[static_cast<std::size_t>(leave)] = enter;
        in_basis[static_cast<std::size_t>(enter)] = 1;
    }
    return std::nullopt;
}

// Vertex refinement of an ADMM iterate followed by an exact optimality check.
Certificate certify(const Matrix& phi, const Vector& r, const EllipsoidConstraint* constraint, const Vector& x_admm,
                    double zero_tol, bool try_vertex) {
    const int n = static_cast<int>(phi.cols());
    Certificate out;
    const auto order = rows_by_magnitude(r - phi * x_admm);
    if (try_vertex) {
        const auto rows = rank_prefix(phi, order, n);
        if (static_cast<int>(rows.size()) == n) {
            if (auto vertex = vertex_descent(phi, r, rows, 10 * n, zero_tol)) {
                if (constraint == nullptr || violation(*constraint, *vertex) <= 0.0) {
                    out.optimal = true;
                    out.x = std::move(*vertex);
                    return out;
                }
                out.unconstrained_infeasible = true;
            }
        }
    }
    if (constraint == nullptr || n < 1) return out;
    // Active constraint: n-1 fitted rows plus the ellipsoid boundary.
    const auto rows = rank_prefix(phi, order, n - 1);
    const Matrix sub = select_rows(phi, rows);
    if (static_cast<int>(rows.size()) != n - 1) return out;
    Vector base;
    Vector dir;
    if (n == 1) {
        base = Vector::Zero(1);
        dir = Vector::Ones(1);
    } else {
        Eigen::JacobiSVD<Matrix> svd(sub, Eigen::ComputeFullU | Eigen::ComputeFullV);
        base = svd.solve(select_rows(r, rows));
        dir = svd.matrixV().col(n - 1);
    }
    const Vector a = constraint->map * base - constraint->offset;
    const Vector b = constraint->map * dir;
    const double qa = b.squaredNorm();
    const double qb = 2.0 * a.dot(b);
    const double qc = a.squaredNorm() - constraint->radius_sq;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (qa <= 0.0 || disc < 0.0) return out;
    const double t_ref = dir.dot(x_admm - base);
    const double t1 = (-qb - std::sqrt(disc)) / (2.0 * qa);
    const double t2 = (-qb + std::sqrt(disc)) / (2.0 * qa);
    const Vector cand = base + (std::abs(t1 - t_ref) <= std::abs(t2 - t_ref) ? t1 : t2) * dir;
    if (violation(*constraint, cand) > 1e-9 * std::max(1.0, constraint->radius_sq)) return out;
    if (kkt_holds(phi, r, cand, constraint, zero_tol)) {
        out.optimal = true;
        out.x = cand;
    }
    return out;
}

}  // namespace

DecodeResult solve_l1_regression(const Matrix& phi, const Vector& r,
                                 const std::optional<EllipsoidConstraint>& constraint_in,
                                 const SolverSettings& settings, const Vector* warm_start) {
    settings.validate();
    const auto p = phi.rows();
    const auto n = phi.cols();
    require(r.size() == p, ErrorCode::ContractViolation, "measurement stack does not match operator rows");
    std::optional<EllipsoidConstraint> constraint;
    if (constraint_in) {
        const auto& c = *constraint_in;
        require(c.map.cols() == n && c.offset.size() == c.map.rows(), ErrorCode::ContractViolation,
                "constraint dimensions do not match the state");
        require(c.radius_sq >= 0.0, ErrorCode::ContractViolation, "constraint radius must be >= 0");
        // Same set, rows rescaled to the magnitude of phi.
        const double map_norm = c.map.norm();
        const double kappa = map_norm > 0.0 ? phi.norm() / map_norm : 1.0;
        constraint = EllipsoidConstraint{kappa * c.map, kappa * c.offset, kappa * kappa * c.radius_sq};
    }
    const bool constrained = constraint.has_value();
    const Matrix empty_map = Matrix::Zero(0, n);
    const Vector empty_vec = Vector::Zero(0);
    const Matrix& mmap = constrained ? constraint->map : empty_map;
    const Vector& goff = constrained ? constraint->offset : empty_vec;
    const auto q = mmap.rows();
    const double radius = constrained ? std::sqrt(constraint->radius_sq) : 0.0;
    const EllipsoidConstraint* cptr = constrained ? &*constraint : nullptr;

    Vector center;
    if (constrained) {
        center = mmap.completeOrthogonalDecomposition().solve(goff);
        const double gap = (mmap * center - goff).squaredNorm();
        if (gap > constraint->radius_sq * (1.0 + 1e-12) + 1e-300) {
            detail::raise(ErrorCode::InfeasiblePrior,
                          "prior ellipsoid does not intersect the model manifold (min distance^2 " +
                              std::to_string(gap) + " > radius^2 " + std::to_string(constraint->radius_sq) + ")");
        }
    }

    const Matrix gram = phi.transpose() * phi + mmap.transpose() * mmap;
    const Eigen::LLT<Matrix> factor(gram);
    require(factor.info() == Eigen::Success && numerical_rank(phi, 1e-12) + (constrained ? 1 : 0) >= n,
            ErrorCode::ContractViolation, "stacked operator must have full column rank");

    Vector x = warm_start != nullptr && warm_start->size() == n ? *warm_start
                                                                 : Vector(factor.solve(phi.transpose() * r));
    Vector w = r - phi * x;
    Vector v = constrained ? Vector(project_ball(mmap * x - goff, radius)) : Vector::Zero(0);
    Vector lam = Vector::Zero(p);
    Vector nu = Vector::Zero(q);
    double rho = settings.penalty;

    DecodeResult result;
    const double sqrt_pq = std::sqrt(static_cast<double>(p + q));
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    const double r_norm = std::sqrt(r.squaredNorm() + goff.squaredNorm());
    const double zero_tol = 1e-11 * (1.0 + r.lpNorm<Eigen::Infinity>());

    Vector best_x = x;
    double best_score = std::numeric_limits<double>::infinity();
    bool certified = false;
    bool try_vertex = true;
    auto attempt = [&](const Vector& at) {
        auto cert = certify(phi, r, cptr, at, zero_tol, try_vertex);
        if (cert.unconstrained_infeasible) try_vertex = false;
        if (cert.optimal) {
            certified = true;
            result.converged = true;
            best_x = std::move(cert.x);
        }
        return cert.optimal;
    };
    int it = 0;
    if (settings.polish && attempt(x)) it = settings.max_iter;
    for (; it < settings.max_iter; ++it) {
        Vector rhs = phi.transpose() * (r - w - lam);
        if (constrained) rhs += mmap.transpose() * (v + goff - nu);
        x = factor.solve(rhs);

        const Vector phix = phi * x;
        const Vector w_old = w;
        w = soft_threshold(r - phix - lam, 1.0 / rho);
        Vector mx;
        Vector v_old;
        if (constrained) {
            mx = mmap * x;
            v_old = v;
            v = project_ball(mx - goff + nu, radius);
        }

        const Vector res_w = phix + w - r;
        lam += res_w;
        double primal_sq = res_w.squaredNorm();
        Vector dual = phi.transpose() * (w - w_old);
        double ax_sq = phix.squaredNorm();
        double bz_sq = w.squaredNorm();
        Vector aty_vec = phi.transpose() * lam;
        double merit_sq = (w - w_old).squaredNorm() + res_w.squaredNorm();
        if (constrained) {
            const Vector res_v = mx - v - goff;
            nu += res_v;
            primal_sq += res_v.squaredNorm();
            dual -= mmap.transpose() * (v - v_old);
            ax_sq += mx.squaredNorm();
            bz_sq += v.squaredNorm();
            aty_vec += mmap.transpose() * nu;
            merit_sq += (v - v_old).squaredNorm() + res_v.squaredNorm();
        }
        const double aty = rho * aty_vec.norm();
        const double primal = std::sqrt(primal_sq);
        const double dual_norm = rho * dual.norm();
        if (settings.record_merit) result.merit_history.push_back(std::sqrt(rho * merit_sq));

        const double eps_pri =
            sqrt_pq * settings.abs_tol + settings.rel_tol * std::max({std::sqrt(ax_sq), std::sqrt(bz_sq), r_norm});
        const double eps_dual = sqrt_n * settings.abs_tol + settings.rel_tol * aty;

        const double score = primal / eps_pri + dual_norm / eps_dual;
        if (score < best_score) {
            best_score = score;
            best_x = x;
        }
        if (primal <= eps_pri && dual_norm <= eps_dual) {
            result.converged = true;
            best_x = x;
            ++it;
            break;
        }
        if (settings.polish && it % kCertifyEvery == kCertifyEvery - 1 && attempt(x)) {
            ++it;
            break;
        }

        if (settings.adapt_penalty && it < settings.adapt_iterations && it % 10 == 9) {
            if (primal > 10.0 * dual_norm) {
                rho *= 2.0;
                lam /= 2.0;
                nu /= 2.0;
            } else if (dual_norm > 10.0 * primal) {
                rho /= 2.0;
                lam *= 2.0;
                nu *= 2.0;
            }
        }
    }
    result.iterations = certified && it == settings.max_iter ? 0 : it;
    if (settings.polish && !certified) attempt(best_x);
    x = best_x;
    if (constrained) x = restore_feasibility(*constraint, x, center);

    result.x_hat = x;
    result.e_hat = r - phi * x;
    result.objective = result.e_hat.lpNorm<1>();
    result.support = flagged_rows(result.e_hat, 1e-6 * (1.0 + r.lpNorm<Eigen::Infinity>()));
    return result;
}

}  // namespace resobs
