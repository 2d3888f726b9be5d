#include "resobs/powergrid.hpp"

#include "resobs/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace resobs::grid {

using detail::require;

namespace {

constexpr double kMaxLoadCondition = 1e12;

void add_edge(Matrix& lap, int i, int j, double susceptance) {
    lap(i, i) += susceptance;
    lap(j, j) += susceptance;
    lap(i, j) -= susceptance;
    lap(j, i) -= susceptance;
}

bool connected(const Matrix& lap) {
    const auto n = lap.rows();
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const auto i = stack.back();
        stack.pop_back();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i && lap(i, j) != 0.0 && !seen[static_cast<std::size_t>(j)]) {
                seen[static_cast<std::size_t>(j)] = true;
                stack.push_back(j);
            }
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

Eigen::PartialPivLU<Matrix> load_block_lu(const GridCase& grid) {
    const double cond = grid.load_block_condition();
    if (!(cond < kMaxLoadCondition)) {
        detail::raise(ErrorCode::Reduction, "load block L_ll is singular or ill-conditioned (cond " +
                                                std::to_string(cond) + ")");
    }
    return Eigen::PartialPivLU<Matrix>(grid.l_ll());
}

}  // namespace

Matrix GridCase::l_ll() const {
    Matrix out = laplacian.bottomRightCorner(n_bus, n_bus);
    out.diagonal() += bus_ground;
    return out;
}

double GridCase::load_block_condition() const {
    Eigen::JacobiSVD<Matrix> svd(l_ll());
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / smin;
}

void GridCase::validate() const {
    require(n_gen >= 1 && n_bus >= 1, ErrorCode::InvalidModel, "grid needs generators and buses");
    const int n = n_gen + n_bus;
    require(laplacian.rows() == n && laplacian.cols() == n, ErrorCode::InvalidModel, "laplacian size mismatch");
    require(bus_ground.size() == n_bus && (bus_ground.array() >= 0.0).all(), ErrorCode::InvalidModel,
            "bus ground susceptances must be non-negative, one per bus");
    require(inertia.rows() == n_gen && damping.rows() == n_gen, ErrorCode::InvalidModel,
            "inertia and damping must be n_g x n_g");
    require((inertia.diagonal().array() > 0.0).all(), ErrorCode::InvalidModel, "inertia must be positive");
    require((damping.diagonal().array() >= 0.0).all(), ErrorCode::InvalidModel, "damping must be non-negative");
    require(p_node.rows() == n_bus && p_node.cols() == n_bus, ErrorCode::InvalidModel, "P_node must be n_b x n_b");
    require(nominal_demand.size() == n_bus && dispatch.size() == n_gen, ErrorCode::InvalidModel,
            "operating point size mismatch");
    const double row_sum = laplacian.rowwise().sum().cwiseAbs().maxCoeff();
    require(row_sum <= 1e-9 * std::max(1.0, laplacian.cwiseAbs().maxCoeff()), ErrorCode::InvalidModel,
            "laplacian rows must sum to zero");
}

GridCase make_grid_case(std::string name, int n_bus, const std::vector<Branch>& branches,
                        const std::vector<GeneratorSpec>& generators, const Vector& bus_load, const Vector& bus_ground,
                        double base_mva) {
    require(n_bus >= 1 && !generators.empty(), ErrorCode::InvalidModel, "grid needs buses and generators");
    require(bus_load.size() == n_bus && bus_ground.size() == n_bus, ErrorCode::InvalidModel,
            "one load and one ground entry per bus");
    require(base_mva > 0.0, ErrorCode::InvalidModel, "base MVA must be positive");
    GridCase g;
    g.name = std::move(name);
    g.n_gen = static_cast<int>(generators.size());
    g.n_bus = n_bus;
    g.base_mva = base_mva;
    g.branches = branches;
    const int n = g.n_gen + n_bus;
    g.laplacian = Matrix::Zero(n, n);
    g.p_node = Matrix::Zero(n_bus, n_bus);
    for (const auto& br : branches) {
        require(br.from >= 0 && br.from < n_bus && br.to >= 0 && br.to < n_bus && br.from != br.to,
                ErrorCode::InvalidModel, "branch endpoints out of range");
        require(br.reactance > 0.0, ErrorCode::InvalidModel, "branch reactance must be positive");
        add_edge(g.laplacian, g.n_gen + br.from, g.n_gen + br.to, 1.0 / br.reactance);
        add_edge(g.p_node, br.from, br.to, 1.0 / br.reactance);
    }
    g.inertia = Matrix::Zero(g.n_gen, g.n_gen);
    g.damping = Matrix::Zero(g.n_gen, g.n_gen);
    g.dispatch = Vector::Zero(g.n_gen);
    for (int i = 0; i < g.n_gen; ++i) {
        const auto& gen = generators[static_cast<std::size_t>(i)];
        require(gen.bus >= 0 && gen.bus < n_bus, ErrorCode::InvalidModel, "generator bus out of range");
        require(gen.internal_reactance > 0.0, ErrorCode::InvalidModel, "internal reactance must be positive");
        add_edge(g.laplacian, i, g.n_gen + gen.bus, 1.0 / gen.internal_reactance);
        g.inertia(i, i) = gen.inertia;
        g.damping(i, i) = gen.damping;
        g.dispatch(i) = gen.dispatch;
        g.generator_buses.push_back(gen.bus);
    }
    g.bus_ground = bus_ground;
    g.nominal_demand = -bus_load;
    g.validate();
    require(connected(g.laplacian), ErrorCode::InvalidModel, "network graph is not connected");
    return g;
}

GridCase grid_case_from_json(const std::string& text) {
    using nlohmann::json;
    try {
        const json doc = json::parse(text);
        const double base = doc.value("base_mva", 100.0);
        const auto& buses = doc.at("buses");
        const int n_bus = static_cast<int>(buses.size());
        Vector load = Vector::Zero(n_bus);
        Vector ground = Vector::Zero(n_bus);
        for (int i = 0; i < n_bus; ++i) {
            const auto& b = buses.at(static_cast<std::size_t>(i));
            require(b.at("id").get<int>() == i + 1, ErrorCode::Config, "bus ids must be 1..n in order");
            load(i) = b.value("load_mw", 0.0) / base;
            ground(i) = b.value("ground", 0.0);
        }
        std::vector<Branch> branches;
        for (const auto& b : doc.at("branches")) {
            branches.push_back({b.at("from").get<int>() - 1, b.at("to").get<int>() - 1, b.at("x").get<double>()});
        }
        std::vector<GeneratorSpec> gens;
        for (const auto& g : doc.at("generators")) {
            GeneratorSpec spec;
            spec.bus = g.at("bus").get<int>() - 1;
            spec.internal_reactance = g.at("x_internal").get<double>();
            spec.inertia = g.at("inertia").get<double>();
            spec.damping = g.at("damping").get<double>();
            spec.dispatch = g.value("dispatch_mw", 0.0) / base;
            gens.push_back(spec);
        }
        return make_grid_case(doc.value("name", std::string("grid")), n_bus, branches, gens, load, ground, base);
    } catch (const nlohmann::json::exception& e) {
        detail::raise(ErrorCode::Config, std::string("grid case: ") + e.what());
    }
}

GridCase load_grid_case(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open grid case '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return grid_case_from_json(buf.str());
}

Matrix kron_reduced(const GridCase& grid) {
    const auto lu = load_block_lu(grid);
    return grid.l_gg() - grid.l_gl() * lu.solve(grid.l_lg());
}

model::ContinuousLinearSystem build_reduced_model(const GridCase& grid) {
    grid.validate();
    const int ng = grid.n_gen;
    const int nb = grid.n_bus;
    const auto lu = load_block_lu(grid);
    const Matrix ll_inv_lg = lu.solve(grid.l_lg());
    const Matrix ll_inv = lu.inverse();
    const Matrix k_red = grid.l_gg() - grid.l_gl() * ll_inv_lg;
    const Vector m_inv = grid.inertia.diagonal().cwiseInverse();

    model::ContinuousLinearSystem sys;
    sys.A = Matrix::Zero(2 * ng, 2 * ng);
    sys.A.topRightCorner(ng, ng) = Matrix::Identity(ng, ng);
    sys.A.bottomLeftCorner(ng, ng) = -(m_inv.asDiagonal() * k_red);
    sys.A.bottomRightCorner(ng, ng) = -(m_inv.asDiagonal() * grid.damping);

    sys.B = Matrix::Zero(2 * ng, ng + nb);
    sys.B.bottomLeftCorner(ng, ng) = m_inv.asDiagonal();
    sys.B.bottomRightCorner(ng, nb) = -(m_inv.asDiagonal() * grid.l_gl() * ll_inv);

    sys.C = Matrix::Zero(ng + nb, 2 * ng);
    sys.C.topRightCorner(ng, ng) = Matrix::Identity(ng, ng);
    sys.C.bottomLeftCorner(nb, ng) = -grid.p_node * ll_inv_lg;

    sys.D = Matrix::Zero(ng + nb, ng + nb);
    sys.D.bottomRightCorner(nb, nb) = grid.p_node * ll_inv;
    sys.validate();
    return sys;
}

Vector recover_bus_angles(const GridCase& grid, const Vector& delta, const Vector& p_demand) {
    require(delta.size() == grid.n_gen && p_demand.size() == grid.n_bus, ErrorCode::ContractViolation,
            "angle recovery dimension mismatch");
    return -load_block_lu(grid).solve(grid.l_lg() * delta - p_demand);
}

double power_flow_residual(const GridCase& grid, const Vector& delta, const Vector& theta, const Vector& p_demand) {
    return (grid.l_lg() * delta + grid.l_ll() * theta - p_demand).cwiseAbs().maxCoeff();
}

Vector equilibrium_state(const model::ContinuousLinearSystem& sys, const Vector& u) {
    require(u.size() == sys.inputs(), ErrorCode::ContractViolation, "input dimension mismatch");
    const Vector rhs = -sys.B * u;
    Eigen::FullPivLU<Matrix> lu(sys.A);
    require(lu.isInvertible(), ErrorCode::Reduction, "state matrix is singular; no unique equilibrium");
    return lu.solve(rhs);
}

PiController PiController::uniform(int n_gen, double kp, double ki, double integral_limit) {
    PiController c;
    c.kp = Vector::Constant(n_gen, kp);
    c.ki = Vector::Constant(n_gen, ki);
    c.integral_state = Vector::Zero(n_gen);
    c.integral_limit = integral_limit;
    c.validate();
    return c;
}

void PiController::validate() const {
    require(kp.size() >= 1 && ki.size() == kp.size() && integral_state.size() == kp.size(), ErrorCode::Config,
            "controller gain sizes mismatch");
    require((kp.array() >= 0.0).all() && (ki.array() >= 0.0).all(), ErrorCode::Config,
            "controller gains must be non-negative");
    require(integral_limit > 0.0, ErrorCode::Config, "integral limit must be positive");
}

Vector pi_control_step(PiController& ctrl, const Vector& omega, double dt) {
    require(omega.size() == ctrl.kp.size(), ErrorCode::ContractViolation, "controller dimension mismatch");
    const Vector error = Vector::Constant(omega.size(), ctrl.setpoint) - omega;
    ctrl.integral_state = (ctrl.integral_state + dt * error).cwiseMax(-ctrl.integral_limit).cwiseMin(ctrl.integral_limit);
    return ctrl.kp.cwiseProduct(error) + ctrl.ki.cwiseProduct(ctrl.integral_state);
}

Matrix demand_profile(const GridCase& grid, int samples, double fraction, std::uint64_t seed) {
    require(samples >= 1, ErrorCode::Config, "demand profile needs at least one sample");
    require(fraction >= 0.0 && fraction < 1.0, ErrorCode::Config, "demand fluctuation must lie in [0, 1)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> draw(-1.0, 1.0);
    Matrix out(grid.n_bus, samples);
    for (int k = 0; k < samples; ++k) {
        for (int i = 0; i < grid.n_bus; ++i) out(i, k) = grid.nominal_demand(i) * (1.0 + fraction * draw(rng));
    }
    return out;
}

EstimateTrace simulate_closed_loop(SimulationSetup setup) {
    require(setup.grid != nullptr && setup.sys != nullptr, ErrorCode::ContractViolation,
            "simulation needs a grid and a discrete model");
    const auto& grid = *setup.grid;
    const auto& sys = *setup.sys;
    const int ng = grid.n_gen;
    const int nb = grid.n_bus;
    require(sys.states() == 2 * ng && sys.inputs() == ng + nb && sys.outputs() == ng + nb,
            ErrorCode::ContractViolation, "discrete model does not match the grid");
    require(setup.horizon_samples >= 1 && setup.demand.rows() == nb && setup.demand.cols() >= setup.horizon_samples,
            ErrorCode::ContractViolation, "demand profile too short");
    require(setup.x0.size() == sys.states(), ErrorCode::ContractViolation, "initial state dimension mismatch");
    require(setup.noise_std >= 0.0, ErrorCode::Config, "noise standard deviation must be non-negative");
    setup.controller.validate();
    if (setup.attack) setup.attack->validate(sys.outputs());

    EstimateTrace trace;
    for (auto* obs : setup.observers) trace.observer_names.push_back(obs->name());
    for (int i = 0; i < ng; ++i) trace.state_names.push_back("delta" + std::to_string(i + 1));
    for (int i = 0; i < ng; ++i) trace.state_names.push_back("omega" + std::to_string(i + 1));
    trace.attack_onset = setup.attack ? setup.attack->onset : -1;
    trace.warmup = setup.warmup;
    trace.samples.reserve(static_cast<std::size_t>(setup.horizon_samples));

    std::mt19937_64 noise_rng(setup.seed);
    std::mt19937_64 attack_rng(setup.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> noise(0.0, 1.0);
    const attack::BadDataDetector bdd(sys, setup.bdd_threshold);

    Vector x = setup.x0;
    for (int k = 0; k < setup.horizon_samples; ++k) {
        TraceSample s;
        s.k = k;
        s.x_true = x;
        Vector noise_vec = Vector::Zero(sys.outputs());
        if (setup.noise_std > 0.0) {
            for (int i = 0; i < sys.outputs(); ++i) noise_vec(i) = setup.noise_std * noise(noise_rng);
        }
        const Vector omega_meas = x.tail(ng) + noise_vec.head(ng);
        const Vector p_demand = setup.demand.col(k);
        s.u.resize(ng + nb);
        s.u << pi_control_step(setup.controller, omega_meas, sys.dt), p_demand;

        s.y_clean = sys.C * x + sys.D * s.u;
        s.attack = setup.attack ? attack::generate_fdia(*setup.attack, sys, s.y_clean, s.u, k, attack_rng)
                                : Vector::Zero(sys.outputs());
        s.y_measured = s.y_clean + noise_vec + s.attack;
        const auto entry = bdd.test(s.y_measured, s.u);
        s.residue = entry.residue;
        s.alarm = entry.alarm;

        const Vector theta = recover_bus_angles(grid, x.head(ng), p_demand);
        s.theta_residual = power_flow_residual(grid, x.head(ng), theta, p_demand);

        std::optional<prior::AuxiliaryPrior> prior;
        if (setup.prior_provider) prior = setup.prior_provider(k, s.y_clean);
        const observer::SampleInput input{s.y_measured, s.u, prior ? &*prior : nullptr};
        for (auto* obs : setup.observers) {
            const auto out = obs->step(input);
            s.observers.push_back({out.estimate, out.failed, out.iterations});
        }
        x = sys.A * x + sys.B * s.u;
        trace.samples.push_back(std::move(s));
    }
    return trace;
}

}  // namespace resobs::grid
