#include "resobs/harness.hpp"

#include "resobs/error.hpp"
#include "resobs/model.hpp"
#include "resobs/observer.hpp"
#include "resobs/powergrid.hpp"
#include "resobs/prior.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <set>
#include <sstream>

namespace resobs::harness {

using detail::require;
using nlohmann::json;

namespace {

void field_check(bool ok, const std::string& field, const std::string& rule) {
    if (!ok) detail::raise(ErrorCode::Config, "config field '" + field + "': " + rule);
}

json solver_to_json(const SolverSettings& s) {
    return json{{"penalty", s.penalty},           {"abs_tol", s.abs_tol},
                {"rel_tol", s.rel_tol},           {"max_iter", s.max_iter},
                {"adapt_penalty", s.adapt_penalty}, {"adapt_iterations", s.adapt_iterations},
                {"polish", s.polish}};
}

SolverSettings solver_from_json(const json& j) {
    static const std::set<std::string> known{"penalty",       "abs_tol",          "rel_tol", "max_iter",
                                             "adapt_penalty", "adapt_iterations", "polish"};
    SolverSettings s;
    for (const auto& [key, _] : j.items()) field_check(known.count(key) > 0, "solver." + key, "unknown field");
    s.penalty = j.value("penalty", s.penalty);
    s.abs_tol = j.value("abs_tol", s.abs_tol);
    s.rel_tol = j.value("rel_tol", s.rel_tol);
    s.max_iter = j.value("max_iter", s.max_iter);
    s.adapt_penalty = j.value("adapt_penalty", s.adapt_penalty);
    s.adapt_iterations = j.value("adapt_iterations", s.adapt_iterations);
    s.polish = j.value("polish", s.polish);
    return s;
}

std::vector<ObserverSpec> default_observers() {
    std::vector<ObserverSpec> out(3);
    out[0].kind = ObserverKind::Luenberger;
    out[0].name = "LO";
    out[1].kind = ObserverKind::L1;
    out[1].name = "L1O";
    out[2].kind = ObserverKind::MultiModel;
    out[2].name = "MMO";
    return out;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::scientific << std::setprecision(12) << v;
    return os.str();
}

}  // namespace

ObserverKind observer_kind_from_string(const std::string& name) {
    if (name == "luenberger") return ObserverKind::Luenberger;
    if (name == "l1") return ObserverKind::L1;
    if (name == "multi_model") return ObserverKind::MultiModel;
    detail::raise(ErrorCode::Config, "config field 'observers.kind': unknown observer '" + name + "'");
}

const char* to_string(ObserverKind kind) {
    switch (kind) {
        case ObserverKind::Luenberger: return "luenberger";
        case ObserverKind::L1: return "l1";
        case ObserverKind::MultiModel: return "multi_model";
    }
    return "unknown";
}

void ScenarioConfig::validate(int states) const {
    field_check(!name.empty(), "name", "must not be empty");
    field_check(!grid_case.empty(), "grid_case", "must name a case file");
    field_check(dt > 0.0 && std::isfinite(dt), "dt", "must be positive");
    field_check(horizon >= 1, "horizon", "must be >= 1");
    if (states > 0) field_check(horizon >= states, "horizon", "must be >= the state dimension " + std::to_string(states));
    field_check(tau > 0.0 && tau < 1.0, "tau", "must lie in (0, 1)");
    field_check(noise_std >= 0.0, "noise_std", "must be non-negative");
    field_check(demand_fluctuation >= 0.0 && demand_fluctuation < 1.0, "demand_fluctuation", "must lie in [0, 1)");
    field_check(bdd_threshold > 0.0, "bdd_threshold", "must be positive");
    field_check(kp >= 0.0, "controller.kp", "must be non-negative");
    field_check(ki > 0.0, "controller.ki", "must be positive (the integrator holds the dispatch)");
    field_check(integral_limit > 0.0, "controller.integral_limit", "must be positive");
    field_check(prior.sigma_fraction > 0.0, "prior.sigma_fraction", "must be positive");
    field_check(prior.range_floor > 0.0, "prior.range_floor", "must be positive");
    field_check(prior.offset_fraction >= 0.0 && prior.offset_fraction <= 1.0, "prior.offset_fraction",
                "must lie in [0, 1]");
    if (attack.enabled) {
        field_check(attack.channels == "p_net" || attack.channels == "all", "attack.channels",
                    "must be 'p_net' or 'all'");
        field_check(attack.fraction > 0.0 && attack.fraction <= 1.0, "attack.fraction", "must lie in (0, 1]");
        field_check(attack.onset >= 0, "attack.onset", "must be non-negative");
        field_check(run_length > attack.onset + horizon, "run_length", "must exceed attack.onset + horizon");
        field_check(attack.magnitude_fraction >= 0.0, "attack.magnitude_fraction", "must be non-negative");
        field_check(attack.magnitude_floor >= 0.0, "attack.magnitude_floor", "must be non-negative");
        field_check(attack.ramp_samples >= 1, "attack.ramp_samples", "must be >= 1");
        field_check(attack.random_low >= 0.0 && attack.random_low <= 1.0, "attack.random_low", "must lie in [0, 1]");
        field_check(attack.stealth_threshold > 0.0, "attack.stealth_threshold", "must be positive");
        field_check(attack.leak_weight > 0.0, "attack.leak_weight", "must be positive");
    } else {
        field_check(run_length > horizon, "run_length", "must exceed horizon");
    }
    field_check(!observers.empty(), "observers", "must list at least one observer");
    std::set<std::string> names;
    for (const auto& o : observers) {
        field_check(!o.name.empty(), "observers.name", "must not be empty");
        field_check(names.insert(o.name).second, "observers.name", "duplicate name '" + o.name + "'");
        if (o.kind == ObserverKind::Luenberger) {
            field_check(o.pole_scale > 0.0 && o.pole_scale < 1.0, "observers.pole_scale", "must lie in (0, 1)");
        } else {
            try {
                o.solver.validate();
            } catch (const Error& e) {
                detail::raise(ErrorCode::Config, "config field 'observers.solver': " + std::string(e.what()));
            }
        }
    }
}

ScenarioConfig scenario_from_json(const std::string& text, const std::string& base_dir) {
    static const std::set<std::string> known{
        "name",      "grid_case",   "dt",         "horizon",   "tau",   "run_length",  "seed",
        "noise_std", "demand_fluctuation", "bdd_threshold", "controller", "prior", "attack", "observers",
        "post_onset_only", "output_dir"};
    ScenarioConfig cfg;
    try {
        const json doc = json::parse(text);
        field_check(doc.is_object(), "<root>", "must be a JSON object");
        for (const auto& [key, _] : doc.items()) field_check(known.count(key) > 0, key, "unknown field");
        cfg.name = doc.value("name", cfg.name);
        field_check(doc.contains("grid_case"), "grid_case", "is required");
        std::filesystem::path grid = doc.at("grid_case").get<std::string>();
        if (grid.is_relative()) grid = std::filesystem::path(base_dir) / grid;
        cfg.grid_case = grid.lexically_normal().string();
        cfg.dt = doc.value("dt", cfg.dt);
        cfg.horizon = doc.value("horizon", cfg.horizon);
        cfg.tau = doc.value("tau", cfg.tau);
        cfg.run_length = doc.value("run_length", cfg.run_length);
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.noise_std = doc.value("noise_std", cfg.noise_std);
        cfg.demand_fluctuation = doc.value("demand_fluctuation", cfg.demand_fluctuation);
        cfg.bdd_threshold = doc.value("bdd_threshold", cfg.bdd_threshold);
        cfg.post_onset_only = doc.value("post_onset_only", cfg.post_onset_only);
        cfg.output_dir = doc.value("output_dir", cfg.output_dir);
        if (doc.contains("controller")) {
            const auto& c = doc.at("controller");
            cfg.kp = c.value("kp", cfg.kp);
            cfg.ki = c.value("ki", cfg.ki);
            cfg.integral_limit = c.value("integral_limit", cfg.integral_limit);
        }
        if (doc.contains("prior")) {
            const auto& p = doc.at("prior");
            cfg.prior.sigma_fraction = p.value("sigma_fraction", cfg.prior.sigma_fraction);
            cfg.prior.range_floor = p.value("range_floor", cfg.prior.range_floor);
            cfg.prior.offset_fraction = p.value("offset_fraction", cfg.prior.offset_fraction);
        }
        if (doc.contains("attack")) {
            const auto& a = doc.at("attack");
            auto& s = cfg.attack;
            s.enabled = a.value("enabled", s.enabled);
            s.channels = a.value("channels", s.channels);
            s.fraction = a.value("fraction", s.fraction);
            s.support = a.value("support", s.support);
            s.onset = a.value("onset", s.onset);
            if (a.contains("law")) s.law = attack::law_from_string(a.at("law").get<std::string>());
            s.magnitude_fraction = a.value("magnitude_fraction", s.magnitude_fraction);
            s.magnitude_floor = a.value("magnitude_floor", s.magnitude_floor);
            s.ramp_samples = a.value("ramp_samples", s.ramp_samples);
            s.random_low = a.value("random_low", s.random_low);
            s.stealth = a.value("stealth", s.stealth);
            s.stealth_threshold = a.value("stealth_threshold", s.stealth_threshold);
            s.leak_weight = a.value("leak_weight", s.leak_weight);
        }
        if (doc.contains("observers")) {
            for (const auto& o : doc.at("observers")) {
                ObserverSpec spec;
                spec.kind = observer_kind_from_string(o.at("kind").get<std::string>());
                spec.name = o.value("name", std::string(to_string(spec.kind)));
                spec.pole_scale = o.value("pole_scale", spec.pole_scale);
                if (o.contains("solver")) spec.solver = solver_from_json(o.at("solver"));
                cfg.observers.push_back(spec);
            }
        } else {
            cfg.observers = default_observers();
        }
    } catch (const json::exception& e) {
        detail::raise(ErrorCode::Config, std::string("scenario document: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void apply_env_overrides(ScenarioConfig& cfg) {
    const char* raw = std::getenv("RESOBS_SEED");
    if (raw == nullptr || *raw == '\0') return;
    const std::string text(raw);
    std::size_t used = 0;
    unsigned long long value = 0;
    try {
        value = std::stoull(text, &used, 10);
    } catch (const std::exception&) {
        used = 0;
    }
    field_check(used == text.size() && text.front() != '-', "RESOBS_SEED", "must be a non-negative integer");
    cfg.seed = value;
}

ScenarioConfig load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open scenario '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    auto cfg = scenario_from_json(buf.str(), std::filesystem::path(path).parent_path().string());
    apply_env_overrides(cfg);
    return cfg;
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
    json obs = json::array();
    for (const auto& o : cfg.observers) {
        json j{{"kind", to_string(o.kind)}, {"name", o.name}};
        if (o.kind == ObserverKind::Luenberger) {
            j["pole_scale"] = o.pole_scale;
        } else {
            j["solver"] = solver_to_json(o.solver);
        }
        obs.push_back(j);
    }
    const auto& a = cfg.attack;
    json doc{{"name", cfg.name},
             {"grid_case", cfg.grid_case},
             {"dt", cfg.dt},
             {"horizon", cfg.horizon},
             {"tau", cfg.tau},
             {"run_length", cfg.run_length},
             {"seed", cfg.seed},
             {"noise_std", cfg.noise_std},
             {"demand_fluctuation", cfg.demand_fluctuation},
             {"bdd_threshold", cfg.bdd_threshold},
             {"controller", {{"kp", cfg.kp}, {"ki", cfg.ki}, {"integral_limit", cfg.integral_limit}}},
             {"prior",
              {{"sigma_fraction", cfg.prior.sigma_fraction},
               {"range_floor", cfg.prior.range_floor},
               {"offset_fraction", cfg.prior.offset_fraction}}},
             {"attack",
              {{"enabled", a.enabled},
               {"channels", a.channels},
               {"fraction", a.fraction},
               {"support", a.support},
               {"onset", a.onset},
               {"law", attack::to_string(a.law)},
               {"magnitude_fraction", a.magnitude_fraction},
               {"magnitude_floor", a.magnitude_floor},
               {"ramp_samples", a.ramp_samples},
               {"random_low", a.random_low},
               {"stealth", a.stealth},
               {"stealth_threshold", a.stealth_threshold},
               {"leak_weight", a.leak_weight}}},
             {"observers", obs},
             {"post_onset_only", cfg.post_onset_only},
             {"output_dir", cfg.output_dir}};
    return doc.dump(2);
}

std::size_t MetricsTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    detail::raise(ErrorCode::ContractViolation, "no observer named '" + name + "' in metrics table");
}

MetricsTable compute_metrics(const EstimateTrace& trace, int begin, int end, std::vector<int> states) {
    const int total = static_cast<int>(trace.samples.size());
    if (!(begin >= 0 && begin < end && end <= total)) {
        detail::raise(ErrorCode::Domain, "metrics window [" + std::to_string(begin) + ", " + std::to_string(end) +
                                             ") is empty or outside the trace");
    }
    const int n = static_cast<int>(trace.state_names.size());
    if (states.empty()) {
        for (int i = 0; i < n / 2; ++i) states.push_back(i);
    }
    MetricsTable table;
    table.begin = begin;
    table.end = end;
    table.columns = trace.observer_names;
    for (int idx : states) {
        require(idx >= 0 && idx < n, ErrorCode::ContractViolation, "state index out of range");
        table.rows.push_back(trace.state_names[static_cast<std::size_t>(idx)]);
        std::vector<MetricEntry> row(trace.observer_names.size());
        for (std::size_t o = 0; o < row.size(); ++o) {
            double sum_sq = 0.0;
            double sum = 0.0;
            auto& entry = row[o];
            for (int k = begin; k < end; ++k) {
                const auto& s = trace.samples[static_cast<std::size_t>(k)];
                const auto& est = s.observers.at(o).estimate;
                if (!est) {
                    ++entry.missing;
                    continue;
                }
                const double err = (*est)(idx) - s.x_true(idx);
                sum_sq += err * err;
                sum += err;
                entry.max_abs = std::max(entry.max_abs, std::abs(err));
                ++entry.count;
            }
            if (entry.count > 0) {
                entry.rms = std::sqrt(sum_sq / entry.count);
                entry.mean = sum / entry.count;
            } else {
                entry.rms = entry.max_abs = entry.mean = std::nan("");
            }
        }
        table.entries.push_back(std::move(row));
    }
    return table;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    cfg.validate();
    const auto grid = grid::load_grid_case(cfg.grid_case);
    const auto csys = grid::build_reduced_model(grid);
    const auto sys = model::discretize(csys, cfg.dt);
    cfg.validate(sys.states());
    const auto ops = std::make_shared<const model::HorizonOperators>(model::build_horizon_operators(sys, cfg.horizon));

    const int ng = grid.n_gen;
    const int m = sys.outputs();
    Vector u_nom(sys.inputs());
    u_nom << grid.dispatch, grid.nominal_demand;
    const Vector x0 = grid::equilibrium_state(csys, u_nom);
    const Vector y_nom = sys.C * x0 + sys.D * u_nom;

    auto controller = grid::PiController::uniform(ng, cfg.kp, cfg.ki, cfg.integral_limit);
    controller.integral_state = grid.dispatch / cfg.ki;
    field_check(controller.integral_state.cwiseAbs().maxCoeff() <= cfg.integral_limit, "controller.integral_limit",
                "too small to hold the nominal dispatch");

    ScenarioResult result;
    const Matrix demand = grid::demand_profile(grid, cfg.run_length, cfg.demand_fluctuation, cfg.seed + 1);

    std::optional<attack::AttackPlan> plan;
    if (cfg.attack.enabled) {
        const auto& a = cfg.attack;
        attack::AttackPlan p;
        if (!a.support.empty()) {
            p.support = a.support;
            std::sort(p.support.begin(), p.support.end());
        } else {
            std::vector<int> pool;
            for (int j = a.channels == "p_net" ? ng : 0; j < m; ++j) pool.push_back(j);
            const int count = std::min(static_cast<int>(pool.size()),
                                       static_cast<int>(std::ceil(a.fraction * m - 1e-9)));
            p.support = attack::choose_support(pool, count, cfg.seed + 2);
        }
        p.onset = a.onset;
        p.law = a.law;
        p.ramp_samples = a.ramp_samples;
        p.random_low = a.random_low;
        p.stealth = a.stealth;
        p.stealth_threshold = a.stealth_threshold;
        p.leak_weight = a.leak_weight;
        p.magnitude.resize(static_cast<Eigen::Index>(p.support.size()));
        for (std::size_t i = 0; i < p.support.size(); ++i) {
            p.magnitude(static_cast<Eigen::Index>(i)) =
                a.magnitude_fraction * std::max(std::abs(y_nom(p.support[i])), a.magnitude_floor);
        }
        p.validate(m);
        result.attack_support = p.support;
        plan = std::move(p);
    }

    prior::PriorConfig pcfg;
    pcfg.sigma_scale = cfg.prior.sigma_fraction * y_nom.cwiseAbs().cwiseMax(cfg.prior.range_floor);
    pcfg.offset_fraction = cfg.prior.offset_fraction;
    pcfg.seed = cfg.seed + 3;
    auto prior_rng = std::make_shared<std::mt19937_64>(pcfg.seed);
    double max_mahalanobis = 0.0;
    double radius = 0.0;
    grid::PriorProvider provider = [&, prior_rng](int, const Vector& y_clean) {
        auto p = prior::synth_prior(y_clean, pcfg, cfg.tau, *prior_rng);
        max_mahalanobis = std::max(max_mahalanobis, prior::mahalanobis_sq(y_clean, p));
        radius = p.radius();
        return p;
    };

    std::vector<std::unique_ptr<observer::StateObserver>> observers;
    for (const auto& spec : cfg.observers) {
        switch (spec.kind) {
            case ObserverKind::Luenberger:
                observers.push_back(std::make_unique<observer::LuenbergerObserver>(
                    sys, observer::design_luenberger_gain(sys, spec.pole_scale), x0, spec.name));
                break;
            case ObserverKind::L1:
                observers.push_back(
                    std::make_unique<observer::MovingHorizonObserver>(sys, ops, spec.solver, false, spec.name));
                break;
            case ObserverKind::MultiModel:
                observers.push_back(
                    std::make_unique<observer::MovingHorizonObserver>(sys, ops, spec.solver, true, spec.name));
                break;
        }
    }

    grid::SimulationSetup setup;
    setup.grid = &grid;
    setup.sys = &sys;
    setup.controller = controller;
    setup.demand = demand;
    setup.horizon_samples = cfg.run_length;
    setup.attack = plan;
    for (auto& o : observers) setup.observers.push_back(o.get());
    setup.prior_provider = provider;
    setup.x0 = x0;
    setup.noise_std = cfg.noise_std;
    setup.bdd_threshold = cfg.bdd_threshold;
    setup.seed = cfg.seed;
    setup.warmup = cfg.horizon - 1;

    result.trace = grid::simulate_closed_loop(std::move(setup));
    result.max_prior_mahalanobis = max_mahalanobis;
    result.prior_radius = radius;

    const int warmup = result.trace.warmup;
    int begin = warmup;
    if (cfg.post_onset_only && plan) begin = std::max(begin, plan->onset);
    result.metrics = compute_metrics(result.trace, begin, cfg.run_length);
    if (plan && plan->onset > warmup) result.pre_attack = compute_metrics(result.trace, warmup, plan->onset);

    result.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!cfg.output_dir.empty()) write_outputs(result, cfg, cfg.output_dir);
    return result;
}

void write_trace_csv(const EstimateTrace& trace, std::ostream& out) {
    const auto n = trace.state_names.size();
    const std::size_t ng = n / 2;
    out << "sample";
    for (std::size_t i = 0; i < ng; ++i) out << ",true_" << trace.state_names[i];
    for (const auto& name : trace.observer_names) {
        for (std::size_t i = 0; i < ng; ++i) out << ',' << name << '_' << trace.state_names[i];
    }
    out << ",residue,alarm,attack_active,attack_norm\n";
    for (const auto& s : trace.samples) {
        out << s.k;
        for (std::size_t i = 0; i < ng; ++i) out << ',' << format_number(s.x_true(static_cast<Eigen::Index>(i)));
        for (const auto& o : s.observers) {
            for (std::size_t i = 0; i < ng; ++i) {
                out << ',';
                if (o.estimate) out << format_number((*o.estimate)(static_cast<Eigen::Index>(i)));
            }
        }
        const double attack_norm = s.attack.norm();
        out << ',' << format_number(s.residue) << ',' << (s.alarm ? 1 : 0) << ',' << (attack_norm > 0.0 ? 1 : 0)
            << ',' << format_number(attack_norm) << '\n';
    }
}

void write_metrics_csv(const MetricsTable& table, std::ostream& out) {
    out << "state,observer,rms,max_abs,mean,count,missing\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            const auto& e = table.at(r, c);
            out << table.rows[r] << ',' << table.columns[c] << ',' << format_number(e.rms) << ','
                << format_number(e.max_abs) << ',' << format_number(e.mean) << ',' << e.count << ',' << e.missing
                << '\n';
        }
    }
}

void write_outputs(const ScenarioResult& result, const ScenarioConfig& cfg, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorCode::Io, "cannot create output directory '" + dir + "': " + ec.message());
    const std::filesystem::path base(dir);
    auto open = [&](const char* file) {
        std::ofstream f(base / file, std::ios::binary);
        require(f.good(), ErrorCode::Io, "cannot write '" + (base / file).string() + "'");
        return f;
    };
    {
        auto f = open("trace.csv");
        write_trace_csv(result.trace, f);
    }
    {
        auto f = open("metrics.csv");
        write_metrics_csv(result.metrics, f);
    }
    if (result.pre_attack) {
        auto f = open("metrics_pre_attack.csv");
        write_metrics_csv(*result.pre_attack, f);
    }
    json manifest{{"tool", "resobs"},
                  {"version", kVersion},
                  {"seed", cfg.seed},
                  {"config", json::parse(scenario_to_json(cfg))},
                  {"modules",
                   {{"model", kVersion},
                    {"csdecode", kVersion},
                    {"prior", kVersion},
                    {"observer", kVersion},
                    {"powergrid", kVersion},
                    {"attack", kVersion},
                    {"harness", kVersion}}},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"attack_support", result.attack_support},
                  {"prior_radius", result.prior_radius},
                  {"max_prior_mahalanobis", result.max_prior_mahalanobis},
                  {"metrics_window", {result.metrics.begin, result.metrics.end}},
                  {"runtime_seconds", result.runtime_seconds}};
    auto f = open("manifest.json");
    f << manifest.dump(2) << '\n';
}

}  // namespace resobs::harness
