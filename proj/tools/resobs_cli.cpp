#include "resobs/csdecode.hpp"
#include "resobs/error.hpp"
#include "resobs/harness.hpp"
#include "resobs/model.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace resobs;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitSolver = 2;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InfeasiblePrior:
        case ErrorCode::Reduction:
        case ErrorCode::InvalidGain:
        case ErrorCode::OracleTooLarge:
        case ErrorCode::BoundInapplicable:
            return kExitSolver;
        default:
            return kExitValidation;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) detail::raise(ErrorCode::Io, "cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Numeric CSV; a first line that does not parse as numbers is treated as a header.
Matrix read_csv_matrix(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                const auto rest = cell.find_first_not_of(" \t", used);
                if (rest != std::string::npos) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            detail::raise(ErrorCode::Config, "non-numeric cell in '" + path + "'");
        }
        first = false;
        if (!rows.empty() && row.size() != rows.front().size()) {
            detail::raise(ErrorCode::Config, "ragged rows in '" + path + "'");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) detail::raise(ErrorCode::Config, "'" + path + "' holds no data");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

Matrix json_matrix(const nlohmann::json& j, const char* field) {
    const auto rows = j.at(field).get<std::vector<std::vector<double>>>();
    if (rows.empty()) return {};
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) detail::raise(ErrorCode::Config, std::string("ragged matrix ") + field);
        for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    return m;
}

// {"A": [[..]], "B": .., "C": .., "D": .. (optional), "continuous": false, "dt": 0.01}
model::DiscreteLinearSystem load_system(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
        model::ContinuousLinearSystem c;
        c.A = json_matrix(doc, "A");
        c.B = json_matrix(doc, "B");
        c.C = json_matrix(doc, "C");
        c.D = doc.contains("D") ? json_matrix(doc, "D") : Matrix::Zero(c.C.rows(), c.B.cols());
        const double dt = doc.value("dt", 0.01);
        if (doc.value("continuous", false)) {
            c.validate();
            return model::discretize(c, dt);
        }
        model::DiscreteLinearSystem d{c.A, c.B, c.C, c.D, dt};
        d.validate();
        return d;
    } catch (const nlohmann::json::exception& e) {
        detail::raise(ErrorCode::Config, "system file: " + std::string(e.what()));
    }
}

std::string vec_json(const Vector& v) {
    nlohmann::json j = std::vector<double>(v.data(), v.data() + v.size());
    return j.dump();
}

void print_metrics(const harness::MetricsTable& t, std::ostream& out) {
    out << std::left << std::setw(10) << "state";
    for (const auto& c : t.columns) out << std::setw(28) << (c + " rms / max");
    out << '\n';
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out << std::setw(10) << t.rows[r];
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            std::ostringstream cell;
            cell << std::scientific << std::setprecision(3) << t.at(r, c).rms << " / " << t.at(r, c).max_abs;
            out << std::setw(28) << cell.str();
        }
        out << '\n';
    }
}

int cmd_simulate(const std::string& config, const std::string& out_dir) {
    auto cfg = harness::load_scenario_config(config);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    const auto result = harness::run_scenario(cfg);
    std::cout << "scenario " << cfg.name << " seed " << cfg.seed << " (" << std::fixed << std::setprecision(1)
              << result.runtime_seconds << " s)\n";
    std::cout.unsetf(std::ios::floatfield);
    int alarms = 0;
    for (const auto& s : result.trace.samples) alarms += s.alarm ? 1 : 0;
    std::cout << "bdd alarms: " << alarms << '\n';
    for (std::size_t o = 0; o < result.trace.observer_names.size(); ++o) {
        long iterations = 0;
        int failures = 0;
        for (const auto& s : result.trace.samples) {
            iterations += s.observers[o].iterations;
            failures += s.observers[o].failed ? 1 : 0;
        }
        std::cout << result.trace.observer_names[o] << ": " << iterations << " solver iterations, " << failures
                  << " failed samples\n";
    }
    print_metrics(result.metrics, std::cout);
    if (!cfg.output_dir.empty()) std::cout << "wrote " << cfg.output_dir << '\n';
    return 0;
}

int cmd_decode(const std::string& system, const std::string& measurements, const std::string& method, int sparsity) {
    const auto sys = load_system(system);
    const Matrix data = read_csv_matrix(measurements);
    const int m = sys.outputs();
    const int l = sys.inputs();
    if (data.cols() != m && data.cols() != m + l) {
        detail::raise(ErrorCode::Config, "measurement rows must hold m outputs optionally followed by l inputs");
    }
    const int T = static_cast<int>(data.rows());
    const auto ops = model::build_horizon_operators(sys, T, model::AnnihilatorPolicy::Optional);
    Vector y(m * T);
    Vector u = Vector::Zero(l * T);
    for (int k = 0; k < T; ++k) {
        y.segment(m * k, m) = data.row(k).head(m).transpose();
        if (data.cols() == m + l) u.segment(l * k, l) = data.row(k).tail(l).transpose();
    }
    DecodeResult r;
    if (method == "l0") {
        r = cs::l0_decode_bruteforce(y, ops, u, sparsity, cs::SupportMode::TimeVarying);
    } else {
        r = cs::l1_decode(y, ops, u, SolverSettings{});
    }
    const Vector x_now = model::propagate_estimate(r.x_hat, u.head(l * (T - 1)), ops, sys);
    nlohmann::json out{{"method", method},
                       {"window", T},
                       {"x_first", nlohmann::json::parse(vec_json(r.x_hat))},
                       {"x_current", nlohmann::json::parse(vec_json(x_now))},
                       {"objective", r.objective},
                       {"converged", r.converged},
                       {"iterations", r.iterations},
                       {"support", r.support},
                       {"non_unique", r.non_unique}};
    std::cout << out.dump(2) << '\n';
    return r.converged ? 0 : kExitSolver;
}

int cmd_rip(const std::string& matrix, int sparsity) {
    const Matrix f = read_csv_matrix(matrix);
    const double delta = cs::rip_constant_bruteforce(f, sparsity);
    std::cout << std::setprecision(12) << "delta_" << sparsity << " = " << delta << '\n';
    std::cout << "below 1/sqrt(2): " << (delta < 1.0 / std::sqrt(2.0) ? "yes" : "no") << '\n';
    return 0;
}

int cmd_bench(const std::string& dir, int jobs, const std::string& out_root) {
    std::vector<fs::path> configs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") configs.push_back(entry.path());
    }
    std::sort(configs.begin(), configs.end());
    if (configs.empty()) detail::raise(ErrorCode::Config, "no scenario files in '" + dir + "'");
    jobs = std::max(1, std::min(jobs, static_cast<int>(configs.size())));

    std::atomic<std::size_t> next{0};
    std::mutex io;
    std::vector<int> codes(configs.size(), 0);
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            std::string line;
            try {
                auto cfg = harness::load_scenario_config(configs[i].string());
                cfg.output_dir = (fs::path(out_root) / configs[i].stem()).string();
                const auto r = harness::run_scenario(cfg);
                std::ostringstream os;
                os << configs[i].filename().string() << ": ok in " << std::fixed << std::setprecision(1)
                   << r.runtime_seconds << " s -> " << cfg.output_dir;
                line = os.str();
            } catch (const Error& e) {
                codes[i] = exit_code_for(e.code());
                line = configs[i].filename().string() + ": " + to_string(e.code()) + ": " + e.what();
            }
            const std::lock_guard<std::mutex> lock(io);
            std::cout << line << std::endl;
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return *std::max_element(codes.begin(), codes.end());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Resilient state observers under sparse false-data injection"};
    app.require_subcommand(1);

    std::string config;
    std::string out_dir;
    auto* simulate = app.add_subcommand("simulate", "Run a closed-loop scenario");
    simulate->add_option("--config", config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", out_dir, "Output directory (overrides the config)");

    std::string system;
    std::string measurements;
    std::string method = "l1";
    int decode_sparsity = 1;
    auto* decode = app.add_subcommand("decode", "Decode one measurement window");
    decode->add_option("--system", system, "System JSON (A, B, C, optional D, dt, continuous)")
        ->required()
        ->check(CLI::ExistingFile);
    decode->add_option("--measurements", measurements, "CSV, one sample per row: y then optional u")
        ->required()
        ->check(CLI::ExistingFile);
    decode->add_option("--method", method, "l1 or l0")->check(CLI::IsMember({"l1", "l0"}));
    decode->add_option("--sparsity", decode_sparsity, "Support budget for l0")->check(CLI::PositiveNumber);

    std::string matrix;
    int sparsity = 1;
    auto* rip = app.add_subcommand("rip", "Brute-force restricted isometry constant");
    rip->add_option("--matrix", matrix, "CSV matrix")->required()->check(CLI::ExistingFile);
    rip->add_option("--sparsity", sparsity, "Sparsity level s")->required()->check(CLI::PositiveNumber);

    std::string configs_dir;
    int jobs = 1;
    std::string bench_out = "bench_out";
    auto* bench = app.add_subcommand("bench", "Run every scenario in a directory");
    bench->add_option("--configs", configs_dir, "Directory of scenario JSON files")
        ->required()
        ->check(CLI::ExistingDirectory);
    bench->add_option("--jobs", jobs, "Parallel workers")->check(CLI::PositiveNumber);
    bench->add_option("--out", bench_out, "Root directory for per-scenario outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*simulate) return cmd_simulate(config, out_dir);
        if (*decode) return cmd_decode(system, measurements, method, decode_sparsity);
        if (*rip) return cmd_rip(matrix, sparsity);
        if (*bench) return cmd_bench(configs_dir, jobs, bench_out);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return 0;
}
