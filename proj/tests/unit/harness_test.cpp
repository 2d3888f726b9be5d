#include "resobs/error.hpp"
#include "resobs/harness.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace resobs;
using resobs::testing::source_path;

namespace {

EstimateTrace two_state_trace(const std::vector<double>& errors) {
    EstimateTrace t;
    t.observer_names = {"A"};
    t.state_names = {"delta1", "omega1"};
    for (std::size_t k = 0; k < errors.size(); ++k) {
        TraceSample s;
        s.k = static_cast<int>(k);
        s.x_true = Vector::Constant(2, 1.0);
        Vector est = s.x_true;
        est(0) += errors[k];
        s.observers.push_back({est, false, 0});
        t.samples.push_back(s);
    }
    return t;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

harness::ScenarioConfig short_config() {
    auto cfg = harness::load_scenario_config(source_path("configs/ieee14_attack.json"));
    cfg.horizon = 20;
    cfg.run_length = 160;
    cfg.attack.onset = 80;
    return cfg;
}

}  // namespace

TEST(Metrics, HandArithmetic) {
    const auto m = harness::compute_metrics(two_state_trace({3.0, 4.0}), 0, 2);
    ASSERT_EQ(m.rows.size(), 1U);
    EXPECT_NEAR(m.at(0, 0).rms, std::sqrt(12.5), 1e-12);
    EXPECT_NEAR(m.at(0, 0).rms, 3.5355, 1e-4);
    EXPECT_DOUBLE_EQ(m.at(0, 0).max_abs, 4.0);
    EXPECT_EQ(m.at(0, 0).count, 2);
}

TEST(Metrics, ExactAndConstantSignals) {
    auto zero = harness::compute_metrics(two_state_trace({0, 0, 0}), 0, 3);
    EXPECT_EQ(zero.at(0, 0).rms, 0.0);
    EXPECT_EQ(zero.at(0, 0).max_abs, 0.0);
    auto c = harness::compute_metrics(two_state_trace({-0.7, -0.7, -0.7, -0.7}), 0, 4);
    EXPECT_NEAR(c.at(0, 0).rms, 0.7, 1e-15);
    EXPECT_NEAR(c.at(0, 0).max_abs, 0.7, 1e-15);
    EXPECT_NEAR(c.at(0, 0).mean, -0.7, 1e-15);
}

TEST(Metrics, Identities) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.3, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> e(20);
        for (auto& v : e) v = g(rng);
        const auto m = harness::compute_metrics(two_state_trace(e), 0, 20).at(0, 0);
        EXPECT_LE(m.rms, m.max_abs + 1e-15);
        EXPECT_GE(m.rms, std::abs(m.mean) - 1e-15);
    }
}

TEST(Metrics, EmptyWindowAndMissingEstimates) {
    auto t = two_state_trace({1, 2, 3});
    try {
        (void)harness::compute_metrics(t, 2, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Domain);
    }
    t.samples[1].observers[0].estimate.reset();
    const auto m = harness::compute_metrics(t, 0, 3).at(0, 0);
    EXPECT_EQ(m.missing, 1);
    EXPECT_EQ(m.count, 2);
    EXPECT_NEAR(m.rms, std::sqrt(5.0), 1e-12);
}

TEST(Config, BundledScenarioLoads) {
    const auto cfg = harness::load_scenario_config(source_path("configs/ieee14_attack.json"));
    EXPECT_EQ(cfg.observers.size(), 3U);
    EXPECT_EQ(cfg.attack.onset, 200);
    EXPECT_DOUBLE_EQ(cfg.attack.fraction, 0.3);
    EXPECT_TRUE(std::filesystem::exists(cfg.grid_case));
    EXPECT_NO_THROW(cfg.validate(10));
}

TEST(Config, RoundTripThroughJson) {
    const auto cfg = harness::load_scenario_config(source_path("configs/ieee14_attack.json"));
    const auto again = harness::scenario_from_json(harness::scenario_to_json(cfg), "/");
    EXPECT_EQ(harness::scenario_to_json(again), harness::scenario_to_json(cfg));
}

TEST(Config, FieldLevelErrors) {
    auto cfg = harness::load_scenario_config(source_path("configs/ieee14_attack.json"));
    cfg.tau = 1.0;
    try {
        cfg.validate(10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
        EXPECT_NE(std::string(e.what()).find("tau"), std::string::npos);
    }
    cfg = harness::load_scenario_config(source_path("configs/ieee14_attack.json"));
    cfg.horizon = 5;
    EXPECT_THROW(cfg.validate(10), Error);
    cfg = harness::load_scenario_config(source_path("configs/ieee14_attack.json"));
    cfg.run_length = 250;
    try {
        cfg.validate(10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("run_length"), std::string::npos);
    }
}

TEST(Config, UnknownKeyRejected) {
    try {
        (void)harness::scenario_from_json(R"({"grid_case": "x.json", "horizn": 10})");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
        EXPECT_NE(std::string(e.what()).find("horizn"), std::string::npos);
    }
}

TEST(Config, SeedOverrideFromEnvironment) {
    auto cfg = harness::load_scenario_config(source_path("configs/ieee14_attack.json"));
    ::setenv("RESOBS_SEED", "1234", 1);
    harness::apply_env_overrides(cfg);
    EXPECT_EQ(cfg.seed, 1234U);
    ::setenv("RESOBS_SEED", "12x", 1);
    EXPECT_THROW(harness::apply_env_overrides(cfg), Error);
    ::unsetenv("RESOBS_SEED");
}

TEST(Scenario, NoAttackObserversAgree) {
    auto cfg = harness::load_scenario_config(source_path("configs/ieee14_no_attack.json"));
    cfg.run_length = 300;
    const auto res = harness::run_scenario(cfg);
    for (std::size_t r = 0; r < res.metrics.rows.size(); ++r) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (std::size_t c = 0; c < res.metrics.columns.size(); ++c) {
            const double rms = res.metrics.at(r, c).rms;
            EXPECT_LE(rms, 1e-3);
            lo = std::min(lo, rms);
            hi = std::max(hi, rms);
        }
        EXPECT_LE(hi, 10.0 * lo) << res.metrics.rows[r];
    }
    for (const auto& s : res.trace.samples) EXPECT_FALSE(s.alarm);
}

TEST(Scenario, ZeroMagnitudeAttackMatchesNoAttack) {
    auto cfg = short_config();
    cfg.attack.magnitude_fraction = 0.0;
    cfg.attack.magnitude_floor = 0.0;
    auto plain = cfg;
    plain.attack.enabled = false;
    std::ostringstream ta;
    std::ostringstream tb;
    harness::write_trace_csv(harness::run_scenario(cfg).trace, ta);
    harness::write_trace_csv(harness::run_scenario(plain).trace, tb);
    EXPECT_EQ(ta.str(), tb.str());
}

TEST(Scenario, SeedChangeKeepsStealth) {
    for (std::uint64_t seed : {3U, 11U}) {
        auto cfg = short_config();
        cfg.seed = seed;
        const auto res = harness::run_scenario(cfg);
        for (const auto& s : res.trace.samples) {
            EXPECT_FALSE(s.alarm);
            EXPECT_LE(s.residue, 0.9 * cfg.attack.stealth_threshold + 1e-12);
        }
        EXPECT_LE(res.max_prior_mahalanobis, res.prior_radius);
    }
    auto a = short_config();
    auto b = short_config();
    b.seed = a.seed + 1;
    EXPECT_NE(harness::run_scenario(a).metrics.at(0, 0).rms, harness::run_scenario(b).metrics.at(0, 0).rms);
}

TEST(Scenario, OutputsAreReproducible) {
    const auto dir = std::filesystem::temp_directory_path() / "resobs_harness_test";
    std::filesystem::remove_all(dir);
    auto cfg = short_config();
    cfg.output_dir = (dir / "a").string();
    (void)harness::run_scenario(cfg);
    cfg.output_dir = (dir / "b").string();
    (void)harness::run_scenario(cfg);
    for (const char* f : {"trace.csv", "metrics.csv", "metrics_pre_attack.csv"}) {
        EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
    }
    const auto manifest = nlohmann::json::parse(read_file(dir / "a" / "manifest.json"));
    EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), cfg.seed);
    EXPECT_TRUE(manifest.contains("config"));
    EXPECT_TRUE(manifest.at("modules").contains("observer"));
    EXPECT_EQ(manifest.at("version").get<std::string>(), harness::kVersion);
    const auto header = read_file(dir / "a" / "trace.csv").substr(0, 40);
    EXPECT_EQ(header.rfind("sample,true_delta1,true_delta2", 0), 0U);
    std::filesystem::remove_all(dir);
}
