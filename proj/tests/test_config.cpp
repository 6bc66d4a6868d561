#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <aoctl/aoctl.hpp>

using namespace aoctl;

namespace {

std::string with(const std::string& body) { return "{\"schema_version\": 1" + (body.empty() ? "" : ", " + body) + "}"; }

std::string error_of(const std::string& text) {
    try {
        parse_config(text, "run.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Two modes, one stage-2 controlled, short enough for unit tests.
const char* kSmall = R"({
  "schema_version": 1,
  "stage1": {"rate_hz": 500, "latency_frames": 0.5, "n_modes": 2, "noise": {"n_q": 1000, "n_r": 0.3, "kappa": 100}},
  "stage2": {"rate_hz": 1500, "latency_frames": 1, "n_modes": 1, "noise": {"n_q": 500, "n_r": 1, "kappa": 150}},
  "disturbance": {"tilt_rms": 500, "knee_hz": 8, "fir_length": 2048},
  "synth": {"order": 3, "grid_points": 64, "mode_groups": 2},
  "simulation": {"duration_s": 0.5, "seed": 3, "export_modes": [0, 1]},
  "cases": [{"name": "int", "stage1": "integrator:0.4", "stage2": "integrator"},
            {"name": "dd", "stage1": "modal-gain", "stage2": "data-driven"}]
})";

}  // namespace

TEST(Presets, BrightOneBest) {
    const SciencePreset& p = find_preset("bright1best");
    EXPECT_DOUBLE_EQ(p.seeing_arcsec, 0.4);
    EXPECT_DOUBLE_EQ(p.t0_ms, 9.0);
    EXPECT_DOUBLE_EQ(p.g_mag, 5.5);
    EXPECT_DOUBLE_EQ(p.j_mag, 5.2);
    EXPECT_DOUBLE_EQ(p.lambda1_um, 0.69);
    EXPECT_DOUBLE_EQ(p.lambda2_um, 1.04);
    const RunConfig c = parse_config(with("\"preset\": \"bright1best\""));
    EXPECT_DOUBLE_EQ(c.stage1.rate_hz, 1000.0);
    EXPECT_DOUBLE_EQ(c.stage2.rate_hz, 3000.0);
    EXPECT_EQ(c.stage1.n_modes, 1200u);
    EXPECT_EQ(c.stage2.n_modes, 400u);
}

TEST(Presets, RedThreeMedium) {
    const RunConfig c = parse_config(with("\"preset\": \"red3medium\""));
    EXPECT_DOUBLE_EQ(c.stage1.rate_hz, 50.0);
    EXPECT_DOUBLE_EQ(c.stage2.rate_hz, 1250.0);
    EXPECT_EQ(c.stage1.n_modes, 400u);
    EXPECT_EQ(c.stage2.n_modes, 540u);
    EXPECT_DOUBLE_EQ(find_preset("red3medium").t0_ms, 5.5);
    EXPECT_DOUBLE_EQ(find_preset("red3medium").lambda2_um, 1.14);
}

TEST(Presets, RemainingRows) {
    const SciencePreset& w = find_preset("bright1worst");
    EXPECT_EQ(w.n_modes2, 540u);
    EXPECT_DOUBLE_EQ(w.seeing_arcsec, 1.0);
    const SciencePreset& r1 = find_preset("red1fast");
    EXPECT_DOUBLE_EQ(r1.f1_hz, 300.0);
    EXPECT_DOUBLE_EQ(r1.g_mag, 11.9);
    const SciencePreset& r5 = find_preset("red5best");
    EXPECT_DOUBLE_EQ(r5.f1_hz, 10.0);
    EXPECT_DOUBLE_EQ(r5.f2_hz, 300.0);
    EXPECT_DOUBLE_EQ(r5.j_mag, 12.5);
}

TEST(Presets, UnknownNameListsAllFive) {
    const std::string msg = error_of(with("\"preset\": \"red2\""));
    for (const char* n : {"bright1best", "bright1worst", "red1fast", "red3medium", "red5best"})
        EXPECT_NE(msg.find(n), std::string::npos) << msg;
    EXPECT_NE(msg.find("run.json:1"), std::string::npos) << msg;
}

TEST(Presets, SurrogateMapping) {
    const RunConfig c = parse_config(with("\"preset\": \"bright1best\""));
    EXPECT_NEAR(c.disturbance.knee_hz, 0.05 / 9e-3, 1e-12);
    EXPECT_NEAR(c.disturbance.tilt_rms, 2000.0 * std::pow(0.4, 5.0 / 6.0), 1e-9);
    EXPECT_NEAR(c.stage1.noise.n_q, 1e11 * std::pow(10.0, -0.4 * 5.5) / (1000.0 * 1200.0), 1e-9);
    EXPECT_NEAR(c.stage2.latency_s, 0.5 / 3000.0, 1e-15);
    EXPECT_NEAR(parse_config(with("\"preset\": \"red5best\"")).stage1.latency_s, 0.1, 1e-15);
}

TEST(Presets, ExplicitKeysOverridePreset) {
    const RunConfig c = parse_config(with(R"("preset": "bright1best", "stage2": {"n_modes": 3, "noise": {"n_q": 7}})"));
    EXPECT_EQ(c.stage2.n_modes, 3u);
    EXPECT_DOUBLE_EQ(c.stage2.noise.n_q, 7.0);
    EXPECT_DOUBLE_EQ(c.stage2.noise.n_r, 1.0);
    EXPECT_DOUBLE_EQ(c.stage2.rate_hz, 3000.0);
}

TEST(ParseConfig, DefaultsAndCases) {
    const RunConfig c = parse_config(with(""));
    EXPECT_EQ(c.scheme, Scheme::standalone);
    ASSERT_EQ(c.cases.size(), 2u);
    EXPECT_EQ(c.cases[1].stage2.kind, StrategyKind::data_driven);
    EXPECT_DOUBLE_EQ(c.simulation.settle_s, 0.1);
    const RunConfig s = parse_config(kSmall);
    EXPECT_DOUBLE_EQ(s.stage1.latency_s, 1e-3);
    EXPECT_EQ(s.cases[0].stage1.gain, 0.4);
    EXPECT_EQ(s.total_modes(), 2u);
}

TEST(ParseConfig, SettleTime) {
    EXPECT_DOUBLE_EQ(parse_config(with(R"("simulation": {"settle_s": 0})")).simulation.settle_s, 0.0);
    EXPECT_NE(error_of(with(R"("simulation": {"settle_s": -1})")).find("settle_s"), std::string::npos);
}

TEST(ParseConfig, StrategyStrings) {
    EXPECT_EQ(parse_strategy("integrator:0.25").gain, 0.25);
    EXPECT_FALSE(parse_strategy("integrator").gain.has_value());
    EXPECT_EQ(parse_strategy("data-driven:5").order, 5);
    EXPECT_EQ(parse_strategy("modal-gain").kind, StrategyKind::optimized_modal_gain);
    EXPECT_EQ(to_string(parse_strategy("data-driven:3")), "data-driven:3");
    EXPECT_THROW(parse_strategy("pid"), ConfigError);
    EXPECT_THROW(parse_strategy("data-driven:0"), ConfigError);
    EXPECT_THROW(parse_strategy("integrator:x"), ConfigError);
    EXPECT_THROW(parse_strategy("modal-gain:2"), ConfigError);
}

TEST(ParseConfig, RejectsUnknownKeysWithLine) {
    const std::string msg = error_of("{\n  \"schema_version\": 1,\n  \"synth\": {\n    \"mu\": 0.5,\n    \"gamma\": 2\n  }\n}");
    EXPECT_NE(msg.find("run.json:5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("gamma"), std::string::npos) << msg;
}

TEST(ParseConfig, RejectsInvalidValues) {
    EXPECT_NE(error_of("{}").find("schema_version"), std::string::npos);
    EXPECT_NE(error_of("{\"schema_version\": 2}").find("schema_version"), std::string::npos);
    EXPECT_NE(error_of("{\"schema_version\": 1,\n  oops}").find("run.json:2"), std::string::npos);
    EXPECT_FALSE(error_of(with(R"("scheme": "mcao")")).empty());
    EXPECT_FALSE(error_of(with(R"("stage2": {"rate_hz": 2500})")).empty());
    EXPECT_FALSE(error_of(with(R"("synth": {"mu": 1.5})")).empty());
    EXPECT_FALSE(error_of(with(R"("synth": {"order": 0})")).empty());
    EXPECT_FALSE(error_of(with(R"("stage1": {"latency_s": 0.1, "latency_frames": 1})")).empty());
    EXPECT_FALSE(error_of(with(R"("stage1": {"noise": {"kappa": 1}})")).empty());
    EXPECT_FALSE(error_of(with(R"("disturbance": {"vibration": {"peaks": [{"center_hz": 900}]}})")).empty());
    EXPECT_FALSE(error_of(with(R"("cases": [{"name": "a b", "stage1": "integrator", "stage2": "integrator"}])")).empty());
    EXPECT_FALSE(error_of(with(R"("cases": [{"name": "a", "stage1": "integrator", "stage2": "integrator"},
                                            {"name": "a", "stage1": "integrator", "stage2": "integrator"}])")).empty());
    EXPECT_FALSE(error_of(with(R"("cases": [{"name": "a", "stage1": "integrator", "stage2": "lqg"}])")).empty());
}

TEST(ValidateConfig, ShortDurationRejected) {
    RunConfig c = parse_config(with(R"("simulation": {"duration_s": 0.01})"));
    EXPECT_THROW(validate_config(c), ConfigError);
    c.simulation.duration_s = 0.5;
    EXPECT_NO_THROW(validate_config(c));
    c.simulation.export_modes = {5};
    EXPECT_THROW(validate_config(c), ConfigError);
}

TEST(LoadConfig, MissingFileAndSample) {
    EXPECT_THROW(load_config("/nonexistent/run.json"), ConfigError);
    const RunConfig c = load_config(AOCTL_SAMPLES_DIR "/configs/vibration.json");
    EXPECT_EQ(c.disturbance.peaks.size(), 2u);
    EXPECT_EQ(c.cases.back().stage2.order, 5);
}

TEST(ConfigJson, RoundTrip) {
    const RunConfig c = parse_config(kSmall);
    const nlohmann::json j = to_json(c);
    const RunConfig d = parse_config(j.dump());
    EXPECT_EQ(to_json(d), j);
}

TEST(ModeGroups, CoverAllModesOnce) {
    const auto g = make_mode_groups(1200, 1200, 400, 6, {0});
    std::size_t next = 0;
    for (const ModeGroup& m : g) {
        EXPECT_EQ(m.first, next);
        EXPECT_GT(m.last, m.first);
        EXPECT_GE(m.representative, m.first);
        EXPECT_LT(m.representative, m.last);
        next = m.last;
    }
    EXPECT_EQ(next, 1200u);
    EXPECT_EQ(g.front().last, 1u);  // the vibrating mode stands alone
    bool split400 = false;
    for (const ModeGroup& m : g) split400 |= m.first == 400;
    EXPECT_TRUE(split400);
}

TEST(RunExperiment, DeterministicOutputs) {
    RunConfig c = parse_config(kSmall);
    validate_config(c);
    const auto base = std::filesystem::temp_directory_path() / "aoctl_test_config";
    std::filesystem::remove_all(base);
    for (const char* d : {"a", "b"}) write_outputs(run_experiment(c), base / d);
    for (const char* f : {"report.json", "traces/dd/e2.csv", "controllers/dd_stage2.json", "psd/int_mode0_e2.csv"})
        EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
    EXPECT_FALSE(slurp(base / "a" / "traces/int/m1.csv").empty());
    std::filesystem::remove_all(base);
}

TEST(RunExperiment, ReportShape) {
    RunConfig c = parse_config(kSmall);
    c.scheme = Scheme::dcao;
    const RunResult r = run_experiment(c);
    ASSERT_EQ(r.cases.size(), 2u);
    EXPECT_EQ(r.report.at("cases").size(), 2u);
    EXPECT_EQ(r.cases[0].rms_e2.size(), 2u);
    EXPECT_TRUE(r.report.contains("comparison"));
    const std::size_t n = static_cast<std::size_t>(0.5 * 1500);
    EXPECT_EQ(r.cases[0].exported.at(0).e2.size(), n);
    // Mode 1 is stage-1 only; dCAO leaves it at the stage-1 residual.
    EXPECT_EQ(r.cases[0].exported.at(1).e2, r.cases[0].exported.at(1).e1);
}
