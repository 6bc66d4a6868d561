#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cascade.hpp"
#include "disturbance.hpp"
#include "error.hpp"
#include "freqmodel.hpp"

// Run configuration: JSON with a schema_version key, optional science preset
// expansion and explicit overrides. Unknown keys are rejected.
namespace aoctl {

class ConfigError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

struct SciencePreset {
    const char* name;
    double seeing_arcsec;
    double t0_ms;
    double g_mag;
    double j_mag;
    double f1_hz;
    double f2_hz;
    std::size_t n_modes1;
    std::size_t n_modes2;
    double lambda1_um;
    double lambda2_um;
};

inline const std::array<SciencePreset, 5>& science_presets() {
    static const std::array<SciencePreset, 5> presets{{
        {"bright1best", 0.4, 9.0, 5.5, 5.2, 1000.0, 3000.0, 1200, 400, 0.69, 1.04},
        {"bright1worst", 1.0, 2.0, 5.5, 5.2, 1000.0, 3000.0, 1200, 540, 0.69, 1.04},
        {"red1fast", 0.7, 2.0, 11.9, 8.5, 300.0, 3000.0, 400, 540, 0.69, 1.04},
        {"red3medium", 0.7, 5.5, 14.5, 10.1, 50.0, 1250.0, 400, 540, 0.69, 1.14},
        {"red5best", 0.4, 9.0, 16.8, 12.5, 10.0, 300.0, 400, 400, 0.69, 1.14},
    }};
    return presets;
}

inline std::string preset_names() {
    std::string s;
    for (const auto& p : science_presets()) s += (s.empty() ? "" : ", ") + std::string(p.name);
    return s;
}

inline const SciencePreset& find_preset(const std::string& name) {
    for (const auto& p : science_presets())
        if (name == p.name) return p;
    throw ConfigError("unknown preset '" + name + "'; valid presets: " + preset_names());
}

// Surrogate constants bridging preset parameters to disturbance and noise models.
namespace surrogate {
inline constexpr double kKneeTimesT0 = 0.05;          // knee_hz = 0.05 / t0
inline constexpr double kTiltRmsAt1Arcsec = 2000.0;   // nm, scales as seeing^(5/6)
inline constexpr double kModeExponent = -11.0 / 12.0; // amplitude (j+1)^exponent
inline constexpr double kPhotonZeroPoint = 1e11;      // photons/s at magnitude 0, whole pupil
inline constexpr double kReadNoiseStage1 = 0.3;       // electrons RMS
inline constexpr double kReadNoiseStage2 = 1.0;
inline constexpr double kBrightLatencyFrames = 0.5;
inline constexpr double kRedLatencyFrames = 1.0;
}  // namespace surrogate

enum class StrategyKind { reference_integrator, optimized_modal_gain, data_driven };

struct Strategy {
    StrategyKind kind = StrategyKind::reference_integrator;
    std::optional<double> gain;  // reference integrator; scanned when absent
    std::optional<int> order;    // data-driven; synth.order when absent

    friend bool operator==(const Strategy&, const Strategy&) = default;
};

// "integrator", "integrator:0.5", "modal-gain", "data-driven", "data-driven:5"
inline Strategy parse_strategy(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    Strategy s;
    try {
        if (head == "integrator") {
            s.kind = StrategyKind::reference_integrator;
            if (!arg.empty()) s.gain = std::stod(arg);
        } else if (head == "modal-gain") {
            s.kind = StrategyKind::optimized_modal_gain;
            if (!arg.empty()) throw ConfigError("modal-gain takes no argument");
        } else if (head == "data-driven") {
            s.kind = StrategyKind::data_driven;
            if (!arg.empty()) s.order = std::stoi(arg);
        } else {
            throw ConfigError("unknown strategy '" + text + "' (integrator[:gain], modal-gain, data-driven[:order])");
        }
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError("malformed strategy '" + text + "'");
    }
    if (s.gain && !std::isfinite(*s.gain)) throw ConfigError("strategy gain must be finite");
    if (s.order && *s.order < 1) throw ConfigError("strategy order must be >= 1");
    return s;
}

inline std::string to_string(const Strategy& s) {
    std::ostringstream os;
    switch (s.kind) {
        case StrategyKind::reference_integrator:
            os << "integrator";
            if (s.gain) os << ':' << *s.gain;
            break;
        case StrategyKind::optimized_modal_gain: os << "modal-gain"; break;
        case StrategyKind::data_driven:
            os << "data-driven";
            if (s.order) os << ':' << *s.order;
            break;
    }
    return os.str();
}

struct StageSpec {
    double rate_hz = 1000.0;
    double latency_s = 0.0;
    std::size_t n_modes = 1;
    double stroke_limit = std::numeric_limits<double>::infinity();
    NoiseParams noise{};
};

struct DisturbanceSpec {
    double tilt_rms = 1000.0;  // RMS of the mode-0 continuum
    double knee_hz = 10.0;
    double slope = -17.0 / 3.0;
    double mode_exponent = surrogate::kModeExponent;
    std::size_t fir_length = 16384;
    std::vector<VibrationPeak> peaks;
    std::vector<std::size_t> peak_modes{0};
};

struct SynthSpec {
    double mu = 0.5;
    double alpha = 0.0;
    int order = 5;
    std::size_t grid_points = 512;
    std::optional<double> bandwidth_hz;
    std::size_t mode_groups = 6;
    double initial_gain = 0.1;
};

struct SolverSpec {
    double eps = 1e-9;  // barrier duality-gap tolerance
    int max_iter = 20;
    double rel_tol = 1e-4;
};

struct SimSpec {
    double duration_s = 5.0;
    double settle_s = 0.1;  // simulated before the recorded window, not reported
    std::uint64_t seed = 1;
    std::optional<std::size_t> max_modes;
    std::vector<std::size_t> export_modes{0};
};

struct CaseSpec {
    std::string name;
    Strategy stage1;
    Strategy stage2;
};

struct RunConfig {
    int schema_version = 1;
    std::optional<std::string> preset;
    Scheme scheme = Scheme::standalone;
    StageSpec stage1;
    StageSpec stage2;
    DisturbanceSpec disturbance;
    SynthSpec synth;
    SolverSpec solver;
    SimSpec simulation;
    std::vector<CaseSpec> cases;
    std::string output_dir = "out";

    [[nodiscard]] std::size_t total_modes() const {
        const std::size_t n = std::max(stage1.n_modes, stage2.n_modes);
        return simulation.max_modes ? std::min(n, *simulation.max_modes) : n;
    }
};

inline constexpr int kSchemaVersion = 1;

// ============================================================================
// Preset expansion
// ============================================================================
inline void apply_preset(RunConfig& c, const SciencePreset& p) {
    using namespace surrogate;
    const bool bright = std::string(p.name).rfind("bright", 0) == 0;
    const double lat = bright ? kBrightLatencyFrames : kRedLatencyFrames;
    auto stage = [&](double rate, std::size_t modes, double mag, double lambda_um, double n_r) {
        StageSpec s;
        s.rate_hz = rate;
        s.latency_s = lat / rate;
        s.n_modes = modes;
        s.noise.n_q = kPhotonZeroPoint * std::pow(10.0, -0.4 * mag) / (rate * static_cast<double>(modes));
        s.noise.n_r = n_r;
        s.noise.kappa = lambda_um * 1e3 / (2.0 * std::numbers::pi);
        return s;
    };
    c.stage1 = stage(p.f1_hz, p.n_modes1, p.g_mag, p.lambda1_um, kReadNoiseStage1);
    c.stage2 = stage(p.f2_hz, p.n_modes2, p.j_mag, p.lambda2_um, kReadNoiseStage2);
    c.disturbance.tilt_rms = kTiltRmsAt1Arcsec * std::pow(p.seeing_arcsec, 5.0 / 6.0);
    c.disturbance.knee_hz = kKneeTimesT0 / (p.t0_ms * 1e-3);
}

// ============================================================================
// Parsing
// ============================================================================
namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(offset, text.size()); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

// Best-effort line of a key path: successive searches for each quoted key.
inline std::size_t locate_key(const std::string& text, const std::vector<std::string>& path) {
    std::size_t pos = 0;
    for (const auto& key : path) {
        const auto p = text.find('"' + key + '"', pos);
        if (p == std::string::npos) return 0;
        pos = p + 1;
    }
    return line_of_offset(text, pos);
}

class Reader {
public:
    Reader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& msg) const {
        std::string where;
        for (const auto& p : path) where += (where.empty() ? "" : ".") + p;
        const std::size_t line = locate_key(text_, path);
        std::ostringstream os;
        os << source_;
        if (line > 0) os << ":" << line;
        os << ": " << (where.empty() ? "" : where + ": ") << msg;
        throw ConfigError(os.str());
    }

    void allow(const nlohmann::json& obj, const std::vector<std::string>& path, std::set<std::string> keys) const {
        if (!obj.is_object()) fail(path, "expected an object");
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!keys.count(it.key())) {
                auto p = path;
                p.push_back(it.key());
                fail(p, "unknown key '" + it.key() + "'");
            }
    }

    double number(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key,
                  double fallback) const {
        if (!obj.contains(key)) return fallback;
        const auto& v = obj.at(key);
        auto p = path;
        p.push_back(key);
        if (!v.is_number()) fail(p, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(p, "expected a finite number");
        return d;
    }

    std::size_t count(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key,
                      std::size_t fallback) const {
        if (!obj.contains(key)) return fallback;
        const auto& v = obj.at(key);
        auto p = path;
        p.push_back(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) fail(p, "expected a non-negative integer");
        return v.get<std::size_t>();
    }

    std::string string(const nlohmann::json& obj, const std::vector<std::string>& path, const std::string& key,
                       const std::string& fallback) const {
        if (!obj.contains(key)) return fallback;
        auto p = path;
        p.push_back(key);
        if (!obj.at(key).is_string()) fail(p, "expected a string");
        return obj.at(key).get<std::string>();
    }

private:
    const std::string& text_;
    std::string source_;
};

inline void read_stage(const Reader& rd, const nlohmann::json& j, const std::string& name, StageSpec& s) {
    const std::vector<std::string> path{name};
    rd.allow(j, path, {"rate_hz", "latency_s", "latency_frames", "n_modes", "stroke_limit", "noise"});
    s.rate_hz = rd.number(j, path, "rate_hz", s.rate_hz);
    if (!(s.rate_hz > 0.0)) rd.fail({name, "rate_hz"}, "must be > 0");
    if (j.contains("latency_s") && j.contains("latency_frames")) rd.fail(path, "give latency_s or latency_frames, not both");
    s.latency_s = rd.number(j, path, "latency_s", s.latency_s);
    if (j.contains("latency_frames")) s.latency_s = rd.number(j, path, "latency_frames", 0.0) / s.rate_hz;
    if (s.latency_s < 0.0) rd.fail(path, "latency must be >= 0");
    s.n_modes = rd.count(j, path, "n_modes", s.n_modes);
    if (j.contains("stroke_limit") && j.at("stroke_limit").is_null())
        s.stroke_limit = std::numeric_limits<double>::infinity();  // unlimited
    else
        s.stroke_limit = rd.number(j, path, "stroke_limit", s.stroke_limit);
    if (!(s.stroke_limit > 0.0)) rd.fail({name, "stroke_limit"}, "must be > 0");
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        const std::vector<std::string> np{name, "noise"};
        rd.allow(n, np, {"n_q", "n_r", "kappa"});
        s.noise.n_q = rd.number(n, np, "n_q", s.noise.n_q);
        s.noise.n_r = rd.number(n, np, "n_r", s.noise.n_r);
        s.noise.kappa = rd.number(n, np, "kappa", s.noise.kappa);
        if (s.noise.n_q < 0.0 || s.noise.n_r < 0.0 || s.noise.kappa < 0.0) rd.fail(np, "noise parameters must be >= 0");
    }
    if (s.noise.kappa > 0.0 && s.noise.n_q <= 0.0) rd.fail(path, "noise: n_q must be > 0 when kappa > 0");
}

inline Strategy read_strategy(const Reader& rd, const nlohmann::json& v, const std::vector<std::string>& path) {
    if (!v.is_string()) rd.fail(path, "expected a strategy string");
    try {
        return parse_strategy(v.get<std::string>());
    } catch (const ConfigError& e) {
        rd.fail(path, e.what());
    }
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        std::ostringstream os;
        os << source << ":" << detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0) << ": parse error: " << e.what();
        throw ConfigError(os.str());
    }
    const detail::Reader rd(text, source);
    rd.allow(j, {}, {"schema_version", "preset", "scheme", "stage1", "stage2", "disturbance", "synth", "solver",
                     "simulation", "cases", "output_dir"});

    RunConfig c;
    if (!j.contains("schema_version")) rd.fail({}, "missing schema_version");
    if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kSchemaVersion)
        rd.fail({"schema_version"}, "unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
    if (j.contains("preset")) {
        const std::string name = rd.string(j, {}, "preset", "");
        try {
            apply_preset(c, find_preset(name));
        } catch (const ConfigError& e) {
            rd.fail({"preset"}, e.what());
        }
        c.preset = name;
    }
    const std::string scheme = rd.string(j, {}, "scheme", "standalone");
    if (scheme != "standalone" && scheme != "dcao") rd.fail({"scheme"}, "expected 'standalone' or 'dcao'");
    c.scheme = scheme == "dcao" ? Scheme::dcao : Scheme::standalone;

    if (j.contains("stage1")) detail::read_stage(rd, j.at("stage1"), "stage1", c.stage1);
    if (j.contains("stage2")) detail::read_stage(rd, j.at("stage2"), "stage2", c.stage2);
    {
        const double r = c.stage2.rate_hz / c.stage1.rate_hz;
        if (std::abs(r - std::round(r)) > 1e-9 * r || std::round(r) < 1.0)
            rd.fail({"stage2", "rate_hz"}, "must be an integer multiple of stage1.rate_hz");
    }

    if (j.contains("disturbance")) {
        const auto& d = j.at("disturbance");
        const std::vector<std::string> p{"disturbance"};
        rd.allow(d, p, {"tilt_rms", "knee_hz", "slope", "mode_exponent", "fir_length", "vibration"});
        auto& ds = c.disturbance;
        ds.tilt_rms = rd.number(d, p, "tilt_rms", ds.tilt_rms);
        ds.knee_hz = rd.number(d, p, "knee_hz", ds.knee_hz);
        ds.slope = rd.number(d, p, "slope", ds.slope);
        ds.mode_exponent = rd.number(d, p, "mode_exponent", ds.mode_exponent);
        ds.fir_length = rd.count(d, p, "fir_length", ds.fir_length);
        if (!(ds.tilt_rms > 0.0)) rd.fail({"disturbance", "tilt_rms"}, "must be > 0");
        if (!(ds.slope < 0.0)) rd.fail({"disturbance", "slope"}, "must be < 0");
        if (!(ds.knee_hz > 0.0 && ds.knee_hz < c.stage2.rate_hz / 2.0))
            rd.fail({"disturbance", "knee_hz"}, "must lie in (0, stage2.rate_hz/2)");
        if (ds.fir_length < 1) rd.fail({"disturbance", "fir_length"}, "must be >= 1");
        if (d.contains("vibration")) {
            const auto& v = d.at("vibration");
            const std::vector<std::string> vp{"disturbance", "vibration"};
            rd.allow(v, vp, {"modes", "peaks"});
            if (v.contains("modes")) {
                if (!v.at("modes").is_array()) rd.fail({"disturbance", "vibration", "modes"}, "expected an array");
                ds.peak_modes.clear();
                for (const auto& m : v.at("modes")) {
                    if (!m.is_number_integer() || m.get<long long>() < 0)
                        rd.fail({"disturbance", "vibration", "modes"}, "expected non-negative integers");
                    ds.peak_modes.push_back(m.get<std::size_t>());
                }
            }
            if (v.contains("peaks")) {
                if (!v.at("peaks").is_array()) rd.fail({"disturbance", "vibration", "peaks"}, "expected an array");
                for (const auto& pk : v.at("peaks")) {
                    const std::vector<std::string> pp{"disturbance", "vibration", "peaks"};
                    rd.allow(pk, pp, {"center_hz", "q", "gain"});
                    VibrationPeak peak;
                    peak.center_hz = rd.number(pk, pp, "center_hz", 0.0);
                    peak.quality_factor = rd.number(pk, pp, "q", peak.quality_factor);
                    peak.power_gain = rd.number(pk, pp, "gain", peak.power_gain);
                    if (!(peak.center_hz > 0.0 && peak.center_hz < c.stage2.rate_hz / 2.0))
                        rd.fail(pp, "center_hz must lie in (0, stage2 Nyquist)");
                    if (!(peak.quality_factor > 0.0 && peak.power_gain > 0.0)) rd.fail(pp, "q and gain must be > 0");
                    ds.peaks.push_back(peak);
                }
            }
        }
    }

    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        const std::vector<std::string> p{"synth"};
        rd.allow(s, p, {"mu", "alpha", "order", "grid_points", "bandwidth_hz", "mode_groups", "initial_gain"});
        c.synth.mu = rd.number(s, p, "mu", c.synth.mu);
        c.synth.alpha = rd.number(s, p, "alpha", c.synth.alpha);
        c.synth.order = static_cast<int>(rd.count(s, p, "order", static_cast<std::size_t>(c.synth.order)));
        c.synth.grid_points = rd.count(s, p, "grid_points", c.synth.grid_points);
        if (s.contains("bandwidth_hz")) c.synth.bandwidth_hz = rd.number(s, p, "bandwidth_hz", 0.0);
        c.synth.mode_groups = rd.count(s, p, "mode_groups", c.synth.mode_groups);
        c.synth.initial_gain = rd.number(s, p, "initial_gain", c.synth.initial_gain);
        if (!(c.synth.mu > 0.0 && c.synth.mu <= 1.0)) rd.fail({"synth", "mu"}, "must lie in (0, 1]");
        if (c.synth.alpha < 0.0) rd.fail({"synth", "alpha"}, "must be >= 0");
        if (c.synth.order < 1) rd.fail({"synth", "order"}, "must be >= 1");
        if (c.synth.grid_points < 16) rd.fail({"synth", "grid_points"}, "must be >= 16");
        if (c.synth.mode_groups < 1) rd.fail({"synth", "mode_groups"}, "must be >= 1");
        if (c.synth.bandwidth_hz && !(*c.synth.bandwidth_hz > 0.0)) rd.fail({"synth", "bandwidth_hz"}, "must be > 0");
    }

    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        const std::vector<std::string> p{"solver"};
        rd.allow(s, p, {"eps", "max_iter", "rel_tol"});
        c.solver.eps = rd.number(s, p, "eps", c.solver.eps);
        c.solver.max_iter = static_cast<int>(rd.count(s, p, "max_iter", static_cast<std::size_t>(c.solver.max_iter)));
        c.solver.rel_tol = rd.number(s, p, "rel_tol", c.solver.rel_tol);
        if (!(c.solver.eps > 0.0)) rd.fail({"solver", "eps"}, "must be > 0");
        if (c.solver.max_iter < 1) rd.fail({"solver", "max_iter"}, "must be >= 1");
        if (!(c.solver.rel_tol >= 0.0)) rd.fail({"solver", "rel_tol"}, "must be >= 0");
    }

    if (j.contains("simulation")) {
        const auto& s = j.at("simulation");
        const std::vector<std::string> p{"simulation"};
        rd.allow(s, p, {"duration_s", "settle_s", "seed", "max_modes", "export_modes"});
        c.simulation.duration_s = rd.number(s, p, "duration_s", c.simulation.duration_s);
        c.simulation.settle_s = rd.number(s, p, "settle_s", c.simulation.settle_s);
        if (!(c.simulation.settle_s >= 0.0)) rd.fail({"simulation", "settle_s"}, "must be >= 0");
        c.simulation.seed = rd.count(s, p, "seed", c.simulation.seed);
        if (s.contains("max_modes")) c.simulation.max_modes = rd.count(s, p, "max_modes", 0);
        if (s.contains("export_modes")) {
            if (!s.at("export_modes").is_array()) rd.fail({"simulation", "export_modes"}, "expected an array");
            c.simulation.export_modes.clear();
            for (const auto& m : s.at("export_modes")) {
                if (!m.is_number_integer() || m.get<long long>() < 0)
                    rd.fail({"simulation", "export_modes"}, "expected non-negative integers");
                c.simulation.export_modes.push_back(m.get<std::size_t>());
            }
        }
        if (c.simulation.max_modes && *c.simulation.max_modes < 1) rd.fail({"simulation", "max_modes"}, "must be >= 1");
    }

    if (j.contains("cases")) {
        const auto& cs = j.at("cases");
        if (!cs.is_array() || cs.empty()) rd.fail({"cases"}, "expected a non-empty array");
        std::set<std::string> names;
        for (const auto& e : cs) {
            rd.allow(e, {"cases"}, {"name", "stage1", "stage2"});
            CaseSpec cs_;
            cs_.name = rd.string(e, {"cases"}, "name", "");
            if (cs_.name.empty()) rd.fail({"cases", "name"}, "case name required");
            if (cs_.name.find_first_of("/\\ ") != std::string::npos) rd.fail({"cases", "name"}, "must not contain '/', '\\' or spaces");
            if (!names.insert(cs_.name).second) rd.fail({"cases", "name"}, "duplicate case name '" + cs_.name + "'");
            if (!e.contains("stage1") || !e.contains("stage2")) rd.fail({"cases"}, "stage1 and stage2 strategies required");
            cs_.stage1 = detail::read_strategy(rd, e.at("stage1"), {"cases", "stage1"});
            cs_.stage2 = detail::read_strategy(rd, e.at("stage2"), {"cases", "stage2"});
            c.cases.push_back(std::move(cs_));
        }
    } else {
        c.cases = {{"integrator", parse_strategy("integrator"), parse_strategy("integrator")},
                   {"data-driven", parse_strategy("integrator"), parse_strategy("data-driven")}};
    }
    c.output_dir = rd.string(j, {}, "output_dir", c.output_dir);
    return c;
}

// Checks that depend on the final (possibly CLI-overridden) values.
inline void validate_config(const RunConfig& c) {
    const double n2 = c.simulation.duration_s * c.stage2.rate_hz;
    const double n1 = c.simulation.duration_s * c.stage1.rate_hz;
    if (!(c.simulation.duration_s > 0.0) || n2 < 64.0 || n1 < 2.0)
        throw ConfigError("simulation.duration_s too short: need at least 64 stage-2 samples (two Welch segments) "
                          "and 2 stage-1 frames");
    if (c.stage1.n_modes == 0 && c.stage2.n_modes == 0) throw ConfigError("no controlled modes");
    for (std::size_t m : c.simulation.export_modes)
        if (m >= c.total_modes()) throw ConfigError("simulation.export_modes: mode " + std::to_string(m) + " not simulated");
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig c = parse_config(ss.str(), path);
    validate_config(c);
    return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
    auto stage = [](const StageSpec& s) {
        return nlohmann::json{{"rate_hz", s.rate_hz},
                              {"latency_s", s.latency_s},
                              {"n_modes", s.n_modes},
                              {"stroke_limit", std::isfinite(s.stroke_limit) ? nlohmann::json(s.stroke_limit)
                                                                             : nlohmann::json(nullptr)},
                              {"noise", {{"n_q", s.noise.n_q}, {"n_r", s.noise.n_r}, {"kappa", s.noise.kappa}}}};
    };
    nlohmann::json peaks = nlohmann::json::array();
    for (const auto& p : c.disturbance.peaks)
        peaks.push_back({{"center_hz", p.center_hz}, {"q", p.quality_factor}, {"gain", p.power_gain}});
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& k : c.cases) cases.push_back({{"name", k.name}, {"stage1", to_string(k.stage1)}, {"stage2", to_string(k.stage2)}});
    nlohmann::json j{{"schema_version", c.schema_version},
                     {"scheme", to_string(c.scheme)},
                     {"stage1", stage(c.stage1)},
                     {"stage2", stage(c.stage2)},
                     {"disturbance",
                      {{"tilt_rms", c.disturbance.tilt_rms},
                       {"knee_hz", c.disturbance.knee_hz},
                       {"slope", c.disturbance.slope},
                       {"mode_exponent", c.disturbance.mode_exponent},
                       {"fir_length", c.disturbance.fir_length},
                       {"vibration", {{"modes", c.disturbance.peak_modes}, {"peaks", peaks}}}}},
                     {"synth",
                      {{"mu", c.synth.mu},
                       {"alpha", c.synth.alpha},
                       {"order", c.synth.order},
                       {"grid_points", c.synth.grid_points},
                       {"mode_groups", c.synth.mode_groups},
                       {"initial_gain", c.synth.initial_gain}}},
                     {"solver", {{"eps", c.solver.eps}, {"max_iter", c.solver.max_iter}, {"rel_tol", c.solver.rel_tol}}},
                     {"simulation",
                      {{"duration_s", c.simulation.duration_s},
                       {"settle_s", c.simulation.settle_s},
                       {"seed", c.simulation.seed},
                       {"export_modes", c.simulation.export_modes}}},
                     {"cases", cases},
                     {"output_dir", c.output_dir}};
    if (c.preset) j["preset"] = *c.preset;
    if (c.synth.bandwidth_hz) j["synth"]["bandwidth_hz"] = *c.synth.bandwidth_hz;
    if (c.simulation.max_modes) j["simulation"]["max_modes"] = *c.simulation.max_modes;
    return j;
}

}  // namespace aoctl
