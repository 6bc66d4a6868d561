#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "cascade.hpp"
#include "config.hpp"
#include "disturbance.hpp"
#include "freqmodel.hpp"
#include "iirfilter.hpp"
#include "parallel.hpp"
#include "synthesis.hpp"

// Run driver: disturbance generation, telemetry, per-stage controller design,
// cascade simulation of every configured case and report assembly.
namespace aoctl {

class SynthesisFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SimulationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModeGroup {
    std::size_t first = 0;
    std::size_t last = 0;  // exclusive
    std::size_t representative = 0;
};

// Log-spaced mode bins, split at the stage mode counts and around vibrating modes.
inline std::vector<ModeGroup> make_mode_groups(std::size_t n_total, std::size_t n1, std::size_t n2,
                                               std::size_t groups, const std::vector<std::size_t>& singles) {
    detail::require(n_total >= 1 && groups >= 1, "make_mode_groups: need at least one mode and one group");
    std::set<std::size_t> cuts{0, n_total};
    for (std::size_t n : {n1, n2})
        if (n > 0 && n < n_total) cuts.insert(n);
    for (std::size_t i = 1; i < groups; ++i)
        cuts.insert(static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n_total), double(i) / groups))));
    for (std::size_t s : singles)
        if (s < n_total) {
            cuts.insert(s);
            cuts.insert(s + 1);
        }
    std::vector<ModeGroup> out;
    for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
        ModeGroup g;
        g.first = *it;
        g.last = *std::next(it);
        const double mid = std::sqrt(static_cast<double>(g.first + 1) * static_cast<double>(g.last)) - 1.0;
        g.representative = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(mid)), g.first, g.last - 1);
        out.push_back(g);
    }
    return out;
}

// ============================================================================
// Disturbance source
// ============================================================================
class DisturbanceSource {
public:
    DisturbanceSource(const DisturbanceSpec& spec, double rate_hz) : spec_(spec), rate_hz_(rate_hz) {
        AtmosphericPsdParams atm;
        atm.low_freq_level = 1.0;
        atm.knee_hz = spec.knee_hz;
        atm.slope = spec.slope;
        atm.rate_hz = rate_hz;
        model_.atmosphere = atm;
        model_.fir_length = spec.fir_length;
        model_.psd_points = spec.fir_length + 1;
        // Level such that the mode-0 continuum has variance tilt_rms^2.
        const double unit = integrate(model_.target_psd());
        model_.atmosphere.low_freq_level = spec.tilt_rms * spec.tilt_rms / unit;
        atm_fir_ = model_.fit();
        if (!spec.peaks.empty()) {
            DisturbanceModel vib = model_;
            vib.peaks = spec.peaks;
            vib_fir_ = vib.fit();
        }
    }

    [[nodiscard]] bool vibrating(std::size_t mode) const {
        return vib_fir_ && std::find(spec_.peak_modes.begin(), spec_.peak_modes.end(), mode) != spec_.peak_modes.end();
    }

    [[nodiscard]] double scale(std::size_t mode) const { return mode_scale(mode, spec_.mode_exponent); }

    [[nodiscard]] std::vector<double> signal(std::size_t mode, std::size_t n, std::uint64_t seed) const {
        std::vector<double> x = generate_timeseries(vibrating(mode) ? *vib_fir_ : atm_fir_, n, seed);
        const double s = scale(mode);
        for (double& v : x) v *= s;
        return x;
    }

    // Model PSD of a mode at the given frequencies.
    [[nodiscard]] std::vector<double> psd(std::size_t mode, const std::vector<double>& hz) const {
        DisturbanceModel m = model_;
        if (vibrating(mode)) m.peaks = spec_.peaks;
        std::vector<double> p = m.psd_at(hz);
        const double s2 = scale(mode) * scale(mode);
        for (double& v : p) v *= s2;
        return p;
    }

    [[nodiscard]] double rate_hz() const { return rate_hz_; }
    [[nodiscard]] const DisturbanceSpec& spec() const { return spec_; }

private:
    DisturbanceSpec spec_;
    double rate_hz_;
    DisturbanceModel model_;
    FirModel atm_fir_;
    std::optional<FirModel> vib_fir_;
};

// ============================================================================
// Controller design
// ============================================================================
struct StageDesign {
    std::vector<IirController> controllers;  // one per group
    nlohmann::json diagnostics = nlohmann::json::array();
};

struct Telemetry {
    FrequencyGrid grid;
    std::vector<double> measured_psd;  // one-sided PSD of the open-loop measurement on the grid
    double noise_psd = 0.0;            // white measurement-noise level
};

namespace detail {

// The sampled plant the simulator realizes: stage 1 averages its frame over the
// stage-2 sub-samples, stage 2 reads one sample.
inline LoopTiming stage_timing(const RunConfig& cfg, const StageSpec& s) {
    LoopTiming t{1.0 / s.rate_hz, s.latency_s, WfsModel::unit_delay};
    t.substeps = &s == &cfg.stage2 ? 1 : static_cast<int>(std::lround(cfg.stage2.rate_hz / cfg.stage1.rate_hz));
    return t;
}

inline double stage_noise_sigma(const StageSpec& s) {
    return s.noise.kappa == 0.0 ? 0.0 : measurement_noise_sigma(s.noise);
}

inline FrequencyGrid synthesis_grid(const RunConfig& cfg, const StageSpec& s) {
    FrequencyGrid g = make_grid(s.rate_hz, cfg.synth.grid_points, Spacing::log, s.rate_hz * 1e-4);
    std::vector<double> extra;
    for (const VibrationPeak& pk : cfg.disturbance.peaks) {
        if (pk.center_hz >= s.rate_hz / 2.0) continue;
        for (int k = -8; k <= 8; ++k) extra.push_back(pk.center_hz * (1.0 + k / (4.0 * pk.quality_factor)));
    }
    return merge_grid(g, extra);
}

// Log-log interpolation of a Welch estimate onto a frequency grid; DC bin ignored.
inline std::vector<double> resample_psd(const Spectrum& s, const FrequencyGrid& grid) {
    std::vector<double> hz, lp;
    for (std::size_t k = 1; k < s.size(); ++k)
        if (s.power[k] > 0.0) {
            hz.push_back(std::log(s.hz[k]));
            lp.push_back(std::log(s.power[k]));
        }
    require(hz.size() >= 2, "telemetry PSD is identically zero");
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double lf = std::log(grid.hz(i));
        if (lf <= hz.front()) {
            out[i] = std::exp(lp.front());
        } else if (lf >= hz.back()) {
            out[i] = std::exp(lp.back());
        } else {
            const auto it = std::upper_bound(hz.begin(), hz.end(), lf);
            const std::size_t j = static_cast<std::size_t>(it - hz.begin());
            const double t = (lf - hz[j - 1]) / (hz[j] - hz[j - 1]);
            out[i] = std::exp(lp[j - 1] + t * (lp[j] - lp[j - 1]));
        }
    }
    return out;
}

inline std::size_t telemetry_segment(const RunConfig& cfg, double rate_hz) {
    std::size_t seg = 4096;
    for (const VibrationPeak& pk : cfg.disturbance.peaks)
        if (pk.center_hz < rate_hz / 2.0)
            seg = std::max(seg, next_pow2(static_cast<std::size_t>(4.0 * rate_hz * pk.quality_factor / pk.center_hz)));
    return std::min<std::size_t>(seg, std::size_t{1} << 17);
}

// Predicted residual variance of a loop: disturbance through S, noise through T.
inline double predicted_variance(const FrequencyResponse& G, const IirController& k, const Telemetry& t) {
    const FrequencyResponse S = loop_sensitivity(G, k);
    double acc = 0.0;
    auto integrand = [&](std::size_t i) {
        const double dist = std::max(t.measured_psd[i] - t.noise_psd, 0.0);
        return std::norm(S[i]) * dist + std::norm(1.0 - S[i]) * t.noise_psd;
    };
    for (std::size_t i = 0; i + 1 < G.size(); ++i)
        acc += 0.5 * (integrand(i) + integrand(i + 1)) * (G.grid().hz(i + 1) - G.grid().hz(i));
    return acc;
}

// Largest integrator gain that is stable and keeps max|S| <= 1/mu, by bisection.
inline double integrator_gain_limit(const LoopTiming& timing, const FrequencyGrid& grid, double mu) {
    const FrequencyGrid dg = dense_grid(grid, 4);
    const FrequencyResponse dense = plant_response(timing, dg);
    const FrequencyResponse rational = rational_plant_response(timing, dg);
    auto stable = [&](double g) { return validate(integrator(g), dense, mu, &rational).passed(); };
    double lo = 0.0, hi = 4.0;
    while (stable(hi) && hi < 64.0) hi *= 2.0;
    for (int i = 0; i < 40; ++i) {
        const double mid = 0.5 * (lo + hi);
        (stable(mid) ? lo : hi) = mid;
    }
    return lo;
}

}  // namespace detail

inline SynthesisProblem make_problem(const RunConfig& cfg, const StageSpec& stage, const Telemetry& t,
                                     ControllerStructure structure, int order) {
    SynthesisProblem p;
    p.timing = detail::stage_timing(cfg, stage);
    p.plant = plant_response(*p.timing, t.grid);
    p.disturbance_amplitude.resize(t.grid.size());
    for (std::size_t i = 0; i < t.grid.size(); ++i) p.disturbance_amplitude[i] = std::sqrt(t.measured_psd[i]);
    p.alpha = cfg.synth.alpha;
    p.modulus_margin = cfg.synth.mu;
    p.order = order;
    p.structure = structure;
    p.bandwidth_hz = cfg.synth.bandwidth_hz;
    p.solver.barrier.gap_tol = cfg.solver.eps;
    return p;
}

// Designs one controller per group. Groups outside the stage's modes get K = 0.
inline StageDesign design_stage(const RunConfig& cfg, const StageSpec& stage, const Strategy& strategy,
                                const std::vector<ModeGroup>& groups, const std::vector<Telemetry>& telemetry) {
    StageDesign d;
    d.controllers.assign(groups.size(), zero_controller());
    std::vector<nlohmann::json> diag(groups.size());
    const LoopTiming timing = detail::stage_timing(cfg, stage);
    auto active = [&](std::size_t g) { return groups[g].first < stage.n_modes; };

    if (strategy.kind == StrategyKind::reference_integrator) {
        double gain = 0.0;
        nlohmann::json scan = nlohmann::json::object();
        if (strategy.gain) {
            gain = *strategy.gain;
        } else {
            // One gain for all modes, chosen on the summed predicted residual, under the
            // same modulus margin the synthesized controllers obey.
            const FrequencyGrid& grid = telemetry.front().grid;
            const double limit = detail::integrator_gain_limit(timing, grid, cfg.synth.mu);
            const FrequencyResponse G = plant_response(timing, grid);
            double best = std::numeric_limits<double>::infinity();
            for (int i = 1; i <= 20; ++i) {
                const double g = limit * (i - 0.5) / 20.0;
                double total = 0.0;
                for (std::size_t k = 0; k < groups.size(); ++k)
                    if (active(k))
                        total += static_cast<double>(std::min(groups[k].last, stage.n_modes) - groups[k].first) *
                                 detail::predicted_variance(G, integrator(g), telemetry[k]);
                if (total < best) {
                    best = total;
                    gain = g;
                }
            }
            scan = {{"gain_limit", limit}, {"candidates", 20}, {"predicted_variance", best}};
        }
        for (std::size_t k = 0; k < groups.size(); ++k) {
            if (!active(k)) continue;
            d.controllers[k] = integrator(gain);
            diag[k] = {{"strategy", "integrator"}, {"gain", gain}};
            if (!scan.empty()) diag[k]["scan"] = scan;
        }
    } else {
        const bool modal = strategy.kind == StrategyKind::optimized_modal_gain;
        const int order = modal ? 1 : strategy.order.value_or(cfg.synth.order);
        std::vector<std::string> errors(groups.size());
        detail::parallel_for(groups.size(), [&](std::size_t k) {
            if (!active(k)) return;
            const SynthesisProblem p = make_problem(cfg, stage, telemetry[k],
                                                    modal ? ControllerStructure::integrator : ControllerStructure::free,
                                                    order);
            const SynthesisResult r = synthesize_multistart(p, cfg.synth.initial_gain, cfg.solver.max_iter,
                                                 cfg.solver.rel_tol);
            diag[k] = to_json(r, stage.rate_hz);
            diag[k]["strategy"] = to_string(strategy);
            d.controllers[k] = r.controller;
            if (r.status == SynthesisStatus::infeasible) errors[k] = r.diagnostics;
        });
        for (std::size_t k = 0; k < groups.size(); ++k)
            if (!errors[k].empty()) {
                std::ostringstream os;
                os << "synthesis infeasible for modes [" << groups[k].first << ", " << groups[k].last << ") at "
                   << stage.rate_hz << " Hz: " << errors[k];
                d.diagnostics = diag;
                throw SynthesisFailure(os.str());
            }
    }
    for (std::size_t k = 0; k < groups.size(); ++k) {
        diag[k]["modes"] = {groups[k].first, groups[k].last};
        d.diagnostics.push_back(diag[k]);
    }
    return d;
}

// ============================================================================
// Run
// ============================================================================
struct CaseResult {
    std::string name;
    Strategy stage1;
    Strategy stage2;
    StageDesign design1;
    StageDesign design2;
    std::vector<double> rms_phi, rms_e1, rms_e2;  // per simulated mode
    std::size_t saturations1 = 0;
    std::size_t saturations2 = 0;
    std::map<std::size_t, ModeTrace> exported;

    [[nodiscard]] static double total(const std::vector<double>& r) {
        double a = 0.0;
        for (double v : r) a += v * v;
        return std::sqrt(a);
    }
};

struct RunResult {
    RunConfig config;
    std::vector<ModeGroup> groups;
    std::vector<Telemetry> telemetry1;
    std::vector<CaseResult> cases;
    nlohmann::json report;
};

namespace detail {

constexpr std::size_t kTelemetryFrames1 = 16384;
constexpr std::size_t kTelemetrySegments = 16;

inline Telemetry telemetry_from_series(const std::vector<double>& m, double rate_hz, std::size_t seg,
                                       const FrequencyGrid& grid, double sigma) {
    WelchConfig w;
    w.segment_length = std::min(seg, m.size() / 2);
    w.rate_hz = rate_hz;
    Telemetry t;
    t.grid = grid;
    t.measured_psd = resample_psd(welch_psd(m, w), grid);
    t.noise_psd = 2.0 * sigma * sigma / rate_hz;
    return t;
}

inline void drop_front(ModeTrace& t, std::size_t k) {
    auto cut = [k](auto& v) { v.erase(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(k, v.size()))); };
    for (auto* v : {&t.phi, &t.e1, &t.e2, &t.m1, &t.m2, &t.u1, &t.u2}) cut(*v);
    cut(t.sat1);
    cut(t.sat2);
}

inline CascadeConfig cascade_for(const RunConfig& cfg, const std::vector<ModeGroup>& groups,
                                 const StageDesign* d1, const StageDesign* d2, std::size_t n_modes) {
    CascadeConfig c;
    c.scheme = cfg.scheme;
    auto fill = [&](StageConfig& s, const StageSpec& spec, const StageDesign* d) {
        s.rate_hz = spec.rate_hz;
        s.timing = stage_timing(cfg, spec);
        s.noise = spec.noise;
        s.stroke_limit = spec.stroke_limit;
        s.n_modes = spec.n_modes;
        s.controller = zero_controller();
        s.mode_controllers.assign(n_modes, zero_controller());
        if (d)
            for (std::size_t g = 0; g < groups.size(); ++g)
                for (std::size_t j = groups[g].first; j < std::min(groups[g].last, n_modes); ++j)
                    s.mode_controllers[j] = d->controllers[g];
        s.mode_noise_sigma.assign(n_modes, stage_noise_sigma(spec));
    };
    fill(c.stage1, cfg.stage1, d1);
    fill(c.stage2, cfg.stage2, d2);
    return c;
}

}  // namespace detail

// With simulate = false only the controller designs are produced.
inline RunResult run_experiment(const RunConfig& cfg, bool simulate = true) {
    validate_config(cfg);
    RunResult res;
    res.config = cfg;
    const std::size_t n_modes = cfg.total_modes();
    const double f1 = cfg.stage1.rate_hz, f2 = cfg.stage2.rate_hz;
    const std::size_t ratio = static_cast<std::size_t>(std::lround(f2 / f1));
    std::vector<std::size_t> singles;
    if (!cfg.disturbance.peaks.empty()) singles = cfg.disturbance.peak_modes;
    res.groups = make_mode_groups(n_modes, cfg.stage1.n_modes, cfg.stage2.n_modes, cfg.synth.mode_groups, singles);
    const auto& groups = res.groups;

    const DisturbanceSource source(cfg.disturbance, f2);
    const std::uint64_t seed = cfg.simulation.seed;
    const FrequencyGrid grid1 = detail::synthesis_grid(cfg, cfg.stage1);
    const FrequencyGrid grid2 = detail::synthesis_grid(cfg, cfg.stage2);
    const double sigma1 = detail::stage_noise_sigma(cfg.stage1);
    const double sigma2 = detail::stage_noise_sigma(cfg.stage2);

    // Stage-1 telemetry: both loops open, frame-rate measurements.
    res.telemetry1.resize(groups.size());
    {
        const CascadeConfig open = detail::cascade_for(cfg, groups, nullptr, nullptr, n_modes);
        detail::parallel_for(groups.size(), [&](std::size_t g) {
            const std::size_t j = groups[g].representative;
            const std::size_t n = detail::kTelemetryFrames1 * ratio;
            const ModeTrace tr = simulate_mode(open, j, source.signal(j, n, mix_seed(seed, j, 11)), mix_seed(seed, j, 12));
            std::vector<double> frames;
            frames.reserve(detail::kTelemetryFrames1);
            for (std::size_t k = ratio - 1; k < n; k += ratio) frames.push_back(tr.m1[k]);
            res.telemetry1[g] = detail::telemetry_from_series(frames, f1, std::min<std::size_t>(4096, frames.size() / 8),
                                                              grid1, j < cfg.stage1.n_modes ? sigma1 : 0.0);
        });
    }

    // Designs are cached by strategy; stage-2 telemetry depends on the stage-1 design.
    std::map<std::string, StageDesign> designs1;
    std::map<std::string, std::vector<Telemetry>> telemetry2;
    std::map<std::string, StageDesign> designs2;
    const std::size_t seg2 = detail::telemetry_segment(cfg, f2);
    for (const CaseSpec& cs : cfg.cases) {
        const std::string k1 = to_string(cs.stage1);
        if (!designs1.count(k1)) designs1[k1] = design_stage(cfg, cfg.stage1, cs.stage1, groups, res.telemetry1);
        if (!telemetry2.count(k1)) {
            std::vector<Telemetry> tel(groups.size());
            const CascadeConfig c = detail::cascade_for(cfg, groups, &designs1[k1], nullptr, n_modes);
            detail::parallel_for(groups.size(), [&](std::size_t g) {
                const std::size_t j = groups[g].representative;
                const std::size_t n = seg2 * detail::kTelemetrySegments;
                const ModeTrace tr = simulate_mode(c, j, source.signal(j, n, mix_seed(seed, j, 21)), mix_seed(seed, j, 22));
                tel[g] = detail::telemetry_from_series(tr.m2, f2, seg2, grid2, j < cfg.stage2.n_modes ? sigma2 : 0.0);
            });
            telemetry2[k1] = std::move(tel);
        }
        const std::string k2 = k1 + "|" + to_string(cs.stage2);
        if (!designs2.count(k2)) designs2[k2] = design_stage(cfg, cfg.stage2, cs.stage2, groups, telemetry2[k1]);
    }

    // Simulation: every case sees the same disturbance and noise realization.
    const std::size_t n = simulate ? static_cast<std::size_t>(std::lround(cfg.simulation.duration_s * f2)) : 0;
    std::vector<CascadeConfig> cascades;
    res.cases.resize(cfg.cases.size());
    for (std::size_t c = 0; c < cfg.cases.size(); ++c) {
        const CaseSpec& cs = cfg.cases[c];
        CaseResult& cr = res.cases[c];
        cr.name = cs.name;
        cr.stage1 = cs.stage1;
        cr.stage2 = cs.stage2;
        cr.design1 = designs1.at(to_string(cs.stage1));
        cr.design2 = designs2.at(to_string(cs.stage1) + "|" + to_string(cs.stage2));
        cascades.push_back(detail::cascade_for(cfg, groups, &cr.design1, &cr.design2, n_modes));
        cr.rms_phi.assign(n_modes, 0.0);
        cr.rms_e1.assign(n_modes, 0.0);
        cr.rms_e2.assign(n_modes, 0.0);
    }
    const std::set<std::size_t> export_set(cfg.simulation.export_modes.begin(), cfg.simulation.export_modes.end());
    std::vector<std::vector<std::size_t>> sat1(cfg.cases.size(), std::vector<std::size_t>(n_modes, 0));
    std::vector<std::vector<std::size_t>> sat2 = sat1;
    std::vector<std::vector<std::uint8_t>> bad(cfg.cases.size(), std::vector<std::uint8_t>(n_modes, 0));
    std::vector<std::vector<std::optional<ModeTrace>>> kept(cfg.cases.size(), std::vector<std::optional<ModeTrace>>(n_modes));
    // The loops start from rest against a disturbance already at full amplitude; the
    // pre-roll keeps that start-up transient out of the traces and metrics. Whole frames.
    const std::size_t settle = ratio * static_cast<std::size_t>(std::ceil(cfg.simulation.settle_s * f1 - 1e-9));
    detail::parallel_for(simulate ? n_modes : 0, [&](std::size_t j) {
        const std::vector<double> phi = source.signal(j, settle + n, mix_seed(seed, j, 31));
        for (std::size_t c = 0; c < cfg.cases.size(); ++c) {
            ModeTrace tr = simulate_mode(cascades[c], j, phi, mix_seed(seed, j, 32));
            detail::drop_front(tr, settle);
            res.cases[c].rms_phi[j] = rms(tr.phi);
            res.cases[c].rms_e1[j] = rms(tr.e1);
            res.cases[c].rms_e2[j] = rms(tr.e2);
            for (auto f : tr.sat1) sat1[c][j] += f;
            for (auto f : tr.sat2) sat2[c][j] += f;
            bad[c][j] = tr.nonfinite;
            if (export_set.count(j)) kept[c][j] = std::move(tr);
        }
    });
    for (std::size_t c = 0; c < cfg.cases.size(); ++c) {
        for (std::size_t j = 0; j < n_modes; ++j) {
            if (bad[c][j])
                throw SimulationFailure("case '" + cfg.cases[c].name + "': non-finite signal in mode " + std::to_string(j));
            res.cases[c].saturations1 += sat1[c][j];
            res.cases[c].saturations2 += sat2[c][j];
            if (kept[c][j]) res.cases[c].exported.emplace(j, std::move(*kept[c][j]));
        }
    }

    // Report.
    nlohmann::json rep;
    rep["status"] = "ok";
    rep["simulated"] = simulate;
    rep["config"] = to_json(cfg);
    if (cfg.preset)
        rep["surrogate"] = {{"knee_times_t0", surrogate::kKneeTimesT0},
                            {"tilt_rms_at_1_arcsec", surrogate::kTiltRmsAt1Arcsec},
                            {"photon_zero_point", surrogate::kPhotonZeroPoint},
                            {"read_noise", {surrogate::kReadNoiseStage1, surrogate::kReadNoiseStage2}}};
    rep["noise_sigma"] = {sigma1, sigma2};
    rep["groups"] = nlohmann::json::array();
    for (const auto& g : groups) rep["groups"].push_back({{"modes", {g.first, g.last}}, {"representative", g.representative}});
    rep["cases"] = nlohmann::json::array();
    for (const CaseResult& cr : res.cases) {
        if (!simulate) {
            rep["cases"].push_back({{"name", cr.name},
                                    {"stage1", to_string(cr.stage1)},
                                    {"stage2", to_string(cr.stage2)},
                                    {"design_stage1", cr.design1.diagnostics},
                                    {"design_stage2", cr.design2.diagnostics}});
            continue;
        }
        rep["cases"].push_back({{"name", cr.name},
                                {"stage1", to_string(cr.stage1)},
                                {"stage2", to_string(cr.stage2)},
                                {"total_rms_phi", CaseResult::total(cr.rms_phi)},
                                {"total_rms_e1", CaseResult::total(cr.rms_e1)},
                                {"total_rms_e2", CaseResult::total(cr.rms_e2)},
                                {"tilt_rms_e2", cr.rms_e2.front()},
                                {"saturations_stage1", cr.saturations1},
                                {"saturations_stage2", cr.saturations2},
                                {"design_stage1", cr.design1.diagnostics},
                                {"design_stage2", cr.design2.diagnostics}});
    }
    if (!simulate) {
        res.report = rep;
        return res;
    }
    nlohmann::json gains = nlohmann::json::object();
    for (const CaseResult& a : res.cases) {
        nlohmann::json row = nlohmann::json::object();
        for (const CaseResult& b : res.cases) {
            if (&a == &b) continue;
            const auto g = relative_gain(CaseResult::total(a.rms_e2), CaseResult::total(b.rms_e2));
            row[b.name] = g ? nlohmann::json(*g) : nlohmann::json(nullptr);
        }
        gains[a.name] = row;
    }
    rep["relative_gain_total"] = gains;
    if (res.cases.size() >= 2 && n >= 64) {
        const std::size_t j0 = cfg.simulation.export_modes.empty() ? 0 : cfg.simulation.export_modes.front();
        std::vector<ComparedSignal> sig;
        for (const CaseResult& cr : res.cases) {
            const ModeTrace& tr = cr.exported.at(j0);
            sig.push_back({cr.name, tr.e2, tr.e1, cr.saturations2, f2});
        }
        rep["comparison_mode"] = j0;
        rep["comparison"] = to_json(compare(sig, {{0.0, f2 / 20.0}, {f2 / 20.0, f2 / 2.0}}));
    }
    res.report = rep;
    return res;
}

inline void write_outputs(const RunResult& r, const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    fs::create_directories(out / "controllers");
    fs::create_directories(out / "traces");
    fs::create_directories(out / "psd");
    const double f2 = r.config.stage2.rate_hz;
    for (const CaseResult& cr : r.cases) {
        for (int s = 1; s <= 2; ++s) {
            const StageDesign& d = s == 1 ? cr.design1 : cr.design2;
            const double rate = s == 1 ? r.config.stage1.rate_hz : r.config.stage2.rate_hz;
            nlohmann::json j = nlohmann::json::array();
            for (std::size_t g = 0; g < r.groups.size(); ++g) {
                nlohmann::json e = to_json(d.controllers[g], rate);
                e["modes"] = {r.groups[g].first, r.groups[g].last};
                j.push_back(e);
            }
            std::ofstream(out / "controllers" / (cr.name + "_stage" + std::to_string(s) + ".json")) << j.dump(2) << '\n';
        }
        if (cr.exported.empty()) continue;
        const fs::path td = out / "traces" / cr.name;
        fs::create_directories(td);
        SimTrace tr;
        tr.rate_hz = f2;
        std::vector<std::size_t> idx;
        for (const auto& [j, m] : cr.exported) {
            tr.modes.push_back(m);
            idx.push_back(tr.modes.size() - 1);
        }
        std::vector<std::size_t> names;
        for (const auto& [j, m] : cr.exported) names.push_back(j);
        const std::pair<const char*, const std::vector<double> ModeTrace::*> fields[] = {
            {"phi", &ModeTrace::phi}, {"e1", &ModeTrace::e1}, {"e2", &ModeTrace::e2}, {"m1", &ModeTrace::m1},
            {"m2", &ModeTrace::m2},   {"u1", &ModeTrace::u1}, {"u2", &ModeTrace::u2}};
        for (const auto& [name, field] : fields) {
            std::ofstream os(td / (std::string(name) + ".csv"));
            os << "sample";
            for (std::size_t j : names) os << ",mode_" << j;
            os << '\n' << std::setprecision(17);
            for (std::size_t k = 0; k < tr.length(); ++k) {
                os << k;
                for (std::size_t i : idx) os << ',' << (tr.modes[i].*field)[k];
                os << '\n';
            }
        }
        {
            std::ofstream os(td / "saturation.csv");
            os << "sample";
            for (std::size_t j : names) os << ",stage1_mode_" << j << ",stage2_mode_" << j;
            os << '\n';
            for (std::size_t k = 0; k < tr.length(); ++k) {
                os << k;
                for (std::size_t i : idx) os << ',' << int(tr.modes[i].sat1[k]) << ',' << int(tr.modes[i].sat2[k]);
                os << '\n';
            }
        }
        std::ofstream(td / "summary.json") << summary_json(tr).dump(2) << '\n';
        for (const auto& [j, m] : cr.exported) {
            if (m.phi.size() < 64) continue;
            const WelchConfig w = default_welch(m.phi.size(), f2);
            for (const auto& [name, field] : fields) {
                if (std::string(name) != "phi" && std::string(name) != "e1" && std::string(name) != "e2") continue;
                std::ofstream os(out / "psd" / (cr.name + "_mode" + std::to_string(j) + "_" + name + ".csv"));
                write_csv(os, welch_psd(m.*field, w));
            }
        }
    }
    std::ofstream(out / "report.json") << r.report.dump(2) << '\n';
}

}  // namespace aoctl
