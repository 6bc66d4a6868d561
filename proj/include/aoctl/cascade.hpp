#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "disturbance.hpp"
#include "error.hpp"
#include "freqmodel.hpp"
#include "iirfilter.hpp"
#include "parallel.hpp"

// Two-stage modal AO loop simulated at the stage-2 rate.
//
// Stage 1 runs every R = f2/f1 substeps. Its WFS averages e1 over the frame;
// the command computed at the end of a frame is held from the next substep on
// and then delayed by the stage-1 latency. Stage 2 measures e2 with a one-step
// delay, then its command is delayed by the stage-2 latency. Fractional
// latencies interpolate linearly between the two bracketing command samples.
namespace aoctl {

enum class Scheme { standalone, dcao };

inline const char* to_string(Scheme s) { return s == Scheme::dcao ? "dcao" : "standalone"; }

struct StageConfig {
    double rate_hz = 1000.0;
    LoopTiming timing{};
    IirController controller = zero_controller();
    std::vector<IirController> mode_controllers;  // per mode; overrides controller when non-empty
    NoiseParams noise{};
    std::vector<double> mode_noise_sigma;         // per mode; overrides noise when non-empty
    double stroke_limit = std::numeric_limits<double>::infinity();
    std::size_t n_modes = 1;

    [[nodiscard]] const IirController& controller_for(std::size_t mode) const {
        return mode_controllers.empty() ? controller : mode_controllers.at(mode);
    }
    [[nodiscard]] double noise_sigma_for(std::size_t mode) const {
        if (!mode_noise_sigma.empty()) return mode_noise_sigma.at(mode);
        if (noise.kappa == 0.0) return 0.0;
        return measurement_noise_sigma(noise);
    }
};

struct CascadeConfig {
    StageConfig stage1;
    StageConfig stage2;
    Scheme scheme = Scheme::standalone;
    std::vector<double> projection;  // dCAO P per mode; 1 when empty

    [[nodiscard]] double projection_for(std::size_t mode) const {
        return projection.empty() ? 1.0 : projection.at(mode);
    }
};

struct ModeTrace {
    std::vector<double> phi, e1, e2, m1, m2, u1, u2;
    std::vector<std::uint8_t> sat1, sat2;
    bool nonfinite = false;
};

struct SimTrace {
    double rate_hz = 1.0;
    std::vector<ModeTrace> modes;

    [[nodiscard]] std::size_t length() const { return modes.empty() ? 0 : modes.front().phi.size(); }
    [[nodiscard]] bool nonfinite() const {
        for (const auto& m : modes)
            if (m.nonfinite) return true;
        return false;
    }
};

inline std::pair<double, bool> apply_stroke_limit(double u, double limit) {
    detail::require(limit > 0.0, "apply_stroke_limit: limit must be > 0");
    if (u > limit) return {limit, true};
    if (u < -limit) return {-limit, true};
    return {u, false};
}

namespace detail {

inline std::size_t rate_ratio(const CascadeConfig& cfg) {
    require(cfg.stage1.rate_hz > 0.0 && cfg.stage2.rate_hz > 0.0, "cascade: rates must be > 0");
    require(cfg.stage1.stroke_limit > 0.0 && cfg.stage2.stroke_limit > 0.0, "cascade: stroke limits must be > 0");
    const double r = cfg.stage2.rate_hz / cfg.stage1.rate_hz;
    const double rr = std::round(r);
    require(rr >= 1.0 && std::abs(r - rr) <= 1e-9 * r, "cascade: stage-2 rate must be an integer multiple of stage-1 rate");
    return static_cast<std::size_t>(rr);
}

// Latency in stage-2 samples split into integer and fractional parts.
struct Delay {
    std::size_t whole = 0;
    double frac = 0.0;
};

inline Delay split_delay(double latency_s, double t2) {
    require(latency_s >= 0.0, "cascade: latency must be >= 0");
    const double d = latency_s / t2;
    Delay out;
    out.whole = static_cast<std::size_t>(std::floor(d + 1e-9));
    out.frac = std::max(0.0, d - static_cast<double>(out.whole));
    if (out.frac < 1e-9) out.frac = 0.0;
    return out;
}

// (1 - f) x[k - d] + f x[k - d - 1], zero before the start.
inline double delayed(const std::vector<double>& x, std::size_t k, const Delay& d) {
    auto at = [&](std::size_t lag) { return k >= lag ? x[k - lag] : 0.0; };
    const double a = at(d.whole);
    return d.frac == 0.0 ? a : (1.0 - d.frac) * a + d.frac * at(d.whole + 1);
}

}  // namespace detail

inline ModeTrace simulate_mode(const CascadeConfig& cfg, std::size_t mode, const std::vector<double>& phi,
                               std::uint64_t seed) {
    const std::size_t r = detail::rate_ratio(cfg);
    const double t2 = 1.0 / cfg.stage2.rate_hz;
    const detail::Delay d1 = detail::split_delay(cfg.stage1.timing.latency, t2);
    const detail::Delay d2 = detail::split_delay(cfg.stage2.timing.latency, t2);
    const bool on1 = mode < cfg.stage1.n_modes;
    const bool on2 = mode < cfg.stage2.n_modes;
    const IirController k1 = on1 ? cfg.stage1.controller_for(mode) : zero_controller();
    const IirController k2 = on2 ? cfg.stage2.controller_for(mode) : zero_controller();
    const double sigma1 = on1 ? cfg.stage1.noise_sigma_for(mode) : 0.0;
    const double sigma2 = on2 ? cfg.stage2.noise_sigma_for(mode) : 0.0;
    // The stage-2 DM cannot mirror a mode outside its own basis.
    const double proj = cfg.scheme == Scheme::dcao && on2 ? cfg.projection_for(mode) : 0.0;

    std::mt19937_64 rng1(mix_seed(seed, mode, 1));
    std::mt19937_64 rng2(mix_seed(seed, mode, 2));
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t n = phi.size();
    ModeTrace tr;
    tr.phi = phi;
    tr.e1.assign(n, 0.0);
    tr.e2.assign(n, 0.0);
    tr.m1.assign(n, 0.0);
    tr.m2.assign(n, 0.0);
    tr.u1.assign(n, 0.0);
    tr.u2.assign(n, 0.0);
    tr.sat1.assign(n, 0);
    tr.sat2.assign(n, 0);

    FilterState s1(k1.order()), s2(k2.order());
    std::vector<double> hold1(n, 0.0);  // stage-1 command as seen at the stage-2 rate, before latency
    std::vector<double> own2(n, 0.0);   // stage-2 controller output after clamping
    double frame_sum = 0.0;
    double u1_last = 0.0, m1_last = 0.0;
    bool sat1_last = false;

    for (std::size_t k = 0; k < n; ++k) {
        hold1[k] = u1_last;
        const double c1 = detail::delayed(hold1, k, d1);
        tr.e1[k] = phi[k] - c1;

        // Stage 2: measurement of the previous residual.
        double m2 = (k > 0 ? tr.e2[k - 1] : 0.0);
        if (sigma2 > 0.0) m2 += sigma2 * normal(rng2);
        tr.m2[k] = m2;
        auto [u2, sat_own] = apply_stroke_limit(step(k2, s2, m2), cfg.stage2.stroke_limit);
        s2.override_last_command(u2);
        own2[k] = u2;
        const double c2_own = detail::delayed(own2, k, d2);
        auto [c2, sat_dm] = apply_stroke_limit(c2_own - proj * c1, cfg.stage2.stroke_limit);
        tr.u2[k] = u2;
        tr.sat2[k] = sat_own || sat_dm;
        tr.e2[k] = tr.e1[k] - c2;

        // Stage 1: frame average, command available from the next substep.
        frame_sum += tr.e1[k];
        if ((k + 1) % r == 0) {
            double m1 = frame_sum / static_cast<double>(r);
            frame_sum = 0.0;
            if (sigma1 > 0.0) m1 += sigma1 * normal(rng1);
            auto [u1, sat] = apply_stroke_limit(step(k1, s1, m1), cfg.stage1.stroke_limit);
            s1.override_last_command(u1);
            u1_last = u1;
            m1_last = m1;
            sat1_last = sat;
        }
        tr.m1[k] = m1_last;
        tr.u1[k] = u1_last;
        tr.sat1[k] = sat1_last && (k + 1) % r == 0;
    }
    tr.nonfinite = s1.nonfinite() || s2.nonfinite();
    for (std::size_t k = 0; k < n && !tr.nonfinite; ++k)
        if (!std::isfinite(tr.e2[k])) tr.nonfinite = true;
    return tr;
}

namespace detail {

inline SimTrace run_cascade(const CascadeConfig& cfg, const std::vector<std::vector<double>>& disturbance,
                            std::uint64_t seed) {
    rate_ratio(cfg);
    require(!disturbance.empty(), "cascade: at least one mode required");
    for (const auto& d : disturbance)
        require(d.size() == disturbance.front().size(), "cascade: mode signals differ in length");
    SimTrace out;
    out.rate_hz = cfg.stage2.rate_hz;
    out.modes.resize(disturbance.size());
    parallel_for(disturbance.size(),
                 [&](std::size_t j) { out.modes[j] = simulate_mode(cfg, j, disturbance[j], seed); });
    return out;
}

}  // namespace detail

inline SimTrace run_standalone(const CascadeConfig& cfg, const std::vector<std::vector<double>>& disturbance,
                               std::uint64_t seed) {
    detail::require(cfg.scheme == Scheme::standalone, "run_standalone: scheme must be standalone");
    return detail::run_cascade(cfg, disturbance, seed);
}

inline SimTrace run_dcao(const CascadeConfig& cfg, const std::vector<std::vector<double>>& disturbance,
                         std::uint64_t seed) {
    detail::require(cfg.scheme == Scheme::dcao, "run_dcao: scheme must be dcao");
    return detail::run_cascade(cfg, disturbance, seed);
}

inline SimTrace run(const CascadeConfig& cfg, const std::vector<std::vector<double>>& disturbance,
                    std::uint64_t seed) {
    return detail::run_cascade(cfg, disturbance, seed);
}

// Stage-2 pseudo-open-loop: m2[k] + own correction applied at the measured
// sample. Equals phi[k-1] for an exact dCAO projection without noise.
inline std::vector<double> pseudo_open_loop(const CascadeConfig& cfg, const ModeTrace& tr) {
    const detail::Delay d2 = detail::split_delay(cfg.stage2.timing.latency, 1.0 / cfg.stage2.rate_hz);
    std::vector<double> out(tr.m2.size(), 0.0);
    for (std::size_t k = 1; k < tr.m2.size(); ++k) out[k] = tr.m2[k] + detail::delayed(tr.u2, k - 1, d2);
    return out;
}

// ============================================================================
// Export
// ============================================================================
// One CSV per signal: columns sample, mode_0, mode_1, ...
inline void write_signal_csv(std::ostream& os, const SimTrace& tr, const std::vector<std::size_t>& modes,
                             const std::vector<double> ModeTrace::*field) {
    os << "sample";
    for (std::size_t j : modes) os << ",mode_" << j;
    os << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < tr.length(); ++k) {
        os << k;
        for (std::size_t j : modes) os << ',' << (tr.modes[j].*field)[k];
        os << '\n';
    }
}

inline nlohmann::json summary_json(const SimTrace& tr) {
    auto rms_of = [](const std::vector<double>& x) {
        double a = 0.0;
        for (double v : x) a += v * v;
        return x.empty() ? 0.0 : std::sqrt(a / static_cast<double>(x.size()));
    };
    nlohmann::json modes = nlohmann::json::array();
    std::size_t total1 = 0, total2 = 0;
    double sum_phi = 0.0, sum_e2 = 0.0;
    for (const auto& m : tr.modes) {
        std::size_t n1 = 0, n2 = 0;
        for (auto f : m.sat1) n1 += f;
        for (auto f : m.sat2) n2 += f;
        total1 += n1;
        total2 += n2;
        const double rp = rms_of(m.phi), r1 = rms_of(m.e1), r2 = rms_of(m.e2);
        sum_phi += rp * rp;
        sum_e2 += r2 * r2;
        modes.push_back({{"rms_phi", rp},
                         {"rms_e1", r1},
                         {"rms_e2", r2},
                         {"rms_u1", rms_of(m.u1)},
                         {"rms_u2", rms_of(m.u2)},
                         {"saturations_stage1", n1},
                         {"saturations_stage2", n2}});
    }
    return {{"rate_hz", tr.rate_hz},
            {"samples", tr.length()},
            {"total_rms_phi", std::sqrt(sum_phi)},
            {"total_rms_e2", std::sqrt(sum_e2)},
            {"saturations_stage1", total1},
            {"saturations_stage2", total2},
            {"modes", modes}};
}

}  // namespace aoctl
