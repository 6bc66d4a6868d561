#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "error.hpp"
#include "spectrum.hpp"

// Welch PSD estimation, band RMS, empirical rejection and controller comparison.
namespace aoctl {

enum class Window { hann, rectangular };

struct WelchConfig {
    std::size_t segment_length = 4096;
    double overlap = 0.5;
    Window window = Window::hann;
    double rate_hz = 1.0;

    void check() const {
        detail::require(segment_length >= 8, "WelchConfig: segment_length must be >= 8");
        detail::require(overlap >= 0.0 && overlap < 1.0, "WelchConfig: overlap must lie in [0, 1)");
        detail::require(rate_hz > 0.0, "WelchConfig: rate must be > 0");
    }
};

// Hann, 50% overlap, segment = min(4096, N/8).
inline WelchConfig default_welch(std::size_t n, double rate_hz) {
    WelchConfig c;
    c.segment_length = std::max<std::size_t>(8, std::min<std::size_t>(4096, n / 8));
    c.rate_hz = rate_hz;
    return c;
}

inline Spectrum welch_psd(const std::vector<double>& x, const WelchConfig& cfg) {
    cfg.check();
    const std::size_t l = cfg.segment_length;
    if (x.size() < 2 * l) throw ParameterError("welch_psd: signal shorter than two segments");
    const std::size_t hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(l * (1.0 - cfg.overlap))));

    std::vector<double> w(l, 1.0);
    if (cfg.window == Window::hann)
        for (std::size_t i = 0; i < l; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / l);
    double w2 = 0.0;
    for (double v : w) w2 += v * v;

    const std::size_t nb = l / 2 + 1;
    std::vector<double> acc(nb, 0.0);
    Eigen::FFT<double> fft;
    std::vector<double> seg(l);
    std::vector<std::complex<double>> spec;
    std::size_t count = 0;
    for (std::size_t start = 0; start + l <= x.size(); start += hop) {
        double mean = 0.0;
        for (std::size_t i = 0; i < l; ++i) mean += x[start + i];
        mean /= static_cast<double>(l);
        for (std::size_t i = 0; i < l; ++i) seg[i] = (x[start + i] - mean) * w[i];
        fft.fwd(spec, seg);
        for (std::size_t k = 0; k < nb; ++k) acc[k] += std::norm(spec[k]);
        ++count;
    }
    Spectrum out;
    out.hz.resize(nb);
    out.power.resize(nb);
    const double scale = 1.0 / (cfg.rate_hz * w2 * static_cast<double>(count));
    for (std::size_t k = 0; k < nb; ++k) {
        out.hz[k] = cfg.rate_hz * static_cast<double>(k) / static_cast<double>(l);
        const bool edge = k == 0 || (l % 2 == 0 && k == nb - 1);
        out.power[k] = acc[k] * scale * (edge ? 1.0 : 2.0);
    }
    return out;
}

// Welch bin spacing times the sum of the bins: the estimator's own variance estimate.
inline double total_power(const Spectrum& s) {
    if (s.size() < 2) return 0.0;
    const double df = s.hz[1] - s.hz[0];
    double acc = 0.0;
    for (double p : s.power) acc += p;
    return acc * df;
}

inline double band_rms(const Spectrum& psd, double f_lo, double f_hi) {
    detail::require(f_lo >= 0.0 && f_hi >= f_lo && f_hi <= psd.hz.back() * (1.0 + 1e-12),
                    "band_rms: require 0 <= f_lo <= f_hi <= Nyquist");
    if (f_hi <= f_lo) throw ParameterError("band_rms: empty band");
    return std::sqrt(integrate(psd, f_lo, std::min(f_hi, psd.hz.back())));
}

// sqrt(residual / disturbance) per bin; nullopt where the disturbance vanishes.
inline std::vector<std::optional<double>> empirical_rejection(const Spectrum& residual, const Spectrum& disturbance) {
    detail::require(residual.size() == disturbance.size(), "empirical_rejection: spectra must share a grid");
    for (std::size_t i = 0; i < residual.size(); ++i)
        detail::require(std::abs(residual.hz[i] - disturbance.hz[i]) <= 1e-9 * std::max(1.0, residual.hz[i]),
                        "empirical_rejection: spectra must share a grid");
    std::vector<std::optional<double>> out(residual.size());
    for (std::size_t i = 0; i < residual.size(); ++i)
        if (disturbance.power[i] > 0.0) out[i] = std::sqrt(residual.power[i] / disturbance.power[i]);
    return out;
}

inline double rms(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

// (ref - test) / ref; nullopt when ref is zero.
inline std::optional<double> relative_gain(double rms_ref, double rms_test) {
    if (rms_ref == 0.0) return std::nullopt;
    return (rms_ref - rms_test) / rms_ref;
}

struct ComparedSignal {
    std::string name;
    std::vector<double> residual;
    std::vector<double> disturbance;
    std::size_t saturations = 0;
    double rate_hz = 1.0;
};

struct BandEdge {
    double lo, hi;
};

struct ComparisonEntry {
    std::string name;
    double rms = 0.0;
    std::vector<double> band_rms;
    std::optional<double> max_rejection;  // max empirical |S|
    std::size_t saturations = 0;
};

struct ComparisonReport {
    std::vector<ComparisonEntry> entries;
    std::vector<BandEdge> bands;
    // gains[i][j] = relative gain of entry j with respect to reference entry i
    std::vector<std::vector<std::optional<double>>> gains;
};

inline ComparisonReport compare(const std::vector<ComparedSignal>& signals, std::vector<BandEdge> bands = {}) {
    detail::require(signals.size() >= 2, "compare: at least two traces required");
    for (const auto& s : signals)
        detail::require(s.residual.size() == signals.front().residual.size(), "compare: traces differ in length");
    ComparisonReport rep;
    rep.bands = std::move(bands);
    for (const auto& s : signals) {
        ComparisonEntry e;
        e.name = s.name;
        e.rms = rms(s.residual);
        e.saturations = s.saturations;
        if (s.residual.size() >= 16) {
            const WelchConfig cfg = default_welch(s.residual.size(), s.rate_hz);
            const Spectrum r = welch_psd(s.residual, cfg);
            for (const BandEdge& b : rep.bands) {
                const double lo = std::min(b.lo, r.hz.back()), hi = std::min(b.hi, r.hz.back());
                e.band_rms.push_back(hi > lo ? band_rms(r, lo, hi) : 0.0);
            }
            if (s.disturbance.size() == s.residual.size()) {
                const Spectrum d = welch_psd(s.disturbance, cfg);
                const double peak = *std::max_element(d.power.begin(), d.power.end());
                double mx = 0.0;
                bool any = false;
                const auto rej = empirical_rejection(r, d);
                for (std::size_t k = 1; k < rej.size(); ++k)
                    if (rej[k] && d.power[k] >= 1e-6 * peak) {
                        mx = std::max(mx, *rej[k]);
                        any = true;
                    }
                if (any) e.max_rejection = mx;
            }
        }
        rep.entries.push_back(std::move(e));
    }
    rep.gains.assign(rep.entries.size(), std::vector<std::optional<double>>(rep.entries.size()));
    for (std::size_t i = 0; i < rep.entries.size(); ++i)
        for (std::size_t j = 0; j < rep.entries.size(); ++j)
            rep.gains[i][j] = relative_gain(rep.entries[i].rms, rep.entries[j].rms);
    return rep;
}

inline nlohmann::json to_json(const ComparisonReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["bands_hz"] = nlohmann::json::array();
    for (const auto& b : r.bands) j["bands_hz"].push_back({b.lo, b.hi});
    j["entries"] = nlohmann::json::array();
    for (const auto& e : r.entries)
        j["entries"].push_back({{"name", e.name},
                                {"rms", e.rms},
                                {"band_rms", e.band_rms},
                                {"max_rejection", opt(e.max_rejection)},
                                {"saturations", e.saturations}});
    j["relative_gain"] = nlohmann::json::object();
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        nlohmann::json row = nlohmann::json::object();
        for (std::size_t k = 0; k < r.entries.size(); ++k)
            if (k != i) row[r.entries[k].name] = opt(r.gains[i][k]);
        j["relative_gain"][r.entries[i].name] = row;
    }
    return j;
}

}  // namespace aoctl
