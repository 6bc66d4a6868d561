#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <istream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

// Frequency grids, loop-element frequency responses and their closed-loop compositions.
namespace aoctl {

using Complex = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ============================================================================
// FrequencyGrid
// ============================================================================
// Ordered angular frequencies in (0, pi/Ts], Nyquist inclusive, DC excluded.
class FrequencyGrid {
public:
    FrequencyGrid() = default;

    FrequencyGrid(std::vector<double> omegas, double sample_period)
        : omegas_(std::move(omegas)), sample_period_(sample_period) {
        detail::require(std::isfinite(sample_period_) && sample_period_ > 0.0,
                        "FrequencyGrid: sample_period must be > 0");
        detail::require(omegas_.size() >= 2, "FrequencyGrid: at least 2 points required");
        const double nyquist = std::numbers::pi / sample_period_;
        const double slack = 1e-12 * nyquist;
        for (std::size_t i = 0; i < omegas_.size(); ++i) {
            const double w = omegas_[i];
            detail::require(std::isfinite(w) && w > 0.0 && w <= nyquist + slack,
                            "FrequencyGrid: frequencies must lie in (0, pi/Ts]");
            if (i > 0) detail::require(w > omegas_[i - 1], "FrequencyGrid: frequencies must be strictly increasing");
        }
        if (omegas_.back() > nyquist) omegas_.back() = nyquist;
    }

    static FrequencyGrid from_hz(std::span<const double> hz, double sample_period) {
        std::vector<double> w(hz.size());
        std::transform(hz.begin(), hz.end(), w.begin(), [](double f) { return kTwoPi * f; });
        return FrequencyGrid(std::move(w), sample_period);
    }

    [[nodiscard]] std::size_t size() const { return omegas_.size(); }
    [[nodiscard]] std::span<const double> omegas() const { return omegas_; }
    [[nodiscard]] double omega(std::size_t i) const { return omegas_[i]; }
    [[nodiscard]] double hz(std::size_t i) const { return omegas_[i] / kTwoPi; }
    [[nodiscard]] std::vector<double> hz() const {
        std::vector<double> f(omegas_.size());
        std::transform(omegas_.begin(), omegas_.end(), f.begin(), [](double w) { return w / kTwoPi; });
        return f;
    }
    // Normalized angular frequency omega*Ts in (0, pi].
    [[nodiscard]] double normalized(std::size_t i) const { return omegas_[i] * sample_period_; }
    [[nodiscard]] double sample_period() const { return sample_period_; }
    [[nodiscard]] double rate_hz() const { return 1.0 / sample_period_; }
    [[nodiscard]] double nyquist() const { return std::numbers::pi / sample_period_; }

    [[nodiscard]] bool is_uniform(double rel_tol = 1e-9) const {
        const double step = omegas_[1] - omegas_[0];
        for (std::size_t i = 2; i < omegas_.size(); ++i)
            if (std::abs((omegas_[i] - omegas_[i - 1]) - step) > rel_tol * omegas_.back()) return false;
        return true;
    }

    friend bool operator==(const FrequencyGrid& a, const FrequencyGrid& b) {
        if (a.omegas_.size() != b.omegas_.size()) return false;
        if (std::abs(a.sample_period_ - b.sample_period_) > 1e-12 * a.sample_period_) return false;
        for (std::size_t i = 0; i < a.omegas_.size(); ++i)
            if (std::abs(a.omegas_[i] - b.omegas_[i]) > 1e-12 * a.omegas_.back()) return false;
        return true;
    }

private:
    std::vector<double> omegas_;
    double sample_period_ = 1.0;
};

enum class Spacing { linear, log };

// Grid over [f_min, rate/2] with the Nyquist point forced as the last sample.
inline FrequencyGrid make_grid(double rate_hz, std::size_t count, Spacing spacing, double f_min_hz) {
    detail::require(std::isfinite(rate_hz) && rate_hz > 0.0, "make_grid: rate must be > 0");
    detail::require(count >= 2, "make_grid: count must be >= 2");
    const double f_max = rate_hz / 2.0;
    detail::require(std::isfinite(f_min_hz) && f_min_hz > 0.0 && f_min_hz < f_max,
                    "make_grid: require 0 < f_min < rate/2");
    std::vector<double> hz(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(count - 1);
        hz[i] = spacing == Spacing::linear ? f_min_hz + u * (f_max - f_min_hz)
                                           : f_min_hz * std::pow(f_max / f_min_hz, u);
    }
    hz.front() = f_min_hz;
    hz.back() = f_max;
    return FrequencyGrid::from_hz(hz, 1.0 / rate_hz);
}

// 512 log-spaced points from rate/1e4 to Nyquist.
inline FrequencyGrid default_grid(double rate_hz) {
    return make_grid(rate_hz, 512, Spacing::log, rate_hz * 1e-4);
}

// Union of a grid with extra frequencies (Hz); points closer than 1e-9 relative are merged.
inline FrequencyGrid merge_grid(const FrequencyGrid& grid, std::span<const double> extra_hz) {
    std::vector<double> w(grid.omegas().begin(), grid.omegas().end());
    for (double f : extra_hz) {
        const double wi = kTwoPi * f;
        if (wi > 0.0 && wi <= grid.nyquist()) w.push_back(wi);
    }
    std::sort(w.begin(), w.end());
    std::vector<double> out;
    out.reserve(w.size());
    for (double wi : w)
        if (out.empty() || wi - out.back() > 1e-9 * wi) out.push_back(wi);
    return FrequencyGrid(std::move(out), grid.sample_period());
}

// Trapezoid weights over the grid points (normalized angular frequency units).
// Doubled to account for the mirrored negative-frequency half.
inline std::vector<double> symmetric_trapezoid_weights(const FrequencyGrid& grid) {
    const std::size_t n = grid.size();
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = grid.normalized(i + 1) - grid.normalized(i);
        w[i] += h;      // 2 * h/2
        w[i + 1] += h;
    }
    return w;
}

// ============================================================================
// FrequencyResponse
// ============================================================================
class FrequencyResponse {
public:
    FrequencyResponse() = default;
    FrequencyResponse(FrequencyGrid grid, std::vector<Complex> values)
        : grid_(std::move(grid)), values_(std::move(values)) {
        detail::require(values_.size() == grid_.size(), "FrequencyResponse: one value per grid point required");
        for (const Complex& v : values_)
            detail::require(std::isfinite(v.real()) && std::isfinite(v.imag()),
                            "FrequencyResponse: values must be finite");
    }

    static FrequencyResponse constant(const FrequencyGrid& grid, Complex value) {
        return FrequencyResponse(grid, std::vector<Complex>(grid.size(), value));
    }

    [[nodiscard]] const FrequencyGrid& grid() const { return grid_; }
    [[nodiscard]] std::span<const Complex> values() const { return values_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] Complex operator[](std::size_t i) const { return values_[i]; }

    [[nodiscard]] std::vector<double> magnitude() const {
        std::vector<double> m(values_.size());
        std::transform(values_.begin(), values_.end(), m.begin(), [](Complex v) { return std::abs(v); });
        return m;
    }
    [[nodiscard]] double max_magnitude() const {
        double m = 0.0;
        for (const Complex& v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    // Linear interpolation of magnitude and unwrapped phase; constant
    // extrapolation below the first sample.
    [[nodiscard]] FrequencyResponse resample(const FrequencyGrid& target) const;

private:
    FrequencyGrid grid_;
    std::vector<Complex> values_;
};

namespace detail {

inline std::vector<double> unwrapped_phase(std::span<const Complex> v) {
    std::vector<double> ph(v.size());
    double offset = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double p = std::arg(v[i]);
        if (i > 0) {
            double d = p + offset - ph[i - 1];
            while (d > std::numbers::pi) { offset -= kTwoPi; d -= kTwoPi; }
            while (d < -std::numbers::pi) { offset += kTwoPi; d += kTwoPi; }
        }
        ph[i] = p + offset;
    }
    return ph;
}

inline void require_same_grid(const FrequencyResponse& a, const FrequencyResponse& b, const char* what) {
    if (!(a.grid() == b.grid())) throw ParameterError(std::string(what) + ": responses must share a grid");
}

}  // namespace detail

// Evaluates a sampled response between grid points: linear in magnitude and
// unwrapped phase, constant magnitude and phase ramping to zero below the
// first sample, constant above the last.
class ResponseInterpolator {
public:
    explicit ResponseInterpolator(const FrequencyResponse& r)
        : omegas_(r.grid().omegas().begin(), r.grid().omegas().end()),
          mag_(r.magnitude()),
          phase_(detail::unwrapped_phase(r.values())) {}

    [[nodiscard]] Complex operator()(double w) const {
        double m, p;
        if (w <= omegas_.front()) {
            m = mag_.front();
            p = phase_.front() * (std::max(w, 0.0) / omegas_.front());
        } else if (w >= omegas_.back()) {
            m = mag_.back();
            p = phase_.back();
        } else {
            const auto it = std::upper_bound(omegas_.begin(), omegas_.end(), w);
            const std::size_t j = static_cast<std::size_t>(it - omegas_.begin());
            const double t = (w - omegas_[j - 1]) / (omegas_[j] - omegas_[j - 1]);
            m = mag_[j - 1] + t * (mag_[j] - mag_[j - 1]);
            p = phase_[j - 1] + t * (phase_[j] - phase_[j - 1]);
        }
        return std::polar(m, p);
    }

private:
    std::vector<double> omegas_;
    std::vector<double> mag_;
    std::vector<double> phase_;
};

inline FrequencyResponse FrequencyResponse::resample(const FrequencyGrid& target) const {
    const ResponseInterpolator interp(*this);
    std::vector<Complex> out(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) out[i] = interp(target.omega(i));
    return FrequencyResponse(target, std::move(out));
}

// ============================================================================
// Loop elements
// ============================================================================
enum class WfsModel {
    unit_delay,  // WFS(z) = z^-1
    averaging    // WFS(s) = (1 - exp(-Ts s)) / (Ts s)
};

struct LoopTiming {
    double sample_period = 1e-3;  // seconds, 1/loop rate
    double latency = 0.0;         // seconds, RTC latency tau
    WfsModel wfs_model = WfsModel::unit_delay;
    // > 0 selects the sampled loop of the cascade simulator instead of the continuous
    // formula: the WFS averages `substeps` sub-samples per frame, the command is held from
    // the next sub-sample and delayed by `latency` with linear interpolation. wfs_model is
    // then ignored.
    int substeps = 0;
};

// FIR taps g_m of the sampled loop, G(q) = sum g_m q^m with q = z^-1 at the frame rate.
inline std::vector<double> sampled_plant_taps(const LoopTiming& timing) {
    detail::require(timing.substeps > 0, "sampled_plant_taps: substeps must be > 0");
    const int r = timing.substeps;
    const double d = timing.latency * r / timing.sample_period;
    const int whole = static_cast<int>(std::floor(d + 1e-9));
    double f = std::max(0.0, d - whole);
    if (f < 1e-9) f = 0.0;
    std::vector<double> g;
    auto add = [&](int lag, double w) {
        for (int i = 0; i < r; ++i) {
            const int num = i - lag;
            const int fl = num >= 0 ? num / r : -((-num + r - 1) / r);
            const auto m = static_cast<std::size_t>(1 - fl);
            if (g.size() <= m) g.resize(m + 1, 0.0);
            g[m] += w / r;
        }
    };
    add(whole, 1.0 - f);
    if (f > 0.0) add(whole + 1, f);
    return g;
}

// Plant G = WFS * exp(-j w tau) * DM with DM = 1, evaluated at a single angular frequency.
inline Complex plant_value(const LoopTiming& timing, double omega) {
    if (timing.substeps > 0) {
        const std::vector<double> g = sampled_plant_taps(timing);
        Complex acc = 0.0;
        for (std::size_t m = 0; m < g.size(); ++m) acc += g[m] * std::polar(1.0, -omega * timing.sample_period * m);
        return acc;
    }
    const Complex latency = std::polar(1.0, -omega * timing.latency);
    const double wt = omega * timing.sample_period;
    if (timing.wfs_model == WfsModel::unit_delay) return std::polar(1.0, -wt) * latency;
    if (wt == 0.0) return latency;
    const Complex jwt(0.0, wt);
    return (1.0 - std::exp(-jwt)) / jwt * latency;
}

inline FrequencyResponse plant_response(const LoopTiming& timing, const FrequencyGrid& grid) {
    detail::require(timing.sample_period > 0.0 && timing.latency >= 0.0, "plant_response: invalid timing");
    detail::require(std::abs(grid.sample_period() - timing.sample_period) <= 1e-12 * timing.sample_period,
                    "plant_response: grid sample period differs from loop timing");
    std::vector<Complex> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) v[i] = plant_value(timing, grid.omega(i));
    return FrequencyResponse(grid, std::move(v));
}

// Rational counterpart of the plant for the Nyquist test. The fractional part of the
// delay (latency plus the averaging WFS half sample) becomes the linear interpolation
// (1 - f) + f z^-1, so the locus is real at Nyquist and closes. The sampled loop is
// already rational and is returned unchanged.
inline Complex rational_plant_value(const LoopTiming& timing, double omega) {
    if (timing.substeps > 0) return plant_value(timing, omega);
    const double wt = omega * timing.sample_period;
    double d = timing.latency / timing.sample_period;
    double gain = 1.0;
    if (timing.wfs_model == WfsModel::unit_delay) {
        d += 1.0;
    } else {
        d += 0.5;
        if (wt != 0.0) gain = std::sin(0.5 * wt) / (0.5 * wt);
    }
    const double whole = std::floor(d + 1e-9);
    const double f = std::max(0.0, d - whole);
    return gain * std::polar(1.0, -wt * whole) * ((1.0 - f) + f * std::polar(1.0, -wt));
}

inline FrequencyResponse rational_plant_response(const LoopTiming& timing, const FrequencyGrid& grid) {
    detail::require(timing.sample_period > 0.0 && timing.latency >= 0.0, "plant_response: invalid timing");
    std::vector<Complex> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) v[i] = rational_plant_value(timing, grid.omega(i));
    return FrequencyResponse(grid, std::move(v));
}

namespace detail {

inline Complex loop_return_difference(Complex g, Complex k) {
    const Complex gk = g * k;
    const Complex f = 1.0 + gk;
    if (std::abs(f) <= 1e-14 * std::max(1.0, std::abs(gk)))
        throw SingularityError("closed loop singular: 1 + G K = 0 on the grid");
    return f;
}

}  // namespace detail

// S = 1 / (1 + G K)
inline FrequencyResponse sensitivity(const FrequencyResponse& G, const FrequencyResponse& K) {
    detail::require_same_grid(G, K, "sensitivity");
    std::vector<Complex> s(G.size());
    for (std::size_t i = 0; i < G.size(); ++i) s[i] = 1.0 / detail::loop_return_difference(G[i], K[i]);
    return FrequencyResponse(G.grid(), std::move(s));
}

// T = G K / (1 + G K)
inline FrequencyResponse comp_sensitivity(const FrequencyResponse& G, const FrequencyResponse& K) {
    detail::require_same_grid(G, K, "comp_sensitivity");
    std::vector<Complex> t(G.size());
    for (std::size_t i = 0; i < G.size(); ++i) t[i] = G[i] * K[i] / detail::loop_return_difference(G[i], K[i]);
    return FrequencyResponse(G.grid(), std::move(t));
}

// ============================================================================
// CSV: frequency_hz,real,imag
// ============================================================================
inline void write_csv(std::ostream& os, const FrequencyResponse& r) {
    os << "frequency_hz,real,imag\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < r.size(); ++i)
        os << r.grid().hz(i) << ',' << r[i].real() << ',' << r[i].imag() << '\n';
}

inline FrequencyResponse read_response_csv(std::istream& is, double sample_period) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("frequency_hz,real,imag", 0) != 0)
        throw ParameterError("response CSV: missing header 'frequency_hz,real,imag'");
    std::vector<double> hz;
    std::vector<Complex> v;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        double f, re, im;
        char c1, c2;
        if (!(ss >> f >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',')
            throw ParameterError("response CSV: malformed line " + std::to_string(lineno));
        hz.push_back(f);
        v.emplace_back(re, im);
    }
    return FrequencyResponse(FrequencyGrid::from_hz(hz, sample_period), std::move(v));
}

}  // namespace aoctl
