#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "error.hpp"

// One-sided power spectra on explicit frequency lists, and FFT helpers.
// Convention: variance = integral over [0, Nyquist] of power df.
namespace aoctl {

struct Spectrum {
    std::vector<double> hz;
    std::vector<double> power;

    [[nodiscard]] std::size_t size() const { return hz.size(); }

    void check() const {
        detail::require(hz.size() == power.size(), "Spectrum: one power value per frequency required");
        for (std::size_t i = 0; i < hz.size(); ++i) {
            detail::require(std::isfinite(hz[i]) && hz[i] >= 0.0, "Spectrum: frequencies must be finite and >= 0");
            detail::require(std::isfinite(power[i]) && power[i] >= 0.0, "Spectrum: power must be finite and >= 0");
            if (i > 0) detail::require(hz[i] > hz[i - 1], "Spectrum: frequencies must be strictly increasing");
        }
    }

    [[nodiscard]] bool is_uniform(double rel_tol = 1e-9) const {
        if (hz.size() < 2) return false;
        const double step = hz[1] - hz[0];
        for (std::size_t i = 2; i < hz.size(); ++i)
            if (std::abs(hz[i] - hz[i - 1] - step) > rel_tol * hz.back()) return false;
        return true;
    }

    // Linear interpolation in frequency, clamped at both ends.
    [[nodiscard]] double at(double f) const {
        if (f <= hz.front()) return power.front();
        if (f >= hz.back()) return power.back();
        const auto it = std::upper_bound(hz.begin(), hz.end(), f);
        const std::size_t j = static_cast<std::size_t>(it - hz.begin());
        const double t = (f - hz[j - 1]) / (hz[j] - hz[j - 1]);
        return power[j - 1] + t * (power[j] - power[j - 1]);
    }
};

// n points 0, df, ..., rate/2.
inline std::vector<double> uniform_frequencies(double rate_hz, std::size_t n) {
    detail::require(rate_hz > 0.0 && n >= 2, "uniform_frequencies: rate > 0 and n >= 2 required");
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = 0.5 * rate_hz * static_cast<double>(i) / static_cast<double>(n - 1);
    return f;
}

// Trapezoidal integral of the spectrum over [f_lo, f_hi].
inline double integrate(const Spectrum& s, double f_lo, double f_hi) {
    detail::require(f_hi > f_lo, "integrate: empty band");
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const double a = std::max(s.hz[i], f_lo);
        const double b = std::min(s.hz[i + 1], f_hi);
        if (b <= a) continue;
        acc += 0.5 * (s.at(a) + s.at(b)) * (b - a);
    }
    return acc;
}

inline double integrate(const Spectrum& s) { return integrate(s, s.hz.front(), s.hz.back()); }

inline void write_csv(std::ostream& os, const Spectrum& s) {
    os << "frequency_hz,power\n" << std::setprecision(17);
    for (std::size_t i = 0; i < s.size(); ++i) os << s.hz[i] << ',' << s.power[i] << '\n';
}

inline Spectrum read_spectrum_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("frequency_hz,power", 0) != 0)
        throw ParameterError("spectrum CSV: missing header 'frequency_hz,power'");
    Spectrum s;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        double f, p;
        char c;
        if (!(ss >> f >> c >> p) || c != ',') throw ParameterError("spectrum CSV: malformed line " + std::to_string(lineno));
        s.hz.push_back(f);
        s.power.push_back(p);
    }
    s.check();
    return s;
}

namespace detail {

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Linear convolution, direct for short kernels.
inline std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h) {
    if (x.empty() || h.empty()) return {};
    const std::size_t n = x.size() + h.size() - 1;
    std::vector<double> y(n, 0.0);
    if (h.size() <= 64 || x.size() <= 64) {
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
        return y;
    }
    const std::size_t m = next_pow2(n);
    Eigen::FFT<double> fft;
    std::vector<double> xp(x), hp(h);
    xp.resize(m, 0.0);
    hp.resize(m, 0.0);
    std::vector<std::complex<double>> X, H;
    fft.fwd(X, xp);
    fft.fwd(H, hp);
    for (std::size_t k = 0; k < X.size(); ++k) X[k] *= H[k];
    std::vector<double> out;
    fft.inv(out, X);
    out.resize(n);
    return out;
}

}  // namespace detail
}  // namespace aoctl
