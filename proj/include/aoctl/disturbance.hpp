#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "error.hpp"
#include "spectrum.hpp"

// Disturbance spectra, FIR noise shaping and measurement-noise models.
namespace aoctl {

struct AtmosphericPsdParams {
    double low_freq_level = 1.0;  // power/Hz on the plateau
    double knee_hz = 10.0;
    double slope = -17.0 / 3.0;   // high-frequency exponent
    double rate_hz = 1000.0;

    void check() const {
        detail::require(std::isfinite(low_freq_level) && low_freq_level > 0.0, "atmospheric PSD: level must be > 0");
        detail::require(knee_hz > 0.0 && knee_hz < rate_hz / 2.0, "atmospheric PSD: require 0 < knee < rate/2");
        detail::require(std::isfinite(slope) && slope < 0.0, "atmospheric PSD: slope must be < 0");
    }
};

struct VibrationPeak {
    double center_hz = 0.0;
    double quality_factor = 50.0;
    double power_gain = 10.0;  // peak height relative to the continuum at center
};

struct FirModel {
    std::vector<double> taps;
    double rate_hz = 1.0;
};

struct NoiseParams {
    double n_q = 0.0;    // photons per frame
    double n_r = 0.0;    // read noise, electrons RMS
    double kappa = 0.0;  // modal noise propagation

    void check() const {
        detail::require(n_q >= 0.0 && n_r >= 0.0 && kappa >= 0.0, "noise parameters must be >= 0");
    }
};

// PSD(f) = level / (1 + (f/knee)^-slope)
inline Spectrum atmospheric_psd(const AtmosphericPsdParams& p, const std::vector<double>& hz) {
    p.check();
    Spectrum s;
    s.hz = hz;
    s.power.resize(hz.size());
    for (std::size_t i = 0; i < hz.size(); ++i) {
        detail::require(hz[i] >= 0.0 && hz[i] <= p.rate_hz / 2.0 * (1.0 + 1e-12),
                        "atmospheric PSD: frequency outside [0, rate/2]");
        s.power[i] = p.low_freq_level / (1.0 + std::pow(hz[i] / p.knee_hz, -p.slope));
    }
    return s;
}

// Unit-peak second-order resonance |H(f)|^2 = 1 / (1 + Q^2 (f/f0 - f0/f)^2).
inline double resonance_gain(double f, double f0, double q) {
    if (f <= 0.0) return 0.0;
    const double d = f / f0 - f0 / f;
    return 1.0 / (1.0 + q * q * d * d);
}

// Power added by one peak over (0, inf): gain * continuum(f0) * pi f0 / (2Q).
inline double vibration_peak_power(const VibrationPeak& pk, double continuum_at_center) {
    return pk.power_gain * continuum_at_center * std::numbers::pi * pk.center_hz / (2.0 * pk.quality_factor);
}

inline Spectrum add_vibration_peaks(const Spectrum& psd, const std::vector<VibrationPeak>& peaks, double nyquist_hz) {
    psd.check();
    Spectrum out = psd;
    for (const VibrationPeak& pk : peaks) {
        detail::require(pk.center_hz > 0.0 && pk.center_hz < nyquist_hz, "vibration peak outside (0, Nyquist)");
        detail::require(pk.quality_factor > 0.0 && pk.power_gain > 0.0, "vibration peak: Q and gain must be > 0");
        const double level = pk.power_gain * psd.at(pk.center_hz);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.power[i] += level * resonance_gain(out.hz[i], pk.center_hz, pk.quality_factor);
    }
    return out;
}

// Frequency-sampling FIR design: |H| = sqrt(target * rate/2) so that unit-variance
// white noise through the taps has the target one-sided PSD.
inline FirModel fit_fir_to_psd(const Spectrum& target, std::size_t length, double rate_hz) {
    target.check();
    const std::size_t n = target.size();
    detail::require(n >= 2 && target.is_uniform() && target.hz.front() == 0.0 &&
                        std::abs(target.hz.back() - rate_hz / 2.0) <= 1e-9 * rate_hz,
                    "fit_fir_to_psd: target must be sampled uniformly over [0, rate/2]");
    const std::size_t m = 2 * (n - 1);
    detail::require(length >= 1 && length <= m, "fit_fir_to_psd: require 1 <= L <= 2 (grid size - 1)");

    const double delay = 0.5 * static_cast<double>(length - 1);
    std::vector<std::complex<double>> spec(m);
    for (std::size_t k = 0; k < n; ++k) {
        const double amp = std::sqrt(target.power[k] * rate_hz / 2.0);
        spec[k] = std::polar(amp, -2.0 * std::numbers::pi * static_cast<double>(k) * delay / static_cast<double>(m));
    }
    // Nyquist bin must be real for a real impulse response.
    spec[n - 1] = {std::abs(spec[n - 1]) * std::cos(std::numbers::pi * delay), 0.0};
    for (std::size_t k = n; k < m; ++k) spec[k] = std::conj(spec[m - k]);

    Eigen::FFT<double> fft;
    std::vector<double> h;
    fft.inv(h, spec);

    FirModel model;
    model.rate_hz = rate_hz;
    model.taps.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
        const double w =
            length == 1 ? 1.0
                        : 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) /
                                                static_cast<double>(length + 1)));
        model.taps[i] = h[i % m] * w;
    }
    return model;
}

// Unit-variance white Gaussian noise convolved with the taps; warm-up discarded.
inline std::vector<double> generate_timeseries(const FirModel& model, std::size_t n, std::uint64_t seed) {
    detail::require(n >= 1, "generate_timeseries: n must be >= 1");
    detail::require(!model.taps.empty(), "generate_timeseries: empty FIR");
    const std::size_t l = model.taps.size();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(n + l - 1);
    for (double& v : w) v = normal(rng);
    std::vector<double> y = detail::convolve(w, model.taps);
    return {y.begin() + static_cast<std::ptrdiff_t>(l - 1), y.begin() + static_cast<std::ptrdiff_t>(l - 1 + n)};
}

// SNR = n_q / sqrt(n_q + 4 n_r^2)
inline double signal_to_noise(const NoiseParams& p) {
    p.check();
    if (p.n_q <= 0.0) throw UndefinedError("measurement noise undefined: zero photon flux gives infinite noise");
    return p.n_q / std::sqrt(p.n_q + 4.0 * p.n_r * p.n_r);
}

inline double measurement_noise_sigma(const NoiseParams& p) { return p.kappa / signal_to_noise(p); }

inline long long sample_photon_noise(double n_q, std::uint64_t seed) {
    detail::require(std::isfinite(n_q) && n_q >= 0.0, "sample_photon_noise: n_q must be >= 0");
    if (n_q == 0.0) return 0;
    std::mt19937_64 rng(seed);
    std::poisson_distribution<long long> d(n_q);
    return d(rng);
}

inline std::vector<long long> sample_photon_counts(double n_q, std::size_t count, std::uint64_t seed) {
    detail::require(std::isfinite(n_q) && n_q >= 0.0, "sample_photon_counts: n_q must be >= 0");
    std::vector<long long> out(count, 0);
    if (n_q == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::poisson_distribution<long long> d(n_q);
    for (auto& v : out) v = d(rng);
    return out;
}

// ============================================================================
// DisturbanceModel: continuum + peaks, fitted once, sampled per mode
// ============================================================================
struct DisturbanceModel {
    AtmosphericPsdParams atmosphere;
    std::vector<VibrationPeak> peaks;
    std::size_t psd_points = 16385;  // uniform samples over [0, Nyquist]
    std::size_t fir_length = 16384;

    [[nodiscard]] Spectrum target_psd() const {
        const Spectrum cont = atmospheric_psd(atmosphere, uniform_frequencies(atmosphere.rate_hz, psd_points));
        return add_vibration_peaks(cont, peaks, atmosphere.rate_hz / 2.0);
    }

    // Same model evaluated on arbitrary frequencies (peaks referenced to the continuum).
    [[nodiscard]] std::vector<double> psd_at(const std::vector<double>& hz) const {
        const Spectrum cont = atmospheric_psd(atmosphere, hz);
        std::vector<double> out = cont.power;
        for (const VibrationPeak& pk : peaks) {
            const double c = atmosphere.low_freq_level / (1.0 + std::pow(pk.center_hz / atmosphere.knee_hz, -atmosphere.slope));
            for (std::size_t i = 0; i < hz.size(); ++i)
                out[i] += pk.power_gain * c * resonance_gain(hz[i], pk.center_hz, pk.quality_factor);
        }
        return out;
    }

    [[nodiscard]] FirModel fit() const { return fit_fir_to_psd(target_psd(), fir_length, atmosphere.rate_hz); }
};

// Per-mode amplitude scale (j+1)^exponent.
inline double mode_scale(std::size_t mode, double exponent) {
    return std::pow(static_cast<double>(mode + 1), exponent);
}

}  // namespace aoctl
