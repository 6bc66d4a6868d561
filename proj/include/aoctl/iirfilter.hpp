#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"
#include "freqmodel.hpp"

// IIR controllers K(z) = (b0 + b1 z^-1 + ... + bn z^-n) / (1 + a1 z^-1 + ... + an z^-n)
namespace aoctl {

class IirController {
public:
    IirController() : b_{0.0} {}

    // b has n+1 entries, a has n entries (leading denominator coefficient is 1).
    IirController(std::vector<double> b, std::vector<double> a) : b_(std::move(b)), a_(std::move(a)) {
        detail::require(!b_.empty(), "IirController: numerator must have at least one coefficient");
        detail::require(b_.size() == a_.size() + 1, "IirController: len(b) must equal len(a) + 1");
        for (double c : b_) detail::require(std::isfinite(c), "IirController: non-finite numerator coefficient");
        for (double c : a_) detail::require(std::isfinite(c), "IirController: non-finite denominator coefficient");
    }

    [[nodiscard]] std::size_t order() const { return a_.size(); }
    [[nodiscard]] std::span<const double> b() const { return b_; }
    [[nodiscard]] std::span<const double> a() const { return a_; }

    // Numerator and denominator at z^-1 = q.
    [[nodiscard]] Complex numerator_at(Complex q) const {
        Complex acc = 0.0;
        for (std::size_t i = b_.size(); i-- > 0;) acc = acc * q + b_[i];
        return acc;
    }
    [[nodiscard]] Complex denominator_at(Complex q) const {
        Complex acc = 0.0;
        for (std::size_t i = a_.size(); i-- > 0;) acc = acc * q + a_[i];
        return 1.0 + acc * q;
    }

    // K(e^{j wTs}) for normalized angular frequency wTs.
    [[nodiscard]] Complex response(double normalized_omega) const {
        const Complex q = std::polar(1.0, -normalized_omega);
        const Complex den = denominator_at(q);
        const Complex num = numerator_at(q);
        if (std::abs(den) <= 1e-14 * std::max(1.0, std::abs(num)))
            throw SingularityError("IIR denominator vanishes on the unit circle");
        return num / den;
    }

    friend bool operator==(const IirController&, const IirController&) = default;

private:
    std::vector<double> b_;
    std::vector<double> a_;
};

// Direct-Form I history: past measurements and past commands, newest first.
class FilterState {
public:
    FilterState() = default;
    explicit FilterState(std::size_t order) : m_(order, 0.0), u_(order, 0.0) {}

    [[nodiscard]] std::size_t order() const { return m_.size(); }
    [[nodiscard]] std::span<const double> measurements() const { return m_; }
    [[nodiscard]] std::span<const double> commands() const { return u_; }
    // Set once the filter has produced a non-finite command.
    [[nodiscard]] bool nonfinite() const { return nonfinite_; }

    void reset() {
        std::fill(m_.begin(), m_.end(), 0.0);
        std::fill(u_.begin(), u_.end(), 0.0);
        nonfinite_ = false;
    }

    // Replaces the most recent command in the history, e.g. with its saturated value.
    void override_last_command(double u) {
        if (!u_.empty()) u_.front() = u;
    }

private:
    friend double step(const IirController&, FilterState&, double);
    std::vector<double> m_;
    std::vector<double> u_;
    bool nonfinite_ = false;
};

// u[k] = sum_{i=0..n} b_i m[k-i] - sum_{i=1..n} a_i u[k-i]
inline double step(const IirController& ctrl, FilterState& state, double m_k) {
    const std::size_t n = ctrl.order();
    if (state.order() != n) throw ParameterError("step: filter state not sized to controller order");
    const auto b = ctrl.b();
    const auto a = ctrl.a();
    double u = b[0] * m_k;
    for (std::size_t i = 0; i < n; ++i) u += b[i + 1] * state.m_[i] - a[i] * state.u_[i];
    if (n > 0) {
        std::copy_backward(state.m_.begin(), state.m_.end() - 1, state.m_.end());
        std::copy_backward(state.u_.begin(), state.u_.end() - 1, state.u_.end());
        state.m_.front() = m_k;
        state.u_.front() = u;
    }
    if (!std::isfinite(u)) state.nonfinite_ = true;
    return u;
}

inline FrequencyResponse eval_freq(const IirController& ctrl, const FrequencyGrid& grid) {
    std::vector<Complex> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) v[i] = ctrl.response(grid.normalized(i));
    return FrequencyResponse(grid, std::move(v));
}

// S = 1 / (1 + G K) as D / (D + G N), finite where K has poles on the unit circle.
inline FrequencyResponse loop_sensitivity(const FrequencyResponse& plant, const IirController& k) {
    const FrequencyGrid& grid = plant.grid();
    std::vector<Complex> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Complex q = std::polar(1.0, -grid.normalized(i));
        const Complex d = k.denominator_at(q);
        v[i] = d / (d + plant[i] * k.numerator_at(q));
    }
    return FrequencyResponse(grid, std::move(v));
}

// Pure gain (b = [1]).
inline IirController passthrough() { return IirController({1.0}, {}); }

inline IirController zero_controller() { return IirController({0.0}, {}); }

// u[k] = gain * m[k] + u[k-1]
inline IirController integrator(double gain) {
    detail::require(std::isfinite(gain), "integrator: gain must be finite");
    return IirController({gain, 0.0}, {-1.0});
}

// Roots of z^n + a1 z^{n-1} + ... + an via companion-matrix eigenvalues.
inline std::vector<Complex> denominator_poles(const IirController& ctrl) {
    const std::size_t n = ctrl.order();
    if (n == 0) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const auto a = ctrl.a();
    for (std::size_t j = 0; j < n; ++j) companion(0, static_cast<Eigen::Index>(j)) = -a[j];
    for (std::size_t i = 1; i < n; ++i) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    std::vector<Complex> roots(n);
    for (std::size_t i = 0; i < n; ++i) roots[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
    return roots;
}

// ============================================================================
// JSON: {order, b: [...], a: [...], rate_hz}
// ============================================================================
inline nlohmann::json to_json(const IirController& ctrl, double rate_hz) {
    return nlohmann::json{{"order", ctrl.order()},
                          {"b", std::vector<double>(ctrl.b().begin(), ctrl.b().end())},
                          {"a", std::vector<double>(ctrl.a().begin(), ctrl.a().end())},
                          {"rate_hz", rate_hz}};
}

struct RatedController {
    IirController controller;
    double rate_hz = 0.0;
};

inline RatedController controller_from_json(const nlohmann::json& j) {
    try {
        const auto order = j.at("order").get<std::size_t>();
        auto b = j.at("b").get<std::vector<double>>();
        auto a = j.at("a").get<std::vector<double>>();
        if (a.size() != order) throw ParameterError("controller JSON: len(a) differs from order");
        return {IirController(std::move(b), std::move(a)), j.at("rate_hz").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("controller JSON: ") + e.what());
    }
}

}  // namespace aoctl
