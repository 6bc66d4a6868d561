#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "conic.hpp"
#include "error.hpp"
#include "freqmodel.hpp"
#include "iirfilter.hpp"

// Frequency-domain data-driven mixed H2/Hinf synthesis of IIR controllers.
//
// With K = X / Y (Y monic) and S = Y / P, P = Y + G X, the constraints
//   |W1 S|^2 <= Gamma(w),  |W2 T|^2 <= gamma,  |mu S|^2 <= 1
// are quadratic-over-linear in (X, Y). Around the previous iterate
// P_c = Y_c + G X_c the denominator |P|^2 is replaced by its lower bound
// L(P) = 2 Re(P conj(P_c)) - |P_c|^2 <= |P|^2, which turns each constraint into
// a 2x2 Hermitian block [[., .],[., L]] >= 0 affine in the decision variables.
// Iterating the resulting convex program decreases the true objective.
namespace aoctl {

enum class ControllerStructure {
    free,        // x_0..x_n and y_1..y_n all free
    integrator   // order 1, Y = 1 - z^-1, X = x_0
};

struct SolverSettings {
    double strict_eps = 1e-9;       // strict inequalities become >= strict_eps on the lower-right entry
    double margin_backoff = 1e-3;   // grid constraint uses mu*(1+backoff) so the bound holds between points
    int validation_density = 10;    // dense validation grid size relative to the synthesis grid
    int max_refinements = 3;        // margin-point refinement rounds when the dense check fails
    conic::BarrierSettings barrier{};
};

struct SynthesisProblem {
    FrequencyResponse plant;                    // G on the synthesis grid
    std::vector<double> disturbance_amplitude;  // Phi = sqrt(one-sided PSD), one per grid point
    double alpha = 0.0;                         // W2 level
    double modulus_margin = 0.5;                // mu
    int order = 1;
    ControllerStructure structure = ControllerStructure::free;
    std::optional<double> bandwidth_hz;         // overrides the 0 dB crossing of the initial controller
    std::optional<LoopTiming> timing;           // plant model for dense validation; interpolated otherwise
    SolverSettings solver{};

    [[nodiscard]] const FrequencyGrid& grid() const { return plant.grid(); }
};

// Numerator X = x_0 + x_1 z^-1 + ..., monic Y = 1 + y_1 z^-1 + ...
struct ControllerFactorization {
    std::vector<double> x;
    std::vector<double> y;

    static ControllerFactorization from_controller(const IirController& k, std::size_t order) {
        if (k.order() > order) throw ParameterError("factorization: controller order exceeds target order");
        ControllerFactorization f;
        f.x.assign(order + 1, 0.0);
        f.y.assign(order + 1, 0.0);
        f.y[0] = 1.0;
        for (std::size_t i = 0; i < k.b().size(); ++i) f.x[i] = k.b()[i];
        for (std::size_t i = 0; i < k.a().size(); ++i) f.y[i + 1] = k.a()[i];
        return f;
    }

    [[nodiscard]] IirController controller() const {
        return IirController(x, std::vector<double>(y.begin() + 1, y.end()));
    }
};

struct Weights {
    std::vector<double> w1;  // Phi(w) / Phi(w_bw)
    double w2 = 0.0;         // alpha
    double omega_bw = 0.0;   // rad/s
};

enum class SynthesisStatus { converged, max_iter, infeasible };

inline const char* to_string(SynthesisStatus s) {
    switch (s) {
        case SynthesisStatus::converged: return "converged";
        case SynthesisStatus::max_iter: return "max_iter";
        case SynthesisStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

struct SynthesisResult {
    IirController controller;
    std::vector<double> objective_trace;
    double gamma = 0.0;
    std::vector<double> gamma_grid;
    double margin_achieved = 0.0;  // max |S| on the dense validation grid
    int iterations = 0;
    int refinements = 0;
    SynthesisStatus status = SynthesisStatus::max_iter;
    std::string diagnostics;
    std::string initial = "integrator";  // start the result was iterated from
};

struct ConvexStepResult {
    ControllerFactorization factorization;
    double objective = 0.0;
    double gamma = 0.0;
    std::vector<double> gamma_grid;
    bool feasible = false;
    bool improved = false;  // false when the previous iterate was kept
    int newton_steps = 0;
};

struct ValidationReport {
    double max_sensitivity = 0.0;
    double peak_frequency_hz = 0.0;
    bool margin_ok = false;
    bool stable = false;
    int winding_number = 0;
    int unstable_controller_poles = 0;
    int unstable_closed_loop_poles = 0;
    std::string diagnostics;

    [[nodiscard]] bool passed() const { return stable && margin_ok; }
};

// ============================================================================
// Validation: dense-grid modulus margin and discrete Nyquist criterion
// ============================================================================
namespace detail {

// Open-loop return difference 1 + G K evaluated on the circle |z| = radius.
inline Complex return_difference(const IirController& k, Complex g, double theta, double radius) {
    const Complex q = std::polar(1.0 / radius, -theta);
    return 1.0 + g * k.numerator_at(q) / k.denominator_at(q);
}

inline std::vector<double> winding_angles(const IirController& k, double theta_min_plant,
                                          std::span<const Complex> poles, double delta) {
    std::vector<double> th;
    th.push_back(0.0);
    const int n_uniform = 20000;
    for (int i = 1; i <= n_uniform; ++i) th.push_back(std::numbers::pi * i / n_uniform);
    // Resolve the neighbourhood of DC and of poles near the unit circle.
    const double lo = 1e-3 * delta;
    const double hi = std::max(theta_min_plant, 1e-2);
    for (int i = 0; i <= 400; ++i) th.push_back(lo * std::pow(hi / lo, i / 400.0));
    for (const Complex& p : poles) {
        if (std::abs(std::abs(p) - 1.0) > 1e-2) continue;
        const double c = std::abs(std::arg(p));
        const double dist = std::max(std::abs(std::abs(p) - 1.0), lo);
        for (int i = 0; i <= 200; ++i) {
            const double off = 1e-2 * dist * std::pow(1e4, i / 200.0);
            if (c - off > 0.0) th.push_back(c - off);
            if (c + off < std::numbers::pi) th.push_back(c + off);
        }
        th.push_back(c);
    }
    (void)k;
    std::sort(th.begin(), th.end());
    th.erase(std::unique(th.begin(), th.end()), th.end());
    return th;
}

}  // namespace detail

// plant must be sampled densely (the caller picks the grid). nyquist_plant, when given,
// replaces plant in the winding count (see rational_plant_response).
inline ValidationReport validate(const IirController& k, const FrequencyResponse& plant, double mu,
                                 const FrequencyResponse* nyquist_plant = nullptr) {
    ValidationReport rep;
    const FrequencyGrid& grid = plant.grid();

    // Peak |S| on the unit circle, S = D / (D + G N).
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Complex q = std::polar(1.0, -grid.normalized(i));
        const Complex d = k.denominator_at(q);
        const Complex f = d + plant[i] * k.numerator_at(q);
        const double s = std::abs(f) > 0.0 ? std::abs(d) / std::abs(f) : std::numeric_limits<double>::infinity();
        if (s > rep.max_sensitivity) {
            rep.max_sensitivity = s;
            rep.peak_frequency_hz = grid.hz(i);
        }
    }
    rep.margin_ok = rep.max_sensitivity <= 1.0 / mu + 1e-6;

    // Nyquist on |z| = 1 + delta so marginal controller poles lie inside the contour.
    constexpr double delta = 1e-6;
    const std::vector<Complex> poles = denominator_poles(k);
    for (const Complex& p : poles)
        if (std::abs(p) > 1.0 + delta) ++rep.unstable_controller_poles;

    const ResponseInterpolator g_at(nyquist_plant ? *nyquist_plant : plant);
    const std::vector<double> th = detail::winding_angles(k, grid.normalized(0), poles, delta);
    double total = 0.0;
    double min_abs = std::numeric_limits<double>::infinity();
    Complex prev = detail::return_difference(k, g_at(0.0), 0.0, 1.0 + delta);
    for (std::size_t i = 1; i < th.size(); ++i) {
        const Complex cur =
            detail::return_difference(k, g_at(th[i] / grid.sample_period()), th[i], 1.0 + delta);
        min_abs = std::min(min_abs, std::abs(cur));
        total += std::arg(cur / prev);
        prev = cur;
    }
    // Conjugate symmetry: the lower half of the circle contributes the same phase change.
    const double w = total / std::numbers::pi;
    rep.winding_number = static_cast<int>(std::lround(w));
    rep.unstable_closed_loop_poles = rep.unstable_controller_poles - rep.winding_number;
    rep.stable = rep.unstable_closed_loop_poles == 0 && min_abs > 1e-12;

    std::ostringstream os;
    os << "max|S|=" << rep.max_sensitivity << " at " << rep.peak_frequency_hz << " Hz (limit " << 1.0 / mu
       << "), winding=" << w << ", unstable controller poles=" << rep.unstable_controller_poles;
    if (!rep.stable) os << ", closed loop UNSTABLE (" << rep.unstable_closed_loop_poles << " poles outside)";
    rep.diagnostics = os.str();
    return rep;
}

// Dense log grid (density x points) merged with the base grid.
inline FrequencyGrid dense_grid(const FrequencyGrid& base, int density) {
    const std::size_t n = base.size() * static_cast<std::size_t>(std::max(density, 1));
    const FrequencyGrid log_grid = make_grid(base.rate_hz(), n, Spacing::log, base.hz(0));
    const std::vector<double> extra = base.hz();
    return merge_grid(log_grid, extra);
}

inline ValidationReport validate(const IirController& k, const LoopTiming& timing, double mu,
                                 const FrequencyGrid& grid) {
    const FrequencyResponse rational = rational_plant_response(timing, grid);
    return validate(k, plant_response(timing, grid), mu, &rational);
}

// ============================================================================
// Problem helpers
// ============================================================================
namespace detail {

inline void check_problem(const SynthesisProblem& p) {
    const std::size_t n = p.grid().size();
    require(p.disturbance_amplitude.size() == n, "synthesis: disturbance spectrum size differs from grid");
    for (double v : p.disturbance_amplitude)
        require(std::isfinite(v) && v >= 0.0, "synthesis: disturbance spectrum must be finite and >= 0");
    require(*std::max_element(p.disturbance_amplitude.begin(), p.disturbance_amplitude.end()) > 0.0,
            "synthesis: disturbance spectrum is identically zero");
    require(std::isfinite(p.alpha) && p.alpha >= 0.0, "synthesis: alpha must be >= 0");
    require(p.modulus_margin > 0.0 && p.modulus_margin <= 1.0, "synthesis: modulus margin must lie in (0, 1]");
    require(p.order >= 1, "synthesis: order must be >= 1");
    if (p.structure == ControllerStructure::integrator)
        require(p.order == 1, "synthesis: integrator structure requires order 1");
}

struct DensePlant {
    FrequencyResponse exact;
    std::optional<FrequencyResponse> rational;
    std::optional<LoopTiming> timing;

    [[nodiscard]] ValidationReport check(const IirController& k, double mu) const {
        ValidationReport rep = validate(k, exact, mu, rational ? &*rational : nullptr);
        if (timing) refine_peaks(k, mu, rep);
        return rep;
    }

    // Golden-section search between the neighbours of every sampled maximum of |S| near
    // the bound, so a peak falling between grid points is not missed. On the 10x grid a
    // sampled maximum sits well within 5% of the true one.
    void refine_peaks(const IirController& k, double mu, ValidationReport& rep) const {
        const FrequencyGrid& g = exact.grid();
        const double ts = g.sample_period();
        auto s_at = [&](double w) {
            const Complex q = std::polar(1.0, -w * ts);
            const Complex d = k.denominator_at(q);
            return std::abs(d / (d + plant_value(*timing, w) * k.numerator_at(q)));
        };
        const std::vector<double> s = loop_sensitivity(exact, k).magnitude();
        const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] < 0.95 / mu || (i > 0 && s[i] < s[i - 1]) || (i + 1 < s.size() && s[i] < s[i + 1])) continue;
            double lo = g.omega(i > 0 ? i - 1 : i), hi = g.omega(i + 1 < s.size() ? i + 1 : i);
            double a = hi - inv_phi * (hi - lo), b = lo + inv_phi * (hi - lo);
            double fa = s_at(a), fb = s_at(b);
            for (int it = 0; it < 20; ++it) {
                if (fa < fb) {
                    lo = a, a = b, fa = fb;
                    b = lo + inv_phi * (hi - lo), fb = s_at(b);
                } else {
                    hi = b, b = a, fb = fa;
                    a = hi - inv_phi * (hi - lo), fa = s_at(a);
                }
            }
            const double best = std::max(fa, fb);
            if (best > rep.max_sensitivity) {
                rep.max_sensitivity = best;
                rep.peak_frequency_hz = (fa > fb ? a : b) / kTwoPi;
            }
        }
        const bool was_ok = rep.margin_ok;
        rep.margin_ok = rep.max_sensitivity <= 1.0 / mu + 1e-6;
        if (was_ok && !rep.margin_ok) {
            std::ostringstream os;
            os << "max|S|=" << rep.max_sensitivity << " at " << rep.peak_frequency_hz << " Hz between grid points (limit "
               << 1.0 / mu << ")";
            rep.diagnostics = os.str();
        }
    }
};

inline DensePlant dense_plant(const SynthesisProblem& p) {
    const FrequencyGrid g = dense_grid(p.grid(), p.solver.validation_density);
    if (p.timing) return {plant_response(*p.timing, g), rational_plant_response(*p.timing, g), p.timing};
    return {p.plant.resample(g), std::nullopt, std::nullopt};
}

// Log-log interpolation of Phi at angular frequency w.
inline double interpolate_amplitude(const FrequencyGrid& grid, std::span<const double> phi, double w) {
    const auto om = grid.omegas();
    if (w <= om.front()) return phi.front();
    if (w >= om.back()) return phi.back();
    const auto it = std::upper_bound(om.begin(), om.end(), w);
    const std::size_t j = static_cast<std::size_t>(it - om.begin());
    const double t = std::log(w / om[j - 1]) / std::log(om[j] / om[j - 1]);
    if (phi[j - 1] > 0.0 && phi[j] > 0.0)
        return std::exp(std::log(phi[j - 1]) + t * (std::log(phi[j]) - std::log(phi[j - 1])));
    return phi[j - 1] + t * (phi[j] - phi[j - 1]);
}

}  // namespace detail

// Phi clamped below at 1e-12 * max(Phi).
inline std::vector<double> floored_amplitude(const SynthesisProblem& p) {
    std::vector<double> phi = p.disturbance_amplitude;
    const double floor = 1e-12 * *std::max_element(phi.begin(), phi.end());
    for (double& v : phi) v = std::max(v, floor);
    return phi;
}

// Lowest frequency (rad/s) where |S(G, K)| first rises through 1.
inline double sensitivity_crossover(const FrequencyResponse& plant, const IirController& k) {
    const std::vector<double> s = loop_sensitivity(plant, k).magnitude();
    const auto& grid = plant.grid();
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i - 1] < 1.0 && s[i] >= 1.0) {
            const double l0 = std::log(s[i - 1]), l1 = std::log(s[i]);
            const double t = (0.0 - l0) / (l1 - l0);
            return std::exp(std::log(grid.omega(i - 1)) + t * (std::log(grid.omega(i)) - std::log(grid.omega(i - 1))));
        }
    }
    throw UndefinedError("bandwidth undefined: |S| of the initial controller never crosses 0 dB; supply bandwidth_hz");
}

inline Weights build_weights(const SynthesisProblem& problem, const IirController& k_init) {
    detail::check_problem(problem);
    const ValidationReport rep = detail::dense_plant(problem).check(k_init, 1.0);
    if (!rep.stable) throw PreconditionError("build_weights: initial controller does not stabilize the loop");

    Weights w;
    w.omega_bw = problem.bandwidth_hz ? kTwoPi * *problem.bandwidth_hz : sensitivity_crossover(problem.plant, k_init);
    const std::vector<double> phi = floored_amplitude(problem);
    const double ref = detail::interpolate_amplitude(problem.grid(), phi, w.omega_bw);
    w.w1.resize(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) w.w1[i] = phi[i] / ref;
    w.w2 = problem.alpha;
    return w;
}

// gamma + sum_k w_k |W1 S|^2, gamma = max_k |W2 T|^2, evaluated exactly.
inline double true_objective(const SynthesisProblem& problem, const Weights& w, const IirController& k) {
    const FrequencyResponse S = loop_sensitivity(problem.plant, k);
    const std::vector<double> q = symmetric_trapezoid_weights(problem.grid());
    double h2 = 0.0, hinf = 0.0;
    for (std::size_t i = 0; i < S.size(); ++i) {
        h2 += q[i] * std::norm(w.w1[i] * S[i]);
        if (w.w2 > 0.0) hinf = std::max(hinf, std::norm(w.w2 * (1.0 - S[i])));
    }
    return h2 + hinf;
}

// ============================================================================
// Convexified program
// ============================================================================
namespace detail {

// Affine complex forms Y_k, X_k over the global decision vector at one frequency.
struct AffinePair {
    Complex y0;
    Eigen::VectorXcd y;
    Eigen::VectorXcd x;
};

struct VariableLayout {
    int order = 1;
    ControllerStructure structure = ControllerStructure::free;
    bool has_gamma = false;

    [[nodiscard]] int n_poly() const { return structure == ControllerStructure::integrator ? 1 : 2 * order + 1; }
    [[nodiscard]] int n_global() const { return n_poly() + (has_gamma ? 1 : 0); }
    [[nodiscard]] int gamma_index() const { return n_poly(); }

    [[nodiscard]] AffinePair forms(double theta) const {
        AffinePair f;
        f.y = Eigen::VectorXcd::Zero(n_global());
        f.x = Eigen::VectorXcd::Zero(n_global());
        const Complex q = std::polar(1.0, -theta);
        if (structure == ControllerStructure::integrator) {
            f.y0 = 1.0 - q;
            f.x(0) = 1.0;
            return f;
        }
        f.y0 = 1.0;
        Complex qi = 1.0;
        for (int i = 0; i <= order; ++i) {
            f.x(i) = qi;
            if (i >= 1) f.y(order + i) = qi;
            qi *= q;
        }
        return f;
    }

    [[nodiscard]] Eigen::VectorXd pack(const ControllerFactorization& f, double gamma) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n_global());
        if (structure == ControllerStructure::integrator) {
            g(0) = f.x[0];
        } else {
            for (int i = 0; i <= order; ++i) g(i) = f.x[static_cast<std::size_t>(i)];
            for (int i = 1; i <= order; ++i) g(order + i) = f.y[static_cast<std::size_t>(i)];
        }
        if (has_gamma) g(gamma_index()) = gamma;
        return g;
    }

    [[nodiscard]] ControllerFactorization unpack(const Eigen::VectorXd& g) const {
        ControllerFactorization f;
        if (structure == ControllerStructure::integrator) {
            f.x = {g(0), 0.0};
            f.y = {1.0, -1.0};
            return f;
        }
        f.x.resize(static_cast<std::size_t>(order) + 1);
        f.y.resize(static_cast<std::size_t>(order) + 1);
        f.y[0] = 1.0;
        for (int i = 0; i <= order; ++i) f.x[static_cast<std::size_t>(i)] = g(i);
        for (int i = 1; i <= order; ++i) f.y[static_cast<std::size_t>(i)] = g(order + i);
        return f;
    }
};

inline Complex eval_form(Complex c0, const Eigen::VectorXcd& coef, const Eigen::VectorXd& g) {
    return c0 + (coef.transpose() * g.cast<Complex>())(0);
}

}  // namespace detail

// Extra frequencies (rad/s) where only the modulus-margin block is imposed.
struct MarginPoints {
    std::vector<double> omegas;
    std::vector<Complex> plant;
};

inline ConvexStepResult convex_step(const SynthesisProblem& problem, const ControllerFactorization& kc,
                                    const Weights& weights, const MarginPoints& extra = {}) {
    detail::check_problem(problem);
    const FrequencyGrid& grid = problem.grid();
    const std::size_t n = grid.size();
    const double ts = grid.sample_period();
    const double eps = problem.solver.strict_eps;
    const double mu = problem.modulus_margin * (1.0 + problem.solver.margin_backoff);

    detail::VariableLayout layout;
    layout.order = problem.order;
    layout.structure = problem.structure;
    layout.has_gamma = weights.w2 > 0.0;
    const int m = layout.n_global();

    if (problem.structure == ControllerStructure::integrator)
        detail::require(kc.x.size() == 2 && kc.y.size() == 2 && kc.y[1] == -1.0,
                        "convex_step: integrator structure needs an integrator iterate");
    else
        detail::require(kc.x.size() == static_cast<std::size_t>(problem.order) + 1 && kc.y.size() == kc.x.size(),
                        "convex_step: iterate size differs from problem order");

    const Eigen::VectorXd g_c = layout.pack(kc, 0.0);
    const std::vector<double> quad = symmetric_trapezoid_weights(grid);

    conic::BlockProgram prog;
    prog.n_global = m;
    prog.n_local = static_cast<int>(n);
    prog.cost_global = Eigen::VectorXd::Zero(m);
    if (layout.has_gamma) prog.cost_global(layout.gamma_index()) = 1.0;
    prog.cost_local = Eigen::Map<const Eigen::VectorXd>(quad.data(), static_cast<Eigen::Index>(n));

    // Lower-right entry L = 2 Re(P conj(Pc)) - |Pc|^2 as an affine real form.
    struct Linearization {
        double c0;
        Eigen::VectorXd c;
    };
    auto linearize = [&](const detail::AffinePair& f, Complex g) {
        const Eigen::VectorXcd pcoef = f.y + g * f.x;
        const Complex pc = detail::eval_form(f.y0, pcoef, g_c);
        if (std::abs(pc) == 0.0) throw SingularityError("convex_step: degenerate linearization, P_c = 0");
        Linearization lin;
        lin.c0 = 2.0 * (f.y0 * std::conj(pc)).real() - std::norm(pc);
        lin.c = 2.0 * (pcoef * std::conj(pc)).real();
        return lin;
    };

    // Tight epigraph values at a point (for reporting and the acceptance test).
    std::vector<Linearization> lins(n);
    std::vector<detail::AffinePair> forms(n);
    for (std::size_t k = 0; k < n; ++k) {
        forms[k] = layout.forms(grid.normalized(k));
        const Complex g = problem.plant[k];
        lins[k] = linearize(forms[k], g);

        conic::HermitianBlock perf;
        perf.local = static_cast<int>(k);
        perf.a_local = 1.0;
        perf.b0 = weights.w1[k] * forms[k].y0;
        perf.b_global = weights.w1[k] * forms[k].y;
        perf.c0 = lins[k].c0;
        perf.c_global = lins[k].c;
        prog.blocks.push_back(std::move(perf));

        if (layout.has_gamma) {
            conic::HermitianBlock stroke;
            stroke.a_global = Eigen::VectorXd::Zero(m);
            stroke.a_global(layout.gamma_index()) = 1.0;
            stroke.b_global = weights.w2 * g * forms[k].x;
            stroke.c0 = lins[k].c0;
            stroke.c_global = lins[k].c;
            prog.blocks.push_back(std::move(stroke));
        }

        conic::HermitianBlock margin;
        margin.a0 = 1.0;
        margin.b0 = mu * forms[k].y0;
        margin.b_global = mu * forms[k].y;
        margin.c0 = lins[k].c0 - eps;
        margin.c_global = lins[k].c;
        prog.blocks.push_back(std::move(margin));
    }
    for (std::size_t e = 0; e < extra.omegas.size(); ++e) {
        const detail::AffinePair f = layout.forms(extra.omegas[e] * ts);
        const Linearization lin = linearize(f, extra.plant[e]);
        conic::HermitianBlock margin;
        margin.a0 = 1.0;
        margin.b0 = mu * f.y0;
        margin.b_global = mu * f.y;
        margin.c0 = lin.c0 - eps;
        margin.c_global = lin.c;
        prog.blocks.push_back(std::move(margin));
    }

    auto tight = [&](const Eigen::VectorXd& g, std::vector<double>* gamma_grid, double* gamma) {
        double h2 = 0.0, hinf = 0.0;
        if (gamma_grid) gamma_grid->assign(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double L = lins[k].c0 + lins[k].c.dot(g);
            if (!(L > 0.0)) return std::numeric_limits<double>::infinity();
            const Complex y = detail::eval_form(forms[k].y0, forms[k].y, g);
            const double gk = std::norm(weights.w1[k] * y) / L;
            if (gamma_grid) (*gamma_grid)[k] = gk;
            h2 += quad[k] * gk;
            if (layout.has_gamma) {
                const Complex x = detail::eval_form(0.0, forms[k].x, g);
                hinf = std::max(hinf, std::norm(weights.w2 * problem.plant[k] * x) / L);
            }
        }
        if (gamma) *gamma = hinf;
        return h2 + hinf;
    };

    // Start at the previous iterate with slack epigraph variables.
    Eigen::VectorXd g0 = g_c;
    Eigen::VectorXd l0(static_cast<Eigen::Index>(n));
    double gamma0 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double L = lins[k].c0 + lins[k].c.dot(g_c);
        const double b2 = std::norm(weights.w1[k] * detail::eval_form(forms[k].y0, forms[k].y, g_c));
        l0(static_cast<Eigen::Index>(k)) = b2 / L * (1.0 + 1e-3) + 1e-12;
        if (layout.has_gamma) {
            const double s2 = std::norm(weights.w2 * problem.plant[k] * detail::eval_form(0.0, forms[k].x, g_c));
            gamma0 = std::max(gamma0, s2 / L);
        }
    }
    if (layout.has_gamma) g0(layout.gamma_index()) = gamma0 * (1.0 + 1e-3) + 1e-12;

    ConvexStepResult res;
    bool start_feasible = true;
    {
        Eigen::VectorXd gs = g0, ls = l0;
        if (!conic::detail::BarrierProblem(prog).interior(gs, ls)) {
            start_feasible = false;
            if (!conic::find_interior(prog, gs, ls, problem.solver.barrier)) {
                res.factorization = kc;
                res.feasible = false;
                return res;
            }
            g0 = gs;
            l0 = ls;
        }
    }
    const conic::BlockSolution sol = conic::solve_from_interior(prog, g0, l0, problem.solver.barrier);
    res.newton_steps = sol.newton_steps;
    if (sol.status == conic::SolveStatus::infeasible) {
        res.factorization = kc;
        res.feasible = false;
        return res;
    }

    std::vector<double> gg_new;
    double gamma_new = 0.0;
    const double f_new = tight(sol.global, &gg_new, &gamma_new);
    std::vector<double> gg_old;
    double gamma_old = 0.0;
    const double f_old = start_feasible ? tight(g_c, &gg_old, &gamma_old) : std::numeric_limits<double>::infinity();

    res.feasible = true;
    if (f_new <= f_old) {
        res.factorization = layout.unpack(sol.global);
        res.objective = f_new;
        res.gamma = gamma_new;
        res.gamma_grid = std::move(gg_new);
        res.improved = true;
    } else {
        res.factorization = kc;
        res.objective = f_old;
        res.gamma = gamma_old;
        res.gamma_grid = std::move(gg_old);
        res.improved = false;
    }
    return res;
}

// ============================================================================
// Iteration driver
// ============================================================================
namespace detail {

inline ControllerFactorization blend(const ControllerFactorization& a, const ControllerFactorization& b, double t) {
    ControllerFactorization f = a;
    for (std::size_t i = 0; i < f.x.size(); ++i) f.x[i] += t * (b.x[i] - a.x[i]);
    for (std::size_t i = 0; i < f.y.size(); ++i) f.y[i] += t * (b.y[i] - a.y[i]);
    return f;
}

// Dense-grid local maxima of |S| above limit, as margin-only points.
inline void add_margin_points(MarginPoints& extra, const IirController& k, const FrequencyResponse& dense,
                              const ResponseInterpolator& dense_at, double limit) {
    const FrequencyGrid& dg = dense.grid();
    const std::vector<double> s = loop_sensitivity(dense, k).magnitude();
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool peak = (i == 0 || s[i] >= s[i - 1]) && (i + 1 == s.size() || s[i] >= s[i + 1]);
        if (peak && s[i] > limit) {
            extra.omegas.push_back(dg.omega(i));
            extra.plant.push_back(dense_at(dg.omega(i)));
        }
    }
}

}  // namespace detail

// Each convexified step is shortened toward the current iterate until the controller
// is stable on the dense grid and its peak |S| does not exceed max(1/mu, current peak).
// The program only sees grid points, so an unguarded step can destroy stability between them.
inline SynthesisResult synthesize(const SynthesisProblem& problem, const IirController& k0, int max_iter = 20,
                                  double rel_tol = 1e-4) {
    detail::check_problem(problem);
    detail::require(max_iter >= 1, "synthesize: max_iter must be >= 1");
    if (problem.structure == ControllerStructure::integrator)
        detail::require(k0.order() == 1 && k0.a()[0] == -1.0 && k0.b()[1] == 0.0,
                        "synthesize: integrator structure requires an integrator initial controller");

    const detail::DensePlant dp = detail::dense_plant(problem);
    const FrequencyResponse& dense = dp.exact;
    const ValidationReport init = dp.check(k0, 1.0);
    if (!init.stable) throw PreconditionError("synthesize: initial controller does not stabilize the loop");

    const Weights weights = build_weights(problem, k0);
    const ResponseInterpolator dense_at(dense);
    const double bound = 1.0 / problem.modulus_margin + 1e-6;
    const double limit = 1.0 / (problem.modulus_margin * (1.0 + 0.5 * problem.solver.margin_backoff));
    constexpr int kHalvings = 12;
    MarginPoints extra;

    SynthesisResult result;
    ControllerFactorization kc = ControllerFactorization::from_controller(k0, static_cast<std::size_t>(problem.order));
    double prev = true_objective(problem, weights, k0);
    double peak = init.max_sensitivity;
    ConvexStepResult last;
    for (int it = 0; it < max_iter; ++it) {
        bool accepted = false, feasible = true;
        for (int round = 0; round <= problem.solver.max_refinements && !accepted; ++round) {
            last = convex_step(problem, kc, weights, extra);
            if (!last.feasible) {
                feasible = false;
                break;
            }
            if (!last.improved) break;
            double t = 1.0;
            for (int h = 0; h <= kHalvings && !accepted; ++h, t *= 0.5) {
                const ControllerFactorization cand = detail::blend(kc, last.factorization, t);
                const IirController k = cand.controller();
                const ValidationReport rep = dp.check(k, problem.modulus_margin);
                if (!rep.stable || rep.max_sensitivity > std::max(bound, peak)) continue;
                const double f = true_objective(problem, weights, k);
                if (!(f <= prev)) continue;
                kc = cand;
                peak = rep.max_sensitivity;
                last.objective = f;
                accepted = true;
            }
            if (!accepted) {
                ++result.refinements;
                detail::add_margin_points(extra, last.factorization.controller(), dense, dense_at, limit);
            }
        }
        if (!feasible) {
            result.status = SynthesisStatus::infeasible;
            result.diagnostics = "convexified program infeasible (modulus margin too aggressive or order too low)";
            break;
        }
        if (!accepted) {
            result.status = SynthesisStatus::converged;
            break;
        }
        ++result.iterations;
        result.objective_trace.push_back(last.objective);
        const double decrease = (prev - last.objective) / std::max(std::abs(prev), 1e-300);
        prev = last.objective;
        if (decrease < rel_tol) {
            result.status = SynthesisStatus::converged;
            break;
        }
    }
    result.controller = kc.controller();
    result.gamma = last.gamma;
    result.gamma_grid = last.gamma_grid;
    const ValidationReport rep = dp.check(result.controller, problem.modulus_margin);
    result.margin_achieved = rep.max_sensitivity;
    if (result.status == SynthesisStatus::infeasible) return result;
    if (!rep.passed()) {
        result.status = SynthesisStatus::infeasible;
        result.diagnostics = "dense-grid validation failed: " + rep.diagnostics;
        return result;
    }
    if (result.iterations == 0) result.objective_trace.push_back(prev);
    result.diagnostics = rep.diagnostics;
    return result;
}

namespace detail {

inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    return c;
}

}  // namespace detail

// Narrow local maxima of the disturbance PSD (at least 10x the level 20% to either side),
// most prominent first, normalized frequencies.
inline std::vector<double> disturbance_peaks(const SynthesisProblem& p, std::size_t max_count) {
    const FrequencyGrid& g = p.grid();
    const std::vector<double> phi = floored_amplitude(p);
    auto power_at = [&](double w) {
        const double a = detail::interpolate_amplitude(g, phi, w);
        return a * a;
    };
    std::vector<std::pair<double, double>> found;  // (prominence, normalized omega)
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
        const double w = g.omega(i), pw = phi[i] * phi[i];
        if (phi[i] < phi[i - 1] || phi[i] < phi[i + 1]) continue;
        if (w * 1.2 >= g.nyquist()) continue;
        const double base = std::sqrt(power_at(w / 1.2) * power_at(w * 1.2));
        if (pw >= 10.0 * base) found.emplace_back(pw / base, g.normalized(i));
    }
    std::sort(found.begin(), found.end(), std::greater<>());
    std::vector<double> out;
    for (const auto& [prominence, w] : found) {
        bool near = false;
        for (double o : out) near = near || std::abs(std::log(w / o)) < 0.1;
        if (!near) out.push_back(w);
        if (out.size() == max_count) break;
    }
    return out;
}

// g/(1 - z^-1) plus one resonator per peak, each phased so that G*K is real at its peak.
// The resonator gain is the largest of a halving sequence that keeps the loop stable
// within the modulus margin; nullopt if none does.
inline std::optional<IirController> resonant_start(const SynthesisProblem& p, double gain,
                                                   const std::vector<double>& peaks, double radius = 0.99) {
    if (peaks.empty() || 1 + 2 * peaks.size() > static_cast<std::size_t>(p.order)) return std::nullopt;
    const detail::DensePlant dp = detail::dense_plant(p);
    const ResponseInterpolator plant_at(p.plant);
    std::vector<std::vector<double>> dens;
    for (double w0 : peaks) dens.push_back({1.0, -2.0 * radius * std::cos(w0), radius * radius});
    for (double c = 1.0; c > 1e-4; c *= 0.5) {
        std::vector<double> den{1.0, -1.0};
        for (const auto& d : dens) den = detail::poly_mul(den, d);
        std::vector<double> num{gain};
        for (const auto& d : dens) num = detail::poly_mul(num, d);
        for (std::size_t i = 0; i < peaks.size(); ++i) {
            const double w0 = peaks[i];
            const double phase = -std::arg(plant_at(w0 / p.grid().sample_period()));
            std::vector<double> t{c * std::cos(phase), -c * radius * std::cos(w0 - phase)};
            t = detail::poly_mul(t, {1.0, -1.0});
            for (std::size_t j = 0; j < peaks.size(); ++j)
                if (j != i) t = detail::poly_mul(t, dens[j]);
            for (std::size_t k = 0; k < t.size(); ++k) num[k] += t[k];
        }
        num.resize(den.size(), 0.0);
        const IirController k(num, std::vector<double>(den.begin() + 1, den.end()));
        if (dp.check(k, p.modulus_margin).passed()) return k;
    }
    return std::nullopt;
}

// Runs the iteration from integrator(gain) and from resonant starts on the most prominent
// disturbance peaks: every subset of the top slots + 1 candidates that fills the slots an
// order-n controller has (one resonant pair per slot beside the integrator pole). The
// convexified iteration is local; from the integrator it tends to settle on a broadband
// design that never forms notches. Results are ranked with the integrator-start weights.
inline SynthesisResult synthesize_multistart(const SynthesisProblem& problem, double gain, int max_iter = 20,
                                             double rel_tol = 1e-4) {
    const IirController k0 = integrator(gain);
    SynthesisResult best = synthesize(problem, k0, max_iter, rel_tol);
    if (problem.structure != ControllerStructure::free || problem.order < 3) return best;
    const std::size_t slots = static_cast<std::size_t>((problem.order - 1) / 2);
    const std::vector<double> cand = disturbance_peaks(problem, slots + 1);
    if (cand.empty()) return best;
    const std::size_t take = std::min(slots, cand.size());
    const Weights w = build_weights(problem, k0);
    double best_j = best.status == SynthesisStatus::infeasible ? std::numeric_limits<double>::infinity()
                                                               : true_objective(problem, w, best.controller);
    for (unsigned mask = 1; mask < (1u << cand.size()); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != take) continue;
        std::vector<double> peaks;
        for (std::size_t i = 0; i < cand.size(); ++i)
            if (mask & (1u << i)) peaks.push_back(cand[i]);
        const std::optional<IirController> ks = resonant_start(problem, gain, peaks);
        if (!ks) continue;
        SynthesisResult r = synthesize(problem, *ks, max_iter, rel_tol);
        if (r.status == SynthesisStatus::infeasible) continue;
        const double j = true_objective(problem, w, r.controller);
        if (j < best_j) {
            best_j = j;
            best = std::move(r);
            best.initial = "resonant";
        }
    }
    return best;
}

// ============================================================================
// JSON
// ============================================================================
inline nlohmann::json to_json(const SynthesisProblem& p) {
    nlohmann::json j;
    j["sample_period"] = p.grid().sample_period();
    j["frequencies_hz"] = p.grid().hz();
    std::vector<double> re, im;
    for (const Complex& v : p.plant.values()) {
        re.push_back(v.real());
        im.push_back(v.imag());
    }
    j["plant"] = {{"real", re}, {"imag", im}};
    j["disturbance_amplitude"] = p.disturbance_amplitude;
    j["alpha"] = p.alpha;
    j["modulus_margin"] = p.modulus_margin;
    j["order"] = p.order;
    j["structure"] = p.structure == ControllerStructure::integrator ? "integrator" : "free";
    if (p.bandwidth_hz) j["bandwidth_hz"] = *p.bandwidth_hz;
    if (p.timing)
        j["timing"] = {{"sample_period", p.timing->sample_period},
                       {"latency", p.timing->latency},
                       {"wfs_model", p.timing->wfs_model == WfsModel::averaging ? "averaging" : "unit-delay"},
                       {"substeps", p.timing->substeps}};
    return j;
}

inline SynthesisProblem problem_from_json(const nlohmann::json& j) {
    try {
        SynthesisProblem p;
        const double ts = j.at("sample_period").get<double>();
        const auto hz = j.at("frequencies_hz").get<std::vector<double>>();
        const auto re = j.at("plant").at("real").get<std::vector<double>>();
        const auto im = j.at("plant").at("imag").get<std::vector<double>>();
        detail::require(re.size() == hz.size() && im.size() == hz.size(), "problem JSON: plant size mismatch");
        std::vector<Complex> g(hz.size());
        for (std::size_t i = 0; i < hz.size(); ++i) g[i] = {re[i], im[i]};
        p.plant = FrequencyResponse(FrequencyGrid::from_hz(hz, ts), std::move(g));
        p.disturbance_amplitude = j.at("disturbance_amplitude").get<std::vector<double>>();
        p.alpha = j.value("alpha", 0.0);
        p.modulus_margin = j.value("modulus_margin", 0.5);
        p.order = j.value("order", 1);
        const std::string st = j.value("structure", std::string("free"));
        detail::require(st == "free" || st == "integrator", "problem JSON: unknown structure '" + st + "'");
        p.structure = st == "integrator" ? ControllerStructure::integrator : ControllerStructure::free;
        if (j.contains("bandwidth_hz")) p.bandwidth_hz = j.at("bandwidth_hz").get<double>();
        if (j.contains("timing")) {
            const auto& t = j.at("timing");
            LoopTiming lt;
            lt.sample_period = t.at("sample_period").get<double>();
            lt.latency = t.at("latency").get<double>();
            lt.wfs_model = t.value("wfs_model", std::string("unit-delay")) == "averaging" ? WfsModel::averaging
                                                                                          : WfsModel::unit_delay;
            lt.substeps = t.value("substeps", 0);
            p.timing = lt;
        }
        detail::check_problem(p);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("problem JSON: ") + e.what());
    }
}

inline nlohmann::json to_json(const SynthesisResult& r, double rate_hz) {
    return nlohmann::json{{"controller", to_json(r.controller, rate_hz)},
                          {"objective_trace", r.objective_trace},
                          {"gamma", r.gamma},
                          {"gamma_grid", r.gamma_grid},
                          {"margin_achieved", r.margin_achieved},
                          {"iterations", r.iterations},
                          {"refinements", r.refinements},
                          {"status", to_string(r.status)},
                          {"initial", r.initial},
                          {"diagnostics", r.diagnostics}};
}

}  // namespace aoctl
