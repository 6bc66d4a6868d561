#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

// Programs whose constraints are 2x2 Hermitian blocks with affine entries,
//
//     [ a(z)   b(z) ]
//     [ b(z)*  c(z) ]  >= 0,
//
// solved with a log-det barrier method. PSD of such a block is equivalent to
// membership of (a, c, Re b, Im b) in the rotated second-order cone
// a >= 0, c >= 0, a c >= |b|^2, i.e. || (a - c, 2 Re b, 2 Im b) || <= a + c.
//
// Variables are split into a small dense "global" vector and "local" scalars,
// each entering the diagonal entry a of its own blocks only (epigraph
// variables). The Newton system is reduced to the globals by eliminating the
// diagonal local block.
namespace aoctl::conic {

using Complex = std::complex<double>;

// True iff [[a, b], [conj(b), c]] is positive semidefinite.
inline bool hermitian2x2_psd(double a, Complex b, double c) {
    return a >= 0.0 && c >= 0.0 && a * c >= std::norm(b);
}

// Same test on the rotated-cone form || (a - c, 2 Re b, 2 Im b) ||_2 <= a + c.
inline bool rotated_soc_member(double a, Complex b, double c) {
    const double lhs = std::hypot(a - c, 2.0 * b.real(), 2.0 * b.imag());
    return lhs <= a + c;
}

struct HermitianBlock {
    double a0 = 0.0;
    Eigen::VectorXd a_global;  // may be empty (= zero)
    int local = -1;            // index of a local variable entering a with coefficient a_local
    double a_local = 0.0;

    Complex b0 = 0.0;
    Eigen::VectorXcd b_global;

    double c0 = 0.0;
    Eigen::VectorXd c_global;
};

struct BlockProgram {
    int n_global = 0;
    int n_local = 0;
    Eigen::VectorXd cost_global;  // linear objective
    Eigen::VectorXd cost_local;
    std::vector<HermitianBlock> blocks;
};

struct BarrierSettings {
    double gap_tol = 1e-9;        // stop when barrier parameter / t below gap_tol * max(1, |objective|)
    double t_growth = 12.0;
    int max_newton = 400;
    double newton_tol = 1e-10;    // half squared Newton decrement
};

enum class SolveStatus { optimal, infeasible, max_iter };

struct BlockSolution {
    Eigen::VectorXd global;
    Eigen::VectorXd local;
    double objective = 0.0;
    SolveStatus status = SolveStatus::max_iter;
    int newton_steps = 0;
};

namespace detail {

struct BlockValue {
    double a, c, br, bi, det;
};

inline double dot_or_zero(const Eigen::VectorXd& v, const Eigen::VectorXd& x) {
    return v.size() == 0 ? 0.0 : v.dot(x);
}

inline bool strictly_feasible(const BlockValue& v) { return v.a > 0.0 && v.c > 0.0 && v.det > 0.0; }

class BarrierProblem {
public:
    explicit BarrierProblem(const BlockProgram& p) : p_(p) {
        const int m = p.n_global;
        // Stacked Jacobian, rows (a, c, Re b, Im b) of every block with respect to the globals.
        jac_ = Eigen::MatrixXd::Zero(4 * static_cast<Eigen::Index>(p.blocks.size()), m);
        offset_.resize(jac_.rows());
        for (std::size_t j = 0; j < p.blocks.size(); ++j) {
            const auto& blk = p.blocks[j];
            const Eigen::Index r = 4 * static_cast<Eigen::Index>(j);
            if (blk.a_global.size() != 0) jac_.row(r) = blk.a_global.transpose();
            if (blk.c_global.size() != 0) jac_.row(r + 1) = blk.c_global.transpose();
            if (blk.b_global.size() != 0) {
                jac_.row(r + 2) = blk.b_global.real().transpose();
                jac_.row(r + 3) = blk.b_global.imag().transpose();
            }
            offset_.segment<4>(r) << blk.a0, blk.c0, blk.b0.real(), blk.b0.imag();
        }
    }

    [[nodiscard]] double barrier_parameter() const { return 2.0 * static_cast<double>(p_.blocks.size()); }

    [[nodiscard]] double objective(const Eigen::VectorXd& g, const Eigen::VectorXd& l) const {
        return dot_or_zero(p_.cost_global, g) + dot_or_zero(p_.cost_local, l);
    }

    // Block entries (a, c, Re b, Im b) without the local terms, stacked.
    [[nodiscard]] Eigen::VectorXd lift(const Eigen::VectorXd& g) const {
        if (p_.n_global == 0) return offset_;
        return offset_ + jac_ * g;
    }
    // Same for a direction (no offset).
    [[nodiscard]] Eigen::VectorXd lift_direction(const Eigen::VectorXd& dg) const {
        if (p_.n_global == 0) return Eigen::VectorXd::Zero(offset_.size());
        return jac_ * dg;
    }

    [[nodiscard]] BlockValue value_lifted(std::size_t j, const Eigen::VectorXd& u, const Eigen::VectorXd& l) const {
        const auto& blk = p_.blocks[j];
        const Eigen::Index r = 4 * static_cast<Eigen::Index>(j);
        BlockValue v{};
        v.a = u(r) + (blk.local >= 0 ? blk.a_local * l(blk.local) : 0.0);
        v.c = u(r + 1);
        v.br = u(r + 2);
        v.bi = u(r + 3);
        v.det = v.a * v.c - v.br * v.br - v.bi * v.bi;
        return v;
    }

    // Barrier part of the merit on lifted entries; +inf outside the interior.
    [[nodiscard]] double barrier_lifted(const Eigen::VectorXd& u, const Eigen::VectorXd& l) const {
        double phi = 0.0;
        for (std::size_t j = 0; j < p_.blocks.size(); ++j) {
            const BlockValue v = value_lifted(j, u, l);
            if (!strictly_feasible(v)) return std::numeric_limits<double>::infinity();
            phi -= std::log(v.det);
        }
        return phi;
    }

    // Returns +inf outside the interior.
    [[nodiscard]] double merit(double t, const Eigen::VectorXd& g, const Eigen::VectorXd& l) const {
        return t * objective(g, l) + barrier_lifted(lift(g), l);
    }

    [[nodiscard]] bool interior(const Eigen::VectorXd& g, const Eigen::VectorXd& l) const {
        return std::isfinite(barrier_lifted(lift(g), l));
    }

    // Newton direction for t*f + barrier. Returns false if the reduced system is not PD.
    bool newton(double t, const Eigen::VectorXd& g, const Eigen::VectorXd& l, Eigen::VectorXd& dg,
                Eigen::VectorXd& dl, double& decrement2) const {
        const int m = p_.n_global;
        const int nl = p_.n_local;
        const Eigen::VectorXd u = lift(g);
        Eigen::VectorXd rg = Eigen::VectorXd::Zero(m);
        if (p_.cost_global.size() != 0) rg = t * p_.cost_global;
        Eigen::VectorXd rl = Eigen::VectorXd::Zero(nl);
        if (p_.cost_local.size() != 0) rl = t * p_.cost_local;
        Eigen::VectorXd dll = Eigen::VectorXd::Zero(nl);     // local-local diagonal
        Eigen::MatrixXd Hgl = Eigen::MatrixXd::Zero(m, nl);  // global-local coupling
        Eigen::VectorXd grad(jac_.rows());
        Eigen::MatrixXd HJ(jac_.rows(), m);                  // block Hessians times J

        for (std::size_t j = 0; j < p_.blocks.size(); ++j) {
            const auto& blk = p_.blocks[j];
            const Eigen::Index r = 4 * static_cast<Eigen::Index>(j);
            const BlockValue v = value_lifted(j, u, l);
            const double D = v.det;
            const Eigen::Vector4d dD(v.c, v.a, -2.0 * v.br, -2.0 * v.bi);
            Eigen::Matrix4d H4 = dD * dD.transpose() / (D * D);
            H4(0, 1) -= 1.0 / D;
            H4(1, 0) -= 1.0 / D;
            H4(2, 2) += 2.0 / D;
            H4(3, 3) += 2.0 / D;
            const Eigen::Vector4d grad4 = -dD / D;
            grad.segment<4>(r) = grad4;
            if (m > 0) HJ.middleRows<4>(r).noalias() = H4 * jac_.middleRows<4>(r);
            if (blk.local >= 0) {
                const double s = blk.a_local;
                rl(blk.local) += s * grad4(0);
                dll(blk.local) += s * s * H4(0, 0);
                if (m > 0) Hgl.col(blk.local).noalias() += s * HJ.row(r).transpose();
            }
        }
        Eigen::MatrixXd Hgg = Eigen::MatrixXd::Zero(m, m);
        if (m > 0) {
            rg.noalias() += jac_.transpose() * grad;
            Hgg.noalias() = jac_.transpose() * HJ;
        }

        // Eliminate locals: (Hgg - Hgl D^-1 Hlg) dg = -(rg - Hgl D^-1 rl)
        Eigen::MatrixXd S = Hgg;
        Eigen::VectorXd rhs = -rg;
        for (int k = 0; k < nl; ++k) {
            if (!(dll(k) > 0.0)) return false;
            S.noalias() -= Hgl.col(k) * Hgl.col(k).transpose() / dll(k);
            rhs.noalias() += Hgl.col(k) * (rl(k) / dll(k));
        }
        if (m > 0) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
            if (ldlt.info() != Eigen::Success) return false;
            dg = ldlt.solve(rhs);
            if (!dg.allFinite()) return false;
        } else {
            dg.resize(0);
        }
        dl.resize(nl);
        for (int k = 0; k < nl; ++k) dl(k) = (-rl(k) - Hgl.col(k).dot(dg)) / dll(k);
        decrement2 = -(rg.dot(dg) + rl.dot(dl));
        return std::isfinite(decrement2);
    }

private:
    const BlockProgram& p_;
    Eigen::MatrixXd jac_;
    Eigen::VectorXd offset_;
};

// Minimizes t*f + barrier from a strictly feasible point with damped Newton.
inline bool center(const BarrierProblem& bp, double t, Eigen::VectorXd& g, Eigen::VectorXd& l,
                   const BarrierSettings& s, int& steps_left) {
    Eigen::VectorXd dg, dl;
    double f0 = bp.merit(t, g, l);
    while (steps_left-- > 0) {
        double lam2 = 0.0;
        if (!bp.newton(t, g, l, dg, dl, lam2)) return false;
        if (lam2 / 2.0 <= s.newton_tol) return true;
        // The block entries are affine, so the search runs on lifted values.
        const Eigen::VectorXd u0 = bp.lift(g), du = bp.lift_direction(dg);
        const double obj0 = bp.objective(g, l), dobj = bp.objective(dg, dl);
        double step = 1.0;
        double f1 = std::numeric_limits<double>::infinity();
        for (int ls = 0; ls < 60; ++ls) {
            f1 = t * (obj0 + step * dobj) + bp.barrier_lifted(u0 + step * du, l + step * dl);
            if (f1 <= f0 - 0.25 * step * lam2) break;
            step *= 0.5;
        }
        if (!std::isfinite(f1) || !(f1 <= f0)) return true;  // no further progress at this precision
        g += step * dg;
        l += step * dl;
        if (f0 - f1 <= 1e-15 * std::max(1.0, std::abs(f0)) && step < 1e-6) return true;
        f0 = f1;
    }
    return false;
}

}  // namespace detail

// Solves min cost'z subject to all blocks PSD, starting from a strictly interior point.
inline BlockSolution solve_from_interior(const BlockProgram& p, Eigen::VectorXd g, Eigen::VectorXd l,
                                         const BarrierSettings& s = {}) {
    detail::BarrierProblem bp(p);
    BlockSolution sol;
    if (!bp.interior(g, l)) {
        sol.status = SolveStatus::infeasible;
        sol.global = g;
        sol.local = l;
        return sol;
    }
    const double nu = bp.barrier_parameter();
    double t = nu / std::max(1.0, std::abs(bp.objective(g, l)));
    int steps_left = s.max_newton;
    sol.status = SolveStatus::max_iter;
    while (true) {
        const bool ok = detail::center(bp, t, g, l, s, steps_left);
        const double obj = bp.objective(g, l);
        if (nu / t <= s.gap_tol * std::max(1.0, std::abs(obj))) {
            sol.status = SolveStatus::optimal;
            break;
        }
        if (!ok || steps_left <= 0) break;
        t *= s.t_growth;
    }
    sol.newton_steps = s.max_newton - std::max(steps_left, 0);
    sol.objective = bp.objective(g, l);
    sol.global = std::move(g);
    sol.local = std::move(l);
    return sol;
}

// Phase I: finds a strictly interior point by minimizing a shift s added to both
// diagonal entries of every block. Returns false if none is found.
inline bool find_interior(const BlockProgram& p, Eigen::VectorXd& g, Eigen::VectorXd& l,
                          const BarrierSettings& s = {}) {
    {
        detail::BarrierProblem bp(p);
        if (bp.interior(g, l)) return true;
    }
    BlockProgram aux = p;
    const int m = p.n_global;
    aux.n_global = m + 1;
    // A small multiple of the original cost keeps epigraph variables bounded.
    aux.cost_global = Eigen::VectorXd::Zero(m + 1);
    if (p.cost_global.size() != 0) aux.cost_global.head(m) = 1e-6 * p.cost_global;
    aux.cost_global(m) = 1.0;
    aux.cost_local = p.cost_local.size() != 0 ? Eigen::VectorXd(1e-6 * p.cost_local)
                                               : Eigen::VectorXd::Zero(p.n_local);
    double shift = 0.0;
    for (auto& blk : aux.blocks) {
        auto extend = [&](Eigen::VectorXd& v) {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(m + 1);
            if (v.size() != 0) w.head(m) = v;
            v = std::move(w);
        };
        extend(blk.a_global);
        extend(blk.c_global);
        blk.a_global(m) = 1.0;
        blk.c_global(m) = 1.0;
        Eigen::VectorXcd bw = Eigen::VectorXcd::Zero(m + 1);
        if (blk.b_global.size() != 0) bw.head(m) = blk.b_global;
        blk.b_global = std::move(bw);
    }
    detail::BarrierProblem bp(aux);
    // Shift large enough that every shifted block is strictly interior.
    Eigen::VectorXd g0(m + 1);
    g0.head(m) = g;
    g0(m) = 0.0;
    const Eigen::VectorXd u0 = bp.lift(g0);
    for (std::size_t j = 0; j < aux.blocks.size(); ++j) {
        const detail::BlockValue v = bp.value_lifted(j, u0, l);
        const double r = std::sqrt(0.25 * (v.a - v.c) * (v.a - v.c) + v.br * v.br + v.bi * v.bi);
        shift = std::max(shift, r - 0.5 * (v.a + v.c));
    }
    Eigen::VectorXd g1(m + 1);
    g1.head(m) = g;
    g1(m) = 1.5 * std::abs(shift) + 1e-6;
    // Add a bounding block s >= -1 so the auxiliary problem stays bounded.
    HermitianBlock bound;
    bound.a0 = 1.0;
    bound.a_global = Eigen::VectorXd::Zero(m + 1);
    bound.c0 = 1.0;
    bound.c_global = Eigen::VectorXd::Zero(m + 1);
    bound.c_global(m) = 1.0;
    aux.blocks.push_back(bound);
    detail::BarrierProblem bp2(aux);
    if (!bp2.interior(g1, l)) return false;
    int steps_left = s.max_newton;
    double t = 1.0;
    for (int outer = 0; outer < 40; ++outer) {
        detail::center(bp2, t, g1, l, s, steps_left);
        if (g1(m) < -1e-9) {
            g = g1.head(m);
            return detail::BarrierProblem(p).interior(g, l);
        }
        if (steps_left <= 0) break;
        t *= s.t_growth;
    }
    return false;
}

}  // namespace aoctl::conic
