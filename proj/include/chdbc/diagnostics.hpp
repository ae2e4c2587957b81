#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "chdbc/grid.hpp"
#include "chdbc/poisson.hpp"
#include "chdbc/potential.hpp"
#include "chdbc/scheme.hpp"

namespace chdbc {

struct EnergyBreakdown {
    double E_bulk = 0.0;
    double E_surf = 0.0;
    double E_total = 0.0;
    std::optional<double> E_modified;
};

namespace detail {

/// Integral of |grad u|^2 built from edge differences.  Edges along the
/// perimeter carry weight 1/2, all others 1, so the sum equals
/// (u, -Lap_N u) in the trapezoid inner product.
inline double gradient_energy(const BulkField& u)
{
    const Grid& g = u.grid();
    const std::size_t nx = g.nx(), ny = g.ny();
    double s = 0.0;
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            if (i + 1 < nx) {
                const double d = u(i + 1, j) - u(i, j);
                s += (j == 0 || j + 1 == ny ? 0.5 : 1.0) * d * d;
            }
            if (j + 1 < ny) {
                const double d = u(i, j + 1) - u(i, j);
                s += (i == 0 || i + 1 == nx ? 0.5 : 1.0) * d * d;
            }
        }
    return s;
}

/// Integral of |d_s v|^2 around the loop, forward differences.
inline double gradient_energy(const BoundaryField& v)
{
    const std::size_t m = v.size();
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double d = v[(k + 1) % m] - v[k];
        s += d * d;
    }
    return s / v.grid().h();
}

} // namespace detail

/// Ginzburg-Landau energy of the bulk and of the wall.  Potentials use the
/// trapezoid rule, gradients the edge sums above.
inline EnergyBreakdown total_energy(const BulkField& phi, const BoundaryField& psi, const SchemeParams& p,
                                    const Potential& pot)
{
    detail::require_trace(phi, psi, "total_energy");
    const Grid& g = phi.grid();
    double fb = 0.0;
    std::visit(
        [&](const auto& F) {
            for (std::size_t j = 0; j < g.ny(); ++j)
                for (std::size_t i = 0; i < g.nx(); ++i) fb += g.trapezoid_weight(i, j) * F.F(phi(i, j));
        },
        pot.bulk);
    const double eb = 0.5 * p.eps * detail::gradient_energy(phi) + fb * g.h() * g.h() / p.eps;

    double fs = 0.0;
    std::visit(
        [&](const auto& G) {
            for (double v : psi.values()) fs += G.F(v);
        },
        pot.surface);
    const double es = 0.5 * p.delta * p.kappa * detail::gradient_energy(psi) + fs * g.h() / p.delta;
    return {eb, es, eb + es, std::nullopt};
}

inline std::pair<double, double> masses(const BulkField& phi, const BoundaryField& psi)
{
    return {integrate(phi), integrate(psi)};
}

inline double hminus1_norm_bulk(const BulkField& u, const NeumannPoissonSolver& solver)
{
    return std::sqrt(std::max(0.0, inner(u, solver.solve(u))));
}

inline double hminus1_norm_bulk(const BulkField& u) { return hminus1_norm_bulk(u, NeumannPoissonSolver(u.grid())); }

inline double hminus1_norm_loop(const BoundaryField& v)
{
    return std::sqrt(std::max(0.0, inner(v, loop_poisson_inverse(v))));
}

inline double l2_norm(const BulkField& u) { return std::sqrt(inner(u, u)); }
inline double l2_norm(const BoundaryField& v) { return std::sqrt(inner(v, v)); }

/// Energy evaluator with a cached Neumann Poisson factorisation.
class EnergyMeter {
public:
    EnergyMeter(const Grid& g, SchemeParams p, Potential pot) : solver_(g), params_(p), pot_(std::move(pot)) {}

    EnergyBreakdown total(const BulkField& phi, const BoundaryField& psi) const
    {
        return total_energy(phi, psi, params_, pot_);
    }

    /// Physical energy plus the history terms
    ///   (1/4tau)(|d phi|_{-1}^2 + |d psi|_{-1}^2)
    ///   + (L1/2eps + B1/2)|d phi|^2 + (L2/2delta + B2/2)|d psi|^2,
    /// d = phi^{n+1} - phi^n.  Unbounded potentials contribute L = 0.
    EnergyBreakdown modified(const StepState& s) const
    {
        EnergyBreakdown e = total(s.phi_curr, s.psi_curr);
        BulkField dphi = s.phi_curr - s.phi_prev;
        BoundaryField dpsi = s.psi_curr - s.psi_prev;
        // Increments are mean-free up to rounding of the fields themselves.
        remove_mean(dphi, max_abs(s.phi_curr.values()));
        remove_mean(dpsi, max_abs(s.psi_curr.values()));
        const double L1 = pot_.L1().value_or(0.0);
        const double L2 = pot_.L2().value_or(0.0);
        const auto& p = params_;
        const double hb = hminus1_norm_bulk(dphi, solver_);
        const double hs = hminus1_norm_loop(dpsi);
        e.E_modified = e.E_total + (hb * hb + hs * hs) / (4.0 * p.tau) +
                       (L1 / (2.0 * p.eps) + 0.5 * p.B1) * inner(dphi, dphi) +
                       (L2 / (2.0 * p.delta) + 0.5 * p.B2) * inner(dpsi, dpsi);
        return e;
    }

    const NeumannPoissonSolver& poisson() const { return solver_; }

private:
    template <class F>
    static void remove_mean(F& d, double field_scale)
    {
        const double m = mean(d);
        if (std::abs(m) > 1e-10 * std::max(1.0, field_scale))
            throw MeanNotZero("modified energy: increment has mean " + std::to_string(m) + "; mass was not conserved");
        for (double& v : d.values()) v -= m;
    }

    NeumannPoissonSolver solver_;
    SchemeParams params_;
    Potential pot_;
};

inline double modified_energy(const StepState& s, const SchemeParams& p, const Potential& pot)
{
    return *EnergyMeter(s.grid(), p, pot).modified(s).E_modified;
}

/// Error of a coarse run against the reference at a common final time.
struct ErrorRecord {
    double tau = 0.0;
    double error = 0.0; ///< |e_phi|_Omega + |e_psi|_Gamma
    double error_phi = 0.0;
    double error_psi = 0.0;
    std::optional<double> hminus1_phi, hminus1_psi, h1_phi;
};

inline ErrorRecord compare_solutions(double tau, const BulkField& phi, const BoundaryField& psi,
                                     const BulkField& phi_ref, const BoundaryField& psi_ref)
{
    ErrorRecord r;
    r.tau = tau;
    const BulkField e = phi - phi_ref;
    const BoundaryField es = psi - psi_ref;
    r.error_phi = l2_norm(e);
    r.error_psi = l2_norm(es);
    r.error = r.error_phi + r.error_psi;
    // Both runs conserve mass, so the errors are mean-free up to rounding.
    BulkField e0 = e;
    BoundaryField es0 = es;
    const double mb = mean(e0), ms = mean(es0);
    if (std::abs(mb) <= 1e-10 * std::max(1.0, max_abs(phi_ref.values())) &&
        std::abs(ms) <= 1e-10 * std::max(1.0, max_abs(psi_ref.values()))) {
        for (double& v : e0.values()) v -= mb;
        for (double& v : es0.values()) v -= ms;
        r.hminus1_phi = hminus1_norm_bulk(e0);
        r.hminus1_psi = hminus1_norm_loop(es0);
    }
    r.h1_phi = std::sqrt(detail::gradient_energy(e));
    return r;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw std::domain_error("loglog_slope: values must be positive");
        const double lx = std::log(x[k]), ly = std::log(y[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw std::domain_error("loglog_slope: abscissae coincide");
    return (n * sxy - sx * sy) / den;
}

struct ConvergenceResult {
    double slope = 0.0;
    std::vector<ErrorRecord> records;
};

/// Final (phi, psi) of a simulation run with step `tau`.
using FinalStateFn = std::function<std::pair<BulkField, BoundaryField>(double tau)>;

/// Runs the reference and every coarse step, compares at the common final
/// time and fits the temporal order.
inline ConvergenceResult convergence_study(std::span<const double> taus, double tau_ref, double T,
                                           const FinalStateFn& simulate)
{
    auto multiple = [T](double tau) {
        const double r = T / tau;
        return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
    };
    if (!multiple(tau_ref)) throw std::invalid_argument("convergence_study: T is not a multiple of the reference step");
    for (double t : taus) {
        if (!multiple(t)) throw std::invalid_argument("convergence_study: T is not a multiple of tau = " + std::to_string(t));
        if (!(t > tau_ref)) throw std::invalid_argument("convergence_study: coarse steps must exceed the reference step");
    }
    const auto [phi_ref, psi_ref] = simulate(tau_ref);
    ConvergenceResult out;
    std::vector<double> xs, ys;
    for (double t : taus) {
        const auto [phi, psi] = simulate(t);
        out.records.push_back(compare_solutions(t, phi, psi, phi_ref, psi_ref));
        xs.push_back(t);
        ys.push_back(out.records.back().error);
    }
    out.slope = loglog_slope(xs, ys);
    return out;
}

} // namespace chdbc
