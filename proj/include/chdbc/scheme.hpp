#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "chdbc/grid.hpp"
#include "chdbc/linalg.hpp"
#include "chdbc/potential.hpp"

namespace chdbc {

/// Physical constants, stabilizers and time step of the BDF2 scheme.
struct SchemeParams {
    double eps = 0.02;   ///< bulk interface thickness
    double delta = 0.02; ///< wall interface thickness
    double kappa = 0.02; ///< surface diffusion weight
    double A1 = 0.0, A2 = 0.0; ///< multiply tau * Lap(phi^{n+1} - phi^n) and the wall analogue
    double B1 = 0.0, B2 = 0.0; ///< multiply phi^{n+1} - 2 phi^n + phi^{n-1} and the wall analogue
    double alpha1 = 1.0, alpha2 = 1.0;
    double tau = 1e-3;
    double T = 1.0;

    /// Empty when valid, otherwise the name of the first offending field.
    std::optional<std::string> invalid_field() const
    {
        auto pos = [](double v) { return std::isfinite(v) && v > 0.0; };
        auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
        if (!pos(eps)) return "eps";
        if (!pos(delta)) return "delta";
        if (!nonneg(kappa)) return "kappa";
        if (!nonneg(A1)) return "A1";
        if (!nonneg(A2)) return "A2";
        if (!nonneg(B1)) return "B1";
        if (!nonneg(B2)) return "B2";
        if (!(alpha1 >= 0.0 && alpha1 <= 1.0)) return "alpha1";
        if (!(alpha2 > 0.0 && alpha2 <= 1.0)) return "alpha2";
        if (!pos(tau)) return "tau";
        if (!pos(T)) return "T";
        return std::nullopt;
    }

    void validate() const
    {
        if (auto f = invalid_field()) throw std::invalid_argument("invalid scheme parameter: " + *f);
    }

    bool operator==(const SchemeParams&) const = default;
};

struct StabilityReport {
    bool applicable = false;
    std::string warning;
    double A1_min = 0.0, A2_min = 0.0, B1_min = 0.0, B2_min = 0.0;
    bool A1_ok = false, A2_ok = false, B1_ok = false, B2_ok = false;
    /// Largest stable step when A1 = A2 = 0 and alpha1 = alpha2 = 1.
    double tau_bound_unstabilized = 0.0;

    bool satisfied() const { return applicable && A1_ok && A2_ok && B1_ok && B2_ok; }
};

/// Evaluates the stabilizer conditions guaranteeing decay of the modified
/// energy:
///   A1 >= L1^2 / (16 alpha2 eps^2) - alpha1 eps / (2 tau),       B1 >= L1 / eps,
///   A2 >= L2^2 / (16 alpha2 delta^2) - alpha1 delta kappa / (2 tau), B2 >= L2 / delta.
inline StabilityReport check_stability(const SchemeParams& p, const Potential& pot)
{
    StabilityReport r;
    const auto l1 = pot.L1();
    const auto l2 = pot.L2();
    if (!l1 || !l2) {
        r.warning = "potential has unbounded second derivative (" + density_name(!l1 ? pot.bulk : pot.surface) +
                    "); stability conditions do not apply";
        return r;
    }
    r.applicable = true;
    const double L1 = *l1, L2 = *l2;
    r.A1_min = L1 * L1 / (16.0 * p.alpha2 * p.eps * p.eps) - p.alpha1 * p.eps / (2.0 * p.tau);
    r.B1_min = L1 / p.eps;
    r.A2_min = L2 * L2 / (16.0 * p.alpha2 * p.delta * p.delta) - p.alpha1 * p.delta * p.kappa / (2.0 * p.tau);
    r.B2_min = L2 / p.delta;
    r.A1_ok = p.A1 >= r.A1_min;
    r.A2_ok = p.A2 >= r.A2_min;
    r.B1_ok = p.B1 >= r.B1_min;
    r.B2_ok = p.B2 >= r.B2_min;
    const double inf = std::numeric_limits<double>::infinity();
    const double b1 = L1 > 0.0 ? 8.0 * p.eps * p.eps * p.eps / (L1 * L1) : inf;
    const double b2 = L2 > 0.0 ? 8.0 * p.delta * p.delta * p.delta * p.kappa / (L2 * L2) : inf;
    r.tau_bound_unstabilized = std::min(b1, b2);
    return r;
}

/// Two-level history consumed by the BDF2 update.
struct StepState {
    BulkField phi_prev, phi_curr;
    BoundaryField psi_prev, psi_curr;
    std::size_t step = 1; ///< time level of phi_curr
    double m0 = 0.0;      ///< bulk mean
    double m1 = 0.0;      ///< wall mean

    const Grid& grid() const { return phi_curr.grid(); }
};

enum class PreconditionerKind { None, Jacobi, LU };

struct SolverSettings {
    double tol = 1e-10;
    std::size_t restart = 50;
    std::size_t max_iterations = 0; ///< 0: 10 * number of unknowns
    PreconditionerKind preconditioner = PreconditionerKind::LU;

    bool operator==(const SolverSettings&) const = default;
};

class SolverFailure : public std::runtime_error {
public:
    SolverFailure(const std::string& what, SolveReport rep) : std::runtime_error(what), report(std::move(rep)) {}
    SolveReport report;
};

struct StepResult {
    StepState state;
    BulkField mu;
    BoundaryField mu_gamma;
    SolveReport report;
};

/// Coefficients of the linear operator shared by the bootstrap and the BDF2
/// step.  Unknowns are [phi (all nodes), mu (all nodes), mu_Gamma (loop)];
/// psi is the perimeter part of phi.
///
///   c_t phi - tau Lap_N mu                       = r   (every node)
///   c_t psi - tau Lap_G mu_G                     = r   (loop)
///   mu + bulk_diff Lap_N phi - b1 phi            = r   (interior nodes)
///   w h (mu + bulk_diff Lap_N phi - b1 phi)
///     + mu_G + wall_diff Lap_G psi - b2 psi      = r   (loop)
///
/// Lap_N is the mirrored-ghost 5-point operator and w the trapezoid weight of
/// the perimeter node.  The last row is the lumped weak form of the chemical
/// potential: at a perimeter node the half cell's bulk terms and the wall
/// terms share one test function, and -w h bulk_diff Lap_N phi is the
/// discrete counterpart of (eps + A1 tau) d_n phi.  This pairing makes the
/// discrete energy (see diagnostics.hpp) obey the modified-energy law exactly.
struct SystemCoefficients {
    double c_t;       ///< 3/2 for BDF2, 1 for the first-order start
    double tau;
    double bulk_diff; ///< eps + A1 tau
    double b1;
    double wall_diff; ///< delta kappa + A2 tau
    double b2;
};

inline SystemCoefficients bdf2_coefficients(const SchemeParams& p)
{
    return {1.5, p.tau, p.eps + p.A1 * p.tau, p.B1, p.delta * p.kappa + p.A2 * p.tau, p.B2};
}

inline SystemCoefficients bootstrap_coefficients(const SchemeParams& p)
{
    return {1.0, p.tau, p.eps, p.B1, p.delta * p.kappa, p.B2};
}

namespace detail {

/// Mirrored 5-point neighbours of node (i, j): west, east, south, north.
inline std::array<std::size_t, 4> mirrored_neighbours(const Grid& g, std::size_t i, std::size_t j)
{
    const std::size_t nx = g.nx(), ny = g.ny();
    return {i > 0 ? g.index(i - 1, j) : g.index(i + 1, j), i + 1 < nx ? g.index(i + 1, j) : g.index(i - 1, j),
            j > 0 ? g.index(i, j - 1) : g.index(i, j + 1), j + 1 < ny ? g.index(i, j + 1) : g.index(i, j - 1)};
}

} // namespace detail

/// Row layout: row k holds the bulk balance at interior node k or the wall
/// balance at perimeter node k; row N+k holds the mu definition at interior k
/// or the bulk balance at perimeter k; row 2N+l holds the wall chemical
/// potential.  Every row has a nonzero diagonal.
inline SparseOperator assemble_system(const Grid& g, const SystemCoefficients& c)
{
    if (g.nx() < 4 || g.ny() < 4) throw std::invalid_argument("scheme needs at least 4 nodes per axis");
    const std::size_t N = g.size(), M = g.loop_size();
    const double h = g.h();
    const double ih2 = 1.0 / (h * h);
    std::vector<Triplet> t;
    t.reserve(16 * N + 24 * M);

    auto mu_col = [&](std::size_t node) { return N + node; };
    auto mug_col = [&](std::size_t l) { return 2 * N + l; };

    // scale * (mu + bulk_diff Lap_N phi - b1 phi) at node (i, j)
    auto potential_row = [&](std::size_t row, std::size_t i, std::size_t j, double scale) {
        const std::size_t k = g.index(i, j);
        t.push_back({row, mu_col(k), scale});
        for (std::size_t q : detail::mirrored_neighbours(g, i, j)) t.push_back({row, q, scale * c.bulk_diff * ih2});
        t.push_back({row, k, scale * (-4.0 * c.bulk_diff * ih2 - c.b1)});
    };

    for (std::size_t j = 0; j < g.ny(); ++j) {
        for (std::size_t i = 0; i < g.nx(); ++i) {
            const std::size_t k = g.index(i, j);
            const std::size_t row = g.on_boundary(i, j) ? N + k : k;
            t.push_back({row, k, c.c_t});
            for (std::size_t q : detail::mirrored_neighbours(g, i, j)) t.push_back({row, mu_col(q), -c.tau * ih2});
            t.push_back({row, mu_col(k), 4.0 * c.tau * ih2});
            if (!g.on_boundary(i, j)) potential_row(N + k, i, j, 1.0);
        }
    }

    for (std::size_t l = 0; l < M; ++l) {
        const auto& ln = g.loop()[l];
        const std::size_t lp = (l + M - 1) % M, ln_next = (l + 1) % M;
        // wall balance
        t.push_back({ln.node, ln.node, c.c_t});
        t.push_back({ln.node, mug_col(lp), -c.tau * ih2});
        t.push_back({ln.node, mug_col(ln_next), -c.tau * ih2});
        t.push_back({ln.node, mug_col(l), 2.0 * c.tau * ih2});
        // wall chemical potential with the half-cell bulk part
        const std::size_t row = 2 * N + l;
        t.push_back({row, mug_col(l), 1.0});
        t.push_back({row, g.loop()[lp].node, c.wall_diff * ih2});
        t.push_back({row, g.loop()[ln_next].node, c.wall_diff * ih2});
        t.push_back({row, ln.node, -2.0 * c.wall_diff * ih2 - c.b2});
        potential_row(row, ln.i, ln.j, g.trapezoid_weight(ln.i, ln.j) * h);
    }
    return SparseOperator(2 * N + M, 2 * N + M, std::move(t));
}

namespace detail {

inline void require_finite_state(const BulkField& phi, const BoundaryField& psi, const char* what)
{
    if (!phi.all_finite() || !psi.all_finite()) throw NonFiniteValue(std::string(what) + ": non-finite field values");
}

inline void require_trace(const BulkField& phi, const BoundaryField& psi, const char* what)
{
    const Grid& g = phi.grid();
    require_grid(psi, g);
    for (std::size_t l = 0; l < g.loop_size(); ++l)
        if (phi[g.loop()[l].node] != psi[l])
            throw std::invalid_argument(std::string(what) + ": boundary field is not the trace of the bulk field");
}

} // namespace detail

/// Linear solves for one (grid, parameters, potential) triple.  The BDF2
/// operator does not depend on time, so it is assembled and factorised once
/// and reused for every step.
class Stepper {
public:
    Stepper(const Grid& g, SchemeParams p, Potential pot, SolverSettings s = {})
        : grid_(&g), params_(p), pot_(std::move(pot)), settings_(s)
    {
        params_.validate();
        if (!(settings_.tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
    }

    const Grid& grid() const { return *grid_; }
    const SchemeParams& params() const { return params_; }
    const Potential& potential() const { return pot_; }
    const SolverSettings& settings() const { return settings_; }

    /// One first-order stabilized step from (phi0, psi0 = trace phi0).
    StepResult bootstrap(const BulkField& phi0)
    {
        const Grid& g = *grid_;
        detail::require_grid(phi0, g);
        BoundaryField psi0 = trace(phi0);
        detail::require_finite_state(phi0, psi0, "bootstrap_first_step");
        const std::size_t N = g.size(), M = g.loop_size();
        const auto& p = params_;

        Vector rhs(2 * N + M, 0.0);
        Vector fphi(N), gpsi(M);
        apply_derivative(pot_.bulk, phi0.values(), fphi);
        apply_derivative(pot_.surface, psi0.values(), gpsi);
        for (std::size_t k = 0; k < N; ++k) {
            if (g.loop_position(k) != Grid::npos) {
                rhs[k] = psi0[g.loop_position(k)];
                rhs[N + k] = phi0[k];
            } else {
                rhs[k] = phi0[k];
                rhs[N + k] = fphi[k] / p.eps - p.B1 * phi0[k];
            }
        }
        for (std::size_t l = 0; l < M; ++l) {
            const auto& ln = g.loop()[l];
            const double wh = g.trapezoid_weight(ln.i, ln.j) * g.h();
            rhs[2 * N + l] = gpsi[l] / p.delta - p.B2 * psi0[l] + wh * (fphi[ln.node] / p.eps - p.B1 * phi0[ln.node]);
        }

        if (!bootstrap_) bootstrap_ = build(bootstrap_coefficients(p));
        Vector x0(2 * N + M, 0.0);
        std::copy(phi0.values().begin(), phi0.values().end(), x0.begin());
        auto [x, rep] = solve(*bootstrap_, rhs, x0, 0);

        StepResult out = unpack(x, rep, phi0, psi0);
        out.state.step = 1;
        out.state.m0 = mean(phi0);
        out.state.m1 = mean(psi0);
        return out;
    }

    /// Advances (phi^{n-1}, phi^n) to (phi^n, phi^{n+1}).
    StepResult step(const StepState& s)
    {
        const Grid& g = *grid_;
        detail::require_grid(s.phi_curr, g);
        detail::require_grid(s.phi_prev, g);
        detail::require_finite_state(s.phi_curr, s.psi_curr, "bdf2_step");
        detail::require_finite_state(s.phi_prev, s.psi_prev, "bdf2_step");
        const std::size_t N = g.size(), M = g.loop_size();
        const auto& p = params_;

        BulkField phi_hat = 2.0 * s.phi_curr - s.phi_prev;
        BoundaryField psi_hat = 2.0 * s.psi_curr - s.psi_prev;
        Vector fphi(N), gpsi(M);
        apply_derivative(pot_.bulk, phi_hat.values(), fphi);
        apply_derivative(pot_.surface, psi_hat.values(), gpsi);
        const BulkField lap_phi = bulk_laplacian(s.phi_curr, NeumannGhost{});
        const BoundaryField lap_psi = boundary_laplace_beltrami(s.psi_curr);

        Vector rhs(2 * N + M, 0.0);
        for (std::size_t k = 0; k < N; ++k) {
            const double hist = 2.0 * s.phi_curr[k] - 0.5 * s.phi_prev[k];
            const std::size_t l = g.loop_position(k);
            if (l != Grid::npos) {
                rhs[k] = 2.0 * s.psi_curr[l] - 0.5 * s.psi_prev[l];
                rhs[N + k] = hist;
            } else {
                rhs[k] = hist;
                rhs[N + k] = fphi[k] / p.eps + p.A1 * p.tau * lap_phi[k] - p.B1 * phi_hat[k];
            }
        }
        for (std::size_t l = 0; l < M; ++l) {
            const auto& ln = g.loop()[l];
            const std::size_t k = ln.node;
            const double wh = g.trapezoid_weight(ln.i, ln.j) * g.h();
            const double bulk = fphi[k] / p.eps + p.A1 * p.tau * lap_phi[k] - p.B1 * phi_hat[k];
            rhs[2 * N + l] = gpsi[l] / p.delta + p.A2 * p.tau * lap_psi[l] - p.B2 * psi_hat[l] + wh * bulk;
        }

        if (!bdf2_) bdf2_ = build(bdf2_coefficients(p));
        Vector x0(2 * N + M, 0.0);
        std::copy(phi_hat.values().begin(), phi_hat.values().end(), x0.begin());
        auto [x, rep] = solve(*bdf2_, rhs, x0, s.step + 1);

        StepResult out = unpack(x, rep, s.phi_curr, s.psi_curr);
        out.state.step = s.step + 1;
        out.state.m0 = s.m0;
        out.state.m1 = s.m1;
        return out;
    }

    /// The assembled BDF2 operator (built on first use).
    const SparseOperator& bdf2_operator()
    {
        if (!bdf2_) bdf2_ = build(bdf2_coefficients(params_));
        return bdf2_->op;
    }

private:
    using Preconditioner = std::variant<IdentityPreconditioner, JacobiPreconditioner, SparseLUPreconditioner>;

    struct System {
        SparseOperator op;
        Preconditioner prec;
    };

    std::optional<System> build(const SystemCoefficients& c) const
    {
        SparseOperator op = assemble_system(*grid_, c);
        switch (settings_.preconditioner) {
        case PreconditionerKind::None: return System{std::move(op), IdentityPreconditioner{}};
        case PreconditionerKind::Jacobi: {
            JacobiPreconditioner j(op);
            return System{std::move(op), std::move(j)};
        }
        case PreconditionerKind::LU: {
            SparseLUPreconditioner lu(op);
            return System{std::move(op), std::move(lu)};
        }
        }
        throw std::logic_error("unknown preconditioner");
    }

    std::pair<Vector, SolveReport> solve(const System& sys, const Vector& rhs, const Vector& x0,
                                         std::size_t level) const
    {
        GmresOptions opt{settings_.tol, settings_.restart, settings_.max_iterations};
        auto result = std::visit([&](const auto& pc) { return gmres(sys.op, rhs, x0, opt, pc); }, sys.prec);
        if (!result.second.converged) {
            std::ostringstream os;
            os << "linear solve for time level " << level << " did not converge: residual " << result.second.residual
               << " after " << result.second.iterations << " iterations"
               << (result.second.stagnated ? " (stagnated)" : "") << "; restart residuals:";
            const auto& rr = result.second.restart_residuals;
            const std::size_t shown = 8;
            if (rr.size() <= 2 * shown) {
                for (double r : rr) os << ' ' << r;
            } else {
                for (std::size_t k = 0; k < shown; ++k) os << ' ' << rr[k];
                os << " ...";
                for (std::size_t k = rr.size() - shown; k < rr.size(); ++k) os << ' ' << rr[k];
            }
            throw SolverFailure(os.str(), result.second);
        }
        for (double v : result.first)
            if (!std::isfinite(v))
                throw SolverFailure("non-finite solution at time level " + std::to_string(level), result.second);
        return result;
    }

    StepResult unpack(const Vector& x, const SolveReport& rep, const BulkField& phi_old,
                      const BoundaryField& psi_old) const
    {
        const Grid& g = *grid_;
        const std::size_t N = g.size(), M = g.loop_size();
        BulkField phi(g, Vector(x.begin(), x.begin() + N));
        BulkField mu(g, Vector(x.begin() + N, x.begin() + 2 * N));
        BoundaryField mug(g, Vector(x.begin() + 2 * N, x.begin() + 2 * N + M));
        BoundaryField psi = trace(phi);
        return StepResult{StepState{phi_old, std::move(phi), psi_old, std::move(psi), 0, 0.0, 0.0}, std::move(mu),
                          std::move(mug), rep};
    }

    const Grid* grid_;
    SchemeParams params_;
    Potential pot_;
    SolverSettings settings_;
    std::optional<System> bootstrap_, bdf2_;
};

inline StepState bootstrap_first_step(const BulkField& phi0, const SchemeParams& p, const Potential& pot,
                                      const SolverSettings& s = {})
{
    return Stepper(phi0.grid(), p, pot, s).bootstrap(phi0).state;
}

inline StepResult bdf2_step(const StepState& state, const SchemeParams& p, const Potential& pot,
                            const SolverSettings& s = {})
{
    return Stepper(state.grid(), p, pot, s).step(state);
}

} // namespace chdbc
