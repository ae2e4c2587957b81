#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "chdbc/grid.hpp"
#include "chdbc/linalg.hpp"

namespace chdbc {

/// The inverse Laplacian is only defined on mean-zero data.
class MeanNotZero : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

namespace detail {

template <class F>
void require_zero_mean(const F& u, const char* what)
{
    const double scale = max_abs(u.values());
    if (scale == 0.0) return;
    const double m = mean(u);
    if (std::abs(m) > 1e-10 * scale)
        throw MeanNotZero(std::string(what) + ": input mean " + std::to_string(m) + " is not zero");
}

} // namespace detail

/// Solves -Lap u1 = u with mirrored (Neumann) ghosts and trapezoidal mean of
/// u1 equal to zero.
///
/// Weighting the mirrored 5-point operator by the trapezoid weights gives a
/// symmetric graph Laplacian whose nullspace is the constants.  One node is
/// grounded inside the Cholesky factorisation; the consistent right-hand side
/// makes the grounded solution a member of the solution family, and the
/// final projection picks the mean-zero one.
class NeumannPoissonSolver {
public:
    explicit NeumannPoissonSolver(const Grid& g) : grid_(&g), ldlt_(std::make_shared<Factor>())
    {
        const std::size_t n = g.size();
        if (n < 2) throw std::invalid_argument("NeumannPoissonSolver: grid too small");
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(5 * n);
        // Edge weights: 1 for edges with an interior side, 1/2 along the perimeter.
        auto edge = [&](std::size_t a, std::size_t b, double w) {
            if (a > 0 && b > 0) {
                t.emplace_back(int(a - 1), int(b - 1), -w);
                t.emplace_back(int(b - 1), int(a - 1), -w);
            }
            if (a > 0) t.emplace_back(int(a - 1), int(a - 1), w);
            if (b > 0) t.emplace_back(int(b - 1), int(b - 1), w);
        };
        for (std::size_t j = 0; j < g.ny(); ++j) {
            for (std::size_t i = 0; i < g.nx(); ++i) {
                if (i + 1 < g.nx()) edge(g.index(i, j), g.index(i + 1, j), (j == 0 || j + 1 == g.ny()) ? 0.5 : 1.0);
                if (j + 1 < g.ny()) edge(g.index(i, j), g.index(i, j + 1), (i == 0 || i + 1 == g.nx()) ? 0.5 : 1.0);
            }
        }
        Eigen::SparseMatrix<double> k(Eigen::Index(n - 1), Eigen::Index(n - 1));
        k.setFromTriplets(t.begin(), t.end());
        ldlt_->compute(k);
        if (ldlt_->info() != Eigen::Success) throw SingularMatrix("Neumann Poisson factorisation failed");
    }

    const Grid& grid() const { return *grid_; }

    BulkField solve(const BulkField& u) const
    {
        const Grid& g = *grid_;
        detail::require_grid(u, g);
        detail::require_finite(u.values(), "neumann_poisson_inverse");
        detail::require_zero_mean(u, "neumann_poisson_inverse");
        const std::size_t n = g.size();
        // K x = W u * h^2 / h^2: the h^2 of the Laplacian and of the weights cancel.
        const double h2 = g.h() * g.h();
        Eigen::VectorXd rhs(Eigen::Index(n - 1));
        for (std::size_t j = 0; j < g.ny(); ++j)
            for (std::size_t i = 0; i < g.nx(); ++i) {
                const std::size_t k = g.index(i, j);
                if (k > 0) rhs[Eigen::Index(k - 1)] = g.trapezoid_weight(i, j) * u[k] * h2;
            }
        Eigen::VectorXd x = ldlt_->solve(rhs);
        BulkField out(g);
        for (std::size_t k = 1; k < n; ++k) out[k] = x[Eigen::Index(k - 1)];
        const double m = mean(out);
        for (double& v : out.values()) v -= m;
        return out;
    }

private:
    using Factor = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;
    const Grid* grid_;
    std::shared_ptr<Factor> ldlt_;
};

/// One-shot convenience wrapper; build a NeumannPoissonSolver to reuse the
/// factorisation.
inline BulkField neumann_poisson_inverse(const BulkField& u)
{
    return NeumannPoissonSolver(u.grid()).solve(u);
}

/// Solves -Lap_loop v1 = v on the periodic perimeter loop with zero mean.
/// Direct O(M): the first differences d_k = v1_{k+1} - v1_k obey
/// d_k - d_{k-1} = -h^2 v_k, and periodicity fixes d_0.
inline BoundaryField loop_poisson_inverse(const BoundaryField& v)
{
    detail::require_finite(v.values(), "loop_poisson_inverse");
    detail::require_zero_mean(v, "loop_poisson_inverse");
    const Grid& g = v.grid();
    const std::size_t m = v.size();
    const double h2 = g.h() * g.h();
    // d_k = d_0 - h^2 * sum_{q=1..k} v_q ; sum_k d_k = 0 fixes d_0.
    Vector partial(m, 0.0);
    for (std::size_t k = 1; k < m; ++k) partial[k] = partial[k - 1] + v[k];
    double sum_partial = 0.0;
    for (double p : partial) sum_partial += p;
    const double d0 = h2 * sum_partial / static_cast<double>(m);
    BoundaryField out(g);
    for (std::size_t k = 1; k < m; ++k) out[k] = out[k - 1] + (d0 - h2 * partial[k - 1]);
    const double mu = mean(out);
    for (double& x : out.values()) x -= mu;
    return out;
}

} // namespace chdbc
