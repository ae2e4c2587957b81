#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace chdbc {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double max_abs(std::span<const double> a)
{
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

class SingularMatrix : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Triplet {
    std::size_t row, col;
    double value;
};

/// Compressed-row sparse matrix.  Immutable once built.
class SparseOperator {
public:
    SparseOperator() = default;

    /// Duplicate (row, col) entries are summed; explicit zeros are dropped.
    SparseOperator(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) : rows_(rows), cols_(cols)
    {
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        row_ptr_.assign(rows + 1, 0);
        for (std::size_t k = 0; k < entries.size();) {
            const auto& e = entries[k];
            if (e.row >= rows || e.col >= cols) throw std::out_of_range("sparse entry outside matrix");
            double v = 0.0;
            std::size_t q = k;
            while (q < entries.size() && entries[q].row == e.row && entries[q].col == e.col) v += entries[q++].value;
            if (!std::isfinite(v)) throw std::domain_error("non-finite sparse entry");
            if (v != 0.0) {
                col_.push_back(e.col);
                val_.push_back(v);
                ++row_ptr_[e.row + 1];
            }
            k = q;
        }
        std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nonzeros() const { return val_.size(); }

    void apply(std::span<const double> x, std::span<double> y) const
    {
        if (x.size() != cols_ || y.size() != rows_) throw std::invalid_argument("SparseOperator::apply: size mismatch");
        for (std::size_t r = 0; r < rows_; ++r) {
            double s = 0.0;
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += val_[k] * x[col_[k]];
            y[r] = s;
        }
    }

    Vector operator*(std::span<const double> x) const
    {
        Vector y(rows_);
        apply(x, y);
        return y;
    }

    double diagonal(std::size_t r) const
    {
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            if (col_[k] == r) return val_[k];
        return 0.0;
    }

    template <class Fn>
    void for_each(Fn&& fn) const
    {
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) fn(r, col_[k], val_[k]);
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_;
    std::vector<double> val_;
};

/// Row-major dense matrix.
class DenseMatrix {
public:
    DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

    static DenseMatrix identity(std::size_t n)
    {
        DenseMatrix m(n, n);
        for (std::size_t k = 0; k < n; ++k) m(k, k) = 1.0;
        return m;
    }

    static DenseMatrix from(const SparseOperator& op)
    {
        DenseMatrix m(op.rows(), op.cols());
        op.for_each([&](std::size_t r, std::size_t c, double v) { m(r, c) += v; });
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return a_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a_[r * cols_ + c]; }

    Vector operator*(std::span<const double> x) const
    {
        Vector y(rows_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) y[r] += (*this)(r, c) * x[c];
        return y;
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> a_;
};

inline constexpr std::size_t kDenseSolveCap = 5000;

/// LU factorisation with partial pivoting followed by substitution.
inline Vector dense_solve(DenseMatrix a, std::span<const double> rhs, std::size_t cap = kDenseSolveCap)
{
    const std::size_t n = a.rows();
    if (a.cols() != n || rhs.size() != n) throw std::invalid_argument("dense_solve: size mismatch");
    if (n > cap) throw std::invalid_argument("dense_solve: dimension " + std::to_string(n) + " exceeds cap");
    Vector b(rhs.begin(), rhs.end());

    double scale = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) scale = std::max(scale, std::abs(a(r, c)));
    const double tiny = scale * 1e-14 * static_cast<double>(n);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(a(r, k)) > std::abs(a(p, k))) p = r;
        if (!(std::abs(a(p, k)) > tiny)) throw SingularMatrix("dense_solve: matrix is singular to working precision");
        if (p != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(p, c));
            std::swap(b[k], b[p]);
        }
        const double piv = a(k, k);
        for (std::size_t r = k + 1; r < n; ++r) {
            const double l = a(r, k) / piv;
            if (l == 0.0) continue;
            a(r, k) = l;
            for (std::size_t c = k + 1; c < n; ++c) a(r, c) -= l * a(k, c);
            b[r] -= l * b[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double s = b[k];
        for (std::size_t c = k + 1; c < n; ++c) s -= a(k, c) * b[c];
        b[k] = s / a(k, k);
    }
    return b;
}

struct SolveReport {
    std::size_t iterations = 0;
    double residual = 0.0; ///< final ||A x - b|| / ||b||
    bool converged = false;
    bool breakdown = false;
    bool stagnated = false; ///< several restart cycles in a row made no progress
    double seconds = 0.0;
    std::vector<double> restart_residuals; ///< true relative residual at the start of each cycle and at exit
};

struct GmresOptions {
    double tol = 1e-10;
    std::size_t restart = 50;
    std::size_t max_iterations = 0; ///< 0 means 10 * dimension
};

/// No-op preconditioner.
struct IdentityPreconditioner {
    void apply(std::span<const double> r, std::span<double> z) const { std::copy(r.begin(), r.end(), z.begin()); }
};

class JacobiPreconditioner {
public:
    explicit JacobiPreconditioner(const SparseOperator& op) : inv_(op.rows())
    {
        for (std::size_t r = 0; r < op.rows(); ++r) {
            const double d = op.diagonal(r);
            inv_[r] = d != 0.0 ? 1.0 / d : 1.0;
        }
    }
    void apply(std::span<const double> r, std::span<double> z) const
    {
        for (std::size_t k = 0; k < r.size(); ++k) z[k] = inv_[k] * r[k];
    }

private:
    Vector inv_;
};

/// Sparse LU factorisation (Eigen, COLAMD ordering) used as a preconditioner.
/// The scheme operator is constant over a run, so one factorisation serves
/// every step.
class SparseLUPreconditioner {
public:
    explicit SparseLUPreconditioner(const SparseOperator& op)
        : lu_(std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>>())
    {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(op.nonzeros());
        op.for_each([&](std::size_t r, std::size_t c, double v) {
            t.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
        });
        Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(op.rows()), static_cast<Eigen::Index>(op.cols()));
        m.setFromTriplets(t.begin(), t.end());
        m.makeCompressed();
        lu_->analyzePattern(m);
        lu_->factorize(m);
        if (lu_->info() != Eigen::Success) throw SingularMatrix("sparse LU factorisation failed: " + lu_->lastErrorMessage());
    }

    void apply(std::span<const double> r, std::span<double> z) const
    {
        Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
        Eigen::VectorXd zv = lu_->solve(rv);
        std::copy(zv.data(), zv.data() + zv.size(), z.begin());
    }

private:
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>> lu_;
};

/// Restarted GMRES with right preconditioning, modified Gram-Schmidt and
/// Givens rotations.  `op` needs `apply(span<const double>, span<double>)`
/// and `rows()`; so does `prec` (without `rows()`).
template <class Op, class Prec = IdentityPreconditioner>
std::pair<Vector, SolveReport> gmres(const Op& op, std::span<const double> rhs, std::span<const double> x0,
                                     const GmresOptions& opt = {}, const Prec& prec = Prec{})
{
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const std::size_t n = rhs.size();
    if (op.rows() != n || x0.size() != n) throw std::invalid_argument("gmres: dimension mismatch");
    if (!(opt.tol > 0.0)) throw std::invalid_argument("gmres: tolerance must be positive");

    SolveReport rep;
    const double bnorm = norm2(rhs);
    if (bnorm == 0.0) {
        rep.converged = true;
        rep.restart_residuals.push_back(0.0);
        return {Vector(n, 0.0), rep};
    }
    const std::size_t m = std::max<std::size_t>(1, std::min(opt.restart, n));
    const std::size_t cap = opt.max_iterations ? opt.max_iterations : 10 * n;

    Vector x(x0.begin(), x0.end());
    Vector r(n), w(n), z(n);
    std::vector<Vector> v(m + 1, Vector(n));
    std::vector<Vector> hcol(m, Vector(m + 1));
    Vector cs(m), sn(m), g(m + 1);

    auto residual = [&](Vector& out) {
        op.apply(x, out);
        for (std::size_t k = 0; k < n; ++k) out[k] = rhs[k] - out[k];
        return norm2(out);
    };

    double rnorm = residual(r);
    rep.restart_residuals.push_back(rnorm / bnorm);
    constexpr int kStagnationCycles = 5;
    int idle_cycles = 0;
    while (true) {
        if (rnorm / bnorm <= opt.tol) {
            rep.converged = true;
            break;
        }
        if (rep.iterations >= cap || rep.breakdown) break;

        for (std::size_t k = 0; k < n; ++k) v[0][k] = r[k] / rnorm;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = rnorm;
        std::size_t j = 0;
        for (; j < m && rep.iterations < cap; ++j) {
            ++rep.iterations;
            prec.apply(v[j], z);
            op.apply(z, w);
            auto& hj = hcol[j];
            for (std::size_t i = 0; i <= j; ++i) {
                hj[i] = dot(w, v[i]);
                for (std::size_t k = 0; k < n; ++k) w[k] -= hj[i] * v[i][k];
            }
            hj[j + 1] = norm2(w);
            const bool happy = hj[j + 1] <= 1e-14 * std::abs(hj[j]) || hj[j + 1] == 0.0;
            if (!happy)
                for (std::size_t k = 0; k < n; ++k) v[j + 1][k] = w[k] / hj[j + 1];
            for (std::size_t i = 0; i < j; ++i) {
                const double t = cs[i] * hj[i] + sn[i] * hj[i + 1];
                hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
                hj[i] = t;
            }
            const double d = std::hypot(hj[j], hj[j + 1]);
            if (d == 0.0) {
                rep.breakdown = true;
                break;
            }
            cs[j] = hj[j] / d;
            sn[j] = hj[j + 1] / d;
            hj[j] = d;
            hj[j + 1] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            if (happy || std::abs(g[j + 1]) / bnorm <= opt.tol) {
                ++j;
                if (happy && std::abs(g[j]) / bnorm > opt.tol) rep.breakdown = true;
                break;
            }
        }
        // back substitution for the Krylov coefficients
        Vector y(j, 0.0);
        for (std::size_t i = j; i-- > 0;) {
            double s = g[i];
            for (std::size_t q = i + 1; q < j; ++q) s -= hcol[q][i] * y[q];
            y[i] = s / hcol[i][i];
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < j; ++i)
            for (std::size_t k = 0; k < n; ++k) w[k] += y[i] * v[i][k];
        prec.apply(w, z);
        for (std::size_t k = 0; k < n; ++k) x[k] += z[k];

        const double before = rnorm;
        rnorm = residual(r);
        rep.restart_residuals.push_back(rnorm / bnorm);
        if (j == 0) break;
        idle_cycles = rnorm > (1.0 - 1e-3) * before ? idle_cycles + 1 : 0;
        if (idle_cycles >= kStagnationCycles) {
            rep.stagnated = true;
            break;
        }
    }
    rep.residual = rnorm / bnorm;
    rep.converged = rep.residual <= opt.tol;
    rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return {std::move(x), rep};
}

} // namespace chdbc
