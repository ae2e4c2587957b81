#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace chdbc {

class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteValue : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Outward normal direction of a perimeter node, one per touching edge.
enum class Side { West, East, South, North };

struct LoopNode {
    std::size_t node;          ///< flat grid index j*nx + i
    std::size_t i, j;
    double s;                  ///< arc coordinate along the loop
    std::array<Side, 2> sides; ///< outward normals; second is valid only at corners
    int side_count;

    bool is_corner() const { return side_count == 2; }
};

/// Uniform node-centred grid on [0,Lx] x [0,Ly] with square cells.
///
/// Nodes sit at (i*h, j*h).  The perimeter is stored as a closed loop,
/// traversed counterclockwise from the origin, with uniform arc spacing h
/// (corners included), so its length is 2(nx-1) + 2(ny-1).
class Grid {
public:
    Grid(std::size_t nx, std::size_t ny, double lx, double ly)
        : nx_(nx), ny_(ny), lx_(lx), ly_(ly)
    {
        if (nx < 2 || ny < 2)
            throw std::invalid_argument("grid needs at least 2 nodes per axis");
        if (!(lx > 0.0) || !(ly > 0.0) || !std::isfinite(lx) || !std::isfinite(ly))
            throw std::invalid_argument("grid extents must be positive and finite");
        h_ = lx / static_cast<double>(nx - 1);
        const double hy = ly / static_cast<double>(ny - 1);
        if (std::abs(h_ - hy) > 1e-12 * std::max(h_, hy))
            throw std::invalid_argument("grid cells must be square: Lx/(nx-1) != Ly/(ny-1)");
        build_loop();
    }

    /// Square grid on the unit square with n nodes per axis.
    static Grid unit_square(std::size_t n) { return Grid(n, n, 1.0, 1.0); }

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    double lx() const { return lx_; }
    double ly() const { return ly_; }
    double h() const { return h_; }
    std::size_t size() const { return nx_ * ny_; }
    std::size_t loop_size() const { return loop_.size(); }
    double perimeter() const { return static_cast<double>(loop_.size()) * h_; }
    double area() const { return lx_ * ly_; }

    std::size_t index(std::size_t i, std::size_t j) const { return j * nx_ + i; }
    double x(std::size_t i) const { return static_cast<double>(i) * h_; }
    double y(std::size_t j) const { return static_cast<double>(j) * h_; }

    bool on_boundary(std::size_t i, std::size_t j) const
    {
        return i == 0 || j == 0 || i + 1 == nx_ || j + 1 == ny_;
    }

    const std::vector<LoopNode>& loop() const { return loop_; }

    /// Position of a grid node in the loop, or npos for interior nodes.
    std::size_t loop_position(std::size_t node) const { return loop_of_node_[node]; }
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    /// Trapezoidal quadrature weight of a node divided by h^2.
    double trapezoid_weight(std::size_t i, std::size_t j) const
    {
        const double wx = (i == 0 || i + 1 == nx_) ? 0.5 : 1.0;
        const double wy = (j == 0 || j + 1 == ny_) ? 0.5 : 1.0;
        return wx * wy;
    }

    bool operator==(const Grid& o) const
    {
        return nx_ == o.nx_ && ny_ == o.ny_ && lx_ == o.lx_ && ly_ == o.ly_;
    }

private:
    void build_loop()
    {
        loop_of_node_.assign(size(), npos);
        auto push = [&](std::size_t i, std::size_t j) {
            LoopNode n{};
            n.node = index(i, j);
            n.i = i;
            n.j = j;
            n.s = static_cast<double>(loop_.size()) * h_;
            n.side_count = 0;
            if (j == 0) n.sides[n.side_count++] = Side::South;
            if (i + 1 == nx_) n.sides[n.side_count++] = Side::East;
            if (j + 1 == ny_) n.sides[n.side_count++] = Side::North;
            if (i == 0 && n.side_count < 2) n.sides[n.side_count++] = Side::West;
            loop_of_node_[n.node] = loop_.size();
            loop_.push_back(n);
        };
        for (std::size_t i = 0; i + 1 < nx_; ++i) push(i, 0);
        for (std::size_t j = 0; j + 1 < ny_; ++j) push(nx_ - 1, j);
        for (std::size_t i = nx_ - 1; i > 0; --i) push(i, ny_ - 1);
        for (std::size_t j = ny_ - 1; j > 0; --j) push(0, j);
    }

    std::size_t nx_, ny_;
    double lx_, ly_, h_;
    std::vector<LoopNode> loop_;
    std::vector<std::size_t> loop_of_node_;
};

namespace detail {

template <class Tag>
class GridFunction {
public:
    GridFunction(const Grid& g, std::size_t n, double fill) : grid_(&g), values_(n, fill) {}
    GridFunction(const Grid& g, std::size_t n, std::vector<double> v) : grid_(&g), values_(std::move(v))
    {
        if (values_.size() != n)
            throw GridMismatch("field length " + std::to_string(values_.size()) +
                               " does not match grid (" + std::to_string(n) + ")");
    }

    const Grid& grid() const { return *grid_; }
    std::size_t size() const { return values_.size(); }
    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    const std::vector<double>& vector() const { return values_; }

    bool all_finite() const
    {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    GridFunction& operator+=(const GridFunction& o)
    {
        check_same(o);
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o)
    {
        check_same(o);
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
        return *this;
    }
    GridFunction& operator*=(double c)
    {
        for (double& v : values_) v *= c;
        return *this;
    }
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double c, GridFunction a) { return a *= c; }

    void check_same(const GridFunction& o) const
    {
        if (!(*grid_ == *o.grid_) || values_.size() != o.values_.size())
            throw GridMismatch("fields live on different grids");
    }

private:
    const Grid* grid_;
    std::vector<double> values_;
};

struct BulkTag {};
struct LoopTag {};

} // namespace detail

/// Values on every grid node, flat index j*nx + i.  Holds a reference to its
/// grid, which must outlive it.
class BulkField : public detail::GridFunction<detail::BulkTag> {
public:
    using Base = detail::GridFunction<detail::BulkTag>;
    explicit BulkField(const Grid& g, double fill = 0.0) : Base(g, g.size(), fill) {}
    BulkField(const Grid& g, std::vector<double> v) : Base(g, g.size(), std::move(v)) {}
    BulkField(Base b) : Base(std::move(b)) {}

    double operator()(std::size_t i, std::size_t j) const { return (*this)[grid().index(i, j)]; }
    double& operator()(std::size_t i, std::size_t j) { return (*this)[grid().index(i, j)]; }

    template <class Fn>
    static BulkField from_function(const Grid& g, Fn&& fn)
    {
        BulkField u(g);
        for (std::size_t j = 0; j < g.ny(); ++j)
            for (std::size_t i = 0; i < g.nx(); ++i) u(i, j) = fn(g.x(i), g.y(j));
        return u;
    }
};

/// Values on the perimeter loop, in loop order.
class BoundaryField : public detail::GridFunction<detail::LoopTag> {
public:
    using Base = detail::GridFunction<detail::LoopTag>;
    explicit BoundaryField(const Grid& g, double fill = 0.0) : Base(g, g.loop_size(), fill) {}
    BoundaryField(const Grid& g, std::vector<double> v) : Base(g, g.loop_size(), std::move(v)) {}
    BoundaryField(Base b) : Base(std::move(b)) {}

    template <class Fn>
    static BoundaryField from_function(const Grid& g, Fn&& fn)
    {
        BoundaryField v(g);
        for (std::size_t k = 0; k < g.loop_size(); ++k) {
            const auto& n = g.loop()[k];
            v[k] = fn(g.x(n.i), g.y(n.j), n.s);
        }
        return v;
    }
};

namespace detail {

inline void require_finite(std::span<const double> v, const char* what)
{
    for (double x : v)
        if (!std::isfinite(x)) throw NonFiniteValue(std::string(what) + ": non-finite input");
}

template <class F>
void require_grid(const F& f, const Grid& g)
{
    if (!(f.grid() == g)) throw GridMismatch("field does not belong to this grid");
}

} // namespace detail

/// Ghost treatment for the 5-point Laplacian.
struct NeumannGhost {};
struct DirichletTrace {
    const BoundaryField& values;
};

/// 5-point Laplacian with mirrored ghosts; defined at every node.
inline BulkField bulk_laplacian(const BulkField& u, NeumannGhost)
{
    detail::require_finite(u.values(), "bulk_laplacian");
    const Grid& g = u.grid();
    const std::size_t nx = g.nx(), ny = g.ny();
    const double ih2 = 1.0 / (g.h() * g.h());
    BulkField out(g);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double c = u(i, j);
            const double w = i > 0 ? u(i - 1, j) : u(i + 1, j);
            const double e = i + 1 < nx ? u(i + 1, j) : u(i - 1, j);
            const double s = j > 0 ? u(i, j - 1) : u(i, j + 1);
            const double n = j + 1 < ny ? u(i, j + 1) : u(i, j - 1);
            out(i, j) = (w + e + s + n - 4.0 * c) * ih2;
        }
    }
    return out;
}

/// 5-point Laplacian on interior nodes with boundary values taken from the
/// supplied trace.  Perimeter entries of the result are zero.
inline BulkField bulk_laplacian(const BulkField& u, DirichletTrace bc)
{
    const Grid& g = u.grid();
    detail::require_grid(bc.values, g);
    detail::require_finite(u.values(), "bulk_laplacian");
    detail::require_finite(bc.values.values(), "bulk_laplacian");
    BulkField v = u;
    for (std::size_t k = 0; k < g.loop_size(); ++k) v[g.loop()[k].node] = bc.values[k];
    const double ih2 = 1.0 / (g.h() * g.h());
    BulkField out(g);
    for (std::size_t j = 1; j + 1 < g.ny(); ++j)
        for (std::size_t i = 1; i + 1 < g.nx(); ++i)
            out(i, j) = (v(i - 1, j) + v(i + 1, j) + v(i, j - 1) + v(i, j + 1) - 4.0 * v(i, j)) * ih2;
    return out;
}

/// Periodic 3-point second difference along the loop.
inline BoundaryField boundary_laplace_beltrami(const BoundaryField& v)
{
    detail::require_finite(v.values(), "boundary_laplace_beltrami");
    const Grid& g = v.grid();
    const std::size_t m = v.size();
    const double ih2 = 1.0 / (g.h() * g.h());
    BoundaryField out(g);
    for (std::size_t k = 0; k < m; ++k) {
        const double prev = v[(k + m - 1) % m];
        const double next = v[(k + 1) % m];
        out[k] = (next - 2.0 * v[k] + prev) * ih2;
    }
    return out;
}

namespace detail {

/// Coefficients of the one-sided outward derivative at perimeter node `n`:
/// pairs (grid node, weight) such that d_n u = sum weight * u[node].
/// Three taps per normal axis; corners average two axes (six taps).
struct NormalStencil {
    std::array<std::size_t, 6> node;
    std::array<double, 6> weight;
    int taps = 0;
};

inline NormalStencil normal_stencil(const Grid& g, const LoopNode& n)
{
    NormalStencil st;
    const double scale = 1.0 / (2.0 * g.h() * n.side_count);
    for (int a = 0; a < n.side_count; ++a) {
        std::array<std::size_t, 3> idx{};
        for (std::size_t q = 0; q < 3; ++q) {
            switch (n.sides[a]) {
            case Side::West: idx[q] = g.index(q, n.j); break;
            case Side::East: idx[q] = g.index(g.nx() - 1 - q, n.j); break;
            case Side::South: idx[q] = g.index(n.i, q); break;
            case Side::North: idx[q] = g.index(n.i, g.ny() - 1 - q); break;
            }
        }
        const double w[3] = {3.0, -4.0, 1.0};
        for (int q = 0; q < 3; ++q) {
            st.node[st.taps] = idx[q];
            st.weight[st.taps] = w[q] * scale;
            ++st.taps;
        }
    }
    return st;
}

} // namespace detail

/// Second-order one-sided outward normal derivative at each loop node.
inline BoundaryField normal_derivative(const BulkField& u)
{
    const Grid& g = u.grid();
    if (g.nx() < 4 || g.ny() < 4)
        throw std::invalid_argument("normal_derivative needs at least 4 nodes per axis");
    detail::require_finite(u.values(), "normal_derivative");
    BoundaryField out(g);
    for (std::size_t k = 0; k < g.loop_size(); ++k) {
        const auto st = detail::normal_stencil(g, g.loop()[k]);
        double acc = 0.0;
        for (int t = 0; t < st.taps; ++t) acc += st.weight[t] * u[st.node[t]];
        out[k] = acc;
    }
    return out;
}

inline BoundaryField trace(const BulkField& u)
{
    const Grid& g = u.grid();
    BoundaryField out(g);
    for (std::size_t k = 0; k < g.loop_size(); ++k) out[k] = u[g.loop()[k].node];
    return out;
}

inline BulkField inject(const BoundaryField& v, BulkField u)
{
    detail::require_grid(v, u.grid());
    const Grid& g = u.grid();
    for (std::size_t k = 0; k < g.loop_size(); ++k) u[g.loop()[k].node] = v[k];
    return u;
}

/// Trapezoidal integral over the rectangle.
inline double integrate(const BulkField& u)
{
    const Grid& g = u.grid();
    double s = 0.0;
    for (std::size_t j = 0; j < g.ny(); ++j)
        for (std::size_t i = 0; i < g.nx(); ++i) s += g.trapezoid_weight(i, j) * u(i, j);
    return s * g.h() * g.h();
}

/// Periodic trapezoidal integral along the perimeter.
inline double integrate(const BoundaryField& v)
{
    double s = 0.0;
    for (double x : v.values()) s += x;
    return s * v.grid().h();
}

/// Trapezoidal L2 inner product.
inline double inner(const BulkField& u, const BulkField& w)
{
    u.check_same(w);
    const Grid& g = u.grid();
    double s = 0.0;
    for (std::size_t j = 0; j < g.ny(); ++j)
        for (std::size_t i = 0; i < g.nx(); ++i) s += g.trapezoid_weight(i, j) * u(i, j) * w(i, j);
    return s * g.h() * g.h();
}

inline double inner(const BoundaryField& u, const BoundaryField& w)
{
    u.check_same(w);
    double s = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * w[k];
    return s * u.grid().h();
}

inline double mean(const BulkField& u) { return integrate(u) / u.grid().area(); }
inline double mean(const BoundaryField& v) { return integrate(v) / v.grid().perimeter(); }

} // namespace chdbc
