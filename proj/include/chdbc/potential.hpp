#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>

namespace chdbc {

/// F(x) = (x^2 - 1)^2 / 4.
struct DoubleWell {
    double F(double x) const { return 0.25 * (x * x - 1.0) * (x * x - 1.0); }
    double f(double x) const { return x * x * x - x; }
    double df(double x) const { return 3.0 * x * x - 1.0; }
    std::optional<double> sup_df() const { return std::nullopt; }
    std::optional<double> lipschitz_df() const { return std::nullopt; }
};

/// Double well with quadratic tails outside [-1, 1]; |F''| <= 2 everywhere.
struct ModifiedDoubleWell {
    double F(double x) const
    {
        if (x > 1.0) return (x - 1.0) * (x - 1.0);
        if (x < -1.0) return (x + 1.0) * (x + 1.0);
        return 0.25 * (x * x - 1.0) * (x * x - 1.0);
    }
    double f(double x) const
    {
        if (x > 1.0) return 2.0 * (x - 1.0);
        if (x < -1.0) return 2.0 * (x + 1.0);
        return x * x * x - x;
    }
    double df(double x) const
    {
        if (x > 1.0 || x < -1.0) return 2.0;
        return 3.0 * x * x - 1.0;
    }
    std::optional<double> sup_df() const { return 2.0; }
    std::optional<double> lipschitz_df() const { return 6.0; }
};

/// Moving-contact-line wall energy G(x) = (gamma/2) cos(theta_s) sin(pi x / 2).
struct ContactLine {
    double gamma = std::numbers::sqrt2;
    double cos_theta = 0.5;

    double F(double x) const { return 0.5 * gamma * cos_theta * std::sin(0.5 * std::numbers::pi * x); }
    double f(double x) const
    {
        return 0.25 * gamma * std::numbers::pi * cos_theta * std::cos(0.5 * std::numbers::pi * x);
    }
    double df(double x) const
    {
        const double pi = std::numbers::pi;
        return -0.125 * gamma * pi * pi * cos_theta * std::sin(0.5 * pi * x);
    }
    std::optional<double> sup_df() const
    {
        const double pi = std::numbers::pi;
        return 0.125 * gamma * pi * pi * std::abs(cos_theta);
    }
    std::optional<double> lipschitz_df() const
    {
        const double pi = std::numbers::pi;
        return gamma * pi * pi * pi * std::abs(cos_theta) / 16.0;
    }
};

/// Flory-Huggins mixing energy with the logarithms replaced by quadratic
/// continuations outside [zeta, 1 - zeta].
struct FloryHuggins {
    double theta = 2.5;
    double zeta = 0.005;

    double F(double x) const
    {
        const double mix = theta * x * (1.0 - x);
        if (x > 1.0 - zeta)
            return x * std::log(x) + (1.0 - x) * (1.0 - x) / (2.0 * zeta) + (1.0 - x) * std::log(zeta) -
                   0.5 * zeta + mix;
        if (x < zeta)
            return (1.0 - x) * std::log(1.0 - x) + x * x / (2.0 * zeta) + x * std::log(zeta) - 0.5 * zeta + mix;
        return x * std::log(x) + (1.0 - x) * std::log(1.0 - x) + mix;
    }
    double f(double x) const
    {
        const double mix = theta * (1.0 - 2.0 * x);
        if (x > 1.0 - zeta) return std::log(x) + 1.0 - (1.0 - x) / zeta - std::log(zeta) + mix;
        if (x < zeta) return -std::log(1.0 - x) - 1.0 + x / zeta + std::log(zeta) + mix;
        return std::log(x) - std::log(1.0 - x) + mix;
    }
    double df(double x) const
    {
        if (x > 1.0 - zeta) return 1.0 / x + 1.0 / zeta - 2.0 * theta;
        if (x < zeta) return 1.0 / (1.0 - x) + 1.0 / zeta - 2.0 * theta;
        return 1.0 / x + 1.0 / (1.0 - x) - 2.0 * theta;
    }
    // Extremes of df: the knots (maximum) and x = 1/2 (minimum of the log core).
    std::optional<double> sup_df() const
    {
        const double top = 1.0 / zeta + 1.0 / (1.0 - zeta) - 2.0 * theta;
        return std::max(std::abs(top), std::abs(4.0 - 2.0 * theta));
    }
    std::optional<double> lipschitz_df() const { return 1.0 / (zeta * zeta) - 1.0 / ((1.0 - zeta) * (1.0 - zeta)); }
};

using Density = std::variant<DoubleWell, ModifiedDoubleWell, ContactLine, FloryHuggins>;

inline double energy_density(const Density& d, double x)
{
    return std::visit([x](const auto& p) { return p.F(x); }, d);
}
inline double derivative(const Density& d, double x)
{
    return std::visit([x](const auto& p) { return p.f(x); }, d);
}
inline double second_derivative(const Density& d, double x)
{
    return std::visit([x](const auto& p) { return p.df(x); }, d);
}
/// Declared bound on |F''|, absent when unbounded.
inline std::optional<double> sup_second_derivative(const Density& d)
{
    return std::visit([](const auto& p) { return p.sup_df(); }, d);
}
inline std::optional<double> lipschitz_second_derivative(const Density& d)
{
    return std::visit([](const auto& p) { return p.lipschitz_df(); }, d);
}

/// out[k] = f(in[k]); the variant is dispatched once per call.
inline void apply_derivative(const Density& d, std::span<const double> in, std::span<double> out)
{
    std::visit(
        [&](const auto& p) {
            for (std::size_t k = 0; k < in.size(); ++k) out[k] = p.f(in[k]);
        },
        d);
}

inline std::string density_name(const Density& d)
{
    struct {
        std::string operator()(const DoubleWell&) const { return "double_well"; }
        std::string operator()(const ModifiedDoubleWell&) const { return "modified_double_well"; }
        std::string operator()(const ContactLine&) const { return "contact_line"; }
        std::string operator()(const FloryHuggins&) const { return "flory_huggins"; }
    } v;
    return std::visit(v, d);
}

/// Bulk/surface free-energy pair: F, f = F' in the bulk and G, g = G' on the wall.
struct Potential {
    Density bulk;
    Density surface;

    std::optional<double> L1() const { return sup_second_derivative(bulk); }
    std::optional<double> L2() const { return sup_second_derivative(surface); }
    std::optional<double> K1() const { return lipschitz_second_derivative(bulk); }
    std::optional<double> K2() const { return lipschitz_second_derivative(surface); }
    bool bounded() const { return L1().has_value() && L2().has_value(); }
};

inline Potential double_well() { return {DoubleWell{}, DoubleWell{}}; }

inline Potential modified_double_well() { return {ModifiedDoubleWell{}, ModifiedDoubleWell{}}; }

/// Surface part of the contact-line model; pair it with a bulk density.
inline ContactLine contact_line_surface(double theta_s, double gamma = std::numbers::sqrt2)
{
    if (!(gamma > 0.0)) throw std::invalid_argument("contact_line: gamma must be positive");
    return ContactLine{gamma, std::cos(theta_s)};
}

inline Potential flory_huggins_regularized(double theta = 2.5, double zeta = 0.005)
{
    if (!(theta > 0.0)) throw std::invalid_argument("flory_huggins: theta must be positive");
    if (!(zeta > 0.0) || !(zeta < 0.5)) throw std::invalid_argument("flory_huggins: zeta must lie in (0, 1/2)");
    return {FloryHuggins{theta, zeta}, FloryHuggins{theta, zeta}};
}

} // namespace chdbc
