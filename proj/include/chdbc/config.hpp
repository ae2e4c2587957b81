#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "chdbc/expression.hpp"
#include "chdbc/grid.hpp"
#include "chdbc/potential.hpp"
#include "chdbc/scheme.hpp"

namespace chdbc {

/// Parse or validation failure.  `line` is 0 for validation errors; `path`
/// names the offending field as section.key when known.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::size_t line_no, std::string field, const std::string& msg)
        : std::invalid_argument(format(line_no, field, msg)), line(line_no), path(std::move(field))
    {
    }

    std::size_t line;
    std::string path;

private:
    static std::string format(std::size_t line_no, const std::string& field, const std::string& msg)
    {
        std::string out;
        if (line_no) out += "line " + std::to_string(line_no) + ": ";
        if (!field.empty()) out += field + ": ";
        return out + msg;
    }
};

enum class StabilityCheck { Enforce, Warn, Skip };
enum class InitialKind { Preset, Expression, Random, File };

struct GridConfig {
    std::size_t nx = 65, ny = 65;
    double lx = 1.0, ly = 1.0;

    Grid build() const { return Grid(nx, ny, lx, ly); }
    bool operator==(const GridConfig&) const = default;
};

struct PotentialConfig {
    std::string bulk = "double_well";
    std::string surface = "double_well";
    double theta = 2.5;   ///< Flory-Huggins interaction
    double zeta = 0.005;  ///< Flory-Huggins regularisation width
    double contact_angle = std::numbers::pi / 3.0; ///< radians
    double gamma = std::numbers::sqrt2;

    Potential build() const
    {
        return {density(bulk, false), density(surface, true)};
    }

    Density density(const std::string& name, bool surface_side) const
    {
        if (name == "double_well") return DoubleWell{};
        if (name == "modified_double_well") return ModifiedDoubleWell{};
        if (name == "flory_huggins") return flory_huggins_regularized(theta, zeta).bulk;
        if (name == "contact_line" && surface_side) return contact_line_surface(contact_angle, gamma);
        throw std::invalid_argument("unknown potential '" + name + "'");
    }

    bool operator==(const PotentialConfig&) const = default;
};

struct InitialConfig {
    InitialKind kind = InitialKind::Preset;
    std::string preset = "accuracy";
    Expression expression;
    std::optional<std::uint64_t> seed;
    double min = -1.0, max = 1.0;
    std::string file;

    bool operator==(const InitialConfig&) const = default;
};

struct OutputConfig {
    std::string dir = "out";
    std::size_t cadence = 1;
    std::vector<double> snapshots;
    bool vtk = false;
    std::optional<double> cutline; ///< y coordinate of the profile written with each snapshot

    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    GridConfig grid;
    SchemeParams scheme;
    StabilityCheck stability_check = StabilityCheck::Warn;
    PotentialConfig potential;
    InitialConfig initial;
    OutputConfig output;
    SolverSettings solver;

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(scheme.T / scheme.tau)); }
    bool operator==(const RunConfig&) const = default;
};

inline const std::vector<std::string>& initial_preset_names()
{
    static const std::vector<std::string> names{"accuracy", "case1", "case2", "case3", "case4", "case5"};
    return names;
}

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw std::invalid_argument("expected a number, got '" + s + "'");
    return v;
}

template <class Int>
Int parse_uint(const std::string& s)
{
    Int v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s)
{
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw std::invalid_argument("expected true or false, got '" + s + "'");
}

inline std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_double(item));
    }
    return out;
}

inline std::string quote(const std::string& s) { return "\"" + s + "\""; }

inline std::string unquote(const std::string& s)
{
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

inline const char* to_string(StabilityCheck m)
{
    switch (m) {
    case StabilityCheck::Enforce: return "enforce";
    case StabilityCheck::Warn: return "warn";
    case StabilityCheck::Skip: return "skip";
    }
    return "warn";
}

inline const char* to_string(InitialKind k)
{
    switch (k) {
    case InitialKind::Preset: return "preset";
    case InitialKind::Expression: return "expression";
    case InitialKind::Random: return "random";
    case InitialKind::File: return "file";
    }
    return "preset";
}

inline const char* to_string(PreconditionerKind k)
{
    switch (k) {
    case PreconditionerKind::None: return "none";
    case PreconditionerKind::Jacobi: return "jacobi";
    case PreconditionerKind::LU: return "lu";
    }
    return "lu";
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters()
{
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["grid.nx"] = [](RunConfig& c, const std::string& v) { c.grid.nx = parse_uint<std::size_t>(v); };
        t["grid.ny"] = [](RunConfig& c, const std::string& v) { c.grid.ny = parse_uint<std::size_t>(v); };
        t["grid.Lx"] = [](RunConfig& c, const std::string& v) { c.grid.lx = parse_double(v); };
        t["grid.Ly"] = [](RunConfig& c, const std::string& v) { c.grid.ly = parse_double(v); };

        t["scheme.eps"] = [](RunConfig& c, const std::string& v) { c.scheme.eps = parse_double(v); };
        t["scheme.delta"] = [](RunConfig& c, const std::string& v) { c.scheme.delta = parse_double(v); };
        t["scheme.kappa"] = [](RunConfig& c, const std::string& v) { c.scheme.kappa = parse_double(v); };
        t["scheme.A1"] = [](RunConfig& c, const std::string& v) { c.scheme.A1 = parse_double(v); };
        t["scheme.A2"] = [](RunConfig& c, const std::string& v) { c.scheme.A2 = parse_double(v); };
        t["scheme.B1"] = [](RunConfig& c, const std::string& v) { c.scheme.B1 = parse_double(v); };
        t["scheme.B2"] = [](RunConfig& c, const std::string& v) { c.scheme.B2 = parse_double(v); };
        t["scheme.alpha1"] = [](RunConfig& c, const std::string& v) { c.scheme.alpha1 = parse_double(v); };
        t["scheme.alpha2"] = [](RunConfig& c, const std::string& v) { c.scheme.alpha2 = parse_double(v); };
        t["scheme.tau"] = [](RunConfig& c, const std::string& v) { c.scheme.tau = parse_double(v); };
        t["scheme.T"] = [](RunConfig& c, const std::string& v) { c.scheme.T = parse_double(v); };
        t["scheme.stability_check"] = [](RunConfig& c, const std::string& v) {
            if (v == "enforce")
                c.stability_check = StabilityCheck::Enforce;
            else if (v == "warn")
                c.stability_check = StabilityCheck::Warn;
            else if (v == "skip")
                c.stability_check = StabilityCheck::Skip;
            else
                throw std::invalid_argument("expected enforce, warn or skip, got '" + v + "'");
        };

        t["potential.bulk"] = [](RunConfig& c, const std::string& v) { c.potential.bulk = v; };
        t["potential.surface"] = [](RunConfig& c, const std::string& v) { c.potential.surface = v; };
        t["potential.theta"] = [](RunConfig& c, const std::string& v) { c.potential.theta = parse_double(v); };
        t["potential.zeta"] = [](RunConfig& c, const std::string& v) { c.potential.zeta = parse_double(v); };
        t["potential.contact_angle"] = [](RunConfig& c, const std::string& v) {
            c.potential.contact_angle = parse_double(v);
        };
        t["potential.gamma"] = [](RunConfig& c, const std::string& v) { c.potential.gamma = parse_double(v); };

        t["initial.type"] = [](RunConfig& c, const std::string& v) {
            if (v == "preset")
                c.initial.kind = InitialKind::Preset;
            else if (v == "expression")
                c.initial.kind = InitialKind::Expression;
            else if (v == "random")
                c.initial.kind = InitialKind::Random;
            else if (v == "file")
                c.initial.kind = InitialKind::File;
            else
                throw std::invalid_argument("expected preset, expression, random or file, got '" + v + "'");
        };
        t["initial.preset"] = [](RunConfig& c, const std::string& v) { c.initial.preset = v; };
        t["initial.expression"] = [](RunConfig& c, const std::string& v) { c.initial.expression = Expression(v); };
        t["initial.seed"] = [](RunConfig& c, const std::string& v) { c.initial.seed = parse_uint<std::uint64_t>(v); };
        t["initial.min"] = [](RunConfig& c, const std::string& v) { c.initial.min = parse_double(v); };
        t["initial.max"] = [](RunConfig& c, const std::string& v) { c.initial.max = parse_double(v); };
        t["initial.file"] = [](RunConfig& c, const std::string& v) { c.initial.file = v; };

        t["output.dir"] = [](RunConfig& c, const std::string& v) { c.output.dir = v; };
        t["output.cadence"] = [](RunConfig& c, const std::string& v) { c.output.cadence = parse_uint<std::size_t>(v); };
        t["output.snapshots"] = [](RunConfig& c, const std::string& v) { c.output.snapshots = parse_list(v); };
        t["output.vtk"] = [](RunConfig& c, const std::string& v) { c.output.vtk = parse_bool(v); };
        t["output.cutline"] = [](RunConfig& c, const std::string& v) {
            if (v.empty())
                c.output.cutline.reset();
            else
                c.output.cutline = parse_double(v);
        };

        t["solver.tol"] = [](RunConfig& c, const std::string& v) { c.solver.tol = parse_double(v); };
        t["solver.restart"] = [](RunConfig& c, const std::string& v) { c.solver.restart = parse_uint<std::size_t>(v); };
        t["solver.max_iterations"] = [](RunConfig& c, const std::string& v) {
            c.solver.max_iterations = parse_uint<std::size_t>(v);
        };
        t["solver.preconditioner"] = [](RunConfig& c, const std::string& v) {
            if (v == "none")
                c.solver.preconditioner = PreconditionerKind::None;
            else if (v == "jacobi")
                c.solver.preconditioner = PreconditionerKind::Jacobi;
            else if (v == "lu")
                c.solver.preconditioner = PreconditionerKind::LU;
            else
                throw std::invalid_argument("expected none, jacobi or lu, got '" + v + "'");
        };
        return t;
    }();
    return table;
}

} // namespace detail

/// Sets one field by its section.key path, as in the config file.
inline void set_config_value(RunConfig& c, const std::string& path, const std::string& value, std::size_t line = 0)
{
    const auto& t = detail::setters();
    auto it = t.find(path);
    if (it == t.end()) throw ConfigError(line, path, "unknown key");
    try {
        it->second(c, detail::unquote(detail::trim(value)));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(line, path, e.what());
    }
}

/// Throws ConfigError naming the first invalid field.
inline void validate(const RunConfig& c)
{
    auto fail = [](const std::string& path, const std::string& msg) { throw ConfigError(0, path, msg); };
    if (c.grid.nx < 4) fail("grid.nx", "need at least 4 nodes");
    if (c.grid.ny < 4) fail("grid.ny", "need at least 4 nodes");
    if (!(c.grid.lx > 0.0) || !std::isfinite(c.grid.lx)) fail("grid.Lx", "must be positive");
    if (!(c.grid.ly > 0.0) || !std::isfinite(c.grid.ly)) fail("grid.Ly", "must be positive");
    {
        const double hx = c.grid.lx / double(c.grid.nx - 1), hy = c.grid.ly / double(c.grid.ny - 1);
        if (std::abs(hx - hy) > 1e-12 * std::max(hx, hy)) fail("grid.ny", "cells must be square (Lx/(nx-1) = Ly/(ny-1))");
    }
    if (auto f = c.scheme.invalid_field()) fail("scheme." + *f, "out of range");
    {
        const double r = c.scheme.T / c.scheme.tau;
        if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r) || std::round(r) < 2.0)
            fail("scheme.T", "must be an integer multiple (at least 2) of scheme.tau");
    }
    try {
        (void)c.potential.density(c.potential.bulk, false);
    } catch (const std::exception& e) {
        fail("potential.bulk", e.what());
    }
    try {
        (void)c.potential.density(c.potential.surface, true);
    } catch (const std::exception& e) {
        fail("potential.surface", e.what());
    }
    switch (c.initial.kind) {
    case InitialKind::Preset: {
        const auto& names = initial_preset_names();
        if (std::find(names.begin(), names.end(), c.initial.preset) == names.end())
            fail("initial.preset", "unknown preset '" + c.initial.preset + "'");
        break;
    }
    case InitialKind::Expression:
        if (c.initial.expression.empty()) fail("initial.expression", "required for type = expression");
        break;
    case InitialKind::Random:
        if (!c.initial.seed) fail("initial.seed", "required for type = random");
        if (!(c.initial.min <= c.initial.max)) fail("initial.max", "must not be below initial.min");
        break;
    case InitialKind::File:
        if (c.initial.file.empty()) fail("initial.file", "required for type = file");
        break;
    }
    if (c.output.cadence < 1) fail("output.cadence", "must be at least 1");
    for (double t : c.output.snapshots)
        if (!(t >= 0.0) || t > c.scheme.T * (1.0 + 1e-12)) fail("output.snapshots", "times must lie in [0, T]");
    if (c.output.cutline && (!(*c.output.cutline >= 0.0) || *c.output.cutline > c.grid.ly))
        fail("output.cutline", "must lie in [0, Ly]");
    if (!(c.solver.tol > 0.0)) fail("solver.tol", "must be positive");
    if (c.solver.restart < 1) fail("solver.restart", "must be at least 1");
}

/// Parses sectioned key = value text.  '#' starts a comment; values may be
/// double-quoted.  Keys not set keep their defaults.
inline RunConfig parse_config(const std::string& text, const RunConfig& defaults = {})
{
    RunConfig c = defaults;
    static const std::vector<std::string> sections{"grid", "scheme", "potential", "initial", "output", "solver"};
    std::string section;
    std::vector<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        bool quoted = false;
        for (std::size_t k = 0; k < line.size(); ++k) {
            if (line[k] == '"') quoted = !quoted;
            if (line[k] == '#' && !quoted) {
                line.resize(k);
                break;
            }
        }
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(line_no, "", "malformed section header '" + line + "'");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (std::find(sections.begin(), sections.end(), section) == sections.end())
                throw ConfigError(line_no, section, "unknown section");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(line_no, "", "expected key = value");
        if (section.empty()) throw ConfigError(line_no, "", "key outside of any section");
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string path = section + "." + key;
        if (std::find(seen.begin(), seen.end(), path) != seen.end())
            throw ConfigError(line_no, path, "duplicate key");
        seen.push_back(path);
        set_config_value(c, path, line.substr(eq + 1), line_no);
    }
    validate(c);
    return c;
}

/// Writes every field; parse_config(print_config(c)) == c.
inline std::string print_config(const RunConfig& c)
{
    using detail::fmt_double;
    std::ostringstream o;
    o << "[grid]\n"
      << "nx = " << c.grid.nx << "\nny = " << c.grid.ny << "\nLx = " << fmt_double(c.grid.lx)
      << "\nLy = " << fmt_double(c.grid.ly) << "\n\n";
    const auto& s = c.scheme;
    o << "[scheme]\n"
      << "eps = " << fmt_double(s.eps) << "\ndelta = " << fmt_double(s.delta) << "\nkappa = " << fmt_double(s.kappa)
      << "\nA1 = " << fmt_double(s.A1) << "\nA2 = " << fmt_double(s.A2) << "\nB1 = " << fmt_double(s.B1)
      << "\nB2 = " << fmt_double(s.B2) << "\nalpha1 = " << fmt_double(s.alpha1)
      << "\nalpha2 = " << fmt_double(s.alpha2) << "\ntau = " << fmt_double(s.tau) << "\nT = " << fmt_double(s.T)
      << "\nstability_check = " << detail::to_string(c.stability_check) << "\n\n";
    const auto& p = c.potential;
    o << "[potential]\n"
      << "bulk = " << p.bulk << "\nsurface = " << p.surface << "\ntheta = " << fmt_double(p.theta)
      << "\nzeta = " << fmt_double(p.zeta) << "\ncontact_angle = " << fmt_double(p.contact_angle)
      << "\ngamma = " << fmt_double(p.gamma) << "\n\n";
    const auto& i = c.initial;
    o << "[initial]\n"
      << "type = " << detail::to_string(i.kind) << "\npreset = " << i.preset << "\n";
    if (!i.expression.empty()) o << "expression = " << detail::quote(i.expression.text()) << "\n";
    if (i.seed) o << "seed = " << *i.seed << "\n";
    o << "min = " << fmt_double(i.min) << "\nmax = " << fmt_double(i.max) << "\n";
    if (!i.file.empty()) o << "file = " << detail::quote(i.file) << "\n";
    o << "\n[output]\n"
      << "dir = " << detail::quote(c.output.dir) << "\ncadence = " << c.output.cadence << "\nsnapshots = ";
    for (std::size_t k = 0; k < c.output.snapshots.size(); ++k)
        o << (k ? ", " : "") << fmt_double(c.output.snapshots[k]);
    o << "\nvtk = " << (c.output.vtk ? "true" : "false") << "\n";
    if (c.output.cutline) o << "cutline = " << fmt_double(*c.output.cutline) << "\n";
    o << "\n[solver]\n"
      << "tol = " << fmt_double(c.solver.tol) << "\nrestart = " << c.solver.restart
      << "\nmax_iterations = " << c.solver.max_iterations
      << "\npreconditioner = " << detail::to_string(c.solver.preconditioner) << "\n";
    return o.str();
}

inline const std::vector<std::string>& run_preset_names()
{
    static const std::vector<std::string> names{"accuracy", "accuracy-small", "case1",           "case2",
                                                "case3",    "case4",          "case5",           "contact-line-pos",
                                                "contact-line-neg", "flory-huggins"};
    return names;
}

/// Parameter sets of the named experiments.  Full-resolution presets use
/// h = 0.01 (101 nodes per axis); flory-huggins uses 128 cells on [0, 0.5]^2.
inline RunConfig preset_config(const std::string& name)
{
    RunConfig c;
    auto set_scheme = [&](double eps, double delta, double kappa, double A1, double A2, double B1, double B2,
                          double tau, double T) {
        c.scheme.eps = eps;
        c.scheme.delta = delta;
        c.scheme.kappa = kappa;
        c.scheme.A1 = A1;
        c.scheme.A2 = A2;
        c.scheme.B1 = B1;
        c.scheme.B2 = B2;
        c.scheme.tau = tau;
        c.scheme.T = T;
    };
    auto set_grid = [&](std::size_t n, double L) { c.grid = GridConfig{n, n, L, L}; };
    c.initial.kind = InitialKind::Preset;
    if (name == "accuracy") {
        set_grid(257, 1.0);
        set_scheme(0.02, 0.02, 0.02, 68, 150, 120, 120, 5e-3, 4.0);
        c.potential.bulk = c.potential.surface = "modified_double_well";
        c.initial.preset = "accuracy";
        c.output.cadence = 10;
    } else if (name == "accuracy-small") {
        set_grid(65, 1.0);
        set_scheme(0.02, 0.02, 0.02, 68, 150, 120, 120, 5e-4, 0.2);
        c.potential.bulk = c.potential.surface = "modified_double_well";
        c.initial.preset = "accuracy";
    } else if (name == "case1") {
        set_grid(101, 1.0);
        set_scheme(1.0, 0.1, 1.0, 1, 1, 1, 10, 1e-5, 2e-3);
        c.initial.preset = "case1";
        c.output.cutline = 0.5;
    } else if (name == "case2") {
        set_grid(101, 1.0);
        set_scheme(0.02, 0.02, 1.0, 1, 1, 50, 50, 1e-5, 1e-3);
        c.initial.preset = "case2";
    } else if (name == "case3") {
        set_grid(101, 1.0);
        set_scheme(0.02, 0.02, 0.02, 5, 5, 100, 100, 8e-6, 0.025);
        c.initial.preset = "case3";
        c.output.cadence = 25;
    } else if (name == "case4") {
        set_grid(101, 1.0);
        set_scheme(0.02, 0.02, 1.0, 5, 5, 100, 100, 8e-5, 0.2);
        c.initial.preset = "case4";
        c.output.cadence = 10;
    } else if (name == "case5") {
        set_grid(101, 1.0);
        set_scheme(0.02, 0.02, 0.02, 5, 5, 100, 100, 2e-4, 0.5);
        c.initial.preset = "case5";
        c.output.cadence = 5;
    } else if (name == "contact-line-pos" || name == "contact-line-neg") {
        set_grid(101, 1.0);
        set_scheme(0.02, 0.02, 0.02, 5, 5, 100, 100, 1e-5, 0.01);
        c.potential.surface = "contact_line";
        c.potential.contact_angle = std::acos(name == "contact-line-pos" ? 0.5 : -0.5);
        c.initial.preset = "case5";
        c.output.cadence = 10;
    } else if (name == "flory-huggins") {
        set_grid(129, 0.5);
        set_scheme(0.05, 0.05, 1.0, 10, 10, 500, 500, 1e-4, 0.05);
        c.potential.bulk = c.potential.surface = "flory_huggins";
        c.initial.kind = InitialKind::Random;
        c.initial.seed = 1;
        c.initial.min = 0.4;
        c.initial.max = 0.6;
    } else {
        throw ConfigError(0, "preset", "unknown preset '" + name + "'");
    }
    validate(c);
    return c;
}

} // namespace chdbc
