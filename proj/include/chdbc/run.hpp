#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "chdbc/config.hpp"
#include "chdbc/diagnostics.hpp"

namespace chdbc {

/// A conserved quantity or the modified energy broke its law during a run.
class InvariantViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- initial data

namespace detail {

inline std::vector<std::vector<double>> read_csv_rows(std::istream& in, const std::string& what)
{
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(parse_double(trim(cell)));
            } catch (const std::exception& e) {
                throw std::invalid_argument(what + ", line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace detail

/// Initial data of the named presets, evaluated at node (x, y).
inline double initial_preset_value(const std::string& name, const Grid& g, std::size_t i, std::size_t j)
{
    const double x = g.x(i), y = g.y(j);
    const double pi = std::numbers::pi;
    if (name == "accuracy" || name == "case3") return g.on_boundary(i, j) ? 1.0 : 0.0;
    if (name == "case1") return x > 0.5 ? 1.0 : -1.0;
    if (name == "case2") return std::sin(4.0 * pi * x) * std::cos(4.0 * pi * y);
    if (name == "case4") return std::max(0.1 * std::sin(pi * x), 0.1 * std::sin(pi * y));
    if (name == "case5") return (std::abs(x - 0.5) <= 0.25 && std::abs(y - 0.25) <= 0.25) ? 1.0 : -1.0;
    throw std::invalid_argument("unknown initial preset '" + name + "'");
}

/// Reads a field written by write_grid_csv: ny lines of nx values, y = 0 first.
inline BulkField read_grid_csv(const std::string& path, const Grid& g)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open initial file '" + path + "'");
    const auto rows = detail::read_csv_rows(in, path);
    if (rows.size() != g.ny()) throw GridMismatch(path + ": expected " + std::to_string(g.ny()) + " rows");
    BulkField u(g);
    for (std::size_t j = 0; j < g.ny(); ++j) {
        if (rows[j].size() != g.nx())
            throw GridMismatch(path + ": row " + std::to_string(j + 1) + " needs " + std::to_string(g.nx()) + " values");
        for (std::size_t i = 0; i < g.nx(); ++i) u(i, j) = rows[j][i];
    }
    return u;
}

inline BulkField make_initial(const InitialConfig& ic, const Grid& g)
{
    BulkField u(g);
    switch (ic.kind) {
    case InitialKind::Preset:
        for (std::size_t j = 0; j < g.ny(); ++j)
            for (std::size_t i = 0; i < g.nx(); ++i) u(i, j) = initial_preset_value(ic.preset, g, i, j);
        break;
    case InitialKind::Expression:
        for (std::size_t j = 0; j < g.ny(); ++j)
            for (std::size_t i = 0; i < g.nx(); ++i) u(i, j) = ic.expression(g.x(i), g.y(j));
        break;
    case InitialKind::Random: {
        if (!ic.seed) throw ConfigError(0, "initial.seed", "required for type = random");
        std::mt19937_64 rng(*ic.seed);
        std::uniform_real_distribution<double> dist(ic.min, ic.max);
        for (double& v : u.values()) v = dist(rng);
        break;
    }
    case InitialKind::File: u = read_grid_csv(ic.file, g); break;
    }
    if (!u.all_finite()) throw NonFiniteValue("initial condition has non-finite values");
    return u;
}

// --------------------------------------------------------------------- writers

inline void write_grid_csv(const std::string& path, const BulkField& u)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    const Grid& g = u.grid();
    for (std::size_t j = 0; j < g.ny(); ++j) {
        for (std::size_t i = 0; i < g.nx(); ++i) out << (i ? "," : "") << detail::fmt_double(u(i, j));
        out << '\n';
    }
}

inline void write_loop_csv(const std::string& path, const BoundaryField& v)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    const Grid& g = v.grid();
    out << "s,x,y,psi\n";
    for (std::size_t l = 0; l < v.size(); ++l) {
        const auto& n = g.loop()[l];
        out << detail::fmt_double(n.s) << ',' << detail::fmt_double(g.x(n.i)) << ',' << detail::fmt_double(g.y(n.j))
            << ',' << detail::fmt_double(v[l]) << '\n';
    }
}

/// Legacy VTK, STRUCTURED_POINTS, ASCII.
inline void write_vtk(const std::string& path, const BulkField& u, const std::string& name = "phi")
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    const Grid& g = u.grid();
    out << "# vtk DataFile Version 3.0\n" << name << "\nASCII\nDATASET STRUCTURED_POINTS\n";
    out << "DIMENSIONS " << g.nx() << ' ' << g.ny() << " 1\n";
    out << "ORIGIN 0 0 0\n";
    out << "SPACING " << detail::fmt_double(g.h()) << ' ' << detail::fmt_double(g.h()) << " 1\n";
    out << "POINT_DATA " << g.size() << "\nSCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (std::size_t j = 0; j < g.ny(); ++j)
        for (std::size_t i = 0; i < g.nx(); ++i) out << detail::fmt_double(u(i, j)) << '\n';
}

/// Profile along the grid row nearest to y.
inline void write_cutline_csv(const std::string& path, const BulkField& u, double y)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    const Grid& g = u.grid();
    const auto j = static_cast<std::size_t>(std::llround(y / g.h()));
    out << "x,phi\n";
    for (std::size_t i = 0; i < g.nx(); ++i) out << detail::fmt_double(g.x(i)) << ',' << detail::fmt_double(u(i, j)) << '\n';
}

struct TimeRow {
    std::size_t step = 0;
    double t = 0.0;
    EnergyBreakdown energy;
    double mass_bulk = 0.0, mass_bdry = 0.0;
    std::size_t gmres_iters = 0;
    double residual = 0.0;
};

inline constexpr const char* kTimeSeriesHeader =
    "step,t,E_bulk,E_surf,E_total,E_modified,mass_bulk,mass_bdry,gmres_iters,residual";

inline std::string format_row(const TimeRow& r)
{
    using detail::fmt_double;
    std::ostringstream o;
    o << r.step << ',' << fmt_double(r.t) << ',' << fmt_double(r.energy.E_bulk) << ','
      << fmt_double(r.energy.E_surf) << ',' << fmt_double(r.energy.E_total) << ','
      << fmt_double(r.energy.E_modified.value_or(r.energy.E_total)) << ',' << fmt_double(r.mass_bulk) << ','
      << fmt_double(r.mass_bdry) << ',' << r.gmres_iters << ',' << fmt_double(r.residual);
    return o.str();
}

// ------------------------------------------------------------------ the driver

struct RunOptions {
    bool write_files = true;
    bool keep_rows = true;
    std::function<void(const std::string&)> log = [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); };
};

struct RunResult {
    std::shared_ptr<const Grid> grid; ///< owns the grid the fields below refer to
    std::vector<TimeRow> rows; ///< every cadence tick plus the final step
    std::optional<StepState> state; ///< final two levels; empty only before the first step
    StabilityReport stability;
    bool energy_law_checked = false;
    double max_mass_drift_bulk = 0.0, max_mass_drift_bdry = 0.0;
};

/// Applies the configured stability policy; throws ConfigError under
/// `enforce` when a condition fails.
inline StabilityReport apply_stability_policy(const RunConfig& c, const Potential& pot, const RunOptions& opt)
{
    StabilityReport r = check_stability(c.scheme, pot);
    if (c.stability_check == StabilityCheck::Skip) return r;
    std::string problem;
    std::string path;
    if (!r.applicable) {
        problem = r.warning;
        path = "potential";
    } else if (!r.satisfied()) {
        std::ostringstream o;
        o << "stabilizers below the energy-stability minima:";
        if (!r.A1_ok) o << " A1 < " << r.A1_min;
        if (!r.A2_ok) o << " A2 < " << r.A2_min;
        if (!r.B1_ok) o << " B1 < " << r.B1_min;
        if (!r.B2_ok) o << " B2 < " << r.B2_min;
        problem = o.str();
        path = !r.A1_ok ? "scheme.A1" : !r.A2_ok ? "scheme.A2" : !r.B1_ok ? "scheme.B1" : "scheme.B2";
    }
    if (problem.empty()) return r;
    if (c.stability_check == StabilityCheck::Enforce) throw ConfigError(0, path, problem);
    if (opt.log) opt.log("warning: " + problem);
    return r;
}

/// Integrates from 0 to T.  Masses are checked at every step; the modified
/// energy is checked whenever the stabilizer conditions hold.
inline RunResult run_simulation(const RunConfig& c, const RunOptions& opt = {})
{
    validate(c);
    RunResult res;
    res.grid = std::make_shared<const Grid>(c.grid.build());
    const Grid& g = *res.grid;
    const Potential pot = c.potential.build();
    res.stability = apply_stability_policy(c, pot, opt);
    res.energy_law_checked = res.stability.satisfied();

    const std::filesystem::path dir(c.output.dir);
    if (opt.write_files) std::filesystem::create_directories(dir);
    std::ofstream series;
    if (opt.write_files) {
        series.open(dir / "timeseries.csv");
        if (!series) throw std::runtime_error("cannot write '" + (dir / "timeseries.csv").string() + "'");
        series << kTimeSeriesHeader << '\n';
    }

    const std::size_t n_steps = c.steps();
    std::vector<std::size_t> snapshot_steps;
    for (double t : c.output.snapshots) snapshot_steps.push_back(static_cast<std::size_t>(std::llround(t / c.scheme.tau)));

    auto snapshot = [&](std::size_t step, const BulkField& phi, const BoundaryField& psi) {
        if (!opt.write_files) return;
        char tag[32];
        std::snprintf(tag, sizeof tag, "%08zu", step);
        write_grid_csv((dir / ("phi_" + std::string(tag) + ".csv")).string(), phi);
        write_loop_csv((dir / ("psi_" + std::string(tag) + ".csv")).string(), psi);
        if (c.output.vtk) write_vtk((dir / ("phi_" + std::string(tag) + ".vtk")).string(), phi);
        if (c.output.cutline)
            write_cutline_csv((dir / ("cutline_" + std::string(tag) + ".csv")).string(), phi, *c.output.cutline);
    };
    auto wants_snapshot = [&](std::size_t step) {
        return std::find(snapshot_steps.begin(), snapshot_steps.end(), step) != snapshot_steps.end();
    };

    const BulkField phi0 = make_initial(c.initial, g);
    const BoundaryField psi0 = trace(phi0);
    EnergyMeter meter(g, c.scheme, pot);
    const auto [mb0, ms0] = masses(phi0, psi0);
    const double tol_b = 1e-10 * std::max(1.0, std::abs(mb0));
    const double tol_s = 1e-10 * std::max(1.0, std::abs(ms0));

    auto emit = [&](const TimeRow& row, bool force) {
        if (row.step % c.output.cadence != 0 && !force) return;
        if (opt.write_files) series << format_row(row) << '\n';
        if (opt.keep_rows) res.rows.push_back(row);
    };

    TimeRow row0;
    row0.energy = meter.total(phi0, psi0);
    row0.energy.E_modified = row0.energy.E_total;
    row0.mass_bulk = mb0;
    row0.mass_bdry = ms0;
    emit(row0, false);
    if (wants_snapshot(0)) snapshot(0, phi0, psi0);

    Stepper stepper(g, c.scheme, pot, c.solver);
    std::optional<double> prev_modified;
    auto advance = [&](StepResult&& r, std::size_t step) {
        res.state = std::move(r.state);
        const auto& s = *res.state;
        TimeRow row;
        row.step = step;
        row.t = static_cast<double>(step) * c.scheme.tau;
        row.energy = meter.modified(s);
        std::tie(row.mass_bulk, row.mass_bdry) = masses(s.phi_curr, s.psi_curr);
        row.gmres_iters = r.report.iterations;
        row.residual = r.report.residual;
        const double db = std::abs(row.mass_bulk - mb0), ds = std::abs(row.mass_bdry - ms0);
        res.max_mass_drift_bulk = std::max(res.max_mass_drift_bulk, db);
        res.max_mass_drift_bdry = std::max(res.max_mass_drift_bdry, ds);
        if (db > tol_b || ds > tol_s) {
            std::ostringstream o;
            o << "mass not conserved at step " << step << ": bulk drift " << db << ", boundary drift " << ds;
            throw InvariantViolation(o.str());
        }
        const double em = *row.energy.E_modified;
        if (res.energy_law_checked && prev_modified && em > *prev_modified + 1e-12 * std::abs(*prev_modified)) {
            std::ostringstream o;
            o.precision(17);
            o << "modified energy increased at step " << step << ": " << *prev_modified << " -> " << em;
            throw InvariantViolation(o.str());
        }
        prev_modified = em;
        emit(row, step == n_steps);
        if (wants_snapshot(step)) snapshot(step, s.phi_curr, s.psi_curr);
    };

    advance(stepper.bootstrap(phi0), 1);
    for (std::size_t step = 2; step <= n_steps; ++step) advance(stepper.step(*res.state), step);
    if (!wants_snapshot(n_steps)) snapshot(n_steps, res.state->phi_curr, res.state->psi_curr);
    return res;
}

// ------------------------------------------------------- convergence and sweep

/// Time-step ladder against a fine reference; writes convergence.csv when
/// `write_files` is set.
inline ConvergenceResult run_convergence(const RunConfig& c, std::span<const double> taus, double tau_ref,
                                         const RunOptions& opt = {})
{
    validate(c);
    const Grid g = c.grid.build();
    auto simulate = [&](double tau) {
        RunConfig member = c;
        member.scheme.tau = tau;
        member.output.snapshots.clear();
        RunOptions quiet = opt;
        quiet.write_files = false;
        quiet.keep_rows = false;
        auto r = run_simulation(member, quiet);
        // rebind to the local grid; r.grid dies with r
        return std::make_pair(BulkField(g, r.state->phi_curr.vector()), BoundaryField(g, r.state->psi_curr.vector()));
    };
    ConvergenceResult out = convergence_study(taus, tau_ref, c.scheme.T, simulate);
    if (opt.write_files) {
        const std::filesystem::path dir(c.output.dir);
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / "convergence.csv");
        f << "tau,error,error_phi,error_psi,hminus1_phi,hminus1_psi,h1_phi\n";
        auto opt_str = [](const std::optional<double>& v) { return v ? detail::fmt_double(*v) : std::string(); };
        for (const auto& r : out.records)
            f << detail::fmt_double(r.tau) << ',' << detail::fmt_double(r.error) << ','
              << detail::fmt_double(r.error_phi) << ',' << detail::fmt_double(r.error_psi) << ','
              << opt_str(r.hminus1_phi) << ',' << opt_str(r.hminus1_psi) << ',' << opt_str(r.h1_phi) << '\n';
        std::ofstream s(dir / "slope.txt");
        s << detail::fmt_double(out.slope) << '\n';
    }
    return out;
}

struct SweepEntry {
    std::string value;
    std::string status; ///< "ok" or the error message
    double E_total = 0.0, E_modified = 0.0;
    double mass_drift_bulk = 0.0, mass_drift_bdry = 0.0;
};

/// Runs the configuration once per value of `path`; each run writes into
/// <dir>/<key>=<value>.  Failures are recorded, not rethrown.
inline std::vector<SweepEntry> run_sweep(const RunConfig& c, const std::string& path,
                                         const std::vector<std::string>& values, const RunOptions& opt = {})
{
    std::vector<SweepEntry> out;
    const std::filesystem::path dir(c.output.dir);
    for (const auto& v : values) {
        SweepEntry e;
        e.value = v;
        try {
            RunConfig member = c;
            set_config_value(member, path, v);
            member.output.dir = (dir / (path + "=" + v)).string();
            validate(member);
            auto r = run_simulation(member, opt);
            e.status = "ok";
            e.E_total = r.rows.empty() ? 0.0 : r.rows.back().energy.E_total;
            e.E_modified = r.rows.empty() ? 0.0 : r.rows.back().energy.E_modified.value_or(0.0);
            e.mass_drift_bulk = r.max_mass_drift_bulk;
            e.mass_drift_bdry = r.max_mass_drift_bdry;
        } catch (const std::exception& ex) {
            e.status = ex.what();
        }
        out.push_back(e);
    }
    if (opt.write_files) {
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / "sweep.csv");
        f << "value,status,E_total,E_modified,mass_drift_bulk,mass_drift_bdry\n";
        for (const auto& e : out) {
            std::string status = e.status;
            std::replace(status.begin(), status.end(), ',', ';');
            f << e.value << ',' << status << ',' << detail::fmt_double(e.E_total) << ','
              << detail::fmt_double(e.E_modified) << ',' << detail::fmt_double(e.mass_drift_bulk) << ','
              << detail::fmt_double(e.mass_drift_bdry) << '\n';
        }
    }
    return out;
}

} // namespace chdbc
