#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chdbc/chdbc.hpp"

namespace {

enum Exit { Ok = 0, Failure = 1, ConfigFailure = 2, SolverFailed = 3, Invariant = 4 };

struct Common {
    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::string cutline;
    bool vtk = false;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("-c,--config", c.config_path, "config file (sectioned key = value)");
    cmd->add_option("-p,--preset", c.preset, "start from a named preset");
    cmd->add_option("-s,--set", c.overrides, "override a key, e.g. --set scheme.tau=1e-4");
    cmd->add_option("-o,--out", c.out_dir, "output directory");
}

chdbc::RunConfig load(const Common& c)
{
    chdbc::RunConfig cfg;
    if (!c.preset.empty()) cfg = chdbc::preset_config(c.preset);
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw chdbc::ConfigError(0, "", "cannot open config file '" + c.config_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = chdbc::parse_config(ss.str(), cfg);
    }
    for (const auto& o : c.overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw chdbc::ConfigError(0, o, "override needs section.key=value");
        chdbc::set_config_value(cfg, o.substr(0, eq), o.substr(eq + 1));
    }
    if (!c.out_dir.empty()) cfg.output.dir = c.out_dir;
    if (c.vtk) cfg.output.vtk = true;
    if (!c.cutline.empty()) {
        if (c.cutline.rfind("y=", 0) != 0) throw chdbc::ConfigError(0, "output.cutline", "expected y=<value>");
        chdbc::set_config_value(cfg, "output.cutline", c.cutline.substr(2));
    }
    chdbc::validate(cfg);
    return cfg;
}

std::vector<double> parse_taus(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

void print_stability(const chdbc::StabilityReport& r)
{
    if (!r.applicable) {
        std::printf("not applicable: %s\n", r.warning.c_str());
        return;
    }
    auto line = [](const char* name, double min, bool ok) {
        std::printf("%-3s min %-14.8g %s\n", name, min, ok ? "pass" : "fail");
    };
    line("A1", r.A1_min, r.A1_ok);
    line("A2", r.A2_min, r.A2_ok);
    line("B1", r.B1_min, r.B1_ok);
    line("B2", r.B2_min, r.B2_ok);
    std::printf("tau bound without A-stabilizers: %.8g\n", r.tau_bound_unstabilized);
    std::printf("energy law guaranteed: %s\n", r.satisfied() ? "yes" : "no");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cahn-Hilliard solver with dynamic boundary conditions"};
    app.require_subcommand(1);

    Common run_opts, conv_opts, sweep_opts, stab_opts, dump_opts;

    auto* run = app.add_subcommand("run", "integrate one configuration to its final time");
    add_common(run, run_opts);
    run->add_option("--cutline", run_opts.cutline, "write the profile along y=<value> with each snapshot");
    run->add_flag("--vtk", run_opts.vtk, "also write legacy VTK snapshots");

    std::string taus_arg = "4e-3,2e-3,1e-3,5e-4";
    double tau_ref = 1.25e-4;
    auto* conv = app.add_subcommand("convergence", "time-step ladder against a reference run");
    add_common(conv, conv_opts);
    conv->add_option("--taus", taus_arg, "comma separated coarse steps");
    conv->add_option("--tau-ref", tau_ref, "reference step");

    std::string sweep_key;
    std::vector<std::string> sweep_values;
    auto* sweep = app.add_subcommand("sweep", "repeat a run over a list of values for one key");
    add_common(sweep, sweep_opts);
    sweep->add_option("--param", sweep_key, "section.key to vary")->required();
    sweep->add_option("--values", sweep_values, "values")->required()->delimiter(',');

    auto* stab = app.add_subcommand("check-stability", "print the stabilizer minima without running");
    add_common(stab, stab_opts);

    auto* dump = app.add_subcommand("config", "print the resolved configuration");
    add_common(dump, dump_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = load(run_opts);
            auto res = chdbc::run_simulation(cfg);
            const auto& last = res.rows.back();
            std::printf("steps %zu  E_total %.10g  E_modified %.10g  mass drift %.3g / %.3g\n", last.step,
                        last.energy.E_total, last.energy.E_modified.value_or(last.energy.E_total),
                        res.max_mass_drift_bulk, res.max_mass_drift_bdry);
            std::printf("energy law %s\n", res.energy_law_checked ? "checked" : "not guaranteed, not checked");
        } else if (*conv) {
            const auto cfg = load(conv_opts);
            const auto taus = parse_taus(taus_arg);
            auto res = chdbc::run_convergence(cfg, taus, tau_ref);
            for (const auto& r : res.records) std::printf("tau %-10.4g error %.6e\n", r.tau, r.error);
            std::printf("slope %.4f\n", res.slope);
        } else if (*sweep) {
            const auto cfg = load(sweep_opts);
            auto res = chdbc::run_sweep(cfg, sweep_key, sweep_values);
            bool all_ok = true;
            for (const auto& e : res) {
                std::printf("%s=%s  %s\n", sweep_key.c_str(), e.value.c_str(), e.status.c_str());
                all_ok = all_ok && e.status == "ok";
            }
            return all_ok ? Ok : Invariant;
        } else if (*stab) {
            const auto cfg = load(stab_opts);
            print_stability(chdbc::check_stability(cfg.scheme, cfg.potential.build()));
        } else if (*dump) {
            std::fputs(chdbc::print_config(load(dump_opts)).c_str(), stdout);
        }
    } catch (const chdbc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return ConfigFailure;
    } catch (const chdbc::ExpressionError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return ConfigFailure;
    } catch (const chdbc::SolverFailure& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return SolverFailed;
    } catch (const chdbc::InvariantViolation& e) {
        std::fprintf(stderr, "invariant violated: %s\n", e.what());
        return Invariant;
    } catch (const chdbc::MeanNotZero& e) {
        std::fprintf(stderr, "invariant violated: %s\n", e.what());
        return Invariant;
    } catch (const chdbc::NonFiniteValue& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return SolverFailed;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return Failure;
    }
    return Ok;
}
