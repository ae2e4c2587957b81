#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "chdbc/chdbc.hpp"

using namespace chdbc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("chdbc_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string l;
    while (std::getline(ss, l)) out.push_back(l);
    return out;
}

RunConfig small_config(const fs::path& dir)
{
    RunConfig c;
    c.grid = GridConfig{9, 9, 1.0, 1.0};
    c.scheme.eps = c.scheme.delta = 0.1;
    c.scheme.kappa = 1.0;
    c.scheme.A1 = c.scheme.A2 = 0.0;
    c.scheme.B1 = c.scheme.B2 = 0.0;
    c.scheme.tau = 1e-3;
    c.scheme.T = 1e-2;
    c.stability_check = StabilityCheck::Skip;
    c.initial.kind = InitialKind::Expression;
    c.initial.expression = Expression("0.3*cos(pi*x)*cos(pi*y) + 0.1");
    c.output.dir = dir.string();
    return c;
}

RunOptions quiet()
{
    RunOptions o;
    o.log = nullptr;
    return o;
}

int cli(const std::string& args)
{
    const std::string cmd = std::string(CHDBC_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(RunSimulation, SteadyStateStaysPut)
{
    const auto dir = scratch("steady");
    RunConfig c = small_config(dir);
    c.initial.expression = Expression("1");
    c.scheme.T = 2 * c.scheme.tau;
    const auto r = run_simulation(c, quiet());
    ASSERT_EQ(r.rows.size(), 3u);
    for (const auto& row : r.rows) {
        EXPECT_NEAR(row.energy.E_total, r.rows[0].energy.E_total, 1e-13);
        EXPECT_NEAR(*row.energy.E_modified, r.rows[0].energy.E_total, 1e-13);
        EXPECT_NEAR(row.mass_bulk, 1.0, 1e-13);
        EXPECT_NEAR(row.mass_bdry, 4.0, 1e-13);
    }
    EXPECT_EQ(r.rows.back().step, 2u);
    EXPECT_NEAR(r.rows.back().t, 2e-3, 1e-18);
}

TEST(RunSimulation, WritesTimeSeriesSnapshotsVtkAndCutline)
{
    const auto dir = scratch("files");
    RunConfig c = small_config(dir);
    c.output.cadence = 3;
    c.output.snapshots = {0.0, 5e-3};
    c.output.vtk = true;
    c.output.cutline = 0.5;
    const auto r = run_simulation(c, quiet());

    const auto ts = lines(slurp(dir / "timeseries.csv"));
    ASSERT_FALSE(ts.empty());
    EXPECT_EQ(ts[0], kTimeSeriesHeader);
    // steps 0, 3, 6, 9 and the final step 10
    EXPECT_EQ(ts.size(), 6u);
    EXPECT_EQ(ts.back().substr(0, 3), "10,");
    EXPECT_EQ(r.rows.size(), 5u);

    for (const char* tag : {"00000000", "00000005", "00000010"}) {
        const auto phi = lines(slurp(dir / (std::string("phi_") + tag + ".csv")));
        ASSERT_EQ(phi.size(), 9u) << tag;
        EXPECT_EQ(std::count(phi[0].begin(), phi[0].end(), ','), 8) << tag;
        const auto psi = lines(slurp(dir / (std::string("psi_") + tag + ".csv")));
        EXPECT_EQ(psi.size(), 33u) << tag;
        EXPECT_EQ(psi[0], "s,x,y,psi");
        const auto vtk = lines(slurp(dir / (std::string("phi_") + tag + ".vtk")));
        ASSERT_GT(vtk.size(), 10u);
        EXPECT_EQ(vtk[0], "# vtk DataFile Version 3.0");
        EXPECT_EQ(vtk[4], "DIMENSIONS 9 9 1");
        EXPECT_EQ(vtk.size(), 10u + 81u);
        const auto cut = lines(slurp(dir / (std::string("cutline_") + tag + ".csv")));
        EXPECT_EQ(cut.size(), 10u);
        EXPECT_EQ(cut[0], "x,phi");
    }
    EXPECT_FALSE(fs::exists(dir / "phi_00000003.csv"));

    // the final snapshot holds the final state
    const BulkField last = read_grid_csv((dir / "phi_00000010.csv").string(), *r.grid);
    for (std::size_t k = 0; k < last.size(); ++k) EXPECT_DOUBLE_EQ(last.vector()[k], r.state->phi_curr.vector()[k]);
}

TEST(RunSimulation, SeededRandomRunsAreReproducible)
{
    const auto a = scratch("seed_a"), b = scratch("seed_b"), d = scratch("seed_c");
    RunConfig c = small_config(a);
    c.initial.kind = InitialKind::Random;
    c.initial.seed = 42;
    c.initial.min = -0.2;
    c.initial.max = 0.2;
    run_simulation(c, quiet());
    c.output.dir = b.string();
    run_simulation(c, quiet());
    EXPECT_EQ(slurp(a / "timeseries.csv"), slurp(b / "timeseries.csv"));
    c.output.dir = d.string();
    c.initial.seed = 43;
    run_simulation(c, quiet());
    EXPECT_NE(slurp(a / "timeseries.csv"), slurp(d / "timeseries.csv"));
}

TEST(RunSimulation, FileInitialRoundTrips)
{
    const auto dir = scratch("file");
    RunConfig c = small_config(dir);
    const Grid g = c.grid.build();
    const BulkField u0 = make_initial(c.initial, g);
    write_grid_csv((dir / "init.csv").string(), u0);
    const BulkField back = read_grid_csv((dir / "init.csv").string(), g);
    for (std::size_t k = 0; k < u0.size(); ++k) EXPECT_EQ(back.vector()[k], u0.vector()[k]);

    RunConfig from_file = c;
    from_file.initial.kind = InitialKind::File;
    from_file.initial.file = (dir / "init.csv").string();
    from_file.output.dir = (dir / "f").string();
    c.output.dir = (dir / "e").string();
    const auto r1 = run_simulation(c, quiet());
    const auto r2 = run_simulation(from_file, quiet());
    EXPECT_EQ(r1.state->phi_curr.vector(), r2.state->phi_curr.vector());

    EXPECT_THROW(read_grid_csv((dir / "init.csv").string(), Grid::unit_square(5)), GridMismatch);
    std::ofstream((dir / "bad.csv").string()) << "1,2,x\n";
    EXPECT_THROW(read_grid_csv((dir / "bad.csv").string(), Grid::unit_square(5)), std::invalid_argument);
}

TEST(RunSimulation, MassIsConservedAndEnergyLawChecked)
{
    const auto dir = scratch("law");
    RunConfig c = small_config(dir);
    c.grid = GridConfig{17, 17, 1.0, 1.0};
    c.scheme = preset_config("case3").scheme;
    c.scheme.tau = 1e-4;
    c.scheme.T = 5e-3;
    c.initial.kind = InitialKind::Preset;
    c.initial.preset = "case3";
    c.stability_check = StabilityCheck::Skip;
    c.potential.bulk = c.potential.surface = "modified_double_well";
    c.scheme.A1 = c.scheme.A2 = 1000.0;
    c.scheme.B1 = c.scheme.B2 = 200.0;
    const auto r = run_simulation(c, quiet());
    EXPECT_TRUE(r.energy_law_checked);
    EXPECT_LT(r.max_mass_drift_bulk, 1e-12);
    EXPECT_LT(r.max_mass_drift_bdry, 1e-12);
    for (std::size_t k = 1; k < r.rows.size(); ++k)
        EXPECT_LE(*r.rows[k].energy.E_modified, *r.rows[k - 1].energy.E_modified * (1 + 1e-12));
}

TEST(RunSimulation, EnforcedStabilityRejectsWeakStabilizers)
{
    RunConfig c = preset_config("case2");
    c.grid = GridConfig{9, 9, 1.0, 1.0};
    c.potential.bulk = c.potential.surface = "modified_double_well";
    c.stability_check = StabilityCheck::Enforce;
    c.output.dir = scratch("enforce").string();
    const StabilityReport rep = check_stability(c.scheme, c.potential.build());
    ASSERT_TRUE(rep.A1_ok && rep.A2_ok);
    ASSERT_FALSE(rep.B1_ok);
    try {
        run_simulation(c, quiet());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path, "scheme.B1");
    }
    c.scheme.B1 = c.scheme.B2 = rep.B1_min;
    c.scheme.T = 4 * c.scheme.tau;
    EXPECT_NO_THROW(run_simulation(c, quiet()));
    c.potential.bulk = c.potential.surface = "double_well";
    try {
        run_simulation(c, quiet());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path, "potential");
    }
}

TEST(RunSweep, RecordsFailuresPerValue)
{
    const auto dir = scratch("sweep");
    const RunConfig c = small_config(dir);
    const auto out = run_sweep(c, "scheme.tau", {"1e-3", "-1", "2e-3"}, quiet());
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].status, "ok");
    EXPECT_NE(out[1].status.find("scheme.tau"), std::string::npos);
    EXPECT_EQ(out[2].status, "ok");
    EXPECT_TRUE(fs::exists(dir / "scheme.tau=1e-3" / "timeseries.csv"));
    const auto csv = lines(slurp(dir / "sweep.csv"));
    ASSERT_EQ(csv.size(), 4u);
    EXPECT_EQ(csv[0], "value,status,E_total,E_modified,mass_drift_bulk,mass_drift_bdry");
}

TEST(RunConvergence, WritesTableAndSlope)
{
    const auto dir = scratch("conv");
    RunConfig c = small_config(dir);
    c.scheme.T = 0.02;
    const std::vector<double> taus{4e-3, 2e-3, 1e-3};
    const auto res = run_convergence(c, taus, 1.25e-4, quiet());
    ASSERT_EQ(res.records.size(), 3u);
    EXPECT_GT(res.slope, 1.5);
    const auto csv = lines(slurp(dir / "convergence.csv"));
    EXPECT_EQ(csv.size(), 4u);
    EXPECT_EQ(csv[0], "tau,error,error_phi,error_psi,hminus1_phi,hminus1_psi,h1_phi");
    EXPECT_NEAR(std::stod(slurp(dir / "slope.txt")), res.slope, 1e-12 * std::abs(res.slope));
}

TEST(Cli, ExitCodes)
{
    const auto dir = scratch("cli");
    EXPECT_EQ(cli("config"), 0);
    EXPECT_EQ(cli("config --set scheme.tau=-1"), 2);
    EXPECT_EQ(cli("config --preset nope"), 2);
    EXPECT_EQ(cli("config --set grid.bogus=3"), 2);
    EXPECT_EQ(cli("config --set initial.type=expression --set \"initial.expression=sin(\""), 2);
    EXPECT_EQ(cli("check-stability --preset case3"), 0);
    EXPECT_NE(cli("frobnicate"), 0);
    const std::string small = "--set grid.nx=9 --set grid.ny=9 --set scheme.tau=1e-3 --set scheme.T=4e-3 --out " +
                              (dir / "run").string();
    EXPECT_EQ(cli("run " + small), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "timeseries.csv"));
    EXPECT_EQ(cli("run " + small + " --set scheme.stability_check=enforce --set potential.bulk=modified_double_well"),
              2);
    EXPECT_EQ(cli("run --set initial.type=file --set initial.file=" + (dir / "missing.csv").string() + " " + small), 1);
}

TEST(Presets, FloryHugginsSolutionStaysInsideTheLogCore)
{
    RunConfig c = preset_config("flory-huggins");
    c.grid = GridConfig{33, 33, 0.5, 0.5};
    const Grid g = c.grid.build();
    Stepper st(g, c.scheme, c.potential.build(), c.solver);
    StepResult r = st.bootstrap(make_initial(c.initial, g));
    double lo = 1.0, hi = 0.0;
    for (std::size_t n = 1; n <= c.steps(); ++n) {
        if (n > 1) r = st.step(r.state);
        for (double v : r.state.phi_curr.values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    EXPECT_GT(lo, 0.1);
    EXPECT_LT(hi, 0.9);
}
