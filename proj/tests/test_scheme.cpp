#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace chdbc;

namespace {

double max_diff(std::span<const double> a, std::span<const double> b)
{
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

SchemeParams random_params(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SchemeParams p;
    p.eps = 0.05 + 0.5 * u(rng);
    p.delta = 0.05 + 0.5 * u(rng);
    p.kappa = 2.0 * u(rng);
    p.A1 = 10.0 * u(rng);
    p.A2 = 10.0 * u(rng);
    p.B1 = 20.0 * u(rng);
    p.B2 = 20.0 * u(rng);
    p.tau = 1e-4 + 1e-2 * u(rng);
    return p;
}

std::vector<Potential> all_potentials()
{
    return {double_well(), modified_double_well(), Potential{ModifiedDoubleWell{}, contact_line_surface(1.0)},
            flory_huggins_regularized(2.5, 0.005)};
}

Potential linear_potential()
{
    const ContactLine zero{1.0, 0.0};
    return Potential{zero, zero};
}

SolverSettings tight() { return SolverSettings{1e-13, 50, 0, PreconditionerKind::LU}; }

} // namespace

TEST(SchemeParams, ReportsFirstInvalidField)
{
    SchemeParams p;
    EXPECT_FALSE(p.invalid_field().has_value());
    auto bad = [](auto mutate) {
        SchemeParams q;
        mutate(q);
        return q.invalid_field().value_or("");
    };
    EXPECT_EQ(bad([](SchemeParams& q) { q.eps = 0.0; }), "eps");
    EXPECT_EQ(bad([](SchemeParams& q) { q.delta = -1.0; }), "delta");
    EXPECT_EQ(bad([](SchemeParams& q) { q.kappa = -0.1; }), "kappa");
    EXPECT_EQ(bad([](SchemeParams& q) { q.A1 = -1.0; }), "A1");
    EXPECT_EQ(bad([](SchemeParams& q) { q.B2 = std::nan(""); }), "B2");
    EXPECT_EQ(bad([](SchemeParams& q) { q.alpha1 = 1.5; }), "alpha1");
    EXPECT_EQ(bad([](SchemeParams& q) { q.alpha2 = 0.0; }), "alpha2");
    EXPECT_EQ(bad([](SchemeParams& q) { q.tau = -1.0; }), "tau");
    EXPECT_EQ(bad([](SchemeParams& q) { q.T = 0.0; }), "T");
    EXPECT_EQ(bad([](SchemeParams& q) { q.alpha1 = 0.0; }), "");
}

TEST(CheckStability, MinimaForAccuracyParameters)
{
    SchemeParams p;
    p.eps = p.delta = p.kappa = 0.02;
    p.A1 = 68;
    p.A2 = 150;
    p.B1 = p.B2 = 120;
    p.tau = 0.01;
    const StabilityReport r = check_stability(p, modified_double_well());
    ASSERT_TRUE(r.applicable);
    EXPECT_DOUBLE_EQ(r.B1_min, 100.0);
    EXPECT_DOUBLE_EQ(r.B2_min, 100.0);
    EXPECT_TRUE(r.B1_ok);
    EXPECT_TRUE(r.B2_ok);
    EXPECT_NEAR(r.A1_min, 624.0, 1e-9);
    EXPECT_NEAR(r.A2_min, 625.0 - 0.02 * 0.02 / 0.02, 1e-9);
    EXPECT_FALSE(r.A1_ok);
    EXPECT_FALSE(r.A2_ok);
    EXPECT_FALSE(r.satisfied());
    EXPECT_NEAR(r.tau_bound_unstabilized, std::min(8 * 8e-6 / 4.0, 8 * 8e-6 * 0.02 / 4.0), 1e-18);

    p.A1 = r.A1_min;
    p.A2 = r.A2_min;
    EXPECT_TRUE(check_stability(p, modified_double_well()).satisfied());
}

TEST(CheckStability, DegenerateAndUnboundedPotentials)
{
    SchemeParams p;
    const StabilityReport flat = check_stability(p, linear_potential());
    ASSERT_TRUE(flat.applicable);
    EXPECT_LE(flat.A1_min, 0.0);
    EXPECT_LE(flat.A2_min, 0.0);
    EXPECT_LE(flat.B1_min, 0.0);
    EXPECT_LE(flat.B2_min, 0.0);
    EXPECT_TRUE(flat.satisfied());

    const StabilityReport dw = check_stability(p, double_well());
    EXPECT_FALSE(dw.applicable);
    EXPECT_FALSE(dw.satisfied());
    EXPECT_NE(dw.warning.find("double_well"), std::string::npos);
}

TEST(Bootstrap, PureStateIsAFixedPoint)
{
    const Grid g = Grid::unit_square(9);
    for (double s : {1.0, -1.0}) {
        Stepper st(g, SchemeParams{}, double_well());
        const StepResult r = st.bootstrap(BulkField(g, s));
        for (double v : r.state.phi_curr.values()) EXPECT_NEAR(v, s, 1e-14);
        for (double v : r.state.psi_curr.values()) EXPECT_NEAR(v, s, 1e-14);
        EXPECT_EQ(r.state.step, 1u);
    }
}

TEST(Bootstrap, ConservesBothMeansFromAccuracyInitialData)
{
    const Grid g = Grid::unit_square(33);
    SchemeParams p;
    p.A1 = 68;
    p.A2 = 150;
    p.B1 = p.B2 = 120;
    p.tau = 1e-3;
    BulkField phi0(g, 0.0);
    for (const auto& n : g.loop()) phi0[n.node] = 1.0;
    Stepper st(g, p, modified_double_well(), tight());
    const StepResult r = st.bootstrap(phi0);
    EXPECT_NEAR(mean(r.state.phi_curr), mean(phi0), 1e-12);
    EXPECT_NEAR(mean(r.state.psi_curr), mean(trace(phi0)), 1e-12);
    EXPECT_EQ(r.state.m0, mean(phi0));
}

TEST(Bootstrap, MatchesDenseWeakFormOracle)
{
    std::mt19937_64 rng(21);
    for (std::size_t n : {4u, 5u, 7u}) {
        const Grid g = Grid::unit_square(n);
        for (const Potential& pot : all_potentials()) {
            const SchemeParams p = random_params(rng);
            const bool fh = std::holds_alternative<FloryHuggins>(pot.bulk);
            const BulkField phi0 = fh ? oracle::random_field(g, rng, 0.2, 0.8) : oracle::random_field(g, rng);
            Stepper st(g, p, pot, tight());
            const StepResult r = st.bootstrap(phi0);
            const auto o = oracle::bootstrap(phi0, p, pot);
            EXPECT_LE(max_diff(r.state.phi_curr.values(), o.phi), 1e-10);
            EXPECT_LE(max_diff(r.state.psi_curr.values(), o.psi), 1e-10);
            EXPECT_LE(max_diff(r.mu.values(), o.mu), 1e-10 * std::max(1.0, max_abs(o.mu)));
            EXPECT_LE(max_diff(r.mu_gamma.values(), o.mu_gamma), 1e-10 * std::max(1.0, max_abs(o.mu_gamma)));
        }
    }
}

TEST(Bdf2, PureStatesAreExactFixedPoints)
{
    const Grid g(6, 8, 1.0, 1.4);
    std::mt19937_64 rng(22);
    for (double s : {1.0, -1.0}) {
        for (int trial = 0; trial < 5; ++trial) {
            const SchemeParams p = random_params(rng);
            Stepper st(g, p, double_well(), tight());
            const BulkField u(g, s);
            const StepState state{u, u, trace(u), trace(u), 1, s, s};
            const StepResult r = st.step(state);
            for (double v : r.state.phi_curr.values()) EXPECT_NEAR(v, s, 1e-13);
            for (double v : r.mu.values()) EXPECT_NEAR(v, 0.0, 1e-10);
            for (double v : r.mu_gamma.values()) EXPECT_NEAR(v, 0.0, 1e-10);
            EXPECT_EQ(r.state.step, 2u);
        }
    }
}

TEST(Bdf2, MatchesDenseWeakFormOracle)
{
    std::mt19937_64 rng(23);
    for (std::size_t n : {4u, 6u, 8u}) {
        const Grid g = Grid::unit_square(n);
        for (const Potential& pot : all_potentials()) {
            for (int trial = 0; trial < 3; ++trial) {
                const SchemeParams p = random_params(rng);
                StepState s = oracle::random_state(g, rng);
                if (std::holds_alternative<FloryHuggins>(pot.bulk)) {
                    // keep the extrapolant inside the regular range
                    for (double& v : s.phi_curr.values()) v = 0.5 + 0.3 * v;
                    for (double& v : s.phi_prev.values()) v = 0.5 + 0.3 * v;
                    s.psi_curr = trace(s.phi_curr);
                    s.psi_prev = trace(s.phi_prev);
                }
                Stepper st(g, p, pot, tight());
                const StepResult r = st.step(s);
                const auto o = oracle::bdf2(s, p, pot);
                EXPECT_LE(max_diff(r.state.phi_curr.values(), o.phi), 1e-10) << n << " " << density_name(pot.bulk);
                EXPECT_LE(max_diff(r.state.psi_curr.values(), o.psi), 1e-10);
                EXPECT_LE(max_diff(r.mu.values(), o.mu), 1e-10 * std::max(1.0, max_abs(o.mu)));
                EXPECT_LE(max_diff(r.mu_gamma.values(), o.mu_gamma), 1e-10 * std::max(1.0, max_abs(o.mu_gamma)));
                EXPECT_EQ(max_diff(r.state.phi_prev.values(), s.phi_curr.values()), 0.0);
            }
        }
    }
}

TEST(Bdf2, AnisotropicGridMatchesOracle)
{
    std::mt19937_64 rng(24);
    const Grid g(5, 7, 1.0, 1.5);
    const SchemeParams p = random_params(rng);
    const StepState s = oracle::random_state(g, rng);
    Stepper st(g, p, modified_double_well(), tight());
    const StepResult r = st.step(s);
    const auto o = oracle::bdf2(s, p, modified_double_well());
    EXPECT_LE(max_diff(r.state.phi_curr.values(), o.phi), 1e-10);
}

TEST(Bdf2, ConservesBulkAndWallMassEveryStep)
{
    std::mt19937_64 rng(25);
    const Grid g = Grid::unit_square(17);
    SchemeParams p;
    p.eps = p.delta = 0.05;
    p.kappa = 1.0;
    p.A1 = p.A2 = 5.0;
    p.B1 = p.B2 = 50.0;
    p.tau = 1e-4;
    Stepper st(g, p, double_well());
    const BulkField phi0 = oracle::random_field(g, rng, -0.5, 0.5);
    const double m0 = integrate(phi0), m1 = integrate(trace(phi0));
    StepResult r = st.bootstrap(phi0);
    for (int k = 0; k < 50; ++k) {
        EXPECT_NEAR(integrate(r.state.phi_curr), m0, 1e-10 * std::max(1.0, std::abs(m0)));
        EXPECT_NEAR(integrate(r.state.psi_curr), m1, 1e-10 * std::max(1.0, std::abs(m1)));
        EXPECT_EQ(r.state.m0, mean(phi0));
        r = st.step(r.state);
    }
}

TEST(Bdf2, OperatorIsCachedAndStepsAreDeterministic)
{
    std::mt19937_64 rng(26);
    const Grid g = Grid::unit_square(9);
    const SchemeParams p = random_params(rng);
    const StepState s = oracle::random_state(g, rng);
    Stepper st(g, p, modified_double_well());
    const SparseOperator* op = &st.bdf2_operator();
    const StepResult a = st.step(s);
    const StepResult b = st.step(s);
    EXPECT_EQ(op, &st.bdf2_operator());
    EXPECT_EQ(max_diff(a.state.phi_curr.values(), b.state.phi_curr.values()), 0.0);
    EXPECT_EQ(max_diff(a.mu.values(), b.mu.values()), 0.0);
    Stepper fresh(g, p, modified_double_well());
    const StepResult c = fresh.step(s);
    EXPECT_EQ(max_diff(a.state.phi_curr.values(), c.state.phi_curr.values()), 0.0);
}

TEST(Bdf2, LinearisedStepIsLinearInTheHistory)
{
    std::mt19937_64 rng(27);
    const Grid g(7, 6, 1.2, 1.0);
    const SchemeParams p = random_params(rng);
    Stepper st(g, p, linear_potential(), tight());
    const StepState s = oracle::random_state(g, rng);
    StepState s2 = s;
    s2.phi_prev *= 2.0;
    s2.phi_curr *= 2.0;
    s2.psi_prev *= 2.0;
    s2.psi_curr *= 2.0;
    const StepResult a = st.step(s), b = st.step(s2);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(b.state.phi_curr[k], 2.0 * a.state.phi_curr[k], 1e-11);
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(b.mu[k], 2.0 * a.mu[k], 1e-9 * std::max(1.0, max_abs(a.mu.values())));
}

TEST(Bdf2, RejectsBadInput)
{
    const Grid g = Grid::unit_square(6), other = Grid::unit_square(7);
    Stepper st(g, SchemeParams{}, double_well());
    BulkField nan(g, 0.0);
    nan[7] = std::nan("");
    EXPECT_THROW(st.bootstrap(nan), NonFiniteValue);
    EXPECT_THROW(st.bootstrap(BulkField(other, 0.0)), GridMismatch);
    const BulkField u(g, 0.2);
    EXPECT_THROW(st.step(StepState{nan, u, trace(u), trace(u), 1, 0.2, 0.2}), NonFiniteValue);
    const Grid g3 = Grid::unit_square(3);
    Stepper small(g3, SchemeParams{}, double_well());
    EXPECT_THROW(small.bootstrap(BulkField(g3, 0.0)), std::invalid_argument);
    SchemeParams bad;
    bad.tau = 0.0;
    EXPECT_THROW(Stepper(g, bad, double_well()), std::invalid_argument);
    EXPECT_THROW(assemble_system(g3, bdf2_coefficients(SchemeParams{})), std::invalid_argument);
}

TEST(Bdf2, SolverFailureCarriesTheResidualHistory)
{
    std::mt19937_64 rng(28);
    const Grid g = Grid::unit_square(9);
    SolverSettings s{1e-15, 3, 3, PreconditionerKind::None};
    Stepper st(g, random_params(rng), modified_double_well(), s);
    try {
        st.step(oracle::random_state(g, rng));
        FAIL() << "expected SolverFailure";
    } catch (const SolverFailure& e) {
        EXPECT_FALSE(e.report.converged);
        EXPECT_NE(std::string(e.what()).find("time level 2"), std::string::npos);
        EXPECT_FALSE(e.report.restart_residuals.empty());
    }
}

TEST(Bdf2, JacobiAndPlainSolversAgreeWithLu)
{
    std::mt19937_64 rng(29);
    const Grid g = Grid::unit_square(7);
    const SchemeParams p = random_params(rng);
    const StepState s = oracle::random_state(g, rng);
    Stepper lu(g, p, modified_double_well(), tight());
    Stepper jac(g, p, modified_double_well(), SolverSettings{1e-12, 200, 0, PreconditionerKind::Jacobi});
    Stepper none(g, p, modified_double_well(), SolverSettings{1e-12, 200, 0, PreconditionerKind::None});
    const StepResult a = lu.step(s), b = jac.step(s), c = none.step(s);
    EXPECT_LE(max_diff(a.state.phi_curr.values(), b.state.phi_curr.values()), 1e-8);
    EXPECT_LE(max_diff(a.state.phi_curr.values(), c.state.phi_curr.values()), 1e-8);
}

TEST(Bdf2, CaseOneSetupConservesMassOverTwoHundredSteps)
{
    const Grid g = Grid::unit_square(41);
    SchemeParams p;
    p.eps = 1.0;
    p.delta = 0.1;
    p.kappa = 1.0;
    p.A1 = p.A2 = 1.0;
    p.B1 = 1.0;
    p.B2 = 10.0;
    p.tau = 1e-5;
    const BulkField phi0 = BulkField::from_function(g, [](double x, double) { return x > 0.5 ? 1.0 : -1.0; });
    const double m0 = integrate(phi0), m1 = integrate(trace(phi0));
    EXPECT_LE(std::abs(m0), g.h());
    Stepper st(g, p, double_well());
    StepResult r = st.bootstrap(phi0);
    for (int k = 2; k <= 200; ++k) r = st.step(r.state);
    EXPECT_NEAR(integrate(r.state.phi_curr), m0, 1e-10);
    EXPECT_NEAR(integrate(r.state.psi_curr), m1, 1e-10);
}
