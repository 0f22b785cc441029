#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "itolab/checks.hpp"
#include "itolab/oracles.hpp"

using namespace itolab;
using namespace itolab::estimates;

namespace {

ConstantsTable table(double xi = 0.089) {
    auto t = theoretical_constants(2, 0.5);
    t.xi_bar = xi;
    t.m_b = m_b_of(xi);
    t.kappa_xibar = kappa_xibar(xi);
    return t;
}

CheckConfig small_cfg(std::size_t n) {
    CheckConfig c;
    c.constants = table();
    c.n_paths = n;
    c.sim.seed = 11;
    return c;
}

const ReportRow* find_row(const EstimateReport& r, const std::string& member) {
    for (const auto& row : r.rows)
        if (row.member == member) return &row;
    return nullptr;
}

}  // namespace

TEST(ScalingFit, RecoversExactPowerLaw) {
    const std::vector<std::pair<double, double>> s{{1, 3}, {2, 12}, {4, 48}};
    const auto f = fit_scaling_exponent(s);
    EXPECT_NEAR(f.exponent, 2.0, 1e-12);
    EXPECT_NEAR(f.prefactor, 3.0, 1e-12);
    EXPECT_NEAR(f.stderr_, 0.0, 1e-9);
}

TEST(ScalingFit, RejectsBadInput) {
    const std::vector<std::pair<double, double>> two{{1, 1}, {2, 2}};
    EXPECT_THROW(fit_scaling_exponent(two), PreconditionError);
    const std::vector<std::pair<double, double>> neg{{1, 1}, {2, -2}, {4, 3}};
    EXPECT_THROW(fit_scaling_exponent(neg), PreconditionError);
}

TEST(Potential, ConstantFunctionGivesOneOverLambda) {
    const double lambda = 4;
    SimConfig c;
    c.h = 1e-3;
    PotentialOptions o;
    o.n_paths = 20;
    o.tail_eps = 1e-9;
    const auto run =
        potential_run(brownian(2), c, {}, lambda, {estimates::detail::constant_member(2, true)}, estimates::detail::infinite(), o);
    // the discount integrals telescope, so every path gives (1 - tail_eps) / lambda
    for (double v : run.I[0]) EXPECT_NEAR(v, 1 / lambda, 1e-8);
    for (double v : run.A) EXPECT_NEAR(v, 1 / lambda, 1e-8);
    for (double v : run.B) EXPECT_EQ(v, 0.0);
}

TEST(Potential, LatticeOverloadMatchesMember) {
    // indicator of [0, 1) x [-1, 1)^2 evaluated through a lattice and through a member
    auto g = GridFunction::zeros(true, {0.0, -1.0, -1.0}, {0.25, 0.5, 0.5}, {4, 4, 4});
    g.sample([](double, std::span<const double>) { return 1.0; });
    SimConfig c;
    c.h = 1e-3;
    c.n_paths = 400;
    c.seed = 5;
    const auto est = estimate_potential(brownian(2), {}, 2.0, g, estimates::detail::infinite(), c);
    EXPECT_GT(est.mean, 0.0);
    EXPECT_LT(est.mean, (1 - std::exp(-2.0)) / 2.0 + 1e-12);
}

TEST(Potential, CensoringIsReported) {
    SimConfig c;
    c.h = 1e-3;
    PotentialOptions o;
    o.n_paths = 50;
    const auto run = potential_run(brownian(2), c, {}, 0.0, {}, estimates::detail::uncapped(10.0, 0.01), o);
    EXPECT_EQ(run.censored_fraction(), 1.0);
    SimConfig sc;
    sc.h = 1e-3;
    sc.n_paths = 50;
    auto g = GridFunction::zeros(false, {-1.0, -1.0}, {1.0, 1.0}, {2, 2});
    EXPECT_THROW(estimate_potential(brownian(2), {}, 0.0, g, estimates::detail::uncapped(10.0, 0.01), sc), CensoredError);
}

TEST(Potential, DeterministicAcrossWorkers) {
    auto cfg = small_cfg(200);
    cfg.sim.workers = 1;
    const auto a = run_check("E3.5", brownian(2), cfg);
    cfg.sim.workers = 3;
    const auto b = run_check("E3.5", brownian(2), cfg);
    std::ostringstream sa, sb;
    a.write_csv(sa);
    b.write_csv(sb);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Families, SeparableNormsMatchLattice) {
    for (auto kind : {families::FamilyKind::cylinder_indicators, families::FamilyKind::gaussian_bumps}) {
        for (const auto& m : families::members(kind, 2, 1.0, true)) {
            const auto g = families::detail::member_lattice(m, 64, 64, 0, {});
            for (auto s : {MixedNormSpec{3, 3}, MixedNormSpec{4, 2}}) {
                const double exact = families::norm(m, s), lat = mixed_norm(g, s);
                EXPECT_NEAR(lat / exact, 1.0, 0.03) << m.name << " p=" << s.p;
            }
        }
    }
}

TEST(Families, WeightedNormReducesToNormWithoutWeight) {
    for (const auto& m : families::members(families::FamilyKind::gaussian_bumps, 2, 1.0, true)) {
        const MixedNormSpec s{3, 3};
        const double w = families::weighted_norm(m, s, families::PsiWeight{0.0, 0.1, 1});
        EXPECT_NEAR(w / families::norm(m, s), 1.0, 1e-3) << m.name;
        EXPECT_LT(families::weighted_norm(m, s, families::PsiWeight{16.0, 0.5, 1}), families::norm(m, s));
    }
}

TEST(Families, SupOverCylindersOfLargeRadiusIsTheNorm) {
    for (const auto& m : families::members(families::FamilyKind::cylinder_indicators, 2, 0.5, true)) {
        const MixedNormSpec s{3, 3};
        EXPECT_NEAR(families::sup_cylinder_norm(m, s, 10.0, false), families::norm(m, s), 1e-12);
        EXPECT_LE(families::sup_cylinder_norm(m, s, 0.1, false), families::norm(m, s));
    }
}

TEST(Families, SingularMembersHaveInfiniteSupNorm) {
    const auto ms = families::members(families::FamilyKind::example21_singular, 2, 1.0, true);
    ASSERT_FALSE(ms.empty());
    // both factors are integrable to the power d + 1 but unbounded
    EXPECT_TRUE(std::isfinite(families::norm(ms[0], {3, 3})));
    EXPECT_TRUE(std::isinf(families::norm(ms[0], {itolab::kInf, itolab::kInf})));
}

TEST(Checks, CatalogIdsAreUnique) {
    std::set<std::string> ids;
    for (const auto& e : catalog()) ids.insert(e.id);
    EXPECT_EQ(ids.size(), 36u);
    EXPECT_TRUE(ids.count("T3.3b̄"));
    EXPECT_EQ(file_stem("T3.3b̄"), "T3.3bbar");
    EXPECT_THROW(run_check("X9", brownian(2), small_cfg(10)), UnknownCheckError);
    const auto j = catalog_json();
    EXPECT_EQ(j["checks"].size(), 36u);
    EXPECT_TRUE(j["csv_columns"].contains("ratio"));
}

TEST(Checks, ExitMeanScalesAsRSquared) {
    const auto r = run_check("E3.5", brownian(2), small_cfg(1000));
    EXPECT_EQ(r.verdict, Verdict::exponent_ok);
    ASSERT_TRUE(r.series[0].fit);
    EXPECT_NEAR(r.series[0].fit->exponent, 2.0, 0.1);
    // E theta_R(0) = R^2 / 2 for a = I/2 (the cap at R^2 removes a small tail)
    for (const auto& row : r.rows)
        if (row.member == "y=0" && row.tau == "tau = 0")
            EXPECT_NEAR(row.lhs.mean / (row.scale * row.scale), 0.5, 0.05);
}

TEST(Checks, SurvivalRateMatchesDirichletEigenvalue) {
    const auto r = run_check("C3.6", brownian(2), small_cfg(1000));
    EXPECT_NE(r.verdict, Verdict::fail);
    const double oracle = oracles::brownian_survival_rate(2, 1.0, 0.5);
    for (const auto& row : r.rows)
        if (row.series == "survival rate") EXPECT_NEAR(row.ratio / oracle, 1.0, 0.1) << row.scale;
}

TEST(Checks, HitBeforeExitMatchesLogOracle) {
    auto cfg = small_cfg(2000);
    cfg.h_rel = 1e-4;
    cfg.R_grid = {1.0};
    const auto r = run_check("T3.3h", brownian(2), cfg);
    for (double f : {0.5, 9.0 / 16}) {
        const auto* row = find_row(r, "|y|=" + fmt(f) + "R");
        ASSERT_NE(row, nullptr);
        const double oracle = std::log(1 / f) / std::log(16.0);
        // grid monitoring misses some hits of the small ball: allow a one-sided bias
        EXPECT_LT(row->lhs.mean, oracle + 3 * std::sqrt(oracle * (1 - oracle) / 2000));
        EXPECT_GT(row->lhs.mean, 0.8 * oracle);
    }
}

TEST(Checks, LaplaceProfileBoundsHoldForBrownian) {
    SimConfig c;
    c.h = 2e-3;
    c.n_paths = 2000;
    c.seed = 3;
    const auto p = laplace_exit_profile(brownian(2), 1.0, {4, 16, 64}, {StartPoint{}}, c, 0.089, itolab::kInf);
    for (const auto& r : p.laplace) {
        EXPECT_TRUE(r.pass);
        // the capped exit dominates the uncapped one
        EXPECT_GE(r.value.mean + 3 * r.value.stderr_, oracles::brownian_exit_laplace(2, 1.0, 0.0, r.lambda, 0.5));
    }
    for (const auto& r : p.small_time) EXPECT_TRUE(r.pass);
    EXPECT_LT(p.loglinear.slope, 0.0);
}

TEST(Checks, BrownianDoesNotFail) {
    for (const char* id : {"T3.3a", "T3.3b", "T3.3n", "C3.7", "T3.8", "T3.11", "R5.3", "T5.9b", "K3.1", "L4.1"}) {
        const auto r = run_check(id, brownian(2), small_cfg(400));
        EXPECT_NE(r.verdict, Verdict::fail) << id;
        EXPECT_NE(r.verdict, Verdict::censored) << id;
    }
}

TEST(Checks, DriftPreconditionsAreEnforced) {
    auto cfg = small_cfg(20);
    cfg.rho_b = 0.01;
    // lambda = 4 is below kappa^2 / rho_b^2
    EXPECT_THROW(run_check("K3.1", constant_drift(2, 0.1), cfg), PreconditionError);
    // R = 1 exceeds rho_b
    EXPECT_THROW(run_check("E3.5", constant_drift(2, 0.1), cfg), PreconditionError);
    // driftless: no radius or discount restriction
    EXPECT_NO_THROW(run_check("C3.7", brownian(2), cfg));
}

TEST(Checks, ModerationFailureIsAPreconditionError) {
    auto cfg = small_cfg(50);
    cfg.rho_b = 10;
    cfg.bbar = 1.0;  // above m_b
    EXPECT_THROW(run_check("T3.3a", constant_drift(2, 0.1), cfg), PreconditionError);
}

TEST(Report, VerdictLogic) {
    EstimateReport r;
    r.specs = {{"s", SeriesMode::upper, 1.0, false}};
    for (double sc : {1.0, 2.0, 4.0}) add_row(r, "s", sc, "m", {sc, 0.01, 10}, 1.0, 1.0);
    finalize(r);
    EXPECT_EQ(r.verdict, Verdict::exponent_ok);
    EXPECT_NEAR(r.series[0].fit->exponent, 1.0, 1e-12);

    r.specs[0].target = 2.0;
    finalize(r);
    EXPECT_EQ(r.verdict, Verdict::fail);

    r.specs[0].target.reset();
    finalize(r);
    EXPECT_EQ(r.verdict, Verdict::bounded);  // spread 4 / 2 = 2

    r.rows.back().lhs.mean = 400;
    r.rows.back().ratio = 400;
    finalize(r);
    EXPECT_EQ(r.verdict, Verdict::fail);  // spread 200

    r.censored_fraction = 0.05;
    finalize(r);
    EXPECT_EQ(r.verdict, Verdict::censored);
}

TEST(Report, ZeroOverZeroRatioIsZero) {
    EstimateReport r;
    r.specs = {{"s", SeriesMode::upper, std::nullopt, false}};
    add_row(r, "s", 1, "m", {0, 0, 10}, 0.0);
    add_row(r, "s", 2, "m", {0, 0, 10}, 0.0);
    finalize(r);
    EXPECT_EQ(r.rows[0].ratio, 0.0);
    EXPECT_EQ(r.verdict, Verdict::bounded);
    add_row(r, "s", 3, "m", {1, 0, 10}, 0.0);
    finalize(r);
    EXPECT_EQ(r.verdict, Verdict::fail);
}

TEST(Report, CsvIsFullPrecision) {
    EstimateReport r;
    r.specs = {{"s", SeriesMode::info, std::nullopt, false}};
    add_row(r, "s", 0.1, "a,b", {1.0 / 3, 0, 1}, 1.0);
    std::ostringstream os;
    r.write_csv(os);
    std::istringstream is(os.str());
    std::string header, line;
    std::getline(is, header);
    std::getline(is, line);
    EXPECT_EQ(header, EstimateReport::kCsvHeader);
    EXPECT_EQ(line.substr(0, 20), "0.10000000000000001,");
    EXPECT_NE(line.find("0.33333333333333331"), std::string::npos);
    EXPECT_NE(line.find("\"a,b\""), std::string::npos);
    std::ostringstream svg;
    r.write_svg(svg);
    EXPECT_NE(svg.str().find("<svg"), std::string::npos);
}
