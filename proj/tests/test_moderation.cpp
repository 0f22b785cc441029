#include <gtest/gtest.h>

#include <sstream>

#include "itolab/moderation.hpp"
#include "itolab/oracles.hpp"

using namespace itolab;

namespace {

SimConfig fast_cfg(std::size_t n = 2000) {
    SimConfig c;
    c.h = 1e-4;
    c.n_paths = n;
    c.workers = 4;
    c.t_max = 1;
    return c;
}

std::vector<GridPoint> origin(int d) { return {GridPoint{0.0, Point(d, 0.0), Point(d, 0.0)}}; }

/// E min(tau_rho, rho^2) for Brownian motion a = I/2 from the centre.
double capped_exit_mean(int d, double rho) {
    double s = 0;
    const int n = 2000;
    for (int k = 0; k < n; ++k) s += oracles::brownian_survival(d, rho, 0, (k + 0.5) * rho * rho / n, 0.5);
    return s * rho * rho / n;
}

}  // namespace

TEST(Moderation, ZeroDriftIsExactlyZero) {
    ModerationGrid g;
    g.start_n = 3;
    g.start_half = 0.5;
    g.offset_n = 3;
    const auto rep = estimate_bbar(brownian(2), 0.5, dyadic_ladder(0.5, 3), g, fast_cfg(100), 0.1);
    EXPECT_EQ(rep.bbar_R(), 0.0);
    EXPECT_TRUE(rep.verdict);
    for (const auto& b : rep.bhat)
        for (const auto& e : b.entries) EXPECT_EQ(e.bhat, 0.0);
}

TEST(Moderation, ConstantDriftMatchesExitOracle) {
    const double c = 1, rho = 0.05;
    const auto spec = constant_drift(2, c);
    auto cfg = fast_cfg(4000);
    cfg.h = 2.5e-6;
    const auto b = estimate_bhat_rho(spec, rho, origin(2), cfg);
    EXPECT_LE(b.value, c * rho);
    const double oracle = c * capped_exit_mean(2, rho) / rho;
    const auto& e = b.entries[0];
    EXPECT_NEAR(b.value, oracle, 3 * e.integral.stderr_ / rho + 0.02 * oracle) << oracle;
}

TEST(Moderation, Example22SlopeMatchesOneMinusAlpha) {
    const double alpha = 0.5;
    const auto spec = example22(2, alpha);
    auto cfg = fast_cfg(2000);
    std::vector<std::pair<double, double>> pts;
    double prev = 1e300;
    for (double rho : {0.1, 0.05, 0.025}) {
        cfg.h = 1e-3 * rho * rho;
        const auto b = estimate_bhat_rho(spec, rho, origin(2), cfg);
        EXPECT_LT(b.value, prev);
        prev = b.value;
        pts.push_back({rho, b.value});
    }
    const auto fit = fit_scaling_exponent(pts);
    EXPECT_NEAR(fit.exponent, 1 - alpha, 0.15);
}

TEST(Moderation, StrongDriftFails) {
    auto cfg = fast_cfg(200);
    cfg.h = 1e-3;
    ModerationGrid g;
    const auto rep = estimate_bbar(constant_drift(2, 1e3), 1.0, dyadic_ladder(1.0, 2), g, cfg, 1.0);
    EXPECT_FALSE(rep.verdict);
    EXPECT_GT(rep.bbar_R(), 1.0);
}

TEST(Moderation, Example22SmallScalePasses) {
    auto cfg = fast_cfg(1000);
    cfg.h = 1e-5;
    ModerationGrid g;
    g.first_axis_only = true;
    g.start_n = 3;
    g.start_half = 0.01;
    const auto rep = estimate_bbar(example22(2, 0.5), 0.01, dyadic_ladder(0.01, 2), g, cfg, 0.5);
    EXPECT_TRUE(rep.verdict) << rep.bbar_R();
    for (std::size_t k = 1; k < rep.bbar.size(); ++k) EXPECT_GE(rep.bbar[k], rep.bbar[k - 1]);
    std::ostringstream os;
    rep.write_csv(os);
    EXPECT_NE(os.str().find("rho,t,x,y"), std::string::npos);
    EXPECT_EQ(rep.to_json()["verdict"], "pass");
}

TEST(Moderation, CensoringIsAnError) {
    auto cfg = fast_cfg(200);
    cfg.t_max = 0.001;
    EXPECT_THROW(estimate_bhat_rho(constant_drift(2, 0.1), 0.5, origin(2), cfg), CensoredError);
}

TEST(Moderation, OffsetsBoundedByDoubleRadius) {
    const auto spec = example22(2, 0.5);
    auto cfg = fast_cfg(2000);
    ModerationGrid g;
    g.offset_n = 3;
    g.offset_frac = 0.5;
    const auto with = estimate_bhat_rho(spec, 0.05, g.points(0.05), cfg);
    const auto wide = estimate_bhat_rho(spec, 0.1, origin(2), cfg);
    const double se = wide.entries[0].integral.stderr_ / 0.1;
    EXPECT_LE(with.value, 2 * (wide.value + 3 * se));
}

TEST(Moderation, GridRefinement) {
    ModerationGrid g;
    g.start_n = 2;
    g.offset_n = 3;
    const auto f = g.refined();
    EXPECT_EQ(f.start_n, 3);
    EXPECT_EQ(f.offset_n, 5);
    EXPECT_GT(f.points(0.1).size(), g.points(0.1).size());
    for (const auto& p : g.points(0.1)) EXPECT_LT(stopping::norm(p.y), 0.1);
}

TEST(MomentBounds, ZeroDrift) {
    const auto rows = moment_bound_check(brownian(2), 0.1, origin(2)[0], 3, fast_cfg(50), 0.0);
    for (const auto& r : rows) {
        EXPECT_EQ(r.lhs.mean, 0.0);
        EXPECT_TRUE(r.pass);
    }
}

TEST(MomentBounds, Example22WithMeasuredBbar) {
    const auto spec = example22(2, 0.5);
    auto cfg = fast_cfg(4000);
    const double rho = 0.05;
    const auto bb = estimate_bbar(spec, rho, dyadic_ladder(rho, 2), ModerationGrid{}, cfg, 1.0);
    const auto rows = moment_bound_check(spec, rho, origin(2)[0], 3, cfg, bb.bbar_R());
    for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.n << " " << r.lhs.mean << " " << r.rhs;
}

TEST(MomentBounds, ConstantDriftCubic) {
    const auto spec = constant_drift(2, 2.0);
    auto cfg = fast_cfg(2000);
    const double rho = 0.1;
    const auto b = estimate_bhat_rho(spec, rho, origin(2), cfg);
    const auto rows = moment_bound_check(spec, rho, origin(2)[0], 3, cfg, b.value);
    EXPECT_TRUE(rows[2].pass);
    EXPECT_LE(rows[2].lhs.mean, std::pow(2.0 * rho * rho, 3));
}

TEST(MorreyPipeline, ZeroIsConsistent) {
    auto h = GridFunction::spacetime_box(2, 0, 1, 8, 1, 8, 0.0);
    auto cfg = fast_cfg(100);
    const auto rep = morrey_implies_moderation(brownian(2), h, {{3, 3}}, 0.25, ModerationGrid{}, cfg, 0.1);
    EXPECT_EQ(rep.scan.value, 0.0);
    EXPECT_EQ(rep.measured.bbar_R(), 0.0);
    EXPECT_TRUE(rep.morrey_below_threshold);
    EXPECT_TRUE(rep.measured.verdict);
    EXPECT_FALSE(rep.caveat.empty());
}

TEST(MorreyPipeline, Example21SmallEpsilon) {
    const int d = 2;
    const double alpha = 1.5, beta = 0.75, eps = 0.05;
    const auto ex = example21_function(d, alpha, beta);
    auto h = ex.lattice({0.0, -1, -1}, {1.0 / 32, 1.0 / 16, 1.0 / 16}, {32, 32, 32}, 1.0 / (d + 1));
    for (auto& v : h.values) v *= eps;
    // drift sampled at cell centres; cell averages of the convex-ish h dominate
    auto spec = example21_drift(d, alpha, beta, eps * 0.9);
    auto cfg = fast_cfg(400);
    cfg.h = 1e-4;
    ModerationGrid g;
    g.times = {0.25};
    g.start_n = 2;
    g.start_half = 0.1;
    const auto rep = morrey_implies_moderation(spec, h, {{3, 3}}, 0.25, g, cfg, 0.5);
    EXPECT_LT(rep.scan.value, 0.5);
    EXPECT_LT(rep.measured.bbar_R(), 0.5);
}

TEST(MorreyPipeline, DominationViolationReportsLocation) {
    auto h = GridFunction::spacetime_box(2, 0, 1, 4, 1, 4, 0.5);
    try {
        check_domination(constant_drift(2, 1.0), h);
        FAIL();
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("exceeds"), std::string::npos);
    }
}

TEST(MorreyPipeline, Example22NearOneFailsMorreyButIsModerated) {
    // h = |x^1|^{-alpha} lies in L_{d+1} locally only for alpha < 1/(d+1); for alpha near 1
    // the scan grows without bound under lattice refinement.
    auto scan_value = [](double alpha, std::size_t n) {
        auto h = GridFunction::spacetime_box(2, 0, 0.25, 4, 0.5, n, 0.0);
        h.sample([&](double, std::span<const double> x) { return std::pow(std::abs(x[0]), -alpha); });
        return morrey_condition_scan(h, {{3, 3}}, 0.25, ScanGrid{1, 0.5, 3}).value;
    };
    const double a16 = scan_value(0.95, 16), a32 = scan_value(0.95, 32), a64 = scan_value(0.95, 64);
    EXPECT_GT(a32, 1.4 * a16);
    EXPECT_GT(a64, 1.4 * a32);
    EXPECT_NEAR(scan_value(0.2, 64) / scan_value(0.2, 32), 1.0, 0.1);
    auto cfg = fast_cfg(1000);
    const auto b = estimate_bhat_rho(example22(2, 0.95), 0.05, origin(2), cfg);
    EXPECT_TRUE(std::isfinite(b.value));
    EXPECT_LT(b.value, 10.0);
}
