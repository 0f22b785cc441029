#include <gtest/gtest.h>

#include <sstream>

#include "itolab/greens.hpp"
#include "itolab/oracles.hpp"

using namespace itolab;
using namespace itolab::greens;

namespace {

SimConfig cfg_for(double lambda, std::size_t n) {
    SimConfig c;
    c.h = 4e-3 / lambda;
    c.n_paths = n;
    c.workers = 4;
    c.t_max = 20;
    return c;
}

/// Bins scaled with lambda: time extent ln(1e6)/lambda, box 6/sqrt(lambda) * 2.
BinSpec scaled_bins(double lambda, std::size_t nt = 28, std::size_t nx = 24, double half = 6) {
    BinSpec b;
    b.t_extent = std::log(1e6) / lambda;
    b.nt = nt;
    b.half = half / std::sqrt(lambda);
    b.nx = nx;
    return b;
}

double l1_to_heat_kernel(const GreensHistogram& H) {
    const auto& G = H.density;
    double num = 0, den = 0;
    const std::size_t ns = G.counts[1] * G.counts[2];
    for (std::size_t j = 0; j < G.counts[0]; ++j)
        for (std::size_t a = 0; a < G.counts[1]; ++a)
            for (std::size_t b = 0; b < G.counts[2]; ++b) {
                const Point lo{G.origin[1] + a * G.spacings[1], G.origin[2] + b * G.spacings[2]};
                const Point hi{lo[0] + G.spacings[1], lo[1] + G.spacings[2]};
                const double t0 = j * G.spacings[0];
                const double k = oracles::heat_kernel_bin_average(H.lambda, t0, t0 + G.spacings[0], lo, hi, 0.5);
                num += std::abs(G.values[j * ns + a * G.counts[2] + b] - k);
                den += k;
            }
    return num / den;
}

}  // namespace

TEST(Greens, MassAndHeatKernelShape) {
    const double lambda = 4;
    const auto H = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 28, 24), cfg_for(lambda, 20000));
    EXPECT_NEAR(H.mass() * lambda, 1.0, 0.01);
    EXPECT_LT(H.outside_mass, 1e-3 * H.mass());
    EXPECT_DOUBLE_EQ(H.density.origin[0], 0.0);
    for (double v : H.density.values) EXPECT_GE(v, 0.0);
    EXPECT_LE(l1_to_heat_kernel(H), 0.05);
}

TEST(Greens, WorkerCountDoesNotChangeHistogram) {
    const double lambda = 4;
    auto c = cfg_for(lambda, 300);
    c.workers = 1;
    const auto a = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 8, 8), c);
    c.workers = 7;
    const auto b = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 8, 8), c);
    EXPECT_EQ(a.density.values, b.density.values);
}

TEST(Greens, EventMassIsProbabilityOverLambda) {
    const double lambda = 4;
    EventSpec A;
    A.kind = EventSpec::Kind::hit_ball_before;
    A.center = {0.5, 0.0};
    A.radius = 0.2;
    A.before = 0.5;
    const auto H = estimate_G(brownian(2), {}, A, lambda, scaled_bins(lambda, 8, 8, 8), cfg_for(lambda, 4000));
    EXPECT_GT(H.p_A.p, 0.05);
    EXPECT_LT(H.p_A.p, 0.95);
    EXPECT_NEAR(H.mass() * lambda / H.p_A.p, 1.0, 0.01);

    A.center = {100.0, 0.0};
    EXPECT_THROW(estimate_G(brownian(2), {}, A, lambda, scaled_bins(lambda, 8, 8), cfg_for(lambda, 50)),
                 NumericalError);
}

TEST(Greens, StoppingTimeRestarts) {
    const double lambda = 4;
    TauSpec tau;
    tau.kind = TauSpec::Kind::hit_ball;
    tau.center = {0.3, 0.0};
    tau.radius = 0.1;
    auto c = cfg_for(lambda, 1000);
    c.t_max = 5;
    const auto H = estimate_G(brownian(2), tau, {}, lambda, scaled_bins(lambda, 8, 8), c);
    // p(tau < t_max) < 1 and the mass is P(tau < infinity)/lambda
    EXPECT_LT(H.p_A.p, 1.0);
    EXPECT_NEAR(H.mass() * lambda / H.p_A.p, 1.0, 0.01);
    tau.kind = TauSpec::Kind::fixed_time;
    tau.time = 0.5;
    const auto F = estimate_G(brownian(2), tau, {}, lambda, scaled_bins(lambda, 8, 8), c);
    EXPECT_EQ(F.p_A.hits, c.n_paths);
}

TEST(Greens, EllipticMarginal) {
    const double lambda = 4;
    const auto H = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 8, 12), cfg_for(lambda, 500));
    const auto g = H.elliptic();
    double m = 0;
    for (double v : g.values) m += v;
    m *= g.spacings[0] * g.spacings[1];
    EXPECT_NEAR(m, H.mass(), 1e-12);
}

TEST(Greens, ConsistencyWithDirectIntegrals) {
    const double lambda = 4;
    const auto bins = scaled_bins(lambda, 28, 24);
    auto c = cfg_for(lambda, 4000);
    const auto H = estimate_G(brownian(2), {}, {}, lambda, bins, c);
    const std::vector<std::function<double(double, std::span<const double>)>> fs{
        [](double, std::span<const double>) { return 1.0; },
        [](double t, std::span<const double>) { return t; },
        [](double, std::span<const double> x) { return x[0] * x[0]; },
        [](double t, std::span<const double> x) { return std::exp(-x[1] * x[1]) * (1 + t); },
        [](double, std::span<const double> x) { return x[0] > 0 ? 1.0 : 0.0; },
    };
    c.seed = 4242;
    for (std::size_t k = 0; k < fs.size(); ++k) {
        const double q = integrate_against(H.density, fs[k]);
        const auto st = mc_stats(c.n_paths, c.workers, c.seed, [&](RandomStream& s, std::size_t) {
            double acc = 0;
            const Point o{0.0, 0.0};
            simulate_observed(brownian(2), c, s, 0.0, o, bins.horizon(), [&](const StepView& v) {
                acc += std::exp(-lambda * v.s0) * fs[k](v.s0, v.x0) * v.h;
                return true;
            });
            return acc;
        });
        // histogram integrals carry bin discretization; allow 3 combined sigma plus 2%
        EXPECT_NEAR(q, st.mean(), 3 * std::sqrt(2.0) * st.stderr_() + 0.02 * std::abs(st.mean())) << k;
    }
}

TEST(WeightedNorm, ZeroAndExponent) {
    WeightFunction w{WeightKind::Psi_lambda_spacetime, 4, 0.1};
    auto Z = GridFunction::spacetime_box(2, 0, 1, 4, 1, 4, 0.0);
    EXPECT_EQ(weighted_Lp_norm(Z, 1.5, w).value, 0.0);
    EXPECT_THROW(weighted_Lp_norm(Z, 1.0, w), PreconditionError);

    std::vector<std::pair<double, double>> pts, ell;
    for (double lambda : {4.0, 8.0, 16.0}) {
        const auto H = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 28, 24), cfg_for(lambda, 4000));
        WeightFunction wl{WeightKind::Psi_lambda_spacetime, lambda, 0.1};
        pts.push_back({lambda, weighted_Lp_norm(H.density, 1.5, wl).value});
        WeightFunction ws{WeightKind::Psi_lambda_spatial, lambda, 0.1};
        ell.push_back({lambda, weighted_Lp_norm(H.elliptic(), 2.0, ws).value});
    }
    EXPECT_NEAR(fit_scaling_exponent(pts).exponent, -2.0 / 6, 0.15);
    EXPECT_NEAR(fit_scaling_exponent(ell).exponent, -0.5, 0.15);
}

TEST(WeightedNorm, BoxDoublingIsStable) {
    const double lambda = 4;
    auto c = cfg_for(lambda, 2000);
    const auto a = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 16, 24, 6), c);
    const auto b = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 16, 48, 12), c);
    WeightFunction w{WeightKind::Psi_lambda_spacetime, lambda, 0.1};
    EXPECT_NEAR(weighted_Lp_norm(a.density, 1.5, w).value / weighted_Lp_norm(b.density, 1.5, w).value, 1.0, 0.01);
}

TEST(ReverseHolder, ConstantGivesOne) {
    auto G = GridFunction::spacetime_box(2, 0, 16, 32, 8, 32, 2.5);
    const auto regs = scan_regions(G, 1.0, 1.0);
    const auto rep = reverse_holder_scan(G, regs, 3.0);
    EXPECT_NEAR(rep.max_ratio, 1.0, 1e-3);
    EXPECT_NEAR(rep.median_ratio, 1.0, 1e-3);
}

TEST(ReverseHolder, BrownianStableUnderRefinementAndMonotoneInP) {
    const double lambda = 4, kappa = kappa_xibar(0.3);
    const double r = kappa / (2 * std::sqrt(lambda));
    auto c = cfg_for(lambda, 4000);
    const auto bins = scan_bins(2, lambda, kappa, 1.5);
    const auto H1 = estimate_G(brownian(2), {}, {}, lambda, bins, c);
    const auto H2 = estimate_G(brownian(2), {}, {}, lambda, bins.refined(), c);
    const auto regs = scan_regions(H1.density, r, 1.5);
    ASSERT_GE(regs.size(), 100u);
    const auto a = reverse_holder_scan(H1.density, regs, 3.0, 4);
    const auto b = reverse_holder_scan(H2.density, regs, 3.0, 4);
    EXPECT_TRUE(std::isfinite(a.max_ratio));
    EXPECT_LE(std::max(a.max_ratio, b.max_ratio) / std::min(a.max_ratio, b.max_ratio), 2.0);
    const auto lo = reverse_holder_scan(H1.density, regs, 2.0, 4);
    EXPECT_GE(lo.max_ratio, a.max_ratio);

    const auto g1 = H1.elliptic(), g2 = H2.elliptic();
    const auto balls = scan_regions(g1, r, 1.5);
    const auto e1 = reverse_holder_scan(g1, balls, 2.0, 4);
    const auto e2 = reverse_holder_scan(g2, balls, 2.0, 4);
    EXPECT_LE(std::max(e1.max_ratio, e2.max_ratio) / std::min(e1.max_ratio, e2.max_ratio), 2.0);
    std::ostringstream os;
    a.write_csv(os);
    EXPECT_NE(os.str().find("ratio"), std::string::npos);
}

TEST(ReverseHolder, D0Bracket) {
    const double lambda = 4;
    const auto H = estimate_G(brownian(2), {}, {}, lambda, scaled_bins(lambda, 16, 32), cfg_for(lambda, 4000));
    const auto g = H.elliptic();
    const double r = 0.5;
    const auto balls = scan_regions(g, r, 1.0);
    const auto b = estimate_d0(g, balls, {2.0, 1.8, 1.6, 1.4, 1.2, 1.1, 1.05}, 4);
    EXPECT_GT(b.lo, 1.0);
    EXPECT_GE(b.hi, b.lo);

    auto flat = GridFunction::zeros(false, {-1, -1}, {2, 2}, {1, 1});
    flat.values = {1.0};
    const auto c = estimate_d0(flat, {Cylinder{0, {0, 0}, 0.5}}, {2.0, 1.5});
    EXPECT_TRUE(c.collapsed);
    EXPECT_FALSE(c.warning.empty());
}
