#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "itolab/constants.hpp"
#include "itolab/oracles.hpp"

using namespace itolab;

namespace {

double min_over_mu(double kappa, int d) {
    double m = 1e300;
    for (int i = -40000; i <= 40000; ++i) m = std::min(m, kappa_quadratic(kappa, d, i * 1e-4));
    return m;
}

std::vector<StartPoint> origin_start(int d) { return {StartPoint{0.0, Point(static_cast<std::size_t>(d), 0.0)}}; }

}  // namespace

TEST(KappaD, ClosedFormValues) {
    EXPECT_DOUBLE_EQ(kappa_d(2), 16.0);
    EXPECT_DOUBLE_EQ(kappa_d(4), 18.0);
    // d = 2 reduces to 16 (mu - 1)^2
    for (double mu : {-3.0, 0.0, 0.5, 1.0, 2.0}) EXPECT_NEAR(kappa_quadratic(16, 2, mu), 16 * (mu - 1) * (mu - 1), 1e-12);
}

TEST(KappaD, MinimalityScan) {
    for (int d : {2, 3, 4, 7}) {
        const double k = kappa_d(d);
        EXPECT_GE(min_over_mu(k, d), -1e-9) << d;
        EXPECT_LT(min_over_mu(k - 1e-3, d), 0.0) << d;
    }
    EXPECT_THROW(kappa_d(1), PreconditionError);
}

TEST(XiBarTheoretical, ValuesAndMonotonicity) {
    EXPECT_NEAR(xi_bar_theoretical(2, 1) / (0.5 * std::exp(-32.0)), 1.0, 1e-12);
    EXPECT_LT(xi_bar_theoretical(3, 1), xi_bar_theoretical(2, 1));
    EXPECT_LT(xi_bar_theoretical(2, 0.8), xi_bar_theoretical(2, 0.9));
    EXPECT_THROW(xi_bar_theoretical(2, 0), PreconditionError);
    EXPECT_THROW(xi_bar_theoretical(2, 1.5), PreconditionError);
}

TEST(KappaXiBar, DefiningEquation) {
    EXPECT_NEAR(kappa_xibar(0.5), 2 + 4 * std::numbers::ln2, 1e-12);
    EXPECT_NEAR(kappa_xibar(1 - 1e-12), 2 + 2 * std::numbers::ln2, 1e-9);
    for (double xi : {0.01, 0.1, 0.5, 0.9}) {
        const double k = kappa_xibar(xi);
        EXPECT_LT(std::abs(std::exp(xi / 2 - (k - 1) * xi / 2) - 0.5), 1e-12) << xi;
    }
    EXPECT_THROW(kappa_xibar(0), PreconditionError);
    EXPECT_THROW(kappa_xibar(1), PreconditionError);
}

TEST(AlphaSubharmonic, ValuesAndSampler) {
    EXPECT_NEAR(alpha_subharmonic(2, 1), 1e-6, 1e-15);
    EXPECT_NEAR(alpha_subharmonic(2, 0.5), 6 + 1e-6, 1e-12);
    // Laplacian case: (alpha + 2) - 2 >= 0
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd x(2);
    x << 0.6, 0.8;
    EXPECT_GE(subharmonic_operator(a, x, alpha_subharmonic(2, 1)), 0.0);
    for (int d : {2, 3, 5})
        for (double g : {0.3, 0.7, 1.0})
            EXPECT_GE(subharmonic_samples(d, g, alpha_subharmonic(d, g), 1000, 7).min_value, -1e-9);
    // a visibly smaller alpha fails on the sampler
    EXPECT_LT(subharmonic_samples(2, 0.5, 3.0, 1000, 7).min_value, 0.0);
}

TEST(MbRho, Relations) {
    EXPECT_DOUBLE_EQ(m_b_of(0.4), 0.2);
    const double xi = 0.3, rho_b = 0.25;
    const double k = kappa_xibar(xi);
    EXPECT_NEAR(rho_of_lambda(k * k / (rho_b * rho_b), xi), rho_b, 1e-14);
    EXPECT_NEAR(rho_of_lambda(40, xi), 2 * rho_of_lambda(160, xi), 1e-14);
}

TEST(ConstantsTable, TheoreticalAndJson) {
    const auto t = theoretical_constants(2, 1);
    EXPECT_DOUBLE_EQ(t.kappa_d, 16.0);
    EXPECT_GT(t.d0, 1.0);
    EXPECT_LT(t.d0, 2.0);
    const auto j = t.to_json();
    EXPECT_EQ(j["mode"], "theoretical");
    EXPECT_DOUBLE_EQ(j["kappa_d"].get<double>(), 16.0);
    EXPECT_FALSE(j["provenance"].get<std::string>().empty());
    ConstantsTable bad = t;
    bad.xi_bar = 1.5;
    EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(XiBarEmpirical, BrownianMatchesSeriesOracle) {
    SimConfig cfg;
    cfg.h = 1e-3;
    cfg.n_paths = 4000;
    cfg.t_max = 2;
    cfg.workers = 4;
    const auto spec = brownian(2, 0.5);
    const auto est = xi_bar_empirical(spec, 1.0, cfg, origin_start(2));
    const double exact = oracles::brownian_survival(2, 1.0, 0.0, 1.0, 0.5);
    EXPECT_NEAR(exact, 0.0889, 5e-4);
    EXPECT_NEAR(est.stay[0].p, exact, 0.02);
    EXPECT_GT(est.value, 0.0);
    EXPECT_LT(est.value, 1.0);
    EXPECT_GE(est.value, xi_bar_theoretical(2, spec.delta));

    cfg.seed = 99;
    const auto est2 = xi_bar_empirical(spec, 1.0, cfg, origin_start(2));
    EXPECT_NEAR(est.value, est2.value, 0.02);
}

TEST(XiBarEmpirical, BrownianScalingInR) {
    SimConfig cfg;
    cfg.n_paths = 4000;
    cfg.workers = 4;
    cfg.t_max = 4;
    const auto spec = brownian(2, 0.5);
    cfg.h = 1e-3 * 0.25;
    const auto small = xi_bar_empirical(spec, 0.5, cfg, origin_start(2));
    cfg.h = 1e-3 * 4;
    const auto big = xi_bar_empirical(spec, 2.0, cfg, origin_start(2));
    EXPECT_NEAR(small.value, big.value, 0.03);
}

TEST(XiBarEmpirical, HugeOutwardDriftGivesNearZero) {
    SimConfig cfg;
    cfg.n_paths = 2000;
    cfg.workers = 4;
    const auto spec = constant_drift(2, 50.0);
    const auto est = xi_bar_empirical(spec, 1.0, cfg, origin_start(2));
    EXPECT_LT(est.stay[0].p, 1e-3);
    EXPECT_LT(est.value, 0.01);
}

TEST(XiBarEmpirical, TooFewPathsReportsRequiredN) {
    SimConfig cfg;
    cfg.n_paths = 100;
    try {
        xi_bar_empirical(brownian(2), 1.0, cfg, origin_start(2));
        FAIL() << "expected error";
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("need n_paths >="), std::string::npos);
    }
}

TEST(XiBarEmpirical, FirstRelationUsesOffsets) {
    SimConfig cfg;
    cfg.n_paths = 4000;
    cfg.workers = 4;
    const auto est = xi_bar_empirical(brownian(2), 1.0, cfg, origin_start(2), {Point{0.0, 0.0}, Point{0.5, 0.0}});
    ASSERT_EQ(est.stay_offset.size(), 2u);
    EXPECT_LT(est.stay_offset[1].p, est.stay_offset[0].p);
    EXPECT_NEAR(est.first_bound, 1 - est.stay_offset[0].hi, 1e-15);
}

TEST(AuxiliaryProcesses, PsiSubmartingaleBrownian) {
    SimConfig cfg;
    cfg.n_paths = 4000;
    cfg.workers = 4;
    const auto r = oracles::lemma34_objects(oracles::AuxKind::psi_submart, brownian(2), {}, cfg);
    EXPECT_TRUE(r.pass) << r.worst_sigma;
}

TEST(AuxiliaryProcesses, RadialSupermartingale) {
    SimConfig cfg;
    cfg.n_paths = 4000;
    cfg.workers = 4;
    const auto r = oracles::lemma34_objects(oracles::AuxKind::radial_supermart, rotating_anisotropic(2, 0.6), {}, cfg);
    EXPECT_TRUE(r.pass) << r.worst_sigma;
}

TEST(AuxiliaryProcesses, SubharmonicSampler) {
    SimConfig cfg;
    oracles::AuxParams p;
    p.gamma = 0.4;
    p.d = 3;
    const auto r = oracles::lemma34_objects(oracles::AuxKind::subharm, brownian(3), p, cfg);
    EXPECT_TRUE(r.pass);
    EXPECT_GE(r.min_value, -1e-9);
}

TEST(EmpiricalConstants, EmptyStartMeansOrigin) {
    SimConfig cfg;
    cfg.h = 2e-3;
    cfg.n_paths = 400;
    cfg.t_max = 2;
    const auto a = stay_probability(brownian(2), cfg, StartPoint{}, Point{0.0, 0.0}, 1.0, 3);
    const auto b = stay_probability(brownian(2), cfg, StartPoint{0.0, {0.0, 0.0}}, Point{0.0, 0.0}, 1.0, 3);
    EXPECT_EQ(a.p, b.p);
}
