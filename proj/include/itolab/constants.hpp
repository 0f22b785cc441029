#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "itolab/errors.hpp"
#include "itolab/montecarlo.hpp"
#include "itolab/process.hpp"
#include "itolab/stats.hpp"
#include "itolab/stopping.hpp"

namespace itolab {

enum class ConstantsMode { theoretical, empirical };

inline const char* to_string(ConstantsMode m) { return m == ConstantsMode::theoretical ? "theoretical" : "empirical"; }

/// Structural constants used by the checks. Immutable after construction.
struct ConstantsTable {
    ConstantsMode mode = ConstantsMode::empirical;
    int d = 2;
    double delta = 1;
    double kappa_d = 0;
    double xi_bar = 0;
    double m_b = 0;
    double kappa_xibar = 0;
    double d0 = 0;
    double alpha_subharm = 0;
    std::string provenance;

    void validate() const {
        for (double v : {kappa_d, xi_bar, m_b, kappa_xibar, d0, alpha_subharm})
            require(std::isfinite(v), "ConstantsTable: non-finite entry");
        require(xi_bar > 0 && xi_bar < 1, "ConstantsTable: xi_bar must lie in (0, 1)");
        require(kappa_xibar > 1, "ConstantsTable: kappa(xi_bar) must exceed 1");
        require(m_b > 0 && m_b <= 1, "ConstantsTable: m_b must lie in (0, 1]");
        require(d0 > 1 && d0 < d, "ConstantsTable: d0 must lie in (1, d)");
        require(alpha_subharm > 0, "ConstantsTable: alpha must be positive");
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["mode"] = to_string(mode);
        j["d"] = d;
        j["delta"] = delta;
        j["kappa_d"] = kappa_d;
        j["xi_bar"] = xi_bar;
        j["m_b"] = m_b;
        j["kappa_xibar"] = kappa_xibar;
        j["d0"] = d0;
        j["alpha_subharm"] = alpha_subharm;
        j["provenance"] = provenance;
        return j;
    }
};

/// Smallest kappa with kappa mu^2 - 16 mu + (32/d)(1 - mu) >= 0 for every real mu
/// (discriminant of the quadratic equal to zero).
inline double kappa_d(int d) {
    require(d >= 2, "kappa_d: d must be at least 2");
    const double c = 16.0 + 32.0 / d;
    return d * c * c / 128.0;
}

/// The quadratic in mu used by kappa_d.
inline double kappa_quadratic(double kappa, int d, double mu) { return kappa * mu * mu - 16 * mu + 32.0 / d * (1 - mu); }

/// 1/2 exp(-kappa_d d / delta^2): the lower bound produced by the exit-probability proof chain.
inline double xi_bar_theoretical(int d, double delta) {
    require(delta > 0 && delta <= 1, "xi_bar_theoretical: delta must lie in (0, 1]");
    return 0.5 * std::exp(-kappa_d(d) * d / (delta * delta));
}

/// kappa solving exp(xi/2) exp(-(kappa - 1) xi / 2) = 1/2.
inline double kappa_xibar(double xi_bar) {
    require(xi_bar > 0 && xi_bar < 1, "kappa_xibar: xi_bar must lie in (0, 1)");
    return 2 + 2 * std::numbers::ln2 / xi_bar;
}

inline double m_b_of(double xi_bar) {
    require(xi_bar > 0 && xi_bar < 1, "m_b_of: xi_bar must lie in (0, 1)");
    return xi_bar / 2;
}

inline double rho_of_lambda(double lambda, double xi_bar) {
    require(lambda > 0, "rho_of_lambda: lambda must be positive");
    return kappa_xibar(xi_bar) / std::sqrt(lambda);
}

/// a^{ij} D_ij |x|^{-alpha} for symmetric a (row-major d x d).
inline double subharmonic_operator(const Eigen::MatrixXd& a, const Eigen::VectorXd& x, double alpha) {
    const double r2 = x.squaredNorm();
    const double r = std::sqrt(r2);
    return alpha * std::pow(r, -alpha - 2) * ((alpha + 2) * x.dot(a * x) / r2 - a.trace());
}

/// Random symmetric a with spectrum in [gamma, 1/gamma]; the extreme eigenvalues are hit
/// on every other draw so the worst alignment is sampled.
inline Eigen::MatrixXd random_elliptic_matrix(int d, double gamma, RandomStream& s, bool extremes) {
    Eigen::MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = s.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::VectorXd ev(d);
    for (int i = 0; i < d; ++i) ev(i) = gamma + (1 / gamma - gamma) * s.uniform();
    if (extremes) {
        ev(0) = gamma;
        for (int i = 1; i < d; ++i) ev(i) = 1 / gamma;
    }
    return q * ev.asDiagonal() * q.transpose();
}

struct SubharmonicCheck {
    double alpha = 0;
    double min_value = std::numeric_limits<double>::infinity();
    std::size_t samples = 0;
};

/// Samples (a, x) with a in S_gamma and |x| = 1 and returns the minimum of the operator.
inline SubharmonicCheck subharmonic_samples(int d, double gamma, double alpha, std::size_t n, std::uint64_t seed) {
    SubharmonicCheck out{alpha, std::numeric_limits<double>::infinity(), n};
    auto s = make_rng_stream(derive_seed(seed, 0x5ab), 0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto a = random_elliptic_matrix(d, gamma, s, k % 2 == 0);
        Eigen::VectorXd x(d);
        for (int i = 0; i < d; ++i) x(i) = s.normal();
        if (k % 4 == 0) {
            // align x with the smallest eigenvector of a
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
            x = es.eigenvectors().col(0);
        }
        x.normalize();
        out.min_value = std::min(out.min_value, subharmonic_operator(a, x, alpha));
    }
    return out;
}

/// alpha = max(d/gamma^2 - 2, 0) + 1e-6, validated on 1000 random samples.
inline double alpha_subharmonic(int d, double gamma, std::uint64_t seed = 1) {
    require(d >= 2, "alpha_subharmonic: d must be at least 2");
    require(gamma > 0 && gamma <= 1, "alpha_subharmonic: gamma must lie in (0, 1]");
    const double alpha = std::max(d / (gamma * gamma) - 2, 0.0) + 1e-6;
    const auto chk = subharmonic_samples(d, gamma, alpha, 1000, seed);
    if (chk.min_value < -1e-9)
        throw NumericalError("alpha_subharmonic: validation failed, min value " + std::to_string(chk.min_value));
    return alpha;
}

/// Placeholder d0 when no Green's function scan is available: midpoint of (max(1, d/2), d).
inline double d0_default(int d) { return 0.5 * (std::max(1.0, d / 2.0) + d); }

// ---------------------------------------------------------------------------
// Empirical xi_bar.

struct StartPoint {
    double t = 0;
    Point x;
};

struct XiBarEstimate {
    double value = 0;           ///< min of the two bounds below
    double second_lower = 0;    ///< 95% lower bound of min_start P(theta' >= R^2)
    double first_bound = 0;     ///< 1 - 95% upper bound of max_{start, y} P(theta'(y) >= R^2)
    std::vector<Proportion> stay;         ///< per start, offset 0
    std::vector<Proportion> stay_offset;  ///< per (start, offset)
    std::size_t argmin_start = 0;
    std::size_t n_paths = 0;
};

/// Paths per start needed for a Wilson interval of width `width` at proportion p.
inline std::size_t paths_for_width(double p, double width, double z = 1.96) {
    const double v = std::max(p * (1 - p), 0.01);
    return static_cast<std::size_t>(std::ceil(4 * z * z * v / (width * width)));
}

/// P(no grid exit of x_{t+s} - x_t from B_R(y) at grid times s < R^2).
inline Proportion stay_probability(const ProcessSpec& spec, const SimConfig& cfg, const StartPoint& st,
                                   std::span<const double> y, double R, std::uint64_t seed) {
    const double cap = R * R;
    require(cfg.t_max >= cap, "stay_probability: t_max must be at least R^2");
    const Point yy(y.begin(), y.end());
    // an empty start point means the origin
    const Point x0 = st.x.empty() ? Point(static_cast<std::size_t>(spec.d), 0.0) : st.x;
    return mc_proportion(cfg.n_paths, cfg.workers, seed, [&](RandomStream& s, std::size_t) {
        if (stopping::norm(yy) >= R) return false;
        bool stayed = true;
        Point rel(static_cast<std::size_t>(spec.d));
        simulate_observed(spec, cfg, s, st.t, x0, cap, [&](const StepView& v) {
            if (v.s1 >= cap) return false;
            double r2 = 0;
            for (std::size_t i = 0; i < rel.size(); ++i) {
                const double z = v.x1[i] - x0[i] - yy[i];
                r2 += z * z;
            }
            if (r2 >= R * R) {
                stayed = false;
                return false;
            }
            return true;
        });
        return stayed;
    });
}

/// Monte Carlo calibration of xi_bar from both relations of the exit-probability bound.
inline XiBarEstimate xi_bar_empirical(const ProcessSpec& spec, double R, const SimConfig& cfg,
                                      const std::vector<StartPoint>& start_grid,
                                      const std::vector<Point>& offsets = {}, double max_ci_width = 0.02) {
    validate(spec);
    cfg.validate();
    require(R > 0, "xi_bar_empirical: R must be positive");
    require(!start_grid.empty(), "xi_bar_empirical: empty start grid");
    std::vector<Point> ys = offsets;
    if (ys.empty()) ys.push_back(Point(static_cast<std::size_t>(spec.d), 0.0));

    XiBarEstimate out;
    out.n_paths = cfg.n_paths;
    out.second_lower = 1;
    double max_upper = 0;
    const Point zero(static_cast<std::size_t>(spec.d), 0.0);
    for (std::size_t i = 0; i < start_grid.size(); ++i) {
        const auto p = stay_probability(spec, cfg, start_grid[i], zero, R, derive_seed(cfg.seed, 1000 + i));
        out.stay.push_back(p);
        if (p.hi - p.lo > max_ci_width)
            throw PreconditionError("xi_bar_empirical: CI width " + std::to_string(p.hi - p.lo) + " exceeds " +
                                    std::to_string(max_ci_width) + "; need n_paths >= " +
                                    std::to_string(paths_for_width(p.p, max_ci_width)));
        if (p.lo < out.second_lower) {
            out.second_lower = p.lo;
            out.argmin_start = i;
        }
        for (std::size_t j = 0; j < ys.size(); ++j) {
            const auto q = stopping::norm(ys[j]) == 0
                               ? p
                               : stay_probability(spec, cfg, start_grid[i], ys[j], R,
                                                  derive_seed(cfg.seed, 500000 + i * ys.size() + j));
            out.stay_offset.push_back(q);
            max_upper = std::max(max_upper, q.hi);
        }
    }
    out.first_bound = 1 - max_upper;
    out.value = std::min(out.second_lower, out.first_bound);
    return out;
}

inline ConstantsTable theoretical_constants(int d, double delta) {
    ConstantsTable t;
    t.mode = ConstantsMode::theoretical;
    t.d = d;
    t.delta = delta;
    t.kappa_d = kappa_d(d);
    t.xi_bar = xi_bar_theoretical(d, delta);
    t.m_b = m_b_of(t.xi_bar);
    t.kappa_xibar = kappa_xibar(t.xi_bar);
    t.d0 = d0_default(d);
    t.alpha_subharm = alpha_subharmonic(d, delta);
    t.provenance =
        "xi_bar = exp(-kappa_d d/delta^2)/2 (proof chain, delta^2 exponent); m_b = xi_bar/2; "
        "kappa(xi_bar) = 2 + 2 ln2/xi_bar; d0 = midpoint of (max(1,d/2), d), not computed; "
        "alpha from the subharmonicity condition with gamma = delta";
    t.validate();
    return t;
}

/// Empirical table: xi_bar from Monte Carlo, d0 from a Green's function bracket if given.
inline ConstantsTable empirical_constants(const ProcessSpec& spec, double R, const SimConfig& cfg,
                                          const std::vector<StartPoint>& start_grid,
                                          std::optional<double> d0 = std::nullopt) {
    const auto est = xi_bar_empirical(spec, R, cfg, start_grid);
    require(est.value > 0, "empirical_constants: estimated xi_bar is not positive; increase n_paths or reduce R");
    ConstantsTable t;
    t.mode = ConstantsMode::empirical;
    t.d = spec.d;
    t.delta = spec.delta;
    t.kappa_d = kappa_d(spec.d);
    t.xi_bar = est.value;
    t.m_b = m_b_of(t.xi_bar);
    t.kappa_xibar = kappa_xibar(t.xi_bar);
    t.d0 = d0.value_or(d0_default(spec.d));
    t.alpha_subharm = alpha_subharmonic(spec.d, spec.delta);
    t.provenance = "xi_bar: 95% lower bound over " + std::to_string(start_grid.size()) + " starts, " +
                   std::to_string(cfg.n_paths) + " paths, R = " + std::to_string(R) + ", h = " +
                   std::to_string(cfg.h) + ", process " + spec.name + "; m_b = xi_bar/2; d0 " +
                   (d0 ? "from reverse Hoelder bracket" : "default midpoint");
    t.validate();
    return t;
}

}  // namespace itolab
