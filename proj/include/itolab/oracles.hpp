#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "itolab/constants.hpp"
#include "itolab/errors.hpp"
#include "itolab/montecarlo.hpp"
#include "itolab/process.hpp"
#include "itolab/stats.hpp"

namespace itolab::oracles {

namespace detail {

/// Adaptive Gauss-Kronrod on [a, b]; throws when the error estimate stays above tol.
template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-11) {
    if (a == b) return 0.0;
    double err = 0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol, &err);
    if (!std::isfinite(v) || err > 1e-6 * std::max(1.0, std::abs(v)))
        throw NumericalError("quadrature did not converge on [" + std::to_string(a) + ", " + std::to_string(b) + "]");
    return v;
}

/// Integral split at interior breakpoints so singularities sit at panel ends.
template <class F>
double integrate_split(F&& f, double a, double b, const std::vector<double>& breaks, double tol = 1e-11) {
    if (a == b) return 0.0;
    const double sgn = a < b ? 1.0 : -1.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    std::vector<double> pts{lo};
    for (double c : breaks)
        if (c > lo && c < hi) pts.push_back(c);
    pts.push_back(hi);
    std::sort(pts.begin(), pts.end());
    double s = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) s += integrate(f, pts[i], pts[i + 1], tol);
    return sgn * s;
}

inline double normal_cdf(double z) { return 0.5 * boost::math::erfc(-z / std::numbers::sqrt2); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Brownian motion with a = c I in the ball B_R.

/// E tau for the exit from B_R started at x: (R^2 - |x|^2) / (2 d c).
inline double brownian_exit_mean(int d, double R, std::span<const double> x, double c) {
    require(c > 0 && R > 0, "brownian_exit_mean: need R, c > 0");
    double r2 = 0;
    for (double v : x) r2 += v * v;
    if (r2 >= R * R) return 0.0;
    return (R * R - r2) / (2 * d * c);
}

/// P(tau > t) from radius r0 in B_R via the Dirichlet eigenfunction series.
inline double brownian_survival(int d, double R, double r0, double t, double c, int terms = 60) {
    require(R > 0 && c > 0 && t >= 0, "brownian_survival: bad arguments");
    if (r0 >= R) return 0.0;
    if (t == 0) return 1.0;
    const double nu = d / 2.0 - 1;
    double s = 0;
    for (int k = 1; k <= terms; ++k) {
        const double j = boost::math::cyl_bessel_j_zero(nu, k);
        const double a = 2 / (j * boost::math::cyl_bessel_j(nu + 1, j));
        const double z = j * r0 / R;
        const double phi = r0 == 0 ? std::pow(j / 2, nu) / boost::math::tgamma(nu + 1)
                                   : std::pow(z, -nu) * boost::math::cyl_bessel_j(nu, z);
        const double term = a * phi * std::exp(-c * j * j * t / (R * R));
        s += term;
        if (std::abs(term) < 1e-16 && k > 3) break;
    }
    return std::clamp(s, 0.0, 1.0);
}

/// Asymptotic exponential rate of P(tau > t): c j_{nu,1}^2 / R^2.
inline double brownian_survival_rate(int d, double R, double c) {
    const double j = boost::math::cyl_bessel_j_zero(d / 2.0 - 1, 1);
    return c * j * j / (R * R);
}

/// E exp(-lambda tau) from radius r0 in B_R.
inline double brownian_exit_laplace(int d, double R, double r0, double lambda, double c) {
    require(lambda >= 0 && R > 0 && c > 0, "brownian_exit_laplace: bad arguments");
    if (r0 >= R || lambda == 0) return 1.0;
    const double nu = d / 2.0 - 1;
    const double k = std::sqrt(lambda / c);
    const double den = boost::math::cyl_bessel_i(nu, k * R) * std::pow(k * R / 2, -nu);
    const double num = r0 == 0 ? 1 / boost::math::tgamma(nu + 1)
                               : boost::math::cyl_bessel_i(nu, k * r0) * std::pow(k * r0 / 2, -nu);
    return num / den;
}

/// Free heat kernel of c Delta: (4 pi c t)^{-d/2} exp(-|x|^2 / (4 c t)).
inline double heat_kernel(double t, std::span<const double> x, double c = 0.5) {
    if (t <= 0) return 0.0;
    double r2 = 0;
    for (double v : x) r2 += v * v;
    const double d = static_cast<double>(x.size());
    return std::pow(4 * std::numbers::pi * c * t, -d / 2) * std::exp(-r2 / (4 * c * t));
}

/// Average of e^{-lambda t} p_t(x) over the box [t0, t1] x prod [lo_i, hi_i].
inline double heat_kernel_bin_average(double lambda, double t0, double t1, std::span<const double> lo,
                                      std::span<const double> hi, double c = 0.5) {
    require(t1 > t0 && t0 >= 0, "heat_kernel_bin_average: bad time range");
    double vol = t1 - t0;
    for (std::size_t i = 0; i < lo.size(); ++i) vol *= hi[i] - lo[i];
    auto f = [&](double t) {
        if (t <= 0) {
            bool in = true;
            for (std::size_t i = 0; i < lo.size(); ++i) in = in && lo[i] < 0 && hi[i] > 0;
            return in ? 1.0 : 0.0;
        }
        const double s = std::sqrt(2 * c * t);
        double p = std::exp(-lambda * t);
        for (std::size_t i = 0; i < lo.size(); ++i)
            p *= detail::normal_cdf(hi[i] / s) - detail::normal_cdf(lo[i] / s);
        return p;
    };
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, t0, t1, 6, 1e-9);
    return v / vol;
}

// ---------------------------------------------------------------------------
// One-dimensional exit quantities.

/// Drift beta on (a, b) with singular points listed in `breaks`.
struct ScaleFunctionOracle {
    std::function<double(double)> beta;
    double a = -1, b = 1;
    std::vector<double> breaks;
    double tol = 1e-11;

    void validate() const {
        require(static_cast<bool>(beta), "ScaleFunctionOracle: beta missing");
        require(a < b, "ScaleFunctionOracle: need a < b");
    }
};

namespace detail {

/// Composite 10-point Gauss-Legendre mesh on (a, b), split at the breakpoints and graded
/// algebraically toward every panel end so integrable endpoint singularities resolve.
class GradedMesh {
public:
    GradedMesh(double a, double b, const std::vector<double>& breaks, int panels_per_piece = 96, double grading = 8) {
        std::vector<double> pts{a};
        for (double c : breaks)
            if (c > a && c < b) pts.push_back(c);
        pts.push_back(b);
        std::sort(pts.begin(), pts.end());
        edges_.push_back(a);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const double p = pts[i], q = pts[i + 1];
            for (int k = 1; k <= panels_per_piece; ++k) {
                const double s = static_cast<double>(k) / panels_per_piece;
                const double w = s <= 0.5 ? 0.5 * std::pow(2 * s, grading) : 1 - 0.5 * std::pow(2 * (1 - s), grading);
                edges_.push_back(k == panels_per_piece ? q : p + (q - p) * w);
            }
        }
    }

    const std::vector<double>& edges() const { return edges_; }
    std::size_t panels() const { return edges_.size() - 1; }

    /// Panel index containing x.
    std::size_t locate(double x) const {
        auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
        std::size_t k = static_cast<std::size_t>(it - edges_.begin());
        return k == 0 ? 0 : std::min(k - 1, panels() - 1);
    }

    /// Integral of f over [lo, hi] within one panel.
    template <class F>
    static double gl(F&& f, double lo, double hi) {
        static constexpr double xs[5] = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                         0.8650633666889845, 0.9739065285171717};
        static constexpr double ws[5] = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                         0.1494513491505806, 0.0666713443086881};
        const double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
        double s = 0;
        for (int i = 0; i < 5; ++i) s += ws[i] * (f(c - r * xs[i]) + f(c + r * xs[i]));
        return s * r;
    }

    /// Cumulative integrals of f at the panel edges, starting from edges[0].
    template <class F>
    std::vector<double> cumulative(F&& f) const {
        std::vector<double> c(edges_.size(), 0.0);
        for (std::size_t k = 0; k < panels(); ++k) c[k + 1] = c[k] + gl(f, edges_[k], edges_[k + 1]);
        return c;
    }

    /// Integral of f from edges[0] to x using precomputed cumulative values.
    template <class F>
    double at(F&& f, const std::vector<double>& cum, double x) const {
        const std::size_t k = locate(x);
        return cum[k] + gl(f, edges_[k], x);
    }

private:
    std::vector<double> edges_;
};

}  // namespace detail

/// Solves (1/2) u'' + beta u' = -f on (a, b), u(a) = u(b) = 0, at x0 via the Green function
/// of the scale function S (S' = exp(-2 int beta)) and speed density 2/S'.
inline double exit_expectation_1d(const ScaleFunctionOracle& o, const std::function<double(double)>& f, double x0) {
    o.validate();
    require(x0 > o.a && x0 < o.b, "exit_expectation_1d: x0 must lie in (a, b)");
    std::vector<double> br = o.breaks;
    br.push_back(x0);
    const detail::GradedMesh mesh(o.a, o.b, br);
    const auto Bcum = mesh.cumulative(o.beta);
    auto B = [&](double x) { return mesh.at(o.beta, Bcum, x); };
    auto sp = [&](double x) { return std::exp(-2 * B(x)); };
    const auto Scum = mesh.cumulative(sp);
    auto S = [&](double x) { return mesh.at(sp, Scum, x); };
    const double Sb = Scum.back(), Sx = S(x0);
    // G(x0, y) = S(x0 ^ y) (Sb - S(x0 v y)) / Sb with S(a) = 0.
    auto integrand = [&](double y) {
        const double fy = f(y);
        if (fy == 0) return 0.0;
        const double Sy = S(y);
        const double g = y < x0 ? Sy * (Sb - Sx) : Sx * (Sb - Sy);
        return g / Sb * fy * 2 / sp(y);
    };
    double u = 0;
    for (std::size_t k = 0; k < mesh.panels(); ++k) u += detail::GradedMesh::gl(integrand, mesh.edges()[k], mesh.edges()[k + 1]);
    if (!std::isfinite(u)) throw NumericalError("exit_expectation_1d: quadrature produced a non-finite value");
    return u;
}

/// phi(r) = r - 3 rho + int_r^{3 rho} exp((2/(1-alpha)) (t wedge 1)^{1-alpha}) dt, zero for r >= 3 rho.
inline double example22_phi(double alpha, double rho, double r) {
    require(alpha > 0 && alpha < 1, "example22_phi: alpha must lie in (0, 1)");
    require(rho > 0 && r >= 0, "example22_phi: need rho > 0, r >= 0");
    if (r >= 3 * rho) return 0.0;
    const double k = 2 / (1 - alpha);
    auto g = [&](double t) { return std::expm1(k * std::pow(std::min(t, 1.0), 1 - alpha)); };
    return detail::integrate_split(g, r, 3 * rho, {1.0});
}

/// Upper bound 3 rho [exp((2/(1-alpha)) (3 rho)^{1-alpha}) - 1] of phi(0).
inline double example22_phi_bound(double alpha, double rho) {
    return 3 * rho * std::expm1(2 / (1 - alpha) * std::pow(3 * rho, 1 - alpha));
}

/// Scale-function oracle for the singular drift -|r|^{-alpha} sign r on (a, b).
inline ScaleFunctionOracle example22_oracle(double alpha, double a, double b) {
    ScaleFunctionOracle o;
    o.beta = [alpha](double r) { return example22_beta(alpha, r); };
    o.a = a;
    o.b = b;
    o.breaks = {-1.0, 0.0, 1.0};
    return o;
}

struct XiEta {
    double xi = 0, eta = 0;
    double bhat = 0, gamma = 0;
    double r_minus = 0, r_plus = 0;
    double xi_at_minus = 0, xi_at_plus = 0;
    double ode_residual = 0;  ///< max relative |eta''/2 - bhat eta'| over sampled r
    double bound_closed = 0;  ///< 2 rho (4 rho bhat / (1 - gamma) - 1)
    double bound_small = 0;   ///< 10 rho^{2 - alpha}
    bool within_bounds = false;
};

/// Barrier xi(r) = r - r_+ + eta(r) for the singular drift, with its defining checks.
inline XiEta example22_xi_eta(double alpha, double rho, double y1, double r) {
    require(alpha > 0 && alpha < 1, "example22_xi_eta: alpha must lie in (0, 1)");
    require(rho > 0 && y1 >= 2 * rho, "example22_xi_eta: need y1 >= 2 rho > 0");
    XiEta o;
    o.r_minus = y1 - rho;
    o.r_plus = y1 + rho;
    require(r > o.r_minus && r < o.r_plus, "example22_xi_eta: r must lie in (r_-, r_+)");
    o.bhat = std::pow(2 / std::abs(y1), alpha);
    o.gamma = std::exp(-4 * o.bhat * rho);
    const double bh = o.bhat, rp = o.r_plus, c = 2 * rho / (o.gamma - 1);
    auto eta = [&](double s) { return c * std::expm1(2 * bh * (s - rp)); };
    auto xi = [&](double s) { return s - rp + eta(s); };
    o.eta = eta(r);
    o.xi = xi(r);
    o.xi_at_minus = xi(o.r_minus);
    o.xi_at_plus = xi(o.r_plus);
    for (int k = 1; k < 20; ++k) {
        const double s = o.r_minus + (o.r_plus - o.r_minus) * k / 20.0;
        const double e1 = c * 2 * bh * std::exp(2 * bh * (s - rp));
        const double e2 = c * 4 * bh * bh * std::exp(2 * bh * (s - rp));
        const double scale = std::max(std::abs(e2), std::abs(bh * e1));
        o.ode_residual = std::max(o.ode_residual, std::abs(0.5 * e2 - bh * e1) / scale);
    }
    o.bound_closed = 2 * rho * (4 * rho * bh / (1 - o.gamma) - 1);
    o.bound_small = 10 * std::pow(rho, 2 - alpha);
    o.within_bounds = o.xi <= o.bound_closed * (1 + 1e-12) && o.xi <= o.bound_small;
    return o;
}

// ---------------------------------------------------------------------------
// Ito formula residuals.

/// Test function on a cylinder with optional analytic derivatives; missing ones are
/// replaced by centered finite differences with step fd_step.
struct TestFunction {
    std::function<double(double, std::span<const double>)> u;
    std::function<double(double, std::span<const double>)> ut;
    std::function<void(double, std::span<const double>, std::span<double>)> grad;
    std::function<void(double, std::span<const double>, std::span<double>)> hess;  // d x d row-major
    double fd_step = 1e-4;

    double dt(double t, std::span<const double> x) const {
        if (ut) return ut(t, x);
        return (u(t + fd_step, x) - u(t - fd_step, x)) / (2 * fd_step);
    }

    void du(double t, std::span<const double> x, std::span<double> g) const {
        if (grad) return grad(t, x, g);
        Point y(x.begin(), x.end());
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = x[i] + fd_step;
            const double up = u(t, y);
            y[i] = x[i] - fd_step;
            const double dn = u(t, y);
            y[i] = x[i];
            g[i] = (up - dn) / (2 * fd_step);
        }
    }

    void d2u(double t, std::span<const double> x, std::span<double> H) const {
        if (hess) return hess(t, x, H);
        const std::size_t d = x.size();
        const double e = fd_step;
        Point y(x.begin(), x.end());
        const double u0 = u(t, x);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                double v;
                if (i == j) {
                    y[i] = x[i] + e;
                    const double up = u(t, y);
                    y[i] = x[i] - e;
                    const double dn = u(t, y);
                    y[i] = x[i];
                    v = (up - 2 * u0 + dn) / (e * e);
                } else {
                    auto at = [&](double si, double sj) {
                        y[i] = x[i] + si * e;
                        y[j] = x[j] + sj * e;
                        const double r = u(t, y);
                        y[i] = x[i];
                        y[j] = x[j];
                        return r;
                    };
                    v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * e * e);
                }
                H[i * d + j] = v;
                H[j * d + i] = v;
            }
        }
    }
};

inline TestFunction squared_norm_function() {
    TestFunction f;
    f.u = [](double, std::span<const double> x) {
        double s = 0;
        for (double v : x) s += v * v;
        return s;
    };
    f.ut = [](double, std::span<const double>) { return 0.0; };
    f.grad = [](double, std::span<const double> x, std::span<double> g) {
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2 * x[i];
    };
    f.hess = [](double, std::span<const double> x, std::span<double> H) {
        std::fill(H.begin(), H.end(), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) H[i * x.size() + i] = 2;
    };
    return f;
}

inline TestFunction first_coordinate_function() {
    TestFunction f;
    f.u = [](double, std::span<const double> x) { return x[0]; };
    f.ut = [](double, std::span<const double>) { return 0.0; };
    f.grad = [](double, std::span<const double> x, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
        (void)x;
        g[0] = 1;
    };
    f.hess = [](double, std::span<const double>, std::span<double> H) { std::fill(H.begin(), H.end(), 0.0); };
    return f;
}

struct ItoResidualStats {
    Estimate mean;          ///< mean residual with its standard error
    double rms = 0;
    double max_abs = 0;
    Estimate martingale_mean;  ///< mean of the stochastic-integral term
    double martingale_var = 0;
    Estimate quadratic_variation;  ///< E sum |Du sigma|^2 h
    std::size_t n_paths = 0;
};

/// Residual of the Ito formula for u along simulated paths from (t0, x0) up to the exit
/// from the cylinder [t0, t0 + T) x B_R(x0). elliptic drops the time derivative.
inline ItoResidualStats ito_residual(const ProcessSpec& spec, const TestFunction& u, double T, double R,
                                     const SimConfig& cfg, double t0 = 0, Point x0 = {}, bool elliptic = false) {
    validate(spec);
    cfg.validate();
    require(T > 0 && R > 0, "ito_residual: need T, R > 0");
    const auto d = static_cast<std::size_t>(spec.d);
    const auto d1 = static_cast<std::size_t>(spec.d1);
    if (x0.empty()) x0.assign(d, 0.0);
    require(x0.size() == d, "ito_residual: start dimension");

    struct Out {
        double res = 0, mart = 0, qv = 0;
    };
    auto outs = parallel_map<Out>(cfg.n_paths, cfg.workers, [&](std::size_t i) {
        auto s = make_rng_stream(cfg.seed, i);
        Out o;
        Point g(d), H(d * d), a(d * d);
        double u_start = u.u(t0, x0), u_end = u_start, drift_sum = 0;
        simulate_observed(spec, cfg, s, t0, x0, T, [&](const StepView& v) {
            const double t = v.t0;
            u.du(t, v.x0, g);
            u.d2u(t, v.x0, H);
            // a = sigma sigma^T / 2
            double gen = elliptic ? 0.0 : u.dt(t, v.x0);
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q) {
                    double apq = 0;
                    for (std::size_t k = 0; k < d1; ++k) apq += v.sigma[p * d1 + k] * v.sigma[q * d1 + k];
                    gen += 0.5 * apq * H[p * d + q];
                }
            double mart = 0, bdu = 0, qv = 0;
            for (std::size_t p = 0; p < d; ++p) {
                mart += g[p] * v.mart[p];
                bdu += g[p] * v.drift_inc[p];
            }
            for (std::size_t k = 0; k < d1; ++k) {
                double c = 0;
                for (std::size_t p = 0; p < d; ++p) c += g[p] * v.sigma[p * d1 + k];
                qv += c * c;
            }
            drift_sum += gen * v.h + bdu;
            o.mart += mart;
            o.qv += qv * v.h;
            u_end = u.u(v.t0 + v.h, v.x1);
            if (!std::isfinite(u_end)) throw NumericalError("ito_residual: u not finite along the path");
            double r2 = 0;
            for (std::size_t p = 0; p < d; ++p) r2 += (v.x1[p] - x0[p]) * (v.x1[p] - x0[p]);
            return r2 < R * R;
        });
        o.res = u_end - u_start - drift_sum - o.mart;
        return o;
    });
    RunningStats res, mart, qv;
    double sq = 0, mx = 0;
    for (const auto& o : outs) {
        res.add(o.res);
        mart.add(o.mart);
        qv.add(o.qv);
        sq += o.res * o.res;
        mx = std::max(mx, std::abs(o.res));
    }
    ItoResidualStats st;
    st.mean = res.estimate();
    st.rms = outs.empty() ? 0 : std::sqrt(sq / static_cast<double>(outs.size()));
    st.max_abs = mx;
    st.martingale_mean = mart.estimate();
    st.martingale_var = mart.variance();
    st.quadratic_variation = qv.estimate();
    st.n_paths = outs.size();
    return st;
}

// ---------------------------------------------------------------------------
// Auxiliary sub- and supermartingales behind the exit-probability bound.

enum class AuxKind { psi_submart, radial_supermart, subharm };

struct AuxParams {
    int d = 2;
    double R = 1;
    double gamma = 1;        ///< ellipticity for the subharmonic sampler
    std::size_t checkpoints = 20;
    std::size_t samples = 1000;
};

struct AuxReport {
    AuxKind kind = AuxKind::psi_submart;
    std::vector<double> times;
    std::vector<Estimate> values;      ///< mean of the process at each checkpoint
    std::vector<Estimate> increments;  ///< mean increment between consecutive checkpoints
    double worst_sigma = 0;  ///< most adverse increment in units of its standard error (signed)
    double min_value = 0;    ///< subharm: minimum of a^{ij} D_ij |x|^{-alpha}
    bool pass = false;
};

/// zeta(x) = exp(-x^2/2): u(t, x) = E zeta(x + w_{T-t}) = (1 + T - t)^{-1/2} exp(-x^2 / (2 (1 + T - t))).
inline double aux_u(double T, double t, double x) {
    const double v = 1 + T - t;
    return std::exp(-x * x / (2 * v)) / std::sqrt(v);
}

/// Monte Carlo (or sampled) check of the drift-sign structure of these objects for `spec`.
inline AuxReport lemma34_objects(AuxKind kind, const ProcessSpec& spec, const AuxParams& prm,
                                     const SimConfig& cfg) {
    AuxReport rep;
    rep.kind = kind;
    if (kind == AuxKind::subharm) {
        const double alpha = alpha_subharmonic(prm.d, prm.gamma, cfg.seed);
        const auto chk = subharmonic_samples(prm.d, prm.gamma, alpha, prm.samples, cfg.seed);
        rep.min_value = chk.min_value;
        rep.pass = chk.min_value >= -1e-9;
        return rep;
    }
    validate(spec);
    const auto d = static_cast<std::size_t>(spec.d);
    const auto d1 = static_cast<std::size_t>(spec.d1);
    const double R = prm.R;
    const double kap = kappa_d(spec.d);
    const double T = kind == AuxKind::psi_submart ? R * R : spec.delta * spec.delta * R * R;
    const std::size_t K = prm.checkpoints;
    for (std::size_t k = 0; k <= K; ++k) rep.times.push_back(T * static_cast<double>(k) / static_cast<double>(K));

    // Per path: the process value at each checkpoint (frozen once eta reaches T for (ii)).
    auto rows = parallel_map<std::vector<double>>(cfg.n_paths, cfg.workers, [&](std::size_t i) {
        auto s = make_rng_stream(cfg.seed, i);
        std::vector<double> vals(K + 1);
        Point m(d, 0.0);
        double log_phi = 0, eta = 0;
        auto value = [&]() {
            double m2 = 0;
            for (double v : m) m2 += v * v;
            if (kind == AuxKind::psi_submart) {
                const double q = R * R - 4 * m2;
                return q * q / (R * R * R * R) * std::exp(log_phi);
            }
            return aux_u(T, std::min(eta, T), std::sqrt(m2));
        };
        vals[0] = value();
        std::size_t next = 1;
        Point x0(d, 0.0);
        simulate_observed(spec, cfg, s, 0.0, x0, T, [&](const StepView& v) {
            double tr = 0, xax = 0, m2 = 0;
            for (std::size_t p = 0; p < d; ++p) {
                for (std::size_t q = 0; q < d; ++q) {
                    double apq = 0;
                    for (std::size_t k = 0; k < d1; ++k) apq += v.sigma[p * d1 + k] * v.sigma[q * d1 + k];
                    apq *= 0.5;
                    if (p == q) tr += apq;
                    xax += m[p] * apq * m[q];
                }
                m2 += m[p] * m[p];
            }
            log_phi += kap * tr / (R * R) * v.h;
            eta += 2 * (m2 > 0 ? xax / m2 : 1.0) * v.h;
            for (std::size_t p = 0; p < d; ++p) m[p] += v.mart[p];
            while (next <= K && v.s1 >= rep.times[next] - 1e-12) vals[next++] = value();
            return next <= K;
        });
        while (next <= K) vals[next++] = value();
        return vals;
    });

    std::vector<RunningStats> val(K + 1), inc(K);
    for (const auto& r : rows) {
        for (std::size_t k = 0; k <= K; ++k) val[k].add(r[k]);
        for (std::size_t k = 0; k < K; ++k) inc[k].add(r[k + 1] - r[k]);
    }
    const double sign = kind == AuxKind::psi_submart ? 1.0 : -1.0;
    rep.worst_sigma = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= K; ++k) rep.values.push_back(val[k].estimate());
    for (std::size_t k = 0; k < K; ++k) {
        const auto e = inc[k].estimate();
        rep.increments.push_back(e);
        const double z = e.stderr_ > 0 ? sign * e.mean / e.stderr_ : (sign * e.mean >= 0 ? 0.0 : -1e300);
        rep.worst_sigma = std::min(rep.worst_sigma, z);
    }
    rep.pass = rep.worst_sigma >= -3;
    return rep;
}

}  // namespace itolab::oracles
