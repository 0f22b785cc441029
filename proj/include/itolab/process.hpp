#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "itolab/errors.hpp"
#include "itolab/parallel.hpp"
#include "itolab/rng.hpp"

namespace itolab {

using Point = std::vector<double>;

/// sigma(t, x, out): writes the d x d1 diffusion matrix row-major into out.
using SigmaFn = std::function<void(double, std::span<const double>, std::span<double>)>;
/// drift(t, x, out): writes b(t, x) into out (size d).
using DriftFn = std::function<void(double, std::span<const double>, std::span<double>)>;

/// A simulable Ito process dx = sigma dw + b dt with coefficient functions of (t, x).
struct ProcessSpec {
    int d = 2;
    int d1 = 2;
    double delta = 0.5;
    SigmaFn sigma;
    DriftFn drift;  // empty means b == 0
    bool drift_singular_flag = false;
    /// When non-empty, sigma is this constant matrix and `sigma` is never called.
    std::vector<double> constant_sigma;
    std::string name = "custom";

    bool has_drift() const { return static_cast<bool>(drift); }

    void eval_sigma(double t, std::span<const double> x, std::span<double> out) const {
        if (!constant_sigma.empty()) {
            std::copy(constant_sigma.begin(), constant_sigma.end(), out.begin());
        } else {
            sigma(t, x, out);
        }
    }
};

struct SimConfig {
    double h = 1e-3;          ///< base time step
    double eps_drift = 1e-2;  ///< max drift displacement per substep
    double b_max = 1e3;       ///< drift magnitude clamp
    double t_max = 10.0;      ///< horizon
    std::uint64_t seed = 1;
    std::size_t n_paths = 1000;
    unsigned workers = 1;
    bool check_ellipticity = true;

    void validate() const {
        require(h > 0 && std::isfinite(h), "SimConfig: h must be positive");
        require(eps_drift > 0, "SimConfig: eps_drift must be positive");
        require(b_max > 0, "SimConfig: b_max must be positive");
        require(t_max > 0, "SimConfig: t_max must be positive");
    }
};

/// Eigenvalue range of a = sigma sigma^T / 2 for a row-major d x d1 matrix.
inline std::pair<double, double> diffusion_eigen_range(std::span<const double> sigma, int d, int d1) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> s(sigma.data(), d, d1);
    const Eigen::MatrixXd a = 0.5 * s * s.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

namespace detail {

inline std::string format_point(double t, std::span<const double> x) {
    std::ostringstream os;
    os << "(t=" << t << ", x=[";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "])";
    return os.str();
}

constexpr double kEllipticityTol = 1e-9;

inline void check_ellipticity(std::span<const double> sigma, const ProcessSpec& spec, double t,
                              std::span<const double> x) {
    const auto [lo, hi] = diffusion_eigen_range(sigma, spec.d, spec.d1);
    if (lo < spec.delta - kEllipticityTol || hi > 1.0 / spec.delta + kEllipticityTol) {
        std::ostringstream os;
        os << "degenerate diffusion at " << format_point(t, x) << ": eigenvalues of a in [" << lo << ", " << hi
           << "] outside [" << spec.delta << ", " << 1.0 / spec.delta << "]";
        throw NumericalError(os.str());
    }
}

}  // namespace detail

/// Structural checks plus ellipticity of a on a diagnostic grid.
inline void validate(const ProcessSpec& spec) {
    require(spec.d >= 2, "ProcessSpec: d must be >= 2");
    require(spec.d1 >= spec.d, "ProcessSpec: d1 must be >= d");
    require(spec.delta > 0 && spec.delta <= 1, "ProcessSpec: delta must lie in (0, 1]");
    require(!spec.constant_sigma.empty() || static_cast<bool>(spec.sigma), "ProcessSpec: sigma missing");
    if (!spec.constant_sigma.empty())
        require(spec.constant_sigma.size() == static_cast<std::size_t>(spec.d * spec.d1),
                "ProcessSpec: constant sigma has wrong size");
    std::vector<double> sig(static_cast<std::size_t>(spec.d * spec.d1));
    Point x(static_cast<std::size_t>(spec.d));
    const double ts[] = {0.0, 0.37, 1.0, 4.0};
    const double xs[] = {-2.0, -0.5, 0.0, 0.25, 1.5};
    // Diagonal-ish lattice: vary coordinate i through xs, others fixed at a shifted value.
    for (double t : ts) {
        for (int i = 0; i < spec.d; ++i) {
            for (double v : xs) {
                for (int j = 0; j < spec.d; ++j) x[j] = (j == i) ? v : 0.3 * (j + 1) - v;
                spec.eval_sigma(t, x, sig);
                for (double s : sig)
                    if (!std::isfinite(s))
                        throw NumericalError("non-finite sigma at " + detail::format_point(t, x));
                detail::check_ellipticity(sig, spec, t, x);
            }
        }
    }
}

/// Everything an observer sees about one Euler-Maruyama substep.
struct StepView {
    double s0 = 0;  ///< elapsed time at step start
    double s1 = 0;  ///< elapsed time at step end
    double t0 = 0;  ///< absolute time at step start (time origin + s0)
    double h = 0;
    std::span<const double> x0, x1;
    std::span<const double> mart, drift_inc, dw, sigma;
    double b_abs = 0;  ///< |b| used in the step (after clamping)
    bool clamped = false;
};

struct PathStats {
    std::size_t steps = 0;
    std::size_t clamp_count = 0;
    double elapsed = 0;
    bool stopped = false;  ///< the observer ended the path before the horizon
    double drift_abs_integral = 0;
};

/// Simulates from (t_origin, x0) until `horizon` elapsed time or until obs returns false.
/// Substep rule: h_loc = min(h, eps_drift / max(|b|, 1)), with |b| clamped to b_max.
template <class Observer>
PathStats simulate_observed(const ProcessSpec& spec, const SimConfig& cfg, RandomStream& stream, double t_origin,
                            std::span<const double> x0, double horizon, Observer&& obs) {
    const auto d = static_cast<std::size_t>(spec.d);
    const auto d1 = static_cast<std::size_t>(spec.d1);
    require(x0.size() == d, "simulate: start point has wrong dimension");
    horizon = std::min(horizon, cfg.t_max);

    std::vector<double> buf(4 * d + d1 + d * d1);
    std::span<double> x(buf.data(), d), xn(buf.data() + d, d), mart(buf.data() + 2 * d, d),
        drift(buf.data() + 3 * d, d), dw(buf.data() + 4 * d, d1), sig(buf.data() + 4 * d + d1, d * d1);
    std::copy(x0.begin(), x0.end(), x.begin());

    const bool const_sigma = !spec.constant_sigma.empty();
    if (const_sigma) {
        std::copy(spec.constant_sigma.begin(), spec.constant_sigma.end(), sig.begin());
        if (cfg.check_ellipticity) detail::check_ellipticity(sig, spec, t_origin, x);
    }

    PathStats st;
    double s = 0;
    while (s < horizon) {
        const double t = t_origin + s;
        if (!const_sigma) {
            spec.sigma(t, x, sig);
            for (double v : sig)
                if (!std::isfinite(v)) throw NumericalError("non-finite sigma at " + detail::format_point(t, x));
            if (cfg.check_ellipticity) detail::check_ellipticity(sig, spec, t, x);
        }
        double babs = 0;
        bool clamped = false;
        if (spec.drift) {
            spec.drift(t, x, drift);
            double big = 0;
            for (double v : drift) {
                if (!std::isfinite(v)) throw NumericalError("non-finite drift at " + detail::format_point(t, x));
                big = std::max(big, std::abs(v));
            }
            if (big > 0) {
                double n2 = 0;
                for (double v : drift) n2 += (v / big) * (v / big);
                babs = big * std::sqrt(n2);
            }
            if (babs > cfg.b_max) {
                const double scale = cfg.b_max / babs;
                for (double& v : drift) v *= scale;
                babs = cfg.b_max;
                clamped = true;
                ++st.clamp_count;
            }
        }
        double h = std::min(cfg.h, cfg.eps_drift / std::max(babs, 1.0));
        double s_next = s + h;
        if (s_next >= horizon) {
            s_next = horizon;
            h = horizon - s;
        }
        const double sq = std::sqrt(h);
        for (auto& w : dw) w = sq * stream.normal();
        for (std::size_t i = 0; i < d; ++i) {
            double m = 0;
            for (std::size_t k = 0; k < d1; ++k) m += sig[i * d1 + k] * dw[k];
            mart[i] = m;
            const double di = spec.drift ? drift[i] * h : 0.0;
            drift[i] = di;
            xn[i] = x[i] + (m + di);
        }
        st.drift_abs_integral += babs * h;
        ++st.steps;
        StepView v{s, s_next, t, h, x, xn, mart, drift, dw, sig, babs, clamped};
        const bool go_on = obs(v);
        std::copy(xn.begin(), xn.end(), x.begin());
        s = s_next;
        if (!go_on) {
            st.stopped = true;
            break;
        }
    }
    st.elapsed = s;
    return st;
}

/// A discretized trajectory. times are elapsed times from the path start.
struct PathSample {
    int d = 2;
    double t0 = 0;
    std::vector<double> times;             ///< size K+1, times[0] = 0
    std::vector<double> states;            ///< (K+1) x d row-major
    std::vector<double> mart_part;         ///< (K+1) x d cumulative martingale part
    std::vector<double> mart_increment;    ///< K x d
    std::vector<double> drift_increment;   ///< K x d
    std::vector<double> drift_abs_integral;  ///< size K+1, running int |b| ds
    std::size_t clamp_count = 0;

    std::size_t size() const { return times.size(); }
    bool empty() const { return times.empty(); }
    std::span<const double> state(std::size_t k) const {
        return {states.data() + k * static_cast<std::size_t>(d), static_cast<std::size_t>(d)};
    }
};

inline PathSample simulate_path(const ProcessSpec& spec, const SimConfig& cfg, RandomStream& stream, double t0,
                                std::span<const double> x0) {
    cfg.validate();
    PathSample p;
    p.d = spec.d;
    p.t0 = t0;
    const auto d = static_cast<std::size_t>(spec.d);
    p.times.push_back(0.0);
    p.states.assign(x0.begin(), x0.end());
    p.mart_part.assign(d, 0.0);
    p.drift_abs_integral.push_back(0.0);
    const auto st = simulate_observed(spec, cfg, stream, t0, x0, cfg.t_max, [&](const StepView& v) {
        p.times.push_back(v.s1);
        p.states.insert(p.states.end(), v.x1.begin(), v.x1.end());
        const std::size_t base = p.mart_part.size() - d;
        for (std::size_t i = 0; i < d; ++i) p.mart_part.push_back(p.mart_part[base + i] + v.mart[i]);
        p.mart_increment.insert(p.mart_increment.end(), v.mart.begin(), v.mart.end());
        p.drift_increment.insert(p.drift_increment.end(), v.drift_inc.begin(), v.drift_inc.end());
        p.drift_abs_integral.push_back(p.drift_abs_integral.back() + v.b_abs * v.h);
        return true;
    });
    p.clamp_count = st.clamp_count;
    return p;
}

/// Path i starts at starts[i % starts.size()] and uses stream (cfg.seed, i).
/// The result does not depend on cfg.workers.
inline std::vector<PathSample> simulate_batch(const ProcessSpec& spec, const SimConfig& cfg,
                                              const std::vector<std::pair<double, Point>>& starts) {
    cfg.validate();
    if (cfg.n_paths == 0) return {};
    require(!starts.empty(), "simulate_batch: no start points");
    std::vector<PathSample> out(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
        const auto& [t0, x0] = starts[i % starts.size()];
        auto stream = make_rng_stream(cfg.seed, i);
        try {
            out[i] = simulate_path(spec, cfg, stream, t0, x0);
        } catch (const std::exception& e) {
            throw PathError(i, e.what());
        }
    });
    return out;
}

/// CSV dump: path_id,k,t,x_1..x_d,drift_abs_integral (t is absolute time).
inline void write_paths_csv(std::ostream& os, std::span<const PathSample> paths) {
    if (paths.empty()) return;
    os << "path_id,k,t";
    for (int i = 1; i <= paths.front().d; ++i) os << ",x_" << i;
    os << ",drift_abs_integral\n";
    char buf[64];
    for (std::size_t id = 0; id < paths.size(); ++id) {
        const auto& p = paths[id];
        for (std::size_t k = 0; k < p.size(); ++k) {
            os << id << ',' << k;
            std::snprintf(buf, sizeof buf, ",%.17g", p.t0 + p.times[k]);
            os << buf;
            for (double v : p.state(k)) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                os << buf;
            }
            std::snprintf(buf, sizeof buf, ",%.17g\n", p.drift_abs_integral[k]);
            os << buf;
        }
    }
}

// ---------------------------------------------------------------------------
// Process library

inline std::vector<double> scaled_identity(int d, int d1, double s) {
    std::vector<double> m(static_cast<std::size_t>(d * d1), 0.0);
    for (int i = 0; i < d; ++i) m[static_cast<std::size_t>(i * d1 + i)] = s;
    return m;
}

/// sigma = sqrt(2c) I, so a = c I.
inline ProcessSpec brownian(int d, double c = 0.5) {
    require(c > 0, "brownian: c must be positive");
    ProcessSpec p;
    p.d = d;
    p.d1 = d;
    p.delta = std::min(c, 1.0 / c);
    p.constant_sigma = scaled_identity(d, d, std::sqrt(2 * c));
    p.name = "brownian";
    return p;
}

/// sigma = I, b = magnitude * e_1.
inline ProcessSpec constant_drift(int d, double magnitude) {
    ProcessSpec p = brownian(d, 0.5);
    p.drift = [magnitude](double, std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        out[0] = magnitude;
    };
    p.name = "constant_drift";
    return p;
}

/// Drift of the first coordinate: -|r|^{-alpha} sign(r) on (-1, 1), zero elsewhere.
inline double example22_beta(double alpha, double r) {
    if (r == 0.0 || std::abs(r) >= 1.0) return 0.0;
    return -std::copysign(std::pow(std::abs(r), -alpha), r);
}

/// dx^1 = dw^1 + beta(x^1) dt, dx^i = dw^i: the singular attracting drift.
inline ProcessSpec example22(int d, double alpha) {
    require(alpha > 0 && alpha < 1, "example22: alpha must lie in (0, 1)");
    ProcessSpec p = brownian(d, 0.5);
    p.drift = [alpha](double, std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        // sign 0 = 0, so beta(0) = 0
        out[0] = example22_beta(alpha, x[0]);
    };
    p.drift_singular_flag = true;
    p.name = "example22";
    return p;
}

/// b = eps * |t|^{-beta/(d+1)} |x|^{-alpha/(d+1)} e_1, the Morrey-class drift built on
/// g(t,x) = |t|^{-beta}|x|^{-alpha} with alpha + 2 beta = d + 1.
inline ProcessSpec example21_drift(int d, double alpha, double beta, double eps) {
    ProcessSpec p = brownian(d, 0.5);
    const double e = 1.0 / (d + 1);
    p.drift = [=](double t, std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        double r2 = 0;
        for (double v : x) r2 += v * v;
        if (t == 0.0 || r2 == 0.0) {
            out[0] = std::numeric_limits<double>::max();
            return;
        }
        out[0] = eps * std::pow(std::abs(t), -beta * e) * std::pow(r2, -0.5 * alpha * e);
    };
    p.drift_singular_flag = true;
    p.name = "example21_drift";
    return p;
}

/// Variable diffusion: a(t,x) = Q(th) diag(lo, hi, hi, ...) Q(th)^T with th = x^1 + t,
/// Q a rotation in the (1,2)-plane, lo = delta, hi = 1/delta.
inline ProcessSpec rotating_anisotropic(int d, double delta) {
    require(delta > 0 && delta <= 1, "rotating_anisotropic: delta in (0, 1]");
    ProcessSpec p;
    p.d = d;
    p.d1 = d;
    p.delta = delta;
    const double lo = std::sqrt(2 * delta), hi = std::sqrt(2 / delta);
    p.sigma = [d, lo, hi](double t, std::span<const double> x, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        const double th = x[0] + t;
        const double c = std::cos(th), s = std::sin(th);
        // sigma = Q diag(lo, hi, hi...)
        out[0] = c * lo;
        out[1] = -s * hi;
        out[static_cast<std::size_t>(d)] = s * lo;
        out[static_cast<std::size_t>(d) + 1] = c * hi;
        for (int i = 2; i < d; ++i) out[static_cast<std::size_t>(i * d + i)] = hi;
    };
    p.name = "rotating_anisotropic";
    return p;
}

}  // namespace itolab
