#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "itolab/errors.hpp"
#include "itolab/mixednorm.hpp"
#include "itolab/oracles.hpp"
#include "itolab/rng.hpp"
#include "itolab/stopping.hpp"

namespace itolab::families {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class FamilyKind { cylinder_indicators, gaussian_bumps, example21_singular, random_fields };

inline const char* to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::cylinder_indicators: return "cylinder_indicators";
        case FamilyKind::gaussian_bumps: return "gaussian_bumps";
        case FamilyKind::example21_singular: return "example21_singular";
        case FamilyKind::random_fields: return "random_fields";
    }
    return "?";
}

inline FamilyKind family_from_string(const std::string& s) {
    for (auto k : {FamilyKind::cylinder_indicators, FamilyKind::gaussian_bumps, FamilyKind::example21_singular,
                   FamilyKind::random_fields})
        if (s == to_string(k)) return k;
    throw PreconditionError("unknown function family '" + s + "'");
}

inline double unit_ball_volume(int d) { return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1); }

/// Time factor: indicator of [a, b), or (t - a)^{-gamma} on (a, b).
struct TimeFactor {
    double a = 0, b = 1;
    double gamma = 0;

    double eval(double t) const {
        if (t < a || t >= b) return 0.0;
        if (gamma == 0) return 1.0;
        return t > a ? std::pow(t - a, -gamma) : 0.0;
    }

    /// L_q norm over a window of length L starting at a (the maximizing placement).
    double norm(double q, double L = kInf) const {
        const double len = std::min(L, b - a);
        if (gamma == 0) return std::isinf(q) ? 1.0 : std::pow(len, 1 / q);
        if (std::isinf(q) || gamma * q >= 1) return kInf;
        return std::pow(std::pow(len, 1 - gamma * q) / (1 - gamma * q), 1 / q);
    }

    /// ||w T||_q with w(t) = exp(-k sqrt t).
    double weighted_norm(double q, double k) const {
        if (std::isinf(q)) {
            if (gamma > 0) return kInf;
            return std::exp(-k * std::sqrt(a));
        }
        if (gamma * q >= 1) return kInf;
        // u = (t - a)^{1 - g} with g = gamma q turns (t - a)^{-g} dt into e du.
        const double g = gamma * q, e = 1 / (1 - g);
        const double U = std::pow(b - a, 1 - g);
        const double v = oracles::detail::integrate(
            [&](double u) { return e * std::exp(-q * k * std::sqrt(a + std::pow(u, e))); }, 0.0, U, 1e-10);
        return std::pow(v, 1 / q);
    }
};

/// Space factor, radial about `c`: ball indicator, Gaussian, or |x - c|^{-a} on a ball.
struct SpaceFactor {
    enum class Kind { ball, gauss, power_ball } kind = Kind::ball;
    Point c;
    double r = 1;  ///< ball radius, or Gaussian width s
    double a = 0;  ///< power for power_ball

    double eval(std::span<const double> x) const {
        double r2 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - c[i]) * (x[i] - c[i]);
        switch (kind) {
            case Kind::ball: return r2 < r * r ? 1.0 : 0.0;
            case Kind::gauss: return std::exp(-r2 / (2 * r * r));
            case Kind::power_ball: return r2 < r * r && r2 > 0 ? std::pow(r2, -a / 2) : 0.0;
        }
        return 0.0;
    }

    /// L_p norm over the ball B_R(c) (the maximizing placement among balls of radius R).
    double norm(double p, double R = kInf) const {
        const int d = static_cast<int>(c.size());
        const double w = unit_ball_volume(d);
        switch (kind) {
            case Kind::ball: {
                const double rr = std::min(r, R);
                return std::isinf(p) ? 1.0 : std::pow(w * std::pow(rr, d), 1 / p);
            }
            case Kind::gauss: {
                if (std::isinf(p)) return 1.0;
                const double full = std::pow(2 * std::numbers::pi * r * r / p, d / 2.0);
                const double frac = std::isinf(R) ? 1.0 : boost::math::gamma_p(d / 2.0, p * R * R / (2 * r * r));
                return std::pow(full * frac, 1 / p);
            }
            case Kind::power_ball: {
                if (std::isinf(p) || a * p >= d) return kInf;
                const double rr = std::min(r, R);
                return std::pow(d * w * std::pow(rr, d - a * p) / (d - a * p), 1 / p);
            }
        }
        return 0.0;
    }

    /// ||w X||_p with w(x) = exp(-k |x|), by lattice quadrature (ball cells weighted by their
    /// exact ball fraction). For the singular kind the weight is replaced by its minimum over
    /// the support, which under-estimates the norm.
    double weighted_norm(double p, double k) const {
        const int d = static_cast<int>(c.size());
        const double cn = stopping::norm(c);
        if (kind == Kind::power_ball) return std::exp(-k * (cn + r)) * norm(p);
        const double half = kind == Kind::ball ? r : 7 * r;
        const std::size_t n = d <= 2 ? 64 : (d == 3 ? 24 : 10);
        const double hx = 2 * half / static_cast<double>(n);
        Point lo(static_cast<std::size_t>(d)), hi(lo), x(lo);
        std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
        double sum = 0, mx = 0;
        const double vol = std::pow(hx, d);
        for (;;) {
            double r2 = 0;
            for (int i = 0; i < d; ++i) {
                lo[i] = c[i] - half + static_cast<double>(idx[i]) * hx;
                hi[i] = lo[i] + hx;
                x[i] = lo[i] + hx / 2;
                r2 += x[i] * x[i];
            }
            const double wt = std::exp(-k * std::sqrt(r2));
            const double v = kind == Kind::ball ? ball_fraction(lo, hi, c, r, 4) : eval(x);
            if (v > 0) {
                mx = std::max(mx, wt * (kind == Kind::ball ? 1.0 : v));
                if (!std::isinf(p)) sum += vol * (kind == Kind::ball ? v * std::pow(wt, p) : std::pow(wt * v, p));
            }
            int ax = d - 1;
            for (; ax >= 0; --ax) {
                if (++idx[ax] < n) break;
                idx[ax] = 0;
            }
            if (ax < 0) break;
        }
        return std::isinf(p) ? mx : std::pow(sum, 1 / p);
    }
};

/// Weight exp(-power * sqrt(lambda) (|x| + sqrt t) xi_bar / 16), the Psi_lambda of the
/// potential bounds raised to `power`.
struct PsiWeight {
    double lambda = 1;
    double xi_bar = 0.5;
    double power = 1;

    double k() const { return power * std::sqrt(lambda) * xi_bar / 16; }
    double eval(double t, std::span<const double> x) const {
        return std::exp(-k() * (stopping::norm(x) + std::sqrt(std::max(t, 0.0))));
    }
};

/// A nonnegative test function of (t, x), evaluated in coordinates relative to x_tau.
/// Separable members carry closed-form norms; the others are normed on a lattice.
struct Member {
    std::string name;
    bool time_dependent = true;
    double amplitude = 1;
    std::optional<TimeFactor> T;  ///< separable members only
    std::optional<SpaceFactor> X;
    std::function<double(double, std::span<const double>)> custom;  ///< non-separable members
    double t_lo = 0, t_hi = 1;  ///< support in time (time-dependent members)
    Point center;               ///< lattice box for non-separable members
    double half = 1;

    bool separable() const { return X.has_value(); }
    double t_end() const { return time_dependent ? t_hi : kInf; }

    double operator()(double t, std::span<const double> x) const {
        if (!separable()) return custom(t, x);
        const double tv = time_dependent ? T->eval(t) : 1.0;
        return tv == 0 ? 0.0 : amplitude * tv * X->eval(x);
    }
};

namespace detail {

inline GridFunction member_lattice(const Member& m, std::size_t nt, std::size_t nx, double pad,
                                   const std::optional<PsiWeight>& w) {
    const int d = static_cast<int>(m.center.size());
    Point o;
    std::vector<double> h;
    std::vector<std::size_t> c;
    if (m.time_dependent) {
        o.push_back(m.t_lo);
        h.push_back((m.t_hi + pad * pad - m.t_lo) / static_cast<double>(nt));
        c.push_back(nt);
    }
    for (int i = 0; i < d; ++i) {
        o.push_back(m.center[i] - m.half - pad);
        h.push_back(2 * (m.half + pad) / static_cast<double>(nx));
        c.push_back(nx);
    }
    auto g = GridFunction::zeros(m.time_dependent, o, h, c);
    g.sample([&](double t, std::span<const double> x) {
        const double v = m(t, x);
        return w ? v * w->eval(t, x) : v;
    });
    return g;
}

inline std::size_t lattice_nx(int d) { return d <= 2 ? 40 : (d == 3 ? 16 : 8); }

}  // namespace detail

/// ||f||_{L_{p,q}} over R^{d+1} (or ||f||_{L_p(R^d)} for time-independent members).
inline double norm(const Member& m, const MixedNormSpec& s) {
    if (m.separable()) {
        const double x = m.X->norm(s.p);
        return m.amplitude * (m.time_dependent ? m.T->norm(s.q) * x : x);
    }
    const auto g = detail::member_lattice(m, 24, detail::lattice_nx(static_cast<int>(m.center.size())), 0, {});
    return mixed_norm(g, s);
}

/// ||Psi f|| over R_+^{d+1} (or R^d); both weight and norm factor for separable members.
inline double weighted_norm(const Member& m, const MixedNormSpec& s, const PsiWeight& w) {
    if (m.separable()) {
        const double x = m.X->weighted_norm(s.p, w.k());
        return m.amplitude * (m.time_dependent ? m.T->weighted_norm(s.q, w.k()) * x : x);
    }
    const auto g = detail::member_lattice(m, 24, detail::lattice_nx(static_cast<int>(m.center.size())), 0, w);
    return mixed_norm(g, s);
}

/// sup over cylinders C in C_R of ||f||_{L_{p,q}(C)}; with `normalized` each norm is divided by
/// ||1||_{L_{p,q}(C_R)}. Separable radial members attain the sup at the cylinder with vertex at
/// the start of the time support and axis through the centre.
inline double sup_cylinder_norm(const Member& m, const MixedNormSpec& s, double R, bool normalized) {
    require(m.time_dependent, "sup_cylinder_norm: member must depend on time");
    const int d = static_cast<int>(m.center.size());
    const double unit = std::pow(unit_ball_volume(d) * std::pow(R, d), std::isinf(s.p) ? 0.0 : 1 / s.p) *
                        (std::isinf(s.q) ? 1.0 : std::pow(R * R, 1 / s.q));
    double v;
    if (m.separable()) {
        v = m.amplitude * m.T->norm(s.q, R * R) * m.X->norm(s.p, R);
    } else {
        auto g = detail::member_lattice(m, 24, detail::lattice_nx(d), R, {});
        v = 0;
        for (const auto& C : cylinder_lattice(g, R, 0.5)) v = std::max(v, mixed_norm(g, s, C));
    }
    return normalized ? v / unit : v;
}

/// Members of a family at length scale l (cylinder radii and bump widths are multiples of l).
inline std::vector<Member> members(FamilyKind kind, int d, double l, bool time_dependent, std::uint64_t seed = 1) {
    require(l > 0, "family: scale must be positive");
    const Point o(static_cast<std::size_t>(d), 0.0);
    auto e1 = [&](double v) {
        Point p = o;
        p[0] = v;
        return p;
    };
    std::vector<Member> out;
    auto sep = [&](std::string name, TimeFactor T, SpaceFactor X) {
        Member m;
        m.name = std::move(name);
        m.time_dependent = time_dependent;
        m.T = T;
        m.X = std::move(X);
        m.t_lo = T.a;
        m.t_hi = T.b;
        m.center = m.X->c;
        m.half = m.X->kind == SpaceFactor::Kind::gauss ? 5 * m.X->r : m.X->r;
        out.push_back(std::move(m));
    };
    using K = SpaceFactor::Kind;
    switch (kind) {
        case FamilyKind::cylinder_indicators:
            sep("C(0.5l;0;0)", {0, 0.25 * l * l}, {K::ball, o, 0.5 * l});
            sep("C(l;0;0)", {0, l * l}, {K::ball, o, l});
            sep("C(l;l^2/2;l/2e1)", {0.5 * l * l, 1.5 * l * l}, {K::ball, e1(0.5 * l), l});
            sep("C(2l;0;le1)", {0, 4 * l * l}, {K::ball, e1(l), 2 * l});
            break;
        case FamilyKind::gaussian_bumps:
            sep("bump(0.5l;0)", {0, l * l}, {K::gauss, o, 0.5 * l});
            sep("bump(l;l/2e1)", {0.25 * l * l, 2 * l * l}, {K::gauss, e1(0.5 * l), l});
            sep("bump(0.25l;le1)", {0.5 * l * l, 1.5 * l * l}, {K::gauss, e1(l), 0.25 * l});
            break;
        case FamilyKind::example21_singular: {
            // g^{1/(d+1)} with g = t^{-beta} |x|^{-alpha}, alpha + 2 beta = d + 1, cut to a cylinder.
            const double beta = 0.9, alpha = d + 1 - 2 * beta;
            const double s = 1.0 / (d + 1);
            sep("sing(l;l^2/4;l/2e1)", {0.25 * l * l, 1.25 * l * l, beta * s},
                {K::power_ball, e1(0.5 * l), l, alpha * s});
            sep("sing(2l;0;0)", {0, 4 * l * l, beta * s}, {K::power_ball, o, 2 * l, alpha * s});
            break;
        }
        case FamilyKind::random_fields: {
            for (int k = 0; k < 3; ++k) {
                auto rs = make_rng_stream(seed, static_cast<std::uint64_t>(k));
                struct Bump {
                    Point c;
                    double s, a, b, w;
                };
                std::vector<Bump> bumps;
                double tmax = 0;
                for (int j = 0; j < 3; ++j) {
                    Bump b;
                    for (int i = 0; i < d; ++i) b.c.push_back(l * (2 * rs.uniform() - 1));
                    b.s = l * (0.3 + 0.7 * rs.uniform());
                    b.a = l * l * rs.uniform();
                    b.b = b.a + l * l * (0.5 + 1.5 * rs.uniform());
                    b.w = 0.5 + 0.5 * rs.uniform();
                    tmax = std::max(tmax, b.b);
                    bumps.push_back(std::move(b));
                }
                Member m;
                m.name = "field" + std::to_string(k);
                m.time_dependent = time_dependent;
                m.t_lo = 0;
                m.t_hi = tmax;
                m.center = o;
                m.half = 3.2 * l;
                m.custom = [bumps, time_dependent](double t, std::span<const double> x) {
                    double v = 0;
                    for (const auto& b : bumps) {
                        if (time_dependent && (t < b.a || t >= b.b)) continue;
                        double r2 = 0;
                        for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - b.c[i]) * (x[i] - b.c[i]);
                        v += b.w * std::exp(-r2 / (2 * b.s * b.s));
                    }
                    return v;
                };
                out.push_back(std::move(m));
            }
            break;
        }
    }
    return out;
}

}  // namespace itolab::families
