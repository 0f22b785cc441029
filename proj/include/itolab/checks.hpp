#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "itolab/constants.hpp"
#include "itolab/estimates.hpp"
#include "itolab/families.hpp"
#include "itolab/moderation.hpp"
#include "itolab/stopping.hpp"

namespace itolab::estimates {

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

class UnknownCheckError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct CheckConfig {
    std::vector<double> lambda_grid{4, 16, 64};
    std::vector<double> R_grid{0.25, 0.5, 1};
    families::FamilyKind family = families::FamilyKind::cylinder_indicators;
    std::uint64_t family_seed = 1;
    std::size_t n_paths = 1000;
    std::vector<StartPoint> start_grid{StartPoint{}};
    ConstantsTable constants;
    SimConfig sim;            ///< seed, workers, eps_drift and b_max are used; h and t_max are set per run
    double h_rel = 2e-3;      ///< step as a fraction of the natural time unit of each scale
    double h_rel_fine = 1e-4;  ///< for inequalities with explicit constants
    double rho_b = kInf;      ///< radius below which the drift is moderated; infinite for driftless processes
    bool tau_variants = true;  ///< add tau = fixed time and tau = ball hit at the middle scale
    double tau_wait = 2;
    std::optional<double> bbar;  ///< use this bbar_R instead of estimating it
    double exponent_tol = 0.15;
    double spread_max = 10;
    double tail_eps = 1e-6;
    double explicit_slack = 0.02;  ///< relative discretization allowance for explicit-constant rows

    void validate() const {
        require(lambda_grid.size() >= 1 && R_grid.size() >= 1, "CheckConfig: empty scale grid");
        for (double v : lambda_grid) require(v > 0 && std::isfinite(v), "CheckConfig: lambda values must be positive");
        for (double v : R_grid) require(v > 0 && std::isfinite(v), "CheckConfig: R values must be positive");
        require(n_paths >= 10, "CheckConfig: n_paths must be at least 10");
        require(!start_grid.empty(), "CheckConfig: empty start grid");
        require(h_rel > 0 && h_rel_fine > 0, "CheckConfig: step fractions must be positive");
        require(rho_b > 0, "CheckConfig: rho_b must be positive");
        require(exponent_tol > 0 && spread_max >= 1, "CheckConfig: bad tolerances");
        require(tail_eps > 0 && tail_eps < 1, "CheckConfig: tail_eps must lie in (0, 1)");
        constants.validate();
    }
};

namespace detail {

/// Shared state of one check run.
struct Ctx {
    const ProcessSpec& spec;
    const CheckConfig& cfg;
    EstimateReport& rep;
    int d;
    double xi, kap, mb, d0;
    bool drift;
    std::uint64_t base;
    std::uint64_t runs = 0;
    double cens_bad = 0, cens_all = 0;
    std::map<double, double> bbar_cache;

    Ctx(const ProcessSpec& s, const CheckConfig& c, EstimateReport& r)
        : spec(s), cfg(c), rep(r), d(s.d), xi(c.constants.xi_bar), kap(c.constants.kappa_xibar), mb(c.constants.m_b),
          d0(c.constants.d0), drift(s.has_drift()), base(derive_seed(c.sim.seed, fnv1a(r.check_id))) {
        require(c.constants.d == s.d, "check: constants table is for a different dimension");
    }

    std::uint64_t next_seed() { return derive_seed(base, ++runs); }

    SimConfig sim(double unit, bool fine = false) const {
        SimConfig s = cfg.sim;
        s.h = (fine ? cfg.h_rel_fine : cfg.h_rel) * unit;
        s.n_paths = cfg.n_paths;
        return s;
    }

    Point e1(double v) const {
        Point p(static_cast<std::size_t>(d), 0.0);
        p[0] = v;
        return p;
    }

    /// (tau, label) pairs: tau = 0 at every start point, plus the variants at the middle scale.
    std::vector<std::pair<TauSpec, std::string>> taus(std::size_t k, std::size_t nscales) const {
        std::vector<std::pair<TauSpec, std::string>> out;
        for (std::size_t i = 0; i < cfg.start_grid.size(); ++i) {
            TauSpec t;
            t.t0 = cfg.start_grid[i].t;
            t.x0 = cfg.start_grid[i].x;
            out.emplace_back(t, cfg.start_grid.size() > 1 ? "tau = 0 @start" + std::to_string(i) : "tau = 0");
        }
        if (cfg.tau_variants && k == nscales / 2) {
            TauSpec a;
            a.kind = TauSpec::Kind::fixed_time;
            a.time = 0.05;
            out.emplace_back(a, "tau = 0.05");
            TauSpec b;
            b.kind = TauSpec::Kind::hit_ball;
            b.center = e1(0.1);
            b.radius = 0.05;
            out.emplace_back(b, "tau = hit B_0.05(0.1e1)");
        }
        return out;
    }

    PotentialRun run(const TauSpec& tau, double lambda, const std::vector<families::Member>& fs,
                     const HorizonRule& rule, double unit, bool fine = false, std::size_t paths_mult = 1,
                     bool early = true) {
        PotentialOptions o;
        o.seed = next_seed();
        o.n_paths = cfg.n_paths * paths_mult;
        o.tail_eps = cfg.tail_eps;
        o.tau_wait = cfg.tau_wait;
        o.early_stop = early;
        auto r = potential_run(spec, sim(unit, fine), tau, lambda, fs, rule, o);
        cens_all += static_cast<double>(r.censored.size());
        cens_bad += r.censored_fraction() * static_cast<double>(r.censored.size());
        rep.clamp_count += r.clamps;
        require(r.n_reached() > 0, "check: tau was never reached within tau_wait");
        return r;
    }

    double bbar(double R) {
        if (!drift) return 0.0;
        if (cfg.bbar) return *cfg.bbar;
        auto it = bbar_cache.find(R);
        if (it != bbar_cache.end()) return it->second;
        SimConfig s = sim(R * R);
        s.seed = derive_seed(base, 0xbba5ull + bbar_cache.size());
        ModerationGrid g;
        g.d = d;
        const double v = estimate_bbar(spec, R, dyadic_ladder(R, 3), g, s, mb).bbar_R();
        bbar_cache[R] = v;
        rep.metadata["bbar_estimates"][fmt(R)] = v;
        return v;
    }

    void need_R(double R, double factor = 1) const {
        if (drift && R > factor * cfg.rho_b)
            throw PreconditionError(rep.check_id + ": radius " + fmt(R) +
                                    " exceeds the moderation radius bound (rho_b = " + fmt(cfg.rho_b) + ")");
    }
    void need_lambda(double lambda) const {
        if (drift && lambda < kap * kap / (cfg.rho_b * cfg.rho_b))
            throw PreconditionError(rep.check_id + ": lambda = " + fmt(lambda) +
                                    " is below kappa(xi_bar)^2 / rho_b^2, the smallest admissible discount");
    }
    void need_moderation(double R) {
        need_R(R);
        if (drift && bbar(R) > mb)
            throw PreconditionError(rep.check_id + ": moderation condition bbar_R <= m_b fails at R = " + fmt(R));
    }

    void series(std::string name, SeriesMode mode, std::optional<double> target = std::nullopt, bool over_rows = false) {
        rep.specs.push_back({std::move(name), mode, target, over_rows});
    }
};

inline families::Member translate(const families::Member& m, double dt, const Point& dx) {
    families::Member o = m;
    if (m.separable()) {
        if (m.time_dependent) {
            o.T->a += dt;
            o.T->b += dt;
            o.t_lo += dt;
            o.t_hi += dt;
        }
        for (std::size_t i = 0; i < dx.size(); ++i) o.X->c[i] += dx[i];
        o.center = o.X->c;
    } else {
        auto f = m.custom;
        o.custom = [f, dt, dx](double t, std::span<const double> x) {
            Point z(x.begin(), x.end());
            for (std::size_t i = 0; i < z.size(); ++i) z[i] -= dx[i];
            return f(t - dt, z);
        };
        o.t_lo += dt;
        o.t_hi += dt;
        for (std::size_t i = 0; i < dx.size(); ++i) o.center[i] += dx[i];
    }
    return o;
}

/// f = 1 everywhere, as a separable member.
inline families::Member constant_member(int d, bool time_dependent) {
    families::Member m;
    m.name = "one";
    m.time_dependent = time_dependent;
    m.T = families::TimeFactor{0, kInf, 0};
    m.X = families::SpaceFactor{families::SpaceFactor::Kind::ball, Point(static_cast<std::size_t>(d), 0.0), kInf, 0};
    m.t_lo = 0;
    m.t_hi = kInf;
    m.center = m.X->c;
    m.half = kInf;
    return m;
}

/// One potential series: for every scale, run the family at that scale and add a row per member.
struct PotSeries {
    std::string name;
    bool time_dependent = true;
    std::function<double(double)> lambda;  ///< discount at a scale
    std::function<double(double)> length;  ///< member length scale
    std::function<double(double)> unit;    ///< natural time unit (step size reference)
    std::function<HorizonRule(double)> rule;
    /// norm of a member variant at a scale (the quantity on the right, without scale factors)
    std::function<double(const families::Member&, double)> fnorm;
    /// rhs factor from (scale, fnorm, run)
    std::function<double(double, double, const PotentialRun&)> rhs;
    std::function<double(double)> fit_den = [](double n) { return n; };
    std::vector<std::pair<std::string, std::pair<double, Point>>> shifts;  ///< (label, (dt, dx)) in length units
    int moment = 1;
    bool need_totals = false;  ///< rhs uses A or B over the whole horizon, so no early stop
    bool fine = false;
    bool all_taus = true;
    std::vector<families::Member> fixed_members;  ///< used instead of the family when non-empty
};

inline void run_series(Ctx& c, const PotSeries& ps, const std::vector<double>& scales) {
    for (std::size_t k = 0; k < scales.size(); ++k) {
        const double sc = scales[k];
        const double l = ps.length(sc);
        auto base = ps.fixed_members.empty()
                        ? families::members(c.cfg.family, c.d, l, ps.time_dependent, c.cfg.family_seed)
                        : ps.fixed_members;
        std::vector<families::Member> ms;
        std::vector<double> norms;
        auto add = [&](families::Member m, const std::string& label) {
            const double n = ps.fnorm(m, sc);
            if (!std::isfinite(n) || n <= 0) {
                const std::string note = ps.name + ": member " + m.name + " skipped (norm not finite)";
                if (std::find(c.rep.notes.begin(), c.rep.notes.end(), note) == c.rep.notes.end())
                    c.rep.notes.push_back(note);
                return;
            }
            if (!label.empty()) m.name += " " + label;
            ms.push_back(std::move(m));
            norms.push_back(n);
        };
        for (const auto& m : base) {
            if (ps.shifts.empty()) add(m, "");
            for (const auto& [label, sh] : ps.shifts) {
                Point dx = sh.second.empty() ? Point(static_cast<std::size_t>(c.d), 0.0) : sh.second;
                for (double& v : dx) v *= l;
                add(translate(m, sh.first * l * l, dx), label);
            }
        }
        if (ms.empty()) continue;
        auto taus = c.taus(k, scales.size());
        if (!ps.all_taus) taus.resize(1);
        for (const auto& [tau, tlabel] : taus) {
            const auto run = c.run(tau, ps.lambda(sc), ms, ps.rule(sc), ps.unit(sc), ps.fine, 1, !ps.need_totals);
            for (std::size_t j = 0; j < ms.size(); ++j) {
                const auto lhs = run.mean(j, ps.moment);
                add_row(c.rep, ps.name, sc, ms[j].name, lhs, ps.rhs(sc, norms[j], run), ps.fit_den(norms[j]), tlabel);
            }
        }
    }
}

inline double mean_of(const std::vector<double>& v) { return PotentialRun::moment_of(v).mean; }

inline HorizonRule infinite() { return {}; }
inline HorizonRule capped(double R, Point y = {}) { return {HorizonRule::Kind::capped_exit, R, std::move(y), 0}; }
inline HorizonRule uncapped(double R, double T, Point y = {}) {
    return {HorizonRule::Kind::exit, R, std::move(y), T};
}
inline HorizonRule fixed(double T) { return {HorizonRule::Kind::fixed, 1, {}, T}; }

/// Exit-time survival fit: slope of log P(theta > T) against T over the given times.
struct SurvivalFit {
    double rate = 0, rate_stderr = 0, r_squared = 0;
    std::vector<Proportion> S;
};

inline SurvivalFit survival_fit(const std::vector<double>& theta, const std::vector<double>& times) {
    SurvivalFit f;
    std::vector<double> x, y;
    for (double T : times) {
        const auto hits = static_cast<std::size_t>(std::count_if(theta.begin(), theta.end(), [&](double v) { return v > T; }));
        f.S.push_back(wilson(hits, theta.size()));
        if (hits > 0) {
            x.push_back(T);
            y.push_back(std::log(static_cast<double>(hits) / static_cast<double>(theta.size())));
        }
    }
    if (x.size() >= 3) {
        const auto lf = linear_fit(x, y);
        f.rate = -lf.slope;
        f.rate_stderr = lf.slope_stderr;
        f.r_squared = lf.r_squared;
    } else {
        f.rate = kInf;
    }
    return f;
}

inline std::string ystr(const Point& y, double R) {
    return stopping::norm(y) == 0 ? "y=0" : "y=" + fmt(stopping::norm(y) / R) + "Re1";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Laplace transform of the capped exit time

struct LaplaceRow {
    std::size_t start = 0;
    double lambda = 0;
    Estimate value;
    double bound = 0;
    bool pass = false;
};

struct SmallTimeRow {
    std::size_t start = 0;
    double s = 0;
    Proportion p;
    double bound = 0;
    bool pass = false;
};

struct LaplaceProfile {
    double R = 0;
    std::vector<LaplaceRow> laplace;
    std::vector<SmallTimeRow> small_time;
    LinearFit loglinear;  ///< log P(theta <= s) against R^2 / s
    bool loglinear_ok = false;
};

/// E exp(-lambda theta_R) for the exit capped at R^2, against exp(xi/2 - sqrt(lambda) R xi / 2), and
/// P(theta_R <= s) against exp(xi/2 - xi^2 R^2 / (16 s)) for s = R^2 / k, k = 2..6.
inline LaplaceProfile laplace_exit_profile(const ProcessSpec& spec, double R, const std::vector<double>& lambda_grid,
                                           const std::vector<StartPoint>& start_grid, const SimConfig& cfg,
                                           double xi_bar, double rho_b) {
    require(R > 0, "laplace_exit_profile: R must be positive");
    require(xi_bar > 0 && xi_bar < 1, "laplace_exit_profile: xi_bar must lie in (0, 1)");
    if (spec.has_drift() && R > rho_b)
        throw PreconditionError("laplace_exit_profile: R exceeds the moderation radius bound rho_b");
    LaplaceProfile out;
    out.R = R;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < start_grid.size(); ++i) {
        TauSpec tau;
        tau.t0 = start_grid[i].t;
        tau.x0 = start_grid[i].x;
        PotentialOptions o;
        o.seed = derive_seed(cfg.seed, 0x1a9ull + i);
        o.n_paths = cfg.n_paths;
        const auto run = potential_run(spec, cfg, tau, 0.0, {}, detail::capped(R), o);
        const auto n = run.theta.size();
        for (double lam : lambda_grid) {
            RunningStats st;
            for (double th : run.theta) st.add(std::exp(-lam * th));
            LaplaceRow r{i, lam, st.estimate(), std::exp(xi_bar / 2 - std::sqrt(lam) * R * xi_bar / 2), false};
            r.pass = r.value.lo() <= r.bound;
            out.laplace.push_back(r);
        }
        for (int k = 2; k <= 6; ++k) {
            const double s = R * R / k;
            const auto hits = static_cast<std::size_t>(
                std::count_if(run.theta.begin(), run.theta.end(), [&](double v) { return v <= s * (1 + 1e-12); }));
            SmallTimeRow r{i, s, wilson(hits, n), std::exp(xi_bar / 2 - xi_bar * xi_bar * R * R / (16 * s)), false};
            r.pass = r.p.lo <= r.bound;
            out.small_time.push_back(r);
            if (hits > 0) {
                lx.push_back(R * R / s);
                ly.push_back(std::log(r.p.p));
            }
        }
    }
    if (lx.size() >= 3) {
        out.loglinear = linear_fit(lx, ly);
        out.loglinear_ok = out.loglinear.slope < 0 && out.loglinear.r_squared >= 0.98;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Check catalog

struct CatalogEntry {
    std::string id;
    std::string title;
    std::string formula;
    std::string preconditions;
    std::function<void(detail::Ctx&)> run;
};

namespace checks {

using detail::Ctx;
using detail::PotSeries;
using families::Member;
using families::PsiWeight;

inline MixedNormSpec pq(double p, double q) { return {p, q}; }
inline double Linf() { return kInf; }

inline double mid(const std::vector<double>& v) { return v[v.size() / 2]; }

inline PotSeries lambda_series(Ctx& c, std::string name, bool time_dep) {
    PotSeries ps;
    ps.name = std::move(name);
    ps.time_dependent = time_dep;
    ps.lambda = [](double l) { return l; };
    ps.length = [](double l) { return 1 / std::sqrt(l); };
    ps.unit = [](double l) { return 1 / l; };
    ps.rule = [](double) { return detail::infinite(); };
    (void)c;
    return ps;
}

inline PotSeries radius_series(std::string name, bool time_dep, std::function<HorizonRule(double)> rule) {
    PotSeries ps;
    ps.name = std::move(name);
    ps.time_dependent = time_dep;
    ps.lambda = [](double) { return 0.0; };
    ps.length = [](double R) { return R; };
    ps.unit = [](double R) { return R * R; };
    ps.rule = std::move(rule);
    return ps;
}

inline void K31(Ctx& c) {
    const double d = c.d, a = d / (2 * d + 2);
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    c.series("potential", SeriesMode::upper, -a);
    auto ps = lambda_series(c, "potential", true);
    ps.need_totals = c.drift;
    ps.fnorm = [d](const Member& m, double) { return families::norm(m, pq(d + 1, d + 1)); };
    ps.rhs = [a](double l, double n, const PotentialRun& r) {
        const double B = detail::mean_of(r.B);
        return std::pow(1 / l + B * B, a) * n;
    };
    detail::run_series(c, ps, c.cfg.lambda_grid);
}

inline void K32(Ctx& c) {
    const double d = c.d;
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    c.series("potential", SeriesMode::upper, -0.5);
    auto ps = lambda_series(c, "potential", false);
    ps.need_totals = c.drift;
    ps.fnorm = [d](const Member& m, double) { return families::norm(m, pq(d, Linf())); };
    ps.rhs = [](double l, double n, const PotentialRun& r) {
        const double B = detail::mean_of(r.B);
        return std::sqrt(1 / l + B * B) * n;
    };
    detail::run_series(c, ps, c.cfg.lambda_grid);
}

inline void R31(Ctx& c) {
    const double delta = c.spec.delta;
    c.series("2d delta A0 <= R^2 + 2 R B0", SeriesMode::explicit_bound);
    c.series("2d delta A0 <= B0^2 + 2 R^2", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        const auto run = c.run({}, 0.0, {}, detail::uncapped(R, 40 * R * R), R * R, true);
        const auto A = PotentialRun::moment_of(run.theta);
        const double B = detail::mean_of(run.B);
        const Estimate lhs{2 * c.d * delta * A.mean, 2 * c.d * delta * A.stderr_, A.n};
        const double slack = 1 + c.cfg.explicit_slack;
        auto& r1 = add_row(c.rep, c.rep.specs[0].name, R, "A0=E theta'", lhs, R * R + 2 * R * B);
        r1.pass = lhs.lo(3) <= slack * r1.rhs_factor;
        auto& r2 = add_row(c.rep, c.rep.specs[1].name, R, "A0=E theta'", lhs, B * B + 2 * R * R);
        r2.pass = lhs.lo(3) <= slack * r2.rhs_factor;
    }
}

inline std::vector<Point> exit_offsets(const Ctx& c, double R) { return {Point(c.d, 0.0), c.e1(0.5 * R)}; }

inline void L32a(Ctx& c) {
    const double d = c.d, a = d / (d + 1);
    for (double R : c.cfg.R_grid) c.need_moderation(R);
    c.series("capped exit potential", SeriesMode::upper, a);
    for (int yi = 0; yi < 2; ++yi) {
        auto ps = radius_series("capped exit potential", true, [yi, &c](double R) {
            return detail::capped(R, exit_offsets(c, R)[static_cast<std::size_t>(yi)]);
        });
        ps.fnorm = [d](const Member& m, double) { return families::norm(m, pq(d + 1, d + 1)); };
        ps.rhs = [&c, a](double R, double n, const PotentialRun&) {
            return std::pow(1 + c.bbar(R), a) * std::pow(R, a) * n;
        };
        ps.shifts = {{yi ? "y=0.5Re1" : "y=0", {0.0, {}}}};
        ps.all_taus = yi == 0;
        detail::run_series(c, ps, c.cfg.R_grid);
    }
}

inline void L32b(Ctx& c) {
    const double d = c.d;
    for (double R : c.cfg.R_grid) c.need_moderation(R);
    c.series("capped exit potential", SeriesMode::upper, 1.0);
    for (int yi = 0; yi < 2; ++yi) {
        auto ps = radius_series("capped exit potential", false, [yi, &c](double R) {
            return detail::capped(R, exit_offsets(c, R)[static_cast<std::size_t>(yi)]);
        });
        ps.fnorm = [d](const Member& m, double) { return families::norm(m, pq(d, Linf())); };
        ps.rhs = [&c](double R, double n, const PotentialRun&) { return (1 + c.bbar(R)) * R * n; };
        ps.shifts = {{yi ? "y=0.5Re1" : "y=0", {0.0, {}}}};
        ps.all_taus = yi == 0;
        detail::run_series(c, ps, c.cfg.R_grid);
    }
}

inline void E35(Ctx& c) {
    const double d = c.d;
    c.series("capped exit mean", SeriesMode::upper, 2.0);
    for (std::size_t k = 0; k < c.cfg.R_grid.size(); ++k) {
        const double R = c.cfg.R_grid[k];
        c.need_moderation(R);
        for (const auto& y : exit_offsets(c, R))
            for (const auto& [tau, tl] : c.taus(k, c.cfg.R_grid.size())) {
                const auto run = c.run(tau, 0.0, {}, detail::capped(R, y), R * R);
                const auto th = PotentialRun::moment_of(run.theta);
                add_row(c.rep, "capped exit mean", R, detail::ystr(y, R), th,
                        std::pow(1 + c.bbar(R), d / (d + 1)) * R * R, 1.0, tl);
            }
    }
}

inline void T33a(Ctx& c) {
    c.series("P(theta' >= R^2) <= 1 - xi", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        for (const auto& y : {Point(c.d, 0.0), c.e1(0.5 * R), c.e1(-0.5 * R)}) {
            const auto run = c.run({}, 0.0, {}, detail::capped(R, y), R * R);
            const auto hits = static_cast<std::size_t>(std::count_if(
                run.theta.begin(), run.theta.end(), [&](double v) { return v >= R * R * (1 - 1e-12); }));
            const auto p = wilson(hits, run.theta.size());
            add_proportion_row(c.rep, c.rep.specs[0].name, R, detail::ystr(y, R), p, 1 - c.xi, p.lo <= 1 - c.xi);
        }
    }
}

inline void T33b(Ctx& c) {
    c.series("P(theta' >= R^2) >= xi", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        const auto run = c.run({}, 0.0, {}, detail::capped(R), R * R);
        const auto hits = static_cast<std::size_t>(std::count_if(
            run.theta.begin(), run.theta.end(), [&](double v) { return v >= R * R * (1 - 1e-12); }));
        const auto p = wilson(hits, run.theta.size());
        add_proportion_row(c.rep, c.rep.specs[0].name, R, "y=0", p, c.xi, p.hi >= c.xi);
    }
}

inline void T33n(Ctx& c) {
    c.series("P(theta' > n R^2) <= (1 - xi)^n", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        for (const auto& y : exit_offsets(c, R)) {
            const auto run = c.run({}, 0.0, {}, detail::uncapped(R, 4.5 * R * R, y), R * R, false, 1, false);
            for (int n = 1; n <= 4; ++n) {
                const auto hits = static_cast<std::size_t>(std::count_if(
                    run.theta.begin(), run.theta.end(), [&](double v) { return v > n * R * R; }));
                const auto p = wilson(hits, run.theta.size());
                const double b = std::pow(1 - c.xi, n);
                add_proportion_row(c.rep, c.rep.specs[0].name, R, detail::ystr(y, R) + " n=" + std::to_string(n), p,
                                   b, p.lo <= b);
            }
        }
    }
    // paths alive at the horizon are counted as survivors, not as censored
    c.cens_bad = 0;
}

inline void T33e(Ctx& c) {
    c.series("E theta'", SeriesMode::upper, 2.0);
    for (std::size_t k = 0; k < c.cfg.R_grid.size(); ++k) {
        const double R = c.cfg.R_grid[k];
        c.need_moderation(R);
        for (const auto& y : exit_offsets(c, R))
            for (const auto& [tau, tl] : c.taus(k, c.cfg.R_grid.size())) {
                const auto run = c.run(tau, 0.0, {}, detail::uncapped(R, 20 * R * R, y), R * R);
                add_row(c.rep, "E theta'", R, detail::ystr(y, R), PotentialRun::moment_of(run.theta), R * R, 1.0, tl);
            }
    }
}

inline void T33bbar(Ctx& c) {
    c.series("E int_0^theta' |b|", SeriesMode::upper);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        for (const auto& y : exit_offsets(c, R)) {
            const auto run = c.run({}, 0.0, {}, detail::uncapped(R, 20 * R * R, y), R * R);
            add_row(c.rep, c.rep.specs[0].name, R, detail::ystr(y, R), PotentialRun::moment_of(run.B), c.bbar(R) * R);
        }
    }
}

/// P(reach the closed ball of radius R/16 about the centre before leaving B_R), started at offset y.
inline Proportion hit_before_exit(Ctx& c, double R, const Point& y) {
    const auto seed = c.next_seed();
    const auto s = c.sim(R * R);
    const std::size_t n = c.cfg.n_paths;
    const auto d = static_cast<std::size_t>(c.d);
    const auto res = parallel_map<int>(n, s.workers, [&](std::size_t i) {
        auto rs = make_rng_stream(seed, i);
        SimConfig sc = s;
        sc.t_max = 40 * R * R;
        Point x0(d, 0.0);
        int out = -1;
        simulate_observed(c.spec, sc, rs, 0.0, x0, sc.t_max, [&](const StepView& v) {
            double r2 = 0;
            for (std::size_t k = 0; k < d; ++k) {
                const double z = v.x1[k] + y[k];
                r2 += z * z;
            }
            if (r2 <= R * R / 256) {
                out = 1;
                return false;
            }
            if (r2 >= R * R) {
                out = 0;
                return false;
            }
            return true;
        });
        return out;
    });
    std::size_t hits = 0, done = 0;
    for (int v : res) {
        if (v >= 0) ++done;
        if (v == 1) ++hits;
    }
    c.cens_all += static_cast<double>(n);
    c.cens_bad += static_cast<double>(n - done);
    return wilson(hits, n);
}

inline void T33h(Ctx& c) {
    c.series("P(hit B_R/16 before exit) >= xi", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        for (double f : {0.5, 9.0 / 16}) {
            const auto p = hit_before_exit(c, R, c.e1(f * R));
            add_proportion_row(c.rep, c.rep.specs[0].name, R, "|y|=" + fmt(f) + "R", p, c.xi, p.hi >= c.xi);
        }
    }
}

inline void C35(Ctx& c) {
    const double d = c.d;
    for (double R : c.cfg.R_grid) c.need_moderation(R);
    c.series("exit potential", SeriesMode::upper, 1.0);
    auto ps = radius_series("exit potential", false, [](double R) { return detail::uncapped(R, 20 * R * R); });
    ps.fnorm = [d](const Member& m, double) { return families::norm(m, pq(d, Linf())); };
    ps.rhs = [](double R, double n, const PotentialRun&) { return R * n; };
    detail::run_series(c, ps, c.cfg.R_grid);
}

inline std::vector<double> survival_times(double R2) {
    std::vector<double> t;
    for (double f : {0.5, 0.75, 1.0, 1.25, 1.5}) t.push_back(f * R2);
    return t;
}

inline void C36(Ctx& c) {
    c.series("survival rate", SeriesMode::upper, -2.0);
    c.series("log-linear survival", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        const auto run = c.run({}, 0.0, {}, detail::uncapped(R, 1.6 * R * R), R * R, false, 4, false);
        const auto f = detail::survival_fit(run.theta, survival_times(R * R));
        add_row(c.rep, "survival rate", R, "y=0", {f.rate, f.rate_stderr, run.theta.size()}, 1 / (R * R), 1.0);
        auto& r = add_row(c.rep, "log-linear survival", R, "r^2 of log S vs T", {f.r_squared, 0, run.theta.size()}, 1);
        r.pass = f.rate > 0 && f.r_squared >= 0.95;
    }
    c.cens_bad = 0;
}

inline void C37(Ctx& c) {
    c.series("E exp(-mu theta / R^2) <= exp(-mu xi / 2)", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        const auto run = c.run({}, 0.0, {}, detail::capped(R), R * R);
        for (double mu : {0.25, 0.5, 1.0}) {
            RunningStats st;
            for (double th : run.theta) st.add(std::exp(-mu * th / (R * R)));
            const auto e = st.estimate();
            auto& r = add_row(c.rep, c.rep.specs[0].name, R, "mu=" + fmt(mu), e, std::exp(-mu * c.xi / 2));
            r.pass = e.lo() <= r.rhs_factor;
        }
    }
}

inline void T38(Ctx& c) {
    c.series("Laplace transform of capped exit", SeriesMode::explicit_bound);
    c.series("small-time exit probability", SeriesMode::explicit_bound);
    c.series("log-linear small-time tail", SeriesMode::explicit_bound);
    for (double R : c.cfg.R_grid) {
        c.need_moderation(R);
        SimConfig s = c.sim(R * R);
        s.seed = c.next_seed();
        const auto prof = laplace_exit_profile(c.spec, R, c.cfg.lambda_grid, c.cfg.start_grid, s, c.xi, c.cfg.rho_b);
        for (const auto& r : prof.laplace) {
            auto& row = add_row(c.rep, c.rep.specs[0].name, R, "lambda=" + fmt(r.lambda), r.value, r.bound);
            row.pass = r.pass;
        }
        for (const auto& r : prof.small_time)
            add_proportion_row(c.rep, c.rep.specs[1].name, R, "s=R^2/" + fmt(R * R / r.s), r.p, r.bound, r.pass);
        auto& row = add_row(c.rep, c.rep.specs[2].name, R, "slope of log P vs R^2/s",
                            {prof.loglinear.slope, prof.loglinear.slope_stderr, 5}, 1);
        row.pass = prof.loglinear_ok;
        c.rep.metadata["loglinear_r_squared"][fmt(R)] = prof.loglinear.r_squared;
    }
}

inline void C39(Ctx& c) {
    c.series("E theta capped", SeriesMode::lower, 2.0);
    c.series("discounted capped exit", SeriesMode::lower);
    double nu = 0;
    for (std::size_t k = 0; k < c.cfg.R_grid.size(); ++k) {
        const double R = c.cfg.R_grid[k];
        c.need_moderation(R);
        const double lam = 1 / (R * R);
        const auto run = c.run({}, lam, {}, detail::capped(R), R * R);
        const auto th = PotentialRun::moment_of(run.theta);
        if (k == 0) {
            nu = 0.5 * th.mean / (R * R);
            c.rep.metadata["nu_fitted"] = nu;
            c.rep.metadata["nu_fit_radius"] = R;
        }
        add_row(c.rep, "E theta capped", R, "y=0", th, nu * R * R, 1.0).pass = th.hi() >= nu * R * R ? 1 : 0;
        add_row(c.rep, "discounted capped exit", R, "lambda=R^-2", PotentialRun::moment_of(run.A),
                (1 - std::exp(-lam * nu * R * R)) / lam)
            .pass = -1;
    }
}

inline void C310(Ctx& c) {
    std::vector<double> ts;
    for (double R : c.cfg.R_grid) {
        c.need_R(R, 1 / c.kap);
        ts.push_back(R * R);
    }
    std::sort(ts.begin(), ts.end());
    const double tmax = ts.back();
    const auto seed = c.next_seed();
    auto s = c.sim(ts.front());
    s.t_max = tmax;
    const auto d = static_cast<std::size_t>(c.d);
    const auto sups = parallel_map<std::vector<double>>(c.cfg.n_paths, s.workers, [&](std::size_t i) {
        auto rs = make_rng_stream(seed, i);
        std::vector<double> out(ts.size(), 0.0);
        double mx = 0;
        std::size_t k = 0;
        const Point x0(d, 0.0);
        simulate_observed(c.spec, s, rs, 0.0, x0, tmax, [&](const StepView& v) {
            while (k < ts.size() && v.s0 >= ts[k] * (1 - 1e-12)) out[k++] = mx;
            mx = std::max(mx, stopping::norm(v.x1));
            return true;
        });
        while (k < ts.size()) out[k++] = mx;
        return out;
    });
    for (int n : {1, 2, 4}) {
        const std::string name = "E sup|dx|^" + std::to_string(n);
        c.series(name, SeriesMode::explicit_bound);
        std::vector<Estimate> est;
        for (std::size_t k = 0; k < ts.size(); ++k) {
            RunningStats st;
            for (const auto& v : sups) st.add(std::pow(v[k], n));
            est.push_back(st.estimate());
        }
        auto g = [n](double t) { return std::pow(t, n / 2.0) + std::pow(t, n); };
        const std::size_t m = ts.size() / 2;
        const double C = 2 * est[m].mean / g(ts[m]);
        c.rep.metadata["C_n" + std::to_string(n)] = C;
        for (std::size_t k = 0; k < ts.size(); ++k) {
            auto& r = add_row(c.rep, name, ts[k], "t=" + fmt(ts[k]), est[k], C * g(ts[k]));
            r.pass = est[k].lo(3) <= r.rhs_factor;
        }
    }
}

inline void T311(Ctx& c) {
    const double R = *std::max_element(c.cfg.R_grid.begin(), c.cfg.R_grid.end());
    c.need_moderation(R);
    const double xi = c.xi;
    const double T1 = std::log(xi / 3) / std::log(1 - xi);
    const double T0 = xi * xi / (1024 * (xi / 2 - std::log(xi / 3)));
    c.rep.metadata["T0"] = T0;
    c.rep.metadata["T1"] = T1;
    c.rep.metadata["R"] = R;
    c.series("sausage traversal", SeriesMode::explicit_bound);
    const auto d = static_cast<std::size_t>(c.d);
    for (int n = 1; n <= 3; ++n) {
        stopping::SausageSpec sp{Point(d, 0.0), c.e1((4 * n + 1) * R / 16), R};
        const auto seed = c.next_seed();
        auto s = c.sim(R * R);
        s.t_max = n * T1 * R * R * 1.01;
        const auto res = parallel_map<stopping::TraversalResult>(c.cfg.n_paths, s.workers, [&](std::size_t i) {
            auto rs = make_rng_stream(seed, i);
            stopping::SausageTracker tr(sp, T0, T1);
            std::size_t k = 0;
            simulate_observed(c.spec, s, rs, 0.0, sp.start, s.t_max, [&](const StepView& v) {
                return !tr.feed(++k, v.s1, v.x1, v.x1);
            });
            return tr.result();
        });
        std::size_t ok = 0, cens = 0;
        for (const auto& r : res) {
            ok += r.reached && r.within_window ? 1 : 0;
            cens += r.censored ? 1 : 0;
        }
        c.cens_all += static_cast<double>(res.size());
        c.cens_bad += static_cast<double>(cens);
        const auto p = wilson(ok, res.size());
        const double b = std::pow(xi / 3, n);
        add_proportion_row(c.rep, c.rep.specs[0].name, sp.R, "n=" + std::to_string(n), p, b, p.lo >= b);
    }
}

inline void C312(Ctx& c) {
    const double R = *std::max_element(c.cfg.R_grid.begin(), c.cfg.R_grid.end());
    c.need_moderation(R);
    c.series("stay-in-ball probability", SeriesMode::info);
    c.series("exponential decay", SeriesMode::explicit_bound);
    for (const auto& y : exit_offsets(c, R)) {
        const auto run = c.run({}, 0.0, {}, detail::uncapped(R, 1.6 * R * R, y), R * R, false, 4, false);
        const auto f = detail::survival_fit(run.theta, survival_times(R * R));
        const auto ts = survival_times(R * R);
        for (std::size_t k = 0; k < ts.size(); ++k)
            add_proportion_row(c.rep, "stay-in-ball probability", ts[k], detail::ystr(y, R), f.S[k],
                               std::exp(-f.rate * ts[k]), true)
                .pass = -1;
        auto& r = add_row(c.rep, "exponential decay", R, detail::ystr(y, R) + " rate", {f.rate, f.rate_stderr, 5}, 0);
        r.ratio = f.rate;
        r.pass = std::isfinite(f.rate) && f.rate - 2 * f.rate_stderr > 0;
    }
    c.cens_bad = 0;
}

inline void C313(Ctx& c) {
    const double R = *std::max_element(c.cfg.R_grid.begin(), c.cfg.R_grid.end());
    c.need_moderation(R);
    c.series("rate x ((1 - k) R)^2", SeriesMode::upper, std::nullopt, true);
    for (double kk : {0.0, 0.25, 0.5}) {
        const double r = (1 - kk) * R;
        const Point y = c.e1(-kk * R);  // start at distance kk R from the centre
        const auto run = c.run({}, 0.0, {}, detail::uncapped(R, 1.6 * r * r + 1e-12, y), r * r, false, 4, false);
        const auto f = detail::survival_fit(run.theta, survival_times(r * r));
        add_row(c.rep, c.rep.specs[0].name, R, "k=" + fmt(kk), {f.rate, f.rate_stderr, run.theta.size()}, 1 / (r * r));
    }
    c.cens_bad = 0;
}

inline void A41(Ctx& c) {
    const double d = c.d;
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    const double kap = c.kap;
    struct P {
        std::string name;
        bool td;
        double p, q, alpha;
    };
    for (const auto& pr : {P{"L_{d+1} capped at rho(lambda)", true, d + 1, d + 1, d / (2 * d + 2)},
                           P{"L_{d,inf} capped at rho(lambda)", false, d, kInf, 0.5}}) {
        c.series(pr.name, SeriesMode::upper, -pr.alpha);
        auto ps = lambda_series(c, pr.name, pr.td);
        ps.rule = [kap](double l) { return detail::capped(kap / std::sqrt(l)); };
        ps.fnorm = [pr](const Member& m, double) { return families::norm(m, pq(pr.p, pr.q)); };
        ps.rhs = [pr](double l, double n, const PotentialRun&) { return std::pow(l, -pr.alpha) * n; };
        ps.shifts = {{"", {0.0, {}}}, {"shift(l^2/2, l/2e1)", {0.5, c.e1(0.5)}}};
        if (!pr.td) ps.shifts[1] = {"shift(l/2e1)", {0.0, c.e1(0.5)}};
        detail::run_series(c, ps, c.cfg.lambda_grid);
    }
}

inline void L41(Ctx& c) {
    const double d = c.d, a = d / (2 * d + 2);
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    c.series("cylinder indicator potential", SeriesMode::upper, -a);
    struct Place {
        double s0, y0;
    };
    for (const auto& pl : {Place{0, 0}, Place{1, 0}, Place{0, 2}, Place{4, 3}}) {
        auto ps = lambda_series(c, "cylinder indicator potential", true);
        ps.all_taus = pl.s0 == 0 && pl.y0 == 0;
        ps.fixed_members.clear();
        const double xi = c.xi;
        ps.length = [](double l) { return 1 / std::sqrt(l); };
        ps.fnorm = [d](const Member& m, double) { return families::norm(m, pq(d + 1, d + 1)); };
        ps.rhs = [a, pl, xi](double l, double n, const PotentialRun&) {
            const double phi = std::exp(-(std::sqrt(pl.s0) + pl.y0) * xi / 4);
            return std::pow(l, -a) * phi * n;
        };
        ps.fit_den = [pl, xi](double n) { return std::exp(-(std::sqrt(pl.s0) + pl.y0) * xi / 4) * n; };
        // scale-free placement: (s0, y0) in units of (1/lambda, 1/sqrt(lambda))
        for (double l : c.cfg.lambda_grid) {
            const double r = 1 / std::sqrt(l);
            Member m;
            m.name = "C(" + fmt(pl.s0) + "/lambda, " + fmt(pl.y0) + "/sqrt(lambda) e1)";
            m.T = families::TimeFactor{pl.s0 * r * r, pl.s0 * r * r + r * r, 0};
            m.X = families::SpaceFactor{families::SpaceFactor::Kind::ball, c.e1(pl.y0 * r), r, 0};
            m.t_lo = m.T->a;
            m.t_hi = m.T->b;
            m.center = m.X->c;
            m.half = r;
            ps.fixed_members = {m};
            detail::run_series(c, ps, {l});
        }
    }
}

inline PotSeries weighted_series(Ctx& c, std::string name, bool td, double p, double q, double power, double alpha,
                                 double extra = 0) {
    auto ps = lambda_series(c, std::move(name), td);
    const double xi = c.xi;
    ps.fnorm = [=](const Member& m, double l) { return families::weighted_norm(m, pq(p, q), PsiWeight{l, xi, power}); };
    ps.rhs = [=](double l, double n, const PotentialRun&) { return std::pow(l, -alpha - extra) * n; };
    ps.shifts = {{"", {0.0, {}}}, {"shift(3l e1)", {0.0, c.e1(3)}}};
    return ps;
}

inline void T42(Ctx& c) {
    const double d = c.d, a = d / (2 * d + 2);
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    c.series("weighted potential", SeriesMode::upper, -a);
    detail::run_series(c, weighted_series(c, "weighted potential", true, d + 1, d + 1, 1, a), c.cfg.lambda_grid);
}

inline void C43(Ctx& c) {
    const double d = c.d, a = d / (2 * d + 2);
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    c.series("weighted potential, g(x)", SeriesMode::upper, -(d + 2) / (2 * d + 2));
    detail::run_series(c, weighted_series(c, "weighted potential, g(x)", false, d + 1, d + 1, 1, a, 1 / (d + 1)),
                       c.cfg.lambda_grid);
}

inline void L44(Ctx& c) {
    const double d = c.d;
    for (double R : c.cfg.R_grid) c.need_R(R);
    for (double p : {d, 2 * d, kInf}) {
        const double e = std::isinf(p) ? 2.0 : 2 - d / p;
        const std::string name = "exit potential L_" + (std::isinf(p) ? std::string("inf") : fmt(p));
        c.series(name, SeriesMode::upper, e);
        auto ps = radius_series(name, false, [](double R) { return detail::uncapped(R, 20 * R * R); });
        ps.fnorm = [p](const Member& m, double) { return families::norm(m, pq(p, kInf)); };
        ps.rhs = [e](double R, double n, const PotentialRun&) { return std::pow(R, e) * n; };
        detail::run_series(c, ps, c.cfg.R_grid);
    }
}

inline void T53(Ctx& c) {
    const double d = c.d, d0 = c.d0, e = (d + 2) / (2 * d0 + 2) - 1;
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    c.series("potential, L_{d0+1}", SeriesMode::upper, e);
    auto ps = lambda_series(c, "potential, L_{d0+1}", true);
    ps.fnorm = [d0](const Member& m, double) { return families::norm(m, pq(d0 + 1, d0 + 1)); };
    ps.rhs = [e](double l, double n, const PotentialRun&) { return std::pow(l, e) * n; };
    detail::run_series(c, ps, c.cfg.lambda_grid);
}

inline void R51(Ctx& c) {
    const double p = c.d0 + 1;
    const std::vector<double> lams{0.25, 0.5, 1};
    c.series("small-lambda potential", SeriesMode::upper);
    auto ps = lambda_series(c, "small-lambda potential", true);
    ps.length = [](double) { return 0.5; };
    ps.unit = [](double) { return 1.0; };
    ps.fnorm = [p](const Member& m, double) { return families::norm(m, pq(p, p)); };
    ps.rhs = [p](double l, double n, const PotentialRun&) { return std::pow(1 - std::exp(-l), -(p - 1) / p) * n; };
    detail::run_series(c, ps, lams);
}

inline void T56(Ctx& c) {
    const double d = c.d, d0 = c.d0, e = d / (2 * d0) - 1;
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    c.series("potential, g in L_{d0}", SeriesMode::upper, e);
    auto ps = lambda_series(c, "potential, g in L_{d0}", false);
    ps.fnorm = [d0](const Member& m, double) { return families::norm(m, pq(d0, kInf)); };
    ps.rhs = [e](double l, double n, const PotentialRun&) { return std::pow(l, e) * n; };
    detail::run_series(c, ps, c.cfg.lambda_grid);
}

inline std::vector<std::pair<double, double>> admissible_pairs(const Ctx& c) {
    const double d0 = c.d0;
    std::vector<std::pair<double, double>> out{{d0 + 1, d0 + 1}, {2 * d0, 2}, {4 * d0, 4.0 / 3}};
    for (auto [p, q] : out)
        if (1 - d0 / p - 1 / q < -1e-12)
            throw PreconditionError("exponent pair (" + fmt(p) + ", " + fmt(q) + ") has d0/p + 1/q > 1");
    return out;
}

inline std::string pair_name(double p, double q) { return "(p,q)=(" + fmt(p) + "," + fmt(q) + ")"; }

inline void T57(Ctx& c) {
    const double d = c.d;
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    for (auto [p, q] : admissible_pairs(c)) {
        const double e = 0.5 * (d / p + 2 / q) - 1;
        const auto name = "potential " + pair_name(p, q);
        c.series(name, SeriesMode::upper, e);
        auto ps = lambda_series(c, name, true);
        ps.fnorm = [p, q](const Member& m, double) { return families::norm(m, pq(p, q)); };
        ps.rhs = [e](double l, double n, const PotentialRun&) { return std::pow(l, e) * n; };
        detail::run_series(c, ps, c.cfg.lambda_grid);
    }
}

inline void T58(Ctx& c) {
    const double d = c.d, d0 = c.d0;
    for (double l : c.cfg.lambda_grid) c.need_lambda(l);
    for (auto [p, q] : admissible_pairs(c)) {
        const double nu = 1 - d0 / p - 1 / q;
        const double chi = 1 - 0.5 * (d / p + 2 / q);
        const auto name = "weighted potential " + pair_name(p, q);
        c.series(name, SeriesMode::upper, -chi);
        detail::run_series(c, weighted_series(c, name, true, p, q, 1 - nu, chi), c.cfg.lambda_grid);
    }
}

inline void T59a(Ctx& c) {
    const double d = c.d, d0 = c.d0, p = d0 + 1, q = d0 + 1;
    const double nu = 1 - d0 / p - 1 / q, chi = 1 - 0.5 * (d / p + 2 / q);
    const std::vector<double> Ts{0.1, 0.2, 0.4};
    for (double T : Ts)
        if (c.drift && T > c.cfg.rho_b * c.cfg.rho_b / (c.kap * c.kap))
            throw PreconditionError("T5.9a: horizon T exceeds rho_b^2 / kappa^2");
    const double xi = c.xi;
    for (int n = 1; n <= 3; ++n) {
        const std::string name = "moment n=" + std::to_string(n);
        c.series(name, SeriesMode::upper, n * chi);
        PotSeries ps;
        ps.name = name;
        ps.moment = n;
        ps.lambda = [](double) { return 0.0; };
        ps.length = [](double T) { return std::sqrt(T); };
        ps.unit = [](double T) { return T; };
        ps.rule = [](double T) { return detail::fixed(T); };
        ps.fnorm = [=](const Member& m, double T) {
            return families::weighted_norm(m, pq(p, q), PsiWeight{1 / T, xi, (1 - nu) / n});
        };
        ps.rhs = [=](double T, double nn, const PotentialRun&) {
            return std::tgamma(n + 1.0) * std::pow(T, n * chi) * std::pow(nn, n);
        };
        ps.fit_den = [n](double nn) { return std::pow(nn, n); };
        detail::run_series(c, ps, Ts);
    }
}

inline void T59b(Ctx& c) {
    const double d = c.d, p = c.d0 + 1;
    const std::vector<double> Ts{1, 2, 4};
    for (double T : Ts)
        if (c.drift && T < c.cfg.rho_b * c.cfg.rho_b / (c.kap * c.kap))
            throw PreconditionError("T5.9b: horizon T is below rho_b^2 / kappa^2");
    for (double R : {0.5, 1.0}) {
        const std::string name = "long horizon R=" + fmt(R);
        c.series(name, SeriesMode::upper);
        PotSeries ps;
        ps.name = name;
        ps.lambda = [](double) { return 0.0; };
        ps.length = [](double) { return 0.5; };
        ps.unit = [](double) { return 1.0; };
        ps.rule = [](double T) { return detail::fixed(T); };
        ps.fixed_members = families::members(c.cfg.family, c.d, 0.5, true, c.cfg.family_seed);
        ps.fixed_members.push_back(detail::constant_member(c.d, true));
        ps.fnorm = [=](const Member& m, double) { return families::sup_cylinder_norm(m, pq(p, p), R, false); };
        ps.rhs = [=](double T, double n, const PotentialRun&) { return T * std::pow(R, -2 - d) * n; };
        ps.all_taus = false;
        detail::run_series(c, ps, Ts);
    }
}

/// ||f||_{L_{p,q}(C)} on a lattice laid over C.
inline double region_norm(const Member& m, const MixedNormSpec& s, const Cylinder& C) {
    const int d = static_cast<int>(C.x0.size());
    const std::size_t nt = 32, nx = families::detail::lattice_nx(d);
    Point o{C.t0};
    std::vector<double> h{C.R * C.R / static_cast<double>(nt)};
    std::vector<std::size_t> cnt{nt};
    for (int i = 0; i < d; ++i) {
        o.push_back(C.x0[i] - C.R);
        h.push_back(2 * C.R / static_cast<double>(nx));
        cnt.push_back(nx);
    }
    auto g = GridFunction::zeros(true, o, h, cnt);
    g.sample([&](double t, std::span<const double> x) { return m(t, x); });
    return mixed_norm(g, s, C);
}

inline void R53(Ctx& c) {
    const double d = c.d, p = c.d0 + 1;
    // N is calibrated at the largest R <= 1 and must then hold at every smaller R
    c.series("unit cylinder vs small cylinders", SeriesMode::explicit_bound);
    const auto ms = families::members(c.cfg.family, c.d, 0.5, true, c.cfg.family_seed);
    std::vector<double> Rs;
    for (double R : c.cfg.R_grid)
        if (R <= 1) Rs.push_back(R);
    require(!Rs.empty(), "R5.3: needs some R <= 1 in R_grid");
    std::sort(Rs.rbegin(), Rs.rend());
    const Cylinder C1{0.0, Point(c.d, 0.0), 1.0};
    std::vector<double> lhs;
    for (const auto& m : ms) lhs.push_back(region_norm(m, pq(p, p), C1));
    double N = 0;
    for (double R : Rs)
        for (std::size_t j = 0; j < ms.size(); ++j) {
            const double rhs = std::pow(R, -2 - d) * families::sup_cylinder_norm(ms[j], pq(p, p), R, false);
            if (R == Rs.front()) N = std::max(N, lhs[j] / rhs);
            auto& r = add_row(c.rep, c.rep.specs[0].name, R, ms[j].name, {lhs[j], 0, 1}, rhs);
            r.pass = -2;  // set below once N is known
        }
    c.rep.metadata["N_calibrated"] = N;
    for (auto& r : c.rep.rows) r.pass = r.ratio <= N * (1 + 1e-9) ? 1 : 0;
}

inline void T510(Ctx& c) {
    const double d = c.d, p = c.d0 + 1;
    for (double R : c.cfg.R_grid) c.need_moderation(R);
    c.series("capped exit, normalized norm", SeriesMode::upper, 2.0);
    c.series("exit, sup normalized norm", SeriesMode::upper, 2.0);
    const double unit_pow = 1 / p;
    auto unit = [=](double R) {
        return std::pow(families::unit_ball_volume(static_cast<int>(d)) * std::pow(R, d), unit_pow) *
               std::pow(R * R, unit_pow);
    };
    for (int yi = 0; yi < 2; ++yi) {
        auto ps = radius_series("capped exit, normalized norm", true, [yi, &c](double R) {
            return detail::capped(R, exit_offsets(c, R)[static_cast<std::size_t>(yi)]);
        });
        ps.fnorm = [&c, p, unit](const Member& m, double R) {
            return region_norm(m, pq(p, p), Cylinder{0.0, Point(c.d, 0.0), R}) / unit(R);
        };
        ps.rhs = [](double R, double n, const PotentialRun&) { return R * R * n; };
        ps.shifts = {{yi ? "y=0.5Re1" : "y=0", {0.0, {}}}};
        ps.all_taus = yi == 0;
        detail::run_series(c, ps, c.cfg.R_grid);
    }
    auto ps = radius_series("exit, sup normalized norm", true, [](double R) { return detail::uncapped(R, 20 * R * R); });
    ps.fnorm = [p](const Member& m, double R) { return families::sup_cylinder_norm(m, pq(p, p), R, true); };
    ps.rhs = [](double R, double n, const PotentialRun&) { return R * R * n; };
    detail::run_series(c, ps, c.cfg.R_grid);
}

inline void T512(Ctx& c) {
    const double p = c.d0 + 1;
    for (double R : {1.0, 2.0, 4.0}) {
        c.need_R(R);
        const std::string name = "exit potential R=" + fmt(R);
        c.series(name, SeriesMode::upper, std::nullopt, true);
        PotSeries ps = radius_series(name, true, [](double RR) { return detail::uncapped(RR, 20 * RR * RR); });
        ps.length = [](double) { return 0.5; };
        ps.unit = [](double) { return 1.0; };
        ps.fixed_members = families::members(c.cfg.family, c.d, 0.5, true, c.cfg.family_seed);
        ps.fnorm = [p](const Member& m, double) { return families::sup_cylinder_norm(m, pq(p, p), 1.0, false); };
        ps.rhs = [](double, double n, const PotentialRun&) { return n; };
        ps.all_taus = false;
        detail::run_series(c, ps, {R});
    }
    // f = 1 realizes the growth of the constant in R; reported, not compared with the family
    c.series("f = 1", SeriesMode::info);
    for (double R : {1.0, 2.0, 4.0}) {
        PotSeries ps = radius_series("f = 1", true, [](double RR) { return detail::uncapped(RR, 20 * RR * RR); });
        ps.unit = [](double) { return 1.0; };
        ps.fixed_members = {detail::constant_member(c.d, true)};
        ps.fnorm = [p](const Member& m, double) { return families::sup_cylinder_norm(m, pq(p, p), 1.0, false); };
        ps.rhs = [](double, double n, const PotentialRun&) { return n; };
        ps.all_taus = false;
        detail::run_series(c, ps, {R});
    }
}

}  // namespace checks

inline const std::vector<CatalogEntry>& catalog() {
    using namespace checks;
    static const std::vector<CatalogEntry> cat{
        {"K3.1", "discounted potential up to a stopping time, space-time f",
         "E int_0^{gamma-tau} e^{-lambda t} f(tau+t, x_{tau+t}) dt <= N (A + B^2)^{d/(2d+2)} ||f||_{L_{d+1}}, "
         "A = E int e^{-lambda t}, B = E int e^{-lambda t}|b|",
         "lambda >= kappa^2 / rho_b^2 when the drift is present", K31},
        {"K3.2", "discounted potential up to a stopping time, g(x)",
         "E int_0^{gamma-tau} e^{-lambda t} g(x_{tau+t}) dt <= N (A + B^2)^{1/2} ||g||_{L_d}",
         "lambda >= kappa^2 / rho_b^2 when the drift is present", K32},
        {"R3.1", "explicit exit-time inequalities",
         "2 d delta E theta'_R <= R^2 + 2 R E int_0^{theta'} |b|  and  <= (E int |b|)^2 + 2 R^2", "none", R31},
        {"L3.2a", "potential up to the capped exit, space-time f",
         "E int_0^{theta_R(y)} f <= N (1 + bbar_R)^{d/(d+1)} R^{d/(d+1)} ||f||_{L_{d+1}}", "R <= rho_b", L32a},
        {"L3.2b", "potential up to the capped exit, g(x)",
         "E int_0^{theta_R(y)} g <= N (1 + bbar_R) R ||g||_{L_d}", "R <= rho_b", L32b},
        {"E3.5", "mean capped exit time", "E theta_R(y) <= N (1 + bbar_R)^{d/(d+1)} R^2", "R <= rho_b", E35},
        {"T3.3a", "survival to R^2 is bounded away from one", "P(theta'_R(y) >= R^2) <= 1 - xi",
         "R <= rho_b, bbar_R <= m_b", T33a},
        {"T3.3b", "survival to R^2 is bounded below", "P(theta'_R >= R^2) >= xi", "R <= rho_b, bbar_R <= m_b", T33b},
        {"T3.3n", "geometric survival tail", "P(theta'_R(y) > n R^2) <= (1 - xi)^n", "R <= rho_b, bbar_R <= m_b",
         T33n},
        {"T3.3e", "mean uncapped exit time", "E theta'_R(y) <= N R^2", "R <= rho_b, bbar_R <= m_b", T33e},
        {"T3.3b̄", "drift integral up to the exit", "E int_0^{theta'_R(y)} |b| <= N bbar_R R",
         "R <= rho_b, bbar_R <= m_b", T33bbar},
        {"T3.3h", "hitting a small ball before leaving", "P(gamma'_{R/16} < theta'_R) >= xi for |y| <= 9R/16",
         "R <= rho_b, bbar_R <= m_b", T33h},
        {"C3.5", "potential up to the uncapped exit, g(x)", "E int_0^{theta'_R} g <= N R ||g||_{L_d}",
         "R <= rho_b, bbar_R <= m_b", C35},
        {"C3.6", "exponential survival rate", "-d/dT log P(theta'_R > T) ~ c R^{-2}", "R <= rho_b, bbar_R <= m_b",
         C36},
        {"C3.7", "Laplace transform in units of R^2", "E exp(-mu theta_R / R^2) <= exp(-mu xi / 2)",
         "R <= rho_b, bbar_R <= m_b", C37},
        {"T3.8", "Laplace transform and small-time exit probability",
         "E e^{-lambda theta_R} <= e^{xi/2} e^{-sqrt(lambda) R xi/2};  P(theta_R <= s) <= e^{xi/2} "
         "e^{-xi^2 R^2/(16 s)}",
         "R <= rho_b, bbar_R <= m_b", T38},
        {"C3.9", "lower bounds for the exit time", "E theta_R >= nu R^2;  E int_0^{theta_R} e^{-lambda t} >= "
                                                   "(1 - e^{-lambda nu R^2}) / lambda",
         "R <= rho_b, bbar_R <= m_b", C39},
        {"C3.10", "moments of the running maximum", "E sup_{s<=t} |x_s - x_0|^n <= C (t^{n/2} + t^n)",
         "t <= rho_b^2 / kappa^2", C310},
        {"T3.11", "sausage traversal", "P(reach B_{R/16}(y) inside the sausage within [n T0 R^2, n T1 R^2]) >= "
                                       "(xi/3)^n",
         "R <= rho_b, bbar_R <= m_b", T311},
        {"C3.12", "exponential decay of the stay probability", "P(sup_{t<=T} |x_t - y| < R) <= N e^{-T/(N R^2)}",
         "R <= rho_b, bbar_R <= m_b", C312},
        {"C3.13", "stay probability from off-centre starts", "rate x ((1 - k) R)^2 bounded for |x - y| <= k R",
         "R <= rho_b, bbar_R <= m_b", C313},
        {"A4.1", "potential capped at the lambda-radius",
         "E int_0^{theta_{rho(lambda)}} e^{-lambda t} f <= N lambda^{-alpha} ||f||_{p,q}", "lambda >= "
                                                                                            "kappa^2 / rho_b^2",
         A41},
        {"L4.1", "potential of a lambda-cylinder indicator",
         "R_lambda 1_C <= N lambda^{-d/(2d+2)} Phi_lambda(s0, y0) ||1_C||_{L_{d+1}}", "lambda >= kappa^2 / rho_b^2",
         L41},
        {"T4.2", "weighted resolvent bound", "R_lambda f <= N lambda^{-d/(2d+2)} ||Psi_lambda f||_{L_{d+1}}",
         "lambda >= kappa^2 / rho_b^2", T42},
        {"C4.3", "weighted resolvent bound, g(x)",
         "R_lambda g <= N lambda^{-(d+2)/(2d+2)} ||Psi_lambda g||_{L_{d+1}(R^d)}", "lambda >= kappa^2 / rho_b^2",
         C43},
        {"L4.4", "exit potential with L_p data", "E int_0^{theta'_R} g <= N R^{2-d/p} ||g||_{L_p}", "R <= rho_b", L44},
        {"T5.3", "resolvent bound with the improved exponent",
         "R_lambda f <= N lambda^{(d+2)/(2 d0 + 2) - 1} ||f||_{L_{d0+1}}", "lambda >= kappa^2 / rho_b^2", T53},
        {"R5.1", "small-lambda resolvent", "R_lambda f <= N (1 - e^{-lambda})^{-(p-1)/p} ||f||_{L_p}, p = d0 + 1",
         "none", R51},
        {"T5.6", "resolvent bound for g(x) with the improved exponent",
         "R_lambda g <= N lambda^{d/(2 d0) - 1} ||g||_{L_{d0}}", "lambda >= kappa^2 / rho_b^2", T56},
        {"T5.7", "mixed-norm resolvent bounds", "R_lambda f <= N lambda^{(d/p + 2/q)/2 - 1} ||f||_{L_{p,q}}, "
                                                "d0/p + 1/q <= 1",
         "lambda >= kappa^2 / rho_b^2", T57},
        {"T5.8", "weighted mixed-norm resolvent bounds", "R_lambda f <= N lambda^{-chi} ||Psi^{1-nu} f||_{L_{p,q}}",
         "lambda >= kappa^2 / rho_b^2", T58},
        {"T5.9a", "moments of the time integral",
         "E (int_0^T f)^n <= n! N^n T^{n chi} ||Psi_{1/T}^{(1-nu)/n} f||^n", "T <= rho_b^2 / kappa^2", T59a},
        {"T5.9b", "long-horizon time integral", "E int_0^T f <= N T R^{-2-d} sup_{C in C_R} ||f||_{L_{p,q}(C)}",
         "T >= rho_b^2 / kappa^2", T59b},
        {"R5.3", "covering of the unit cylinder", "||f||_{L_{p,q}(C_1)} <= N R^{-2-d} sup_{C in C_R} ||f||_{L_{p,q}(C)}",
         "R <= 1 (deterministic)", R53},
        {"T5.10", "exit potentials with normalized norms",
         "E int_0^{theta_R(y)} f(t, x_t - y) <= N R^2 #||f||_{C_R};  E int_0^{theta'_R} f <= N R^2 sup_C #||f||_C",
         "R <= rho_b, bbar_R <= m_b", T510},
        {"T5.12", "exit potentials at large radii", "E int_0^{theta'_R} f <= N_R sup_{C in C_1} ||f||_{L_{p,q}(C)}",
         "R <= rho_b", T512},
    };
    return cat;
}

inline const CatalogEntry& find_check(const std::string& id) {
    for (const auto& e : catalog())
        if (e.id == id) return e;
    std::string ids;
    for (const auto& e : catalog()) ids += (ids.empty() ? "" : ", ") + e.id;
    throw UnknownCheckError("unknown check id '" + id + "'; known ids: " + ids);
}

/// ASCII file stem for a check id (the bar accent becomes "bar").
inline std::string file_stem(const std::string& id) {
    std::string s = id;
    const std::string bar = "̄";
    for (auto p = s.find(bar); p != std::string::npos; p = s.find(bar)) s.replace(p, bar.size(), "bar");
    return s;
}

inline EstimateReport run_check(const std::string& id, const ProcessSpec& spec, const CheckConfig& cfg) {
    const auto& e = find_check(id);
    validate(spec);
    cfg.validate();
    EstimateReport rep;
    rep.check_id = e.id;
    rep.title = e.title;
    detail::Ctx c(spec, cfg, rep);
    rep.metadata["process"] = spec.name;
    rep.metadata["family"] = families::to_string(cfg.family);
    rep.metadata["n_paths"] = cfg.n_paths;
    rep.metadata["h_rel"] = cfg.h_rel;
    rep.metadata["seed"] = cfg.sim.seed;
    rep.metadata["xi_bar"] = c.xi;
    rep.metadata["kappa_xibar"] = c.kap;
    rep.metadata["d0"] = c.d0;
    rep.metadata["rho_b"] = std::isfinite(cfg.rho_b) ? nlohmann::ordered_json(cfg.rho_b) : nlohmann::ordered_json("inf");
    e.run(c);
    rep.censored_fraction = c.cens_all > 0 ? c.cens_bad / c.cens_all : 0.0;
    finalize(rep, cfg.exponent_tol, cfg.spread_max);
    return rep;
}

inline nlohmann::ordered_json catalog_json() {
    nlohmann::ordered_json j;
    j["csv_columns"] = {
        {"scale", "lambda, R, t or T of the row"},
        {"lhs", "Monte Carlo (or quadrature) value of the left side"},
        {"ci_lo", "lower 95% confidence limit of lhs"},
        {"ci_hi", "upper 95% confidence limit of lhs"},
        {"rhs_factor", "right side without the unknown constant N (the full right side for explicit rows)"},
        {"ratio", "lhs / rhs_factor"},
        {"series", "series the row belongs to"},
        {"member", "test function or parameter of the row"},
        {"tau", "stopping time the path integral starts from"},
        {"pass", "1 or 0 for rows with explicit constants, empty otherwise"},
    };
    auto checks = nlohmann::ordered_json::array();
    for (const auto& e : catalog())
        checks.push_back({{"id", e.id},
                          {"file", file_stem(e.id) + ".csv"},
                          {"title", e.title},
                          {"formula", e.formula},
                          {"preconditions", e.preconditions}});
    j["checks"] = checks;
    return j;
}

}  // namespace itolab::estimates
