#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "itolab/constants.hpp"
#include "itolab/errors.hpp"
#include "itolab/families.hpp"
#include "itolab/greens.hpp"
#include "itolab/parallel.hpp"
#include "itolab/process.hpp"
#include "itolab/rng.hpp"
#include "itolab/stats.hpp"

namespace itolab::estimates {

using families::kInf;
using greens::TauSpec;

// ---------------------------------------------------------------------------
// Potential engine

/// How long the path integral runs after tau.
struct HorizonRule {
    enum class Kind { infinite, capped_exit, exit, fixed } kind = Kind::infinite;
    double R = 1;  ///< exit radius
    Point y;       ///< exit ball centre relative to x_tau (empty means 0)
    double T = 0;  ///< exit: longest wait before the path counts as censored; fixed: horizon
};

struct PotentialOptions {
    bool early_stop = true;   ///< stop once every member has left its time support (A, B, theta then cover
                              ///< only that window)
    double tail_eps = 1e-6;   ///< infinite rule: truncate at exp(-lambda T) = tail_eps
    double tau_wait = 2.0;    ///< longest wait for tau before a path counts as tau = infinity
    std::uint64_t seed = 1;
    std::size_t n_paths = 1000;
    double max_steps = 5e7;  ///< refuse horizons needing more base steps per path
};

/// Per-path discounted integrals; only paths with tau < infinity are kept.
struct PotentialRun {
    std::size_t m = 0;
    std::vector<std::vector<double>> I;  ///< I[j][path]
    std::vector<double> A, B, theta;
    std::vector<char> censored;
    std::size_t n_paths = 0;
    std::size_t clamps = 0;

    std::size_t n_reached() const { return theta.size(); }
    double censored_fraction() const {
        if (censored.empty()) return 0.0;
        return static_cast<double>(std::count(censored.begin(), censored.end(), 1)) /
               static_cast<double>(censored.size());
    }
    static Estimate moment_of(const std::vector<double>& v, int n = 1) {
        RunningStats s;
        for (double x : v) s.add(n == 1 ? x : std::pow(x, n));
        return s.estimate();
    }
    Estimate mean(std::size_t j, int n = 1) const { return moment_of(I[j], n); }
};

namespace detail {

struct PathOut {
    std::vector<double> I;
    double A = 0, B = 0, theta = 0;
    bool reached = false, censored = false;
    std::size_t clamps = 0;
};

}  // namespace detail

/// E over paths of int_0^{gamma - tau} e^{-lambda s} f_j(s, x_{tau+s} - x_tau) ds for every member,
/// plus A = E int e^{-lambda s} ds, B = E int e^{-lambda s} |b| ds and the stop time. Each step adds
/// f at (midpoint time, step-start state) times the exact discount integral over the step.
inline PotentialRun potential_run(const ProcessSpec& spec, const SimConfig& cfg, const TauSpec& tau, double lambda,
                                  const std::vector<families::Member>& fs, const HorizonRule& rule,
                                  const PotentialOptions& opt) {
    validate(spec);
    cfg.validate();
    require(lambda >= 0, "potential: lambda must be nonnegative");
    const auto d = static_cast<std::size_t>(spec.d);
    double horizon = 0;
    switch (rule.kind) {
        case HorizonRule::Kind::infinite:
            require(lambda > 0, "potential: an infinite horizon needs lambda > 0");
            horizon = -std::log(opt.tail_eps) / lambda;
            break;
        case HorizonRule::Kind::capped_exit: horizon = rule.R * rule.R; break;
        case HorizonRule::Kind::exit:
        case HorizonRule::Kind::fixed:
            require(rule.T > 0, "potential: horizon T must be positive");
            horizon = rule.T;
            break;
    }
    const bool exits = rule.kind == HorizonRule::Kind::capped_exit || rule.kind == HorizonRule::Kind::exit;
    double support_end = 0;
    for (const auto& f : fs) support_end = std::max(support_end, f.t_end());
    const double run_to = opt.early_stop && !fs.empty() ? std::min(horizon, support_end) : horizon;
    const Point y = rule.y.empty() ? Point(d, 0.0) : rule.y;
    require(y.size() == d, "potential: exit centre has wrong dimension");
    if (run_to / cfg.h > opt.max_steps)
        throw PreconditionError("potential: horizon " + std::to_string(run_to) + " needs more than " +
                                std::to_string(opt.max_steps) + " steps per path; reduce the exit radius or kappa");

    SimConfig run_cfg = cfg;
    run_cfg.t_max = std::max(run_to, 1e-300);
    SimConfig tau_cfg = cfg;
    tau_cfg.t_max = opt.tau_wait;

    const auto outs = parallel_map<detail::PathOut>(opt.n_paths, cfg.workers, [&](std::size_t i) {
        auto s = make_rng_stream(opt.seed, i);
        detail::PathOut o;
        o.I.assign(fs.size(), 0.0);
        double t = tau.t0;
        Point x = tau.x0.empty() ? Point(d, 0.0) : tau.x0;
        if (!greens::detail::run_to_tau(spec, tau_cfg, s, tau, t, x)) return o;
        o.reached = true;
        if (exits && stopping::norm(y) >= rule.R) return o;  // already outside: gamma = tau
        Point rel(d);
        bool stopped = false;
        const auto st = simulate_observed(spec, run_cfg, s, t, x, run_to, [&](const StepView& v) {
            const double w = lambda > 0 ? (std::exp(-lambda * v.s0) - std::exp(-lambda * v.s1)) / lambda : v.h;
            const double tm = 0.5 * (v.s0 + v.s1);
            for (std::size_t k = 0; k < d; ++k) rel[k] = v.x0[k] - x[k];
            for (std::size_t j = 0; j < fs.size(); ++j)
                if (tm < fs[j].t_end()) o.I[j] += w * fs[j](tm, rel);
            o.A += w;
            o.B += w * v.b_abs;
            if (exits) {
                double r2 = 0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double z = v.x1[k] - x[k] - y[k];
                    r2 += z * z;
                }
                if (r2 >= rule.R * rule.R) {
                    stopped = true;
                    return false;
                }
                if (rule.kind == HorizonRule::Kind::capped_exit && v.s1 >= horizon) {
                    stopped = true;
                    return false;
                }
            }
            return true;
        });
        o.theta = st.elapsed;
        o.clamps = st.clamp_count;
        if (rule.kind == HorizonRule::Kind::exit) o.censored = !stopped && run_to == horizon;
        return o;
    });

    PotentialRun r;
    r.m = fs.size();
    r.I.assign(fs.size(), {});
    r.n_paths = opt.n_paths;
    for (const auto& o : outs) {
        r.clamps += o.clamps;
        if (!o.reached) continue;
        for (std::size_t j = 0; j < fs.size(); ++j) r.I[j].push_back(o.I[j]);
        r.A.push_back(o.A);
        r.B.push_back(o.B);
        r.theta.push_back(o.theta);
        r.censored.push_back(o.censored ? 1 : 0);
    }
    return r;
}

/// Single-function form: E int_0^{gamma - tau} e^{-lambda s} f(s, x_{tau+s} - x_tau) ds with f a lattice
/// function (zero outside the lattice; time-independent when the lattice has no time axis).
inline Estimate estimate_potential(const ProcessSpec& spec, const TauSpec& tau, double lambda, const GridFunction& f,
                                   const HorizonRule& rule, const SimConfig& cfg) {
    f.validate();
    families::Member m;
    m.name = "lattice";
    m.time_dependent = f.time_axis;
    m.t_lo = f.time_axis ? f.lo(0) : 0.0;
    m.t_hi = f.time_axis ? f.hi(0) : kInf;
    m.custom = [&f](double t, std::span<const double> x) {
        std::size_t flat = 0;
        const int s0 = f.first_space_axis();
        if (f.time_axis) {
            const double u = (t - f.lo(0)) / f.spacings[0];
            if (u < 0 || u >= static_cast<double>(f.counts[0])) return 0.0;
            flat = static_cast<std::size_t>(u);
        }
        for (int i = 0; i < f.spatial_dims(); ++i) {
            const double u = (x[i] - f.lo(s0 + i)) / f.spacings[s0 + i];
            if (u < 0 || u >= static_cast<double>(f.counts[s0 + i])) return 0.0;
            flat = flat * f.counts[s0 + i] + static_cast<std::size_t>(u);
        }
        return f.values[flat];
    };
    PotentialOptions opt;
    opt.seed = cfg.seed;
    opt.n_paths = cfg.n_paths;
    const auto run = potential_run(spec, cfg, tau, lambda, {m}, rule, opt);
    if (run.censored_fraction() > 0.01)
        throw CensoredError("estimate_potential: " + std::to_string(100 * run.censored_fraction()) +
                            "% of paths censored at the horizon");
    require(run.n_reached() > 0, "estimate_potential: tau was never reached");
    return run.mean(0);
}

// ---------------------------------------------------------------------------
// Reports

enum class Verdict { bounded, exponent_ok, fail, censored };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::bounded: return "bounded";
        case Verdict::exponent_ok: return "exponent_ok";
        case Verdict::fail: return "fail";
        case Verdict::censored: return "censored";
    }
    return "?";
}

/// upper: lhs <= N rhs with N unknown (ratios bounded above); lower: lhs >= rhs / N;
/// explicit: the inequality has explicit constants and each row carries a pass flag;
/// info: reported only.
enum class SeriesMode { upper, lower, explicit_bound, info };

inline const char* to_string(SeriesMode m) {
    switch (m) {
        case SeriesMode::upper: return "upper";
        case SeriesMode::lower: return "lower";
        case SeriesMode::explicit_bound: return "explicit";
        case SeriesMode::info: return "info";
    }
    return "?";
}

struct SeriesSpec {
    std::string name;
    SeriesMode mode = SeriesMode::upper;
    std::optional<double> target;  ///< expected exponent of fit_value against scale
    bool spread_over_rows = false;  ///< compare all rows instead of per-scale extremes
};

struct ReportRow {
    std::string series;
    double scale = 0;
    std::string member;
    std::string tau = "tau = 0";
    Estimate lhs;
    double ci_lo = 0, ci_hi = 0;
    double rhs_factor = 0;
    double ratio = 0;
    double fit_value = std::numeric_limits<double>::quiet_NaN();
    int pass = -1;  ///< explicit rows: 1 holds, 0 violated
};

struct SeriesResult {
    std::string name;
    SeriesMode mode = SeriesMode::upper;
    double spread = 1;
    bool spread_ok = true;
    std::optional<ExponentFit> fit;
    std::optional<double> target;
    bool fit_ok = true;
    std::size_t failed_rows = 0;
    std::string note;
};

struct EstimateReport {
    std::string check_id;
    std::string title;
    std::vector<SeriesSpec> specs;
    std::vector<ReportRow> rows;
    std::vector<SeriesResult> series;
    Verdict verdict = Verdict::fail;
    double censored_fraction = 0;
    std::size_t clamp_count = 0;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
    std::vector<std::string> notes;

    static constexpr const char* kCsvHeader = "scale,lhs,ci_lo,ci_hi,rhs_factor,ratio,series,member,tau,pass";

    void write_csv(std::ostream& os) const;
    nlohmann::ordered_json to_json() const;
    void write_svg(std::ostream& os) const;
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string o = "\"";
    for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
    return o + "\"";
}

inline void EstimateReport::write_csv(std::ostream& os) const {
    os << kCsvHeader << '\n';
    for (const auto& r : rows)
        os << fmt(r.scale) << ',' << fmt(r.lhs.mean) << ',' << fmt(r.ci_lo) << ',' << fmt(r.ci_hi) << ','
           << fmt(r.rhs_factor) << ',' << fmt(r.ratio) << ',' << csv_field(r.series) << ',' << csv_field(r.member)
           << ',' << csv_field(r.tau) << ',' << (r.pass < 0 ? "" : (r.pass ? "1" : "0")) << '\n';
}

inline nlohmann::ordered_json EstimateReport::to_json() const {
    nlohmann::ordered_json j;
    j["check_id"] = check_id;
    j["title"] = title;
    j["verdict"] = to_string(verdict);
    j["censored_fraction"] = censored_fraction;
    j["clamp_count"] = clamp_count;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : series) {
        nlohmann::ordered_json e;
        e["name"] = s.name;
        e["mode"] = to_string(s.mode);
        e["spread"] = std::isfinite(s.spread) ? nlohmann::ordered_json(s.spread) : nlohmann::ordered_json("inf");
        e["spread_ok"] = s.spread_ok;
        if (s.fit) {
            e["exponent"] = s.fit->exponent;
            e["exponent_stderr"] = s.fit->stderr_;
            e["fit_r_squared"] = s.fit->r_squared;
        }
        if (s.target) e["target_exponent"] = *s.target;
        e["fit_ok"] = s.fit_ok;
        e["failed_rows"] = s.failed_rows;
        if (!s.note.empty()) e["note"] = s.note;
        arr.push_back(e);
    }
    j["series"] = arr;
    j["rows"] = rows.size();
    j["notes"] = notes;
    j["metadata"] = metadata;
    return j;
}

/// Log-log plot of the per-scale fit values (or ratios) of every series, plain path and axis elements.
inline void EstimateReport::write_svg(std::ostream& os) const {
    const double W = 480, H = 320, m = 40;
    std::map<std::string, std::vector<std::pair<double, double>>> pts;
    for (const auto& r : rows) {
        const double v = std::isfinite(r.fit_value) ? r.fit_value : r.ratio;
        if (r.scale > 0 && v > 0 && std::isfinite(v)) pts[r.series].emplace_back(std::log(r.scale), std::log(v));
    }
    double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
    for (const auto& [k, v] : pts)
        for (auto [x, y] : v) {
            x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) x0 -= 1, x1 += 1;
    if (!(y1 > y0)) y0 -= 1, y1 += 1;
    auto X = [&](double x) { return m + (x - x0) / (x1 - x0) * (W - 2 * m); };
    auto Y = [&](double y) { return H - m - (y - y0) / (y1 - y0) * (H - 2 * m); };
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<path d=\"M" << m << ' ' << H - m << " H" << W - m << " M" << m << ' ' << H - m << " V" << m
       << "\" stroke=\"black\" fill=\"none\"/>\n";
    os << "<text x=\"" << m << "\" y=\"" << m / 2 << "\" font-size=\"12\">" << check_id
       << " log value vs log scale</text>\n";
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    int ci = 0;
    for (const auto& [k, v] : pts) {
        os << "<path d=\"";
        bool first = true;
        for (auto [x, y] : v) {
            os << (first ? "M" : " L") << fmt(X(x)) << ' ' << fmt(Y(y));
            first = false;
        }
        os << "\" stroke=\"" << colors[ci++ % 6] << "\" fill=\"none\"/>\n";
    }
    os << "</svg>\n";
}

/// Appends a row; ratio = lhs / rhs_factor with 0/0 read as 0.
inline ReportRow& add_row(EstimateReport& rep, std::string series, double scale, std::string member, const Estimate& lhs,
                          double rhs_factor, double fit_den = std::numeric_limits<double>::quiet_NaN(),
                          std::string tau = "tau = 0") {
    ReportRow r;
    r.series = std::move(series);
    r.scale = scale;
    r.member = std::move(member);
    r.tau = std::move(tau);
    r.lhs = lhs;
    r.ci_lo = lhs.lo();
    r.ci_hi = lhs.hi();
    r.rhs_factor = rhs_factor;
    if (lhs.mean == 0 && rhs_factor == 0)
        r.ratio = 0;
    else
        r.ratio = lhs.mean / rhs_factor;
    if (std::isfinite(fit_den) && fit_den > 0) r.fit_value = lhs.mean / fit_den;
    rep.rows.push_back(std::move(r));
    return rep.rows.back();
}

inline ReportRow& add_proportion_row(EstimateReport& rep, std::string series, double scale, std::string member,
                                     const Proportion& p, double rhs, bool pass, std::string tau = "tau = 0") {
    auto& r = add_row(rep, std::move(series), scale, std::move(member), {p.p, 0.0, p.n}, rhs,
                      std::numeric_limits<double>::quiet_NaN(), std::move(tau));
    r.ci_lo = p.lo;
    r.ci_hi = p.hi;
    r.pass = pass ? 1 : 0;
    return r;
}

/// Computes per-series spreads, exponent fits and the overall verdict.
inline void finalize(EstimateReport& rep, double exponent_tol = 0.15, double spread_max = 10) {
    rep.series.clear();
    bool any_fit = false, failed = false;
    for (const auto& sp : rep.specs) {
        SeriesResult res;
        res.name = sp.name;
        res.mode = sp.mode;
        res.target = sp.target;
        std::map<double, double> agg_ratio, agg_fit;
        std::vector<double> all;
        bool nonfinite = false;
        for (const auto& r : rep.rows) {
            if (r.series != sp.name) continue;
            if (r.pass == 0) ++res.failed_rows;
            if (!std::isfinite(r.ratio)) nonfinite = true;
            const bool lower = sp.mode == SeriesMode::lower;
            auto take = [lower](std::map<double, double>& m, double key, double v) {
                auto it = m.find(key);
                if (it == m.end())
                    m[key] = v;
                else
                    it->second = lower ? std::min(it->second, v) : std::max(it->second, v);
            };
            take(agg_ratio, r.scale, r.ratio);
            all.push_back(r.ratio);
            if (std::isfinite(r.fit_value)) take(agg_fit, r.scale, r.fit_value);
        }
        if (sp.mode == SeriesMode::upper || sp.mode == SeriesMode::lower) {
            std::vector<double> v;
            if (sp.spread_over_rows)
                v = all;
            else
                for (auto [k, x] : agg_ratio) v.push_back(x);
            if (nonfinite) {
                res.spread = kInf;
                res.spread_ok = false;
                res.note = "non-finite ratio";
            } else if (v.size() >= 2) {
                const double med = median(v);
                if (sp.mode == SeriesMode::upper) {
                    const double mx = *std::max_element(v.begin(), v.end());
                    res.spread = mx == 0 ? 1.0 : (med > 0 ? mx / med : kInf);
                } else {
                    const double mn = *std::min_element(v.begin(), v.end());
                    res.spread = med == 0 ? 1.0 : (mn > 0 ? med / mn : kInf);
                }
                res.spread_ok = res.spread <= spread_max;
            }
        }
        if (sp.target) {
            std::vector<std::pair<double, double>> samples;
            for (auto [k, x] : agg_fit)
                if (x > 0) samples.emplace_back(k, x);
            if (samples.size() >= 3) {
                res.fit = fit_scaling_exponent(samples);
                res.fit_ok = std::abs(res.fit->exponent - *sp.target) <= exponent_tol;
                any_fit = true;
            } else {
                res.note += (res.note.empty() ? "" : "; ") + std::string("fewer than 3 positive scales, no fit");
            }
        }
        failed = failed || !res.spread_ok || !res.fit_ok || res.failed_rows > 0;
        rep.series.push_back(std::move(res));
    }
    if (rep.censored_fraction > 0.01)
        rep.verdict = Verdict::censored;
    else if (failed)
        rep.verdict = Verdict::fail;
    else
        rep.verdict = any_fit ? Verdict::exponent_ok : Verdict::bounded;
}

}  // namespace itolab::estimates
