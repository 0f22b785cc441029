#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "itolab/constants.hpp"
#include "itolab/errors.hpp"
#include "itolab/mixednorm.hpp"
#include "itolab/montecarlo.hpp"
#include "itolab/process.hpp"
#include "itolab/stats.hpp"

namespace itolab {

/// One start of the moderation scan: time t, start point x, ball offset y (|y| < rho).
struct GridPoint {
    double t = 0;
    Point x;
    Point y;
};

/// Lattice of (t, x, y). Starts lie in [-start_half, start_half]^d (or on the first axis only);
/// offsets lie on a lattice in [-offset_frac rho, offset_frac rho]^d restricted to |y| < rho.
struct ModerationGrid {
    int d = 2;
    std::vector<double> times{0.0};
    double start_half = 0;
    int start_n = 1;
    double offset_frac = 0.5;
    int offset_n = 1;
    bool first_axis_only = false;

    void validate() const {
        require(d >= 1, "ModerationGrid: d must be positive");
        require(!times.empty(), "ModerationGrid: no times");
        require(start_n >= 1 && offset_n >= 1, "ModerationGrid: lattice sizes must be positive");
        require(start_half >= 0 && offset_frac >= 0 && offset_frac < 1, "ModerationGrid: bad extents");
    }

    static std::vector<double> axis(double half, int n) {
        if (n == 1) return {0.0};
        std::vector<double> v;
        for (int i = 0; i < n; ++i) v.push_back(-half + 2 * half * i / (n - 1));
        return v;
    }

    std::vector<Point> lattice(double half, int n) const {
        const auto ax = axis(half, n);
        std::vector<Point> pts;
        const int dims = first_axis_only ? 1 : d;
        std::vector<std::size_t> idx(static_cast<std::size_t>(dims), 0);
        while (true) {
            Point p(static_cast<std::size_t>(d), 0.0);
            for (int i = 0; i < dims; ++i) p[i] = ax[idx[i]];
            pts.push_back(p);
            int a = dims - 1;
            for (; a >= 0; --a) {
                if (++idx[a] < ax.size()) break;
                idx[a] = 0;
            }
            if (a < 0) break;
        }
        return pts;
    }

    std::vector<GridPoint> points(double rho) const {
        validate();
        std::vector<GridPoint> out;
        const auto xs = lattice(start_half, start_n);
        const auto ys = lattice(offset_frac * rho, offset_n);
        for (double t : times)
            for (const auto& x : xs)
                for (const auto& y : ys)
                    if (stopping::norm(y) < rho) out.push_back({t, x, y});
        return out;
    }

    /// The same extents with doubled lattice density.
    ModerationGrid refined() const {
        ModerationGrid g = *this;
        g.start_n = start_n == 1 ? 1 : 2 * start_n - 1;
        g.offset_n = offset_n == 1 ? 1 : 2 * offset_n - 1;
        return g;
    }
};

/// Integral of |b| over [0, theta tau_rho(y)] from (t, x) on a single path.
struct CappedIntegral {
    double value = 0;
    bool censored = false;
};

inline CappedIntegral drift_integral_capped(const ProcessSpec& spec, const SimConfig& cfg, RandomStream& s,
                                            const GridPoint& g, double rho) {
    const double cap = rho * rho;
    CappedIntegral out;
    if (stopping::norm(g.y) >= rho) return out;
    bool stopped = false;
    const auto d = static_cast<std::size_t>(spec.d);
    simulate_observed(spec, cfg, s, g.t, g.x, cap, [&](const StepView& v) {
        out.value += v.b_abs * v.h;
        double r2 = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const double z = v.x1[i] - g.x[i] - g.y[i];
            r2 += z * z;
        }
        if (r2 >= rho * rho || v.s1 >= cap) {
            stopped = true;
            return false;
        }
        return true;
    });
    out.censored = !stopped;
    return out;
}

struct BhatEntry {
    double rho = 0;
    GridPoint point;
    Estimate integral;  ///< E int |b| ds
    double bhat = 0;    ///< integral.mean / rho
    double ci_lo = 0, ci_hi = 0;
    double censor_fraction = 0;
};

struct BhatEstimate {
    double rho = 0;
    double value = 0;  ///< max over the grid of the per-point estimate
    double ci_lo = 0, ci_hi = 0;
    std::size_t argmax = 0;
    std::vector<BhatEntry> entries;
    double censor_fraction = 0;
};

/// (1/rho) max over the grid of E int_0^{theta tau_rho(y)} |b_{t+s}| ds.
inline BhatEstimate estimate_bhat_rho(const ProcessSpec& spec, double rho, const std::vector<GridPoint>& grid,
                                      const SimConfig& cfg) {
    validate(spec);
    cfg.validate();
    require(rho > 0, "estimate_bhat_rho: rho must be positive");
    require(!grid.empty(), "estimate_bhat_rho: empty start grid");
    BhatEstimate out;
    out.rho = rho;
    std::size_t censored = 0, total = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        BhatEntry e;
        e.rho = rho;
        e.point = grid[k];
        std::size_t cens = 0;
        if (!spec.has_drift()) {
            e.integral = {0.0, 0.0, cfg.n_paths};
        } else {
            const auto vals = mc_values(cfg.n_paths, cfg.workers, derive_seed(cfg.seed, k),
                                        [&](RandomStream& s, std::size_t) {
                                            const auto r = drift_integral_capped(spec, cfg, s, grid[k], rho);
                                            return r.censored ? -1.0 - r.value : r.value;
                                        });
            RunningStats st;
            for (double v : vals) {
                if (v < 0) {
                    ++cens;
                    v = -1.0 - v;
                }
                st.add(v);
            }
            e.integral = st.estimate();
        }
        e.bhat = e.integral.mean / rho;
        e.ci_lo = std::max(0.0, e.integral.lo()) / rho;
        e.ci_hi = e.integral.hi() / rho;
        e.censor_fraction = static_cast<double>(cens) / static_cast<double>(cfg.n_paths);
        censored += cens;
        total += cfg.n_paths;
        if (k == 0 || e.bhat > out.value) {
            out.value = e.bhat;
            out.argmax = k;
            out.ci_lo = e.ci_lo;
            out.ci_hi = e.ci_hi;
        }
        out.entries.push_back(std::move(e));
    }
    out.censor_fraction = total ? static_cast<double>(censored) / static_cast<double>(total) : 0.0;
    if (out.censor_fraction > 0.01)
        throw CensoredError("estimate_bhat_rho: " + std::to_string(100 * out.censor_fraction) +
                            "% of paths hit the horizon before the capped exit; increase t_max to at least rho^2");
    return out;
}

struct ModerationReport {
    double R = 0;
    std::vector<double> rho_values;
    std::vector<BhatEstimate> bhat;
    std::vector<double> bbar;  ///< running sup, bbar[k] = max_{j <= k in increasing rho} bhat
    double m_b = 0;
    bool verdict = false;  ///< bbar(R) <= m_b
    double censor_fraction = 0;
    std::optional<double> refinement_change;  ///< relative change of bbar(R) under grid refinement
    bool refinement_flag = false;

    double bbar_R() const { return bbar.empty() ? 0.0 : bbar.back(); }

    void write_csv(std::ostream& os) const {
        os << "rho,t,x,y,integral,stderr,bhat,ci_lo,ci_hi,censor_fraction\n";
        os.precision(17);
        auto pt = [&](const Point& p) {
            std::string s;
            for (std::size_t i = 0; i < p.size(); ++i) s += (i ? ";" : "") + std::to_string(p[i]);
            return s;
        };
        for (const auto& b : bhat)
            for (const auto& e : b.entries)
                os << e.rho << ',' << e.point.t << ',' << pt(e.point.x) << ',' << pt(e.point.y) << ','
                   << e.integral.mean << ',' << e.integral.stderr_ << ',' << e.bhat << ',' << e.ci_lo << ','
                   << e.ci_hi << ',' << e.censor_fraction << '\n';
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["R"] = R;
        j["rho"] = rho_values;
        std::vector<double> bh;
        for (const auto& b : bhat) bh.push_back(b.value);
        j["bhat"] = bh;
        j["bbar"] = bbar;
        j["bbar_R"] = bbar_R();
        j["m_b"] = m_b;
        j["verdict"] = verdict ? "pass" : "fail";
        j["censor_fraction"] = censor_fraction;
        if (refinement_change) j["refinement_change"] = *refinement_change;
        j["refinement_flag"] = refinement_flag;
        return j;
    }
};

/// Dyadic ladder R, R/2, ..., R/2^{levels-1}, returned in increasing order.
inline std::vector<double> dyadic_ladder(double R, int levels) {
    require(R > 0 && levels >= 1, "dyadic_ladder: need R > 0 and levels >= 1");
    std::vector<double> v;
    for (int k = levels - 1; k >= 0; --k) v.push_back(R * std::ldexp(1.0, -k));
    return v;
}

/// bbar_R = sup over the ladder of bhat_rho, compared with m_b.
inline ModerationReport estimate_bbar(const ProcessSpec& spec, double R, std::vector<double> rho_ladder,
                                      const ModerationGrid& grid, const SimConfig& cfg, double m_b,
                                      bool check_refinement = false) {
    require(R > 0, "estimate_bbar: R must be positive");
    require(!rho_ladder.empty(), "estimate_bbar: empty rho ladder");
    require(m_b > 0 && m_b <= 1, "estimate_bbar: m_b must lie in (0, 1]");
    std::sort(rho_ladder.begin(), rho_ladder.end());
    for (double r : rho_ladder) require(r > 0 && r <= R * (1 + 1e-12), "estimate_bbar: ladder must lie in (0, R]");
    ModerationReport rep;
    rep.R = R;
    rep.m_b = m_b;
    rep.rho_values = rho_ladder;
    double run = 0, cens = 0;
    for (std::size_t k = 0; k < rho_ladder.size(); ++k) {
        SimConfig c = cfg;
        c.seed = derive_seed(cfg.seed, 77 + k);
        auto b = estimate_bhat_rho(spec, rho_ladder[k], grid.points(rho_ladder[k]), c);
        run = std::max(run, b.value);
        cens = std::max(cens, b.censor_fraction);
        rep.bbar.push_back(run);
        rep.bhat.push_back(std::move(b));
    }
    rep.censor_fraction = cens;
    rep.verdict = rep.bbar_R() <= m_b;
    if (check_refinement) {
        const auto fine = estimate_bbar(spec, R, rho_ladder, grid.refined(), cfg, m_b, false);
        const double a = rep.bbar_R(), b = fine.bbar_R();
        rep.refinement_change = std::max(a, b) > 0 ? std::abs(a - b) / std::max(a, b) : 0.0;
        rep.refinement_flag = *rep.refinement_change >= 0.1;
    }
    return rep;
}

struct MomentBoundRow {
    int n = 0;
    Estimate lhs;  ///< E (int |b| ds)^n
    double rhs = 0;  ///< n! (bbar rho)^n
    bool pass = false;
};

/// E(int_0^{theta tau_rho} |b| ds)^n <= n! (bbar rho)^n, n = 1..n_max, at one start.
inline std::vector<MomentBoundRow> moment_bound_check(const ProcessSpec& spec, double rho, const GridPoint& start,
                                                      int n_max, const SimConfig& cfg, double bbar) {
    validate(spec);
    require(n_max >= 1 && n_max <= 4, "moment_bound_check: n_max must lie in [1, 4]");
    require(rho > 0 && bbar >= 0, "moment_bound_check: need rho > 0 and bbar >= 0");
    std::vector<double> vals(cfg.n_paths, 0.0);
    if (spec.has_drift())
        vals = mc_values(cfg.n_paths, cfg.workers, derive_seed(cfg.seed, 0x30), [&](RandomStream& s, std::size_t) {
            return drift_integral_capped(spec, cfg, s, start, rho).value;
        });
    std::vector<MomentBoundRow> rows;
    double fact = 1;
    for (int n = 1; n <= n_max; ++n) {
        fact *= n;
        RunningStats st;
        for (double v : vals) st.add(std::pow(v, n));
        MomentBoundRow r;
        r.n = n;
        r.lhs = st.estimate();
        r.rhs = fact * std::pow(bbar * rho, n);
        r.pass = r.lhs.mean <= r.rhs + 3 * r.lhs.stderr_;
        rows.push_back(r);
    }
    return rows;
}

struct MorreyPipelineReport {
    MorreyScanReport scan;     ///< hbar estimate: sup rho #||h||
    ModerationReport measured;  ///< independently measured bbar
    double m_b = 0;
    bool morrey_below_threshold = false;  ///< scan.value <= m_b (taking N = 1)
    std::string caveat;
};

/// |b(t, x)| <= h at every cell centre of the lattice; throws with the location otherwise.
inline void check_domination(const ProcessSpec& spec, const GridFunction& h, double rel_tol = 1e-9) {
    require(h.time_axis && h.spatial_dims() == spec.d, "check_domination: h must be a space-time lattice in R^d");
    h.validate();
    auto bound = h;
    std::size_t k = 0;
    Point b(static_cast<std::size_t>(spec.d));
    bound.sample([&](double t, std::span<const double> x) {
        double babs = 0;
        if (spec.has_drift()) {
            spec.drift(t, x, b);
            for (double v : b) babs += v * v;
            babs = std::sqrt(babs);
        }
        const double hv = h.values[k++];
        if (babs > hv * (1 + rel_tol) + 1e-300)
            throw PreconditionError("check_domination: |b| = " + std::to_string(babs) + " exceeds h = " +
                                    std::to_string(hv) + " at " + detail::format_point(t, x));
        return hv;
    });
}

/// Runs the analytic Morrey scan for h and the Monte Carlo bbar side by side. This is a
/// consistency check: the direction from the scan to moderation presupposes moderation.
inline MorreyPipelineReport morrey_implies_moderation(const ProcessSpec& spec, const GridFunction& h,
                                                      const std::vector<MixedNormSpec>& exponents, double rho_b,
                                                      const ModerationGrid& grid, const SimConfig& cfg, double m_b,
                                                      const ScanGrid& scan_grid = {}) {
    check_domination(spec, h);
    MorreyPipelineReport rep;
    rep.m_b = m_b;
    rep.scan = morrey_condition_scan(h, exponents, rho_b, scan_grid, cfg.workers);
    rep.morrey_below_threshold = rep.scan.value <= m_b;
    rep.measured = estimate_bbar(spec, rho_b, dyadic_ladder(rho_b, scan_grid.levels), grid, cfg, m_b);
    rep.caveat =
        "consistency check only: the converse bound from the scan to moderation is derived under the "
        "moderation assumption itself, so agreement is evidence, not proof";
    return rep;
}

}  // namespace itolab
