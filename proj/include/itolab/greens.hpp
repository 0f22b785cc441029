#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include "itolab/errors.hpp"
#include "itolab/mixednorm.hpp"
#include "itolab/montecarlo.hpp"
#include "itolab/parallel.hpp"
#include "itolab/process.hpp"
#include "itolab/stats.hpp"
#include "itolab/stopping.hpp"

namespace itolab::greens {

/// The stopping time tau at which the occupation measure starts.
struct TauSpec {
    enum class Kind { zero, fixed_time, hit_ball } kind = Kind::zero;
    double t0 = 0;   ///< start time of the process
    Point x0;        ///< start point (empty means origin)
    double time = 0;  ///< fixed_time: tau = time
    Point center;    ///< hit_ball: first grid time with |x - center| <= radius
    double radius = 0;

    std::string describe() const {
        switch (kind) {
            case Kind::zero: return "tau = 0";
            case Kind::fixed_time: return "tau = " + std::to_string(time);
            case Kind::hit_ball: return "tau = first hit of a ball of radius " + std::to_string(radius);
        }
        return "?";
    }
};

/// Event A in F_tau-measurable form or a path event evaluated after the run.
struct EventSpec {
    enum class Kind { all, hit_ball_before } kind = Kind::all;
    Point center;  ///< relative to x_tau
    double radius = 0;
    double before = 1;  ///< elapsed time limit after tau

    std::string describe() const {
        if (kind == Kind::all) return "whole space";
        return "x_{tau+s} - x_tau hits B_" + std::to_string(radius) + " before s = " + std::to_string(before);
    }
};

/// Lattice [0, t_extent) x [-half, half)^d; simulation runs to T_max <= t_extent.
struct BinSpec {
    double t_extent = 4;
    std::size_t nt = 40;
    double half = 3;
    std::size_t nx = 24;
    double T_max = 0;  ///< 0 means t_extent

    double horizon() const { return T_max > 0 ? T_max : t_extent; }
    void validate() const {
        require(t_extent > 0 && nt > 0 && half > 0 && nx > 0, "BinSpec: extents and counts must be positive");
        require(horizon() <= t_extent, "BinSpec: T_max must not exceed the lattice time extent");
    }
    BinSpec refined() const {
        BinSpec b = *this;
        b.nt *= 2;
        b.nx *= 2;
        return b;
    }
};

/// Bins of width (kappa/(2 sqrt(lambda)))/8 in space and r^2/8 in time around reverse-Hoelder scans
/// of radius r; the lattice covers the doubled cylinders of a centre lattice of extent `reach` radii.
inline BinSpec scan_bins(int d, double lambda, double kappa, double reach = 2) {
    (void)d;
    const double r = kappa / (2 * std::sqrt(lambda));
    BinSpec b;
    const double T = std::log(1e6) / lambda;
    b.nx = static_cast<std::size_t>(2 * std::ceil(8 * (reach + 2)));
    b.half = (reach + 2) * r;
    b.nt = static_cast<std::size_t>(std::ceil(8 * std::max(4.0 + reach, T / (r * r))));
    b.t_extent = static_cast<double>(b.nt) * r * r / 8;
    b.T_max = std::min(T, b.t_extent);
    return b;
}

struct GreensHistogram {
    double lambda = 0;
    std::string event;
    std::string tau;
    GridFunction density;  ///< space-time lattice; value = discounted occupation per unit volume
    std::size_t n_paths = 0;
    Proportion p_A;        ///< fraction of paths with tau < infinity and A
    double outside_mass = 0;  ///< discounted mass that fell outside the spatial box
    std::size_t clamp_count = 0;

    double bin_volume() const {
        double v = 1;
        for (double s : density.spacings) v *= s;
        return v;
    }

    double mass() const {
        double s = 0;
        for (double v : density.values) s += v;
        return s * bin_volume();
    }

    /// g_A(x) = int G_A(t, x) dt on the spatial lattice.
    GridFunction elliptic() const {
        Point o(density.origin.begin() + 1, density.origin.end());
        std::vector<double> sp(density.spacings.begin() + 1, density.spacings.end());
        std::vector<std::size_t> c(density.counts.begin() + 1, density.counts.end());
        auto g = GridFunction::zeros(false, o, sp, c);
        const std::size_t ns = g.size();
        for (std::size_t j = 0; j < density.counts[0]; ++j)
            for (std::size_t n = 0; n < ns; ++n) g.values[n] += density.values[j * ns + n] * density.spacings[0];
        return g;
    }

    nlohmann::ordered_json header() const {
        nlohmann::ordered_json j;
        j["lambda"] = lambda;
        j["event"] = event;
        j["tau"] = tau;
        j["n_paths"] = n_paths;
        j["p_A"] = p_A.p;
        j["dims"] = density.dims;
        j["origin"] = density.origin;
        j["spacings"] = density.spacings;
        j["counts"] = density.counts;
        j["mass"] = mass();
        j["outside_mass"] = outside_mass;
        j["layout"] = "row-major float64, time axis first";
        return j;
    }

    /// Binary row-major dump of the density plus a JSON header next to it.
    void write(const std::string& bin_path, const std::string& json_path) const {
        std::ofstream b(bin_path, std::ios::binary);
        require(static_cast<bool>(b), "GreensHistogram: cannot open " + bin_path);
        b.write(reinterpret_cast<const char*>(density.values.data()),
                static_cast<std::streamsize>(density.values.size() * sizeof(double)));
        std::ofstream j(json_path);
        require(static_cast<bool>(j), "GreensHistogram: cannot open " + json_path);
        j << header().dump(2) << '\n';
    }
};

namespace detail {

struct HistAcc {
    std::vector<double> bins;
    double outside = 0;
    std::size_t hits = 0;
    std::size_t clamps = 0;
};

/// Runs the pre-tau phase. Returns false if tau is not reached within t_max.
inline bool run_to_tau(const ProcessSpec& spec, const SimConfig& cfg, RandomStream& s, const TauSpec& tau,
                       double& t, Point& x) {
    if (tau.kind == TauSpec::Kind::zero) return true;
    const double horizon = tau.kind == TauSpec::Kind::fixed_time ? tau.time : cfg.t_max;
    bool hit = tau.kind == TauSpec::Kind::fixed_time;
    if (tau.kind == TauSpec::Kind::hit_ball && stopping::dist(x, tau.center) <= tau.radius) return true;
    Point cur = x;
    double elapsed = 0;
    simulate_observed(spec, cfg, s, t, x, horizon, [&](const StepView& v) {
        std::copy(v.x1.begin(), v.x1.end(), cur.begin());
        elapsed = v.s1;
        if (tau.kind == TauSpec::Kind::hit_ball && stopping::dist(v.x1, tau.center) <= tau.radius) {
            hit = true;
            return false;
        }
        return true;
    });
    if (tau.kind == TauSpec::Kind::fixed_time && elapsed < tau.time) hit = false;
    t += elapsed;
    x = cur;
    return hit;
}

}  // namespace detail

/// Histogram estimate of G_A(t, x): each step adds e^{-lambda s} h_loc at the bin of
/// (s, x_{tau+s} - x_tau), for paths with tau < infinity and A; divided by n_paths * bin volume.
inline GreensHistogram estimate_G(const ProcessSpec& spec, const TauSpec& tau, const EventSpec& event, double lambda,
                                  const BinSpec& bins, const SimConfig& cfg) {
    validate(spec);
    cfg.validate();
    bins.validate();
    require(lambda > 0, "estimate_G: lambda must be positive");
    require(std::exp(-lambda * bins.horizon()) <= 1e-6 * (1 + 1e-9),
            "estimate_G: need exp(-lambda T_max) <= 1e-6; enlarge the time extent");
    require(cfg.t_max >= bins.horizon(), "estimate_G: t_max must cover T_max");
    const auto d = static_cast<std::size_t>(spec.d);
    GreensHistogram H;
    H.lambda = lambda;
    H.event = event.describe();
    H.tau = tau.describe();
    H.n_paths = cfg.n_paths;
    H.density = GridFunction::spacetime_box(spec.d, 0, bins.t_extent, bins.nt, bins.half, bins.nx);
    const std::size_t nbins = H.density.size();
    const double dt = H.density.spacings[0], dx = H.density.spacings[1];
    const double T = bins.horizon();

    auto acc = parallel_accumulate<detail::HistAcc>(
        cfg.n_paths, cfg.workers, 64,
        [&] { return detail::HistAcc{std::vector<double>(nbins, 0.0), 0, 0, 0}; },
        [&](detail::HistAcc& a, std::size_t i) {
            auto s = make_rng_stream(cfg.seed, i);
            double t = tau.t0;
            Point x = tau.x0.empty() ? Point(d, 0.0) : tau.x0;
            if (!detail::run_to_tau(spec, cfg, s, tau, t, x)) return;
            std::vector<std::pair<std::size_t, double>> local;
            double lost = 0;
            bool in_event = event.kind == EventSpec::Kind::all;
            const Point xt = x;
            Point rel(d);
            const auto st = simulate_observed(spec, cfg, s, t, x, T, [&](const StepView& v) {
                for (std::size_t k = 0; k < d; ++k) rel[k] = v.x0[k] - xt[k];
                const double w = std::exp(-lambda * v.s0) * v.h;
                const auto jt = static_cast<std::size_t>(v.s0 / dt);
                bool inside = jt < bins.nt;
                std::size_t idx = std::min(jt, bins.nt - 1);
                for (std::size_t k = 0; k < d && inside; ++k) {
                    const double u = (rel[k] + bins.half) / dx;
                    inside = u >= 0 && u < static_cast<double>(bins.nx);
                    idx = idx * bins.nx + (inside ? static_cast<std::size_t>(u) : 0);
                }
                if (inside) {
                    local.push_back({idx, w});
                } else {
                    lost += w;
                }
                if (!in_event && v.s1 <= event.before) {
                    double r2 = 0;
                    for (std::size_t k = 0; k < d; ++k) {
                        const double z = v.x1[k] - xt[k] - event.center[k];
                        r2 += z * z;
                    }
                    in_event = r2 <= event.radius * event.radius;
                }
                return true;
            });
            a.clamps += st.clamp_count;
            if (!in_event) return;
            ++a.hits;
            for (const auto& [k, w] : local) a.bins[k] += w;
            a.outside += lost;
        },
        [](detail::HistAcc& total, const detail::HistAcc& part) {
            for (std::size_t k = 0; k < total.bins.size(); ++k) total.bins[k] += part.bins[k];
            total.outside += part.outside;
            total.hits += part.hits;
            total.clamps += part.clamps;
        });
    if (acc.hits == 0) throw NumericalError("estimate_G: the event was never sampled (p_A = 0 in Monte Carlo)");
    const double norm = 1.0 / (static_cast<double>(cfg.n_paths) * H.bin_volume());
    for (std::size_t k = 0; k < nbins; ++k) H.density.values[k] = acc.bins[k] * norm;
    H.outside_mass = acc.outside / static_cast<double>(cfg.n_paths);
    H.p_A = wilson(acc.hits, cfg.n_paths);
    H.clamp_count = acc.clamps;
    return H;
}

// ---------------------------------------------------------------------------
// Norms and reverse Hoelder scans.

/// (sum over bins of (G / w)^p * volume)^{1/p} with w evaluated at bin centres; bins where the
/// weight underflows below 1e-300 are skipped and counted.
struct WeightedNorm {
    double value = 0;
    std::size_t truncated = 0;
};

inline WeightedNorm weighted_Lp_norm(const GridFunction& G, double exponent, const WeightFunction& weight) {
    require(exponent > 1, "weighted_Lp_norm: exponent must exceed 1");
    G.validate();
    weight.validate();
    const bool st = G.time_axis;
    require(st || weight.kind == WeightKind::Psi_lambda_spatial,
            "weighted_Lp_norm: a spatial lattice needs the spatial weight");
    double vol = 1;
    for (double s : G.spacings) vol *= s;
    WeightedNorm out;
    double sum = 0;
    std::size_t k = 0;
    auto copy = G;
    copy.sample([&](double t, std::span<const double> x) {
        const double g = G.values[k++];
        if (g == 0) return 0.0;
        const double w = weight_eval(weight, st ? t : 0.0, x);
        if (w < 1e-300) {
            ++out.truncated;
            return 0.0;
        }
        sum += std::pow(g / w, exponent);
        return 0.0;
    });
    out.value = std::pow(sum * vol, 1 / exponent);
    return out;
}

inline double ball_volume(int d, double R) {
    return std::pow(std::numbers::pi, d / 2.0) / boost::math::tgamma(d / 2.0 + 1) * std::pow(R, d);
}

/// (average of G^p over the region)^{1/p}; regions outside the lattice count as G = 0.
inline double region_power_mean(const GridFunction& G, const Cylinder& C, double p,
                                itolab::detail::SpatialWeightCache* cache, int ball_depth = 4) {
    NormOptions opt;
    opt.ball_depth = ball_depth;
    const auto w = itolab::detail::region_weights(G, C, opt, cache);
    const double n = itolab::detail::norm_with_weights(G, MixedNormSpec{p, p}, w);
    const int sd = G.spatial_dims();
    double vol = ball_volume(sd, C.R);
    if (G.time_axis) vol *= C.R * C.R;
    return n / std::pow(vol, 1 / p);
}

struct RegionRatio {
    Cylinder region;
    double ratio = 0;
};

struct ReverseHolderReport {
    double p = 0;        ///< reverse-Hoelder exponent; the power mean uses p/(p-1)
    double max_ratio = 0;
    double median_ratio = 0;
    Cylinder argmax;
    std::size_t n_regions = 0;
    std::size_t skipped = 0;  ///< regions whose doubled region holds no mass
    std::vector<RegionRatio> rows;

    void write_csv(std::ostream& os) const {
        os.precision(17);
        os << "t0";
        const std::size_t d = rows.empty() ? 0 : rows.front().region.x0.size();
        for (std::size_t i = 0; i < d; ++i) os << ",x" << i;
        os << ",R,ratio\n";
        for (const auto& r : rows) {
            os << r.region.t0;
            for (double v : r.region.x0) os << ',' << v;
            os << ',' << r.region.R << ',' << r.ratio << '\n';
        }
    }
};

/// Regions of radius r: cylinders C_r(t, x) (space-time G) or balls B_r(x) (spatial g), with
/// centres spaced r/2 over [0, reach r^2] x [-reach r, reach r]^d.
inline std::vector<Cylinder> scan_regions(const GridFunction& G, double r, double reach = 2, double step = 0.5) {
    const int sd = G.spatial_dims();
    std::vector<double> xs;
    for (double v = -reach * r; v <= reach * r * (1 + 1e-12); v += step * r) xs.push_back(v);
    std::vector<double> ts{0.0};
    if (G.time_axis)
        for (double v = step * r * r; v <= reach * r * r * (1 + 1e-12); v += step * r * r) ts.push_back(v);
    std::vector<Cylinder> out;
    std::vector<std::size_t> idx(static_cast<std::size_t>(sd), 0);
    for (double t : ts) {
        std::fill(idx.begin(), idx.end(), 0);
        while (true) {
            Point x(static_cast<std::size_t>(sd));
            for (int i = 0; i < sd; ++i) x[i] = xs[idx[i]];
            out.push_back(Cylinder{t, x, r});
            int a = sd - 1;
            for (; a >= 0; --a) {
                if (++idx[a] < xs.size()) break;
                idx[a] = 0;
            }
            if (a < 0) break;
        }
    }
    return out;
}

/// ratio = (mean over C of G^{p/(p-1)})^{(p-1)/p} / (mean over 2C of G), 2C = C_{2r}(t, x).
inline ReverseHolderReport reverse_holder_scan(const GridFunction& G, const std::vector<Cylinder>& regions, double p,
                                               unsigned workers = 1) {
    require(p > 1, "reverse_holder_scan: p must exceed 1");
    require(!regions.empty(), "reverse_holder_scan: no regions");
    G.validate();
    const double pp = p / (p - 1);
    itolab::detail::SpatialWeightCache cache;
    auto vals = parallel_map<double>(regions.size(), workers, [&](std::size_t i) {
        const auto& C = regions[i];
        const Cylinder C2{C.t0, C.x0, 2 * C.R};
        const double den = region_power_mean(G, C2, 1.0, &cache);
        if (!(den > 0)) return -1.0;
        return region_power_mean(G, C, pp, &cache) / den;
    });
    ReverseHolderReport rep;
    rep.p = p;
    std::vector<double> kept;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        if (vals[i] < 0) {
            ++rep.skipped;
            continue;
        }
        rep.rows.push_back({regions[i], vals[i]});
        kept.push_back(vals[i]);
        if (vals[i] > rep.max_ratio) {
            rep.max_ratio = vals[i];
            rep.argmax = regions[i];
        }
    }
    rep.n_regions = kept.size();
    require(!kept.empty(), "reverse_holder_scan: every region was empty");
    rep.median_ratio = median(kept);
    return rep;
}

struct D0Bracket {
    double lo = 0;  ///< first unstable p (or the smallest p scanned if none failed)
    double hi = 0;  ///< last stable p
    double reference_ratio = 0;
    std::vector<std::pair<double, double>> ratios;  ///< (p, max ratio)
    bool collapsed = false;
    std::string warning;
};

/// Walks p_grid downward; p stays stable while the max reverse-Hoelder ratio is at most
/// 2x its value at the first p. Returns [first unstable, last stable].
inline D0Bracket estimate_d0(const GridFunction& G, const std::vector<Cylinder>& regions, std::vector<double> p_grid,
                             unsigned workers = 1) {
    require(!p_grid.empty(), "estimate_d0: empty p grid");
    std::sort(p_grid.begin(), p_grid.end(), std::greater<>());
    D0Bracket b;
    bool failed = false;
    for (double p : p_grid) {
        const auto rep = reverse_holder_scan(G, regions, p, workers);
        b.ratios.push_back({p, rep.max_ratio});
        if (b.ratios.size() == 1) {
            b.reference_ratio = rep.max_ratio;
            b.hi = p;
            continue;
        }
        if (rep.max_ratio <= 2 * b.reference_ratio) {
            b.hi = p;
        } else {
            b.lo = p;
            failed = true;
            break;
        }
    }
    if (!failed) {
        b.lo = p_grid.back();
        b.collapsed = true;
        b.warning = "no instability within the scanned p range; bracket collapses to the scan bounds";
    }
    return b;
}

/// Quadrature of int f G over the lattice (f at bin centres).
template <class F>
double integrate_against(const GridFunction& G, F&& f) {
    double vol = 1;
    for (double s : G.spacings) vol *= s;
    double sum = 0;
    std::size_t k = 0;
    auto copy = G;
    copy.sample([&](double t, std::span<const double> x) {
        sum += f(t, x) * G.values[k++];
        return 0.0;
    });
    return sum * vol;
}

}  // namespace itolab::greens
