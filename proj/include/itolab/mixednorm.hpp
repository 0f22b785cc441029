#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "itolab/errors.hpp"
#include "itolab/parallel.hpp"
#include "itolab/process.hpp"

namespace itolab {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// C_R(t0, x0) = (t0, x0) + [0, R^2) x B_R.
struct Cylinder {
    double t0 = 0;
    Point x0;
    double R = 1;

    void validate() const { require(R > 0 && std::isfinite(R), "Cylinder: R must be positive"); }
    double t1() const { return t0 + R * R; }
};

/// p is the spatial exponent, q the temporal one; either may be kInf.
struct MixedNormSpec {
    double p = 2;
    double q = 2;

    void validate() const { require(p >= 1 && q >= 1, "MixedNormSpec: exponents must be >= 1"); }
};

/// Nonnegative cell values on a rectilinear lattice. When time_axis is set, axis 0 is time
/// and axes 1..dims-1 are space. Values are stored row-major, axis 0 slowest, and represent
/// cell averages over [origin + i*h, origin + (i+1)*h).
struct GridFunction {
    int dims = 0;
    bool time_axis = true;
    Point origin;
    std::vector<double> spacings;
    std::vector<std::size_t> counts;
    std::vector<double> values;

    int spatial_dims() const { return time_axis ? dims - 1 : dims; }
    int first_space_axis() const { return time_axis ? 1 : 0; }

    std::size_t size() const {
        std::size_t n = 1;
        for (auto c : counts) n *= c;
        return n;
    }

    double lo(int axis) const { return origin[axis]; }
    double hi(int axis) const { return origin[axis] + spacings[axis] * static_cast<double>(counts[axis]); }
    double center(int axis, std::size_t i) const {
        return origin[axis] + (static_cast<double>(i) + 0.5) * spacings[axis];
    }

    void validate_shape() const {
        require(dims >= 1, "GridFunction: dims must be positive");
        require(origin.size() == static_cast<std::size_t>(dims) && spacings.size() == origin.size() &&
                    counts.size() == origin.size(),
                "GridFunction: axis arrays have inconsistent sizes");
        for (int a = 0; a < dims; ++a) {
            require(spacings[a] > 0 && std::isfinite(spacings[a]), "GridFunction: spacings must be positive");
            require(counts[a] > 0, "GridFunction: empty axis");
        }
        require(!time_axis || dims >= 2, "GridFunction: a space-time lattice needs a spatial axis");
    }

    void validate() const {
        validate_shape();
        require(values.size() == size(), "GridFunction: value count does not match the lattice");
        for (double v : values) require(std::isfinite(v) && v >= 0, "GridFunction: values must be finite and >= 0");
    }

    static GridFunction zeros(bool time_axis, Point origin, std::vector<double> spacings,
                              std::vector<std::size_t> counts) {
        GridFunction g;
        g.dims = static_cast<int>(origin.size());
        g.time_axis = time_axis;
        g.origin = std::move(origin);
        g.spacings = std::move(spacings);
        g.counts = std::move(counts);
        g.values.assign(g.size(), 0.0);
        return g;
    }

    /// Lattice covering [t_lo, t_hi) x [-half, half)^d with nt x nx^d cells.
    static GridFunction spacetime_box(int d, double t_lo, double t_hi, std::size_t nt, double half, std::size_t nx,
                                      double fill = 0.0) {
        Point o{t_lo};
        std::vector<double> h{(t_hi - t_lo) / static_cast<double>(nt)};
        std::vector<std::size_t> c{nt};
        for (int i = 0; i < d; ++i) {
            o.push_back(-half);
            h.push_back(2 * half / static_cast<double>(nx));
            c.push_back(nx);
        }
        auto g = zeros(true, o, h, c);
        std::fill(g.values.begin(), g.values.end(), fill);
        return g;
    }

    /// Midpoint sampling f(t, x); for spatial lattices t is passed as 0.
    template <class F>
    void sample(F&& f) {
        const int sd = spatial_dims(), s0 = first_space_axis();
        Point x(static_cast<std::size_t>(sd));
        std::vector<std::size_t> idx(static_cast<std::size_t>(dims), 0);
        for (std::size_t n = 0; n < values.size(); ++n) {
            const double t = time_axis ? center(0, idx[0]) : 0.0;
            for (int i = 0; i < sd; ++i) x[i] = center(s0 + i, idx[s0 + i]);
            values[n] = f(t, std::span<const double>(x));
            for (int a = dims - 1; a >= 0; --a) {
                if (++idx[a] < counts[a]) break;
                idx[a] = 0;
            }
        }
    }
};

struct NormOptions {
    int ball_depth = 6;  ///< recursive 4-per-axis subdivision depth for partial ball cells
};

namespace detail {

/// Fraction of the box [lo, hi] inside the open ball B_R(c).
inline double ball_fraction_rec(std::span<const double> lo, std::span<const double> hi, std::span<const double> c,
                                double R, int depth) {
    const std::size_t d = lo.size();
    double near = 0, far = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double a = lo[i] - c[i], b = hi[i] - c[i];
        const double n = a > 0 ? a : (b < 0 ? -b : 0.0);
        const double f = std::max(std::abs(a), std::abs(b));
        near += n * n;
        far += f * f;
    }
    const double R2 = R * R;
    if (far <= R2) return 1.0;
    if (near >= R2) return 0.0;
    if (depth <= 0) {
        // Linear boundary estimate from the signed distance of the centre.
        double r2 = 0, w = 0;
        std::array<double, 16> m{};
        for (std::size_t i = 0; i < d; ++i) {
            m[i] = 0.5 * (lo[i] + hi[i]) - c[i];
            r2 += m[i] * m[i];
        }
        const double r = std::sqrt(r2);
        if (r == 0) return 1.0;
        for (std::size_t i = 0; i < d; ++i) w += std::abs(m[i] / r) * (hi[i] - lo[i]);
        return std::clamp(0.5 - (r - R) / w, 0.0, 1.0);
    }
    constexpr int kSplit = 4;
    std::array<double, 16> slo{}, shi{};
    std::array<int, 16> k{};
    double sum = 0;
    std::size_t total = 1;
    for (std::size_t i = 0; i < d; ++i) total *= kSplit;
    for (std::size_t n = 0; n < total; ++n) {
        std::size_t r = n;
        for (std::size_t i = 0; i < d; ++i) {
            k[i] = static_cast<int>(r % kSplit);
            r /= kSplit;
            const double h = (hi[i] - lo[i]) / kSplit;
            slo[i] = lo[i] + k[i] * h;
            shi[i] = slo[i] + h;
        }
        sum += ball_fraction_rec(std::span<const double>(slo.data(), d), std::span<const double>(shi.data(), d), c, R,
                                 depth - 1);
    }
    return sum / static_cast<double>(total);
}

}  // namespace detail

inline double ball_fraction(std::span<const double> lo, std::span<const double> hi, std::span<const double> c,
                            double R, int depth = 6) {
    require(lo.size() <= 16, "ball_fraction: dimension too large");
    return detail::ball_fraction_rec(lo, hi, c, R, depth);
}

namespace detail {

/// Index range [first, last) of cells on `axis` overlapping [a, b).
inline std::pair<std::size_t, std::size_t> overlap_range(const GridFunction& f, int axis, double a, double b) {
    const double h = f.spacings[axis], o = f.origin[axis];
    const auto n = static_cast<double>(f.counts[axis]);
    const double i0 = std::clamp(std::floor((a - o) / h), 0.0, n);
    const double i1 = std::clamp(std::ceil((b - o) / h), 0.0, n);
    return {static_cast<std::size_t>(i0), static_cast<std::size_t>(i1)};
}

/// Region restricted to a box of the lattice, with per-cell measure weights.
struct RegionWeights {
    std::size_t t_first = 0, t_last = 1;
    std::vector<double> tw;  ///< time measure per slice (dt * overlap fraction)
    std::vector<std::pair<std::size_t, std::size_t>> sranges;
    std::vector<double> sw;  ///< spatial measure per spatial cell in the box (row-major)
    std::size_t space_size = 1;
};

/// Memo of spatial ball weights keyed by radius and the centre's offset within its cell;
/// scans over lattice-aligned centres reuse the same pattern many times.
class SpatialWeightCache {
public:
    using Key = std::vector<std::int64_t>;

    template <class Make>
    std::vector<double> get(const Key& key, Make&& make) {
        {
            std::lock_guard lock(mu_);
            if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        }
        auto v = make();
        std::lock_guard lock(mu_);
        return memo_.emplace(key, std::move(v)).first->second;
    }

private:
    std::mutex mu_;
    std::map<Key, std::vector<double>> memo_;
};

inline RegionWeights region_weights(const GridFunction& f, const std::optional<Cylinder>& region,
                                    const NormOptions& opt, SpatialWeightCache* cache = nullptr) {
    RegionWeights w;
    const int sd = f.spatial_dims(), s0 = f.first_space_axis();
    if (f.time_axis) {
        if (region) {
            std::tie(w.t_first, w.t_last) = overlap_range(f, 0, region->t0, region->t1());
        } else {
            w.t_first = 0;
            w.t_last = f.counts[0];
        }
        for (std::size_t j = w.t_first; j < w.t_last; ++j) {
            const double a = f.origin[0] + static_cast<double>(j) * f.spacings[0];
            const double b = a + f.spacings[0];
            w.tw.push_back(region ? std::max(0.0, std::min(b, region->t1()) - std::max(a, region->t0))
                                  : f.spacings[0]);
        }
    } else {
        w.tw.push_back(1.0);
    }
    double cell_vol = 1;
    for (int i = 0; i < sd; ++i) {
        const int ax = s0 + i;
        cell_vol *= f.spacings[ax];
        if (region) {
            w.sranges.push_back(overlap_range(f, ax, region->x0[i] - region->R, region->x0[i] + region->R));
        } else {
            w.sranges.push_back({0, f.counts[ax]});
        }
        w.space_size *= w.sranges.back().second - w.sranges.back().first;
    }
    if (!region || w.space_size == 0) {
        w.sw.assign(w.space_size, cell_vol);
        return w;
    }
    auto make = [&] {
        std::vector<double> sw(w.space_size);
        std::vector<std::size_t> idx(static_cast<std::size_t>(sd));
        Point lo(static_cast<std::size_t>(sd)), hi(static_cast<std::size_t>(sd));
        for (std::size_t n = 0; n < w.space_size; ++n) {
            std::size_t r = n;
            for (int i = sd - 1; i >= 0; --i) {
                const std::size_t len = w.sranges[i].second - w.sranges[i].first;
                idx[i] = w.sranges[i].first + r % len;
                r /= len;
                lo[i] = f.origin[s0 + i] + static_cast<double>(idx[i]) * f.spacings[s0 + i];
                hi[i] = lo[i] + f.spacings[s0 + i];
            }
            sw[n] = cell_vol * ball_fraction(lo, hi, region->x0, region->R, opt.ball_depth);
        }
        return sw;
    };
    if (!cache) {
        w.sw = make();
        return w;
    }
    SpatialWeightCache::Key key{std::llround(region->R / f.spacings[s0] * 1e9), opt.ball_depth};
    for (int i = 0; i < sd; ++i) {
        const double first_lo = f.origin[s0 + i] + static_cast<double>(w.sranges[i].first) * f.spacings[s0 + i];
        key.push_back(std::llround((region->x0[i] - first_lo) / f.spacings[s0 + i] * 1e9));
        key.push_back(static_cast<std::int64_t>(w.sranges[i].second - w.sranges[i].first));
    }
    w.sw = cache->get(key, make);
    return w;
}

/// Flat lattice index of time slice j and spatial box cell n.
inline std::size_t flat_index(const GridFunction& f, const RegionWeights& w, std::size_t j, std::size_t n) {
    const int sd = f.spatial_dims(), s0 = f.first_space_axis();
    std::array<std::size_t, 16> idx{};
    std::size_t r = n;
    for (int i = sd - 1; i >= 0; --i) {
        const std::size_t len = w.sranges[i].second - w.sranges[i].first;
        idx[i] = w.sranges[i].first + r % len;
        r /= len;
    }
    std::size_t flat = f.time_axis ? j : 0;
    for (int i = 0; i < sd; ++i) flat = flat * f.counts[s0 + i] + idx[i];
    return flat;
}

}  // namespace detail

namespace detail {

/// Norm of f (or of the constant 1 when `ones`) with precomputed region weights.
inline double norm_with_weights(const GridFunction& f, const MixedNormSpec& spec, const RegionWeights& w,
                                bool ones = false) {
    const std::size_t nt = w.tw.size(), ns = w.space_size;
    const double p = spec.p, q = f.time_axis ? spec.q : spec.p;
    auto val = [&](std::size_t j, std::size_t n) {
        return ones ? 1.0 : f.values[flat_index(f, w, w.t_first + j, n)];
    };
    // Lp-type accumulation over (value, weight) pairs; infinite exponents take the max.
    auto outer = [](double e, auto&& each) {
        if (std::isinf(e)) {
            double m = 0;
            each([&](double v, double wt) {
                if (wt > 0) m = std::max(m, v);
            });
            return m;
        }
        double s = 0;
        each([&](double v, double wt) {
            if (wt > 0 && v > 0) s += wt * std::pow(v, e);
        });
        return std::pow(s, 1.0 / e);
    };
    if (p >= q) {
        return outer(q, [&](auto&& emit) {
            for (std::size_t j = 0; j < nt; ++j) {
                const double inner = outer(p, [&](auto&& e2) {
                    for (std::size_t n = 0; n < ns; ++n) e2(val(j, n), w.sw[n]);
                });
                emit(inner, w.tw[j]);
            }
        });
    }
    return outer(p, [&](auto&& emit) {
        for (std::size_t n = 0; n < ns; ++n) {
            const double inner = outer(q, [&](auto&& e2) {
                for (std::size_t j = 0; j < nt; ++j) e2(val(j, n), w.tw[j]);
            });
            emit(inner, w.sw[n]);
        }
    });
}

inline void check_region(const GridFunction& f, const Cylinder& C) {
    C.validate();
    require(C.x0.size() == static_cast<std::size_t>(f.spatial_dims()),
            "mixed_norm: cylinder dimension does not match the lattice");
}

inline double sharp_norm_cached(const GridFunction& f, const MixedNormSpec& spec, const Cylinder& C,
                                const NormOptions& opt, SpatialWeightCache* cache) {
    const auto w = region_weights(f, C, opt, cache);
    const double denom = norm_with_weights(f, spec, w, true);
    require(denom > 0, "normalized_sharp_norm: cylinder does not meet the lattice");
    return norm_with_weights(f, spec, w) / denom;
}

}  // namespace detail

/// ||f I_region||_{L_{p,q}} by midpoint quadrature over lattice cells, each weighted by the
/// measure of its intersection with the region. For p >= q the x-integral is inner, for
/// p <= q the t-integral is inner. Infinite exponents are lattice maxima over cells meeting
/// the region. For lattices without a time axis this is the spatial L_p norm and q is unused.
inline double mixed_norm(const GridFunction& f, const MixedNormSpec& spec,
                         const std::optional<Cylinder>& region = std::nullopt, const NormOptions& opt = {}) {
    spec.validate();
    f.validate();
    if (region) detail::check_region(f, *region);
    return detail::norm_with_weights(f, spec, detail::region_weights(f, region, opt));
}

/// mixed_norm(f) / mixed_norm(1) over the same cylinder and lattice.
inline double normalized_sharp_norm(const GridFunction& f, const MixedNormSpec& spec, const Cylinder& C,
                                    const NormOptions& opt = {}) {
    spec.validate();
    f.validate();
    detail::check_region(f, C);
    return detail::sharp_norm_cached(f, spec, C, opt, nullptr);
}

// ---------------------------------------------------------------------------
// Cylinder scans

struct NormTerm {
    const GridFunction* f = nullptr;
    MixedNormSpec spec;
};

struct ScanGrid {
    int levels = 3;              ///< dyadic radii rho_max * 2^{-k}, k < levels
    double spacing_factor = 0.5;  ///< centre spacing rho * factor in space, rho^2 * factor in time
    int ball_depth = 3;
};

struct MorreyScanReport {
    double value = 0;  ///< sup over scanned cylinders of rho * sum of #-norms
    Cylinder argmax;
    std::size_t n_cylinders = 0;
    std::vector<std::pair<double, double>> per_rho;  ///< (rho, max over centres)
};

/// Cylinders of radius rho lying inside the lattice domain, centres spaced by
/// factor * rho in space and factor * rho^2 in time.
inline std::vector<Cylinder> cylinder_lattice(const GridFunction& f, double rho, double factor) {
    require(f.time_axis, "cylinder_lattice: needs a space-time lattice");
    const int sd = f.spatial_dims();
    std::vector<std::vector<double>> axes(static_cast<std::size_t>(sd + 1));
    auto fill = [](std::vector<double>& out, double a, double b, double step) {
        for (int k = 0;; ++k) {
            const double v = a + k * step;
            if (v > b + 1e-12 * std::max(1.0, std::abs(b))) break;
            out.push_back(v);
        }
    };
    fill(axes[0], f.lo(0), f.hi(0) - rho * rho, factor * rho * rho);
    for (int i = 0; i < sd; ++i) fill(axes[i + 1], f.lo(i + 1) + rho, f.hi(i + 1) - rho, factor * rho);
    std::vector<Cylinder> out;
    for (const auto& a : axes)
        if (a.empty()) return out;
    std::vector<std::size_t> idx(axes.size(), 0);
    for (;;) {
        Cylinder c;
        c.t0 = axes[0][idx[0]];
        c.R = rho;
        for (int i = 0; i < sd; ++i) c.x0.push_back(axes[i + 1][idx[i + 1]]);
        out.push_back(std::move(c));
        int a = static_cast<int>(axes.size()) - 1;
        for (; a >= 0; --a) {
            if (++idx[a] < axes[a].size()) break;
            idx[a] = 0;
        }
        if (a < 0) break;
    }
    return out;
}

inline MorreyScanReport morrey_condition_scan(const std::vector<NormTerm>& terms, double rho_max,
                                              const ScanGrid& grid = {}, unsigned workers = 1) {
    require(!terms.empty(), "morrey_condition_scan: no norm terms");
    require(rho_max > 0, "morrey_condition_scan: rho_max must be positive");
    require(grid.levels >= 1, "morrey_condition_scan: need at least one scale");
    const GridFunction& ref = *terms.front().f;
    for (const auto& t : terms) {
        require(t.f != nullptr, "morrey_condition_scan: null term");
        t.f->validate();
        t.spec.validate();
    }
    detail::SpatialWeightCache cache;
    MorreyScanReport rep;
    NormOptions opt;
    opt.ball_depth = grid.ball_depth;
    bool first = true;
    for (int k = 0; k < grid.levels; ++k) {
        const double rho = rho_max * std::ldexp(1.0, -k);
        const auto cyl = cylinder_lattice(ref, rho, grid.spacing_factor);
        if (cyl.empty()) continue;
        const auto vals = parallel_map<double>(cyl.size(), workers, [&](std::size_t i) {
            double s = 0;
            for (const auto& t : terms) s += detail::sharp_norm_cached(*t.f, t.spec, cyl[i], opt, &cache);
            return rho * s;
        });
        double best = 0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            best = std::max(best, vals[i]);
            if (first || vals[i] > rep.value) {
                rep.value = vals[i];
                rep.argmax = cyl[i];
                first = false;
            }
        }
        rep.per_rho.push_back({rho, best});
        rep.n_cylinders += cyl.size();
    }
    require(rep.n_cylinders > 0, "morrey_condition_scan: scan grid is empty (radius too large for the lattice)");
    return rep;
}

inline MorreyScanReport morrey_condition_scan(const GridFunction& h, const std::vector<MixedNormSpec>& families,
                                              double rho_max, const ScanGrid& grid = {}, unsigned workers = 1) {
    std::vector<NormTerm> terms;
    for (const auto& s : families) terms.push_back({&h, s});
    return morrey_condition_scan(terms, rho_max, grid, workers);
}

// ---------------------------------------------------------------------------
// The separable singular function g(t, x) = |t|^{-beta} |x|^{-alpha}, alpha + 2 beta = d + 1.

namespace detail {

/// Average of |t|^{-gamma} over [a, b], gamma < 1.
inline double power_time_average(double a, double b, double gamma) {
    auto F = [gamma](double t) { return std::copysign(std::pow(std::abs(t), 1 - gamma), t) / (1 - gamma); };
    if (gamma == 0) return 1.0;
    return (F(b) - F(a)) / (b - a);
}

/// Integral of |x|^{-a} over a box not containing the origin in its interior.
inline double power_space_regular(std::span<const double> lo, std::span<const double> hi, double a, int depth) {
    const std::size_t d = lo.size();
    double dist2 = 0, diam2 = 0, vol = 1;
    for (std::size_t i = 0; i < d; ++i) {
        const double n = lo[i] > 0 ? lo[i] : (hi[i] < 0 ? -hi[i] : 0.0);
        dist2 += n * n;
        diam2 += (hi[i] - lo[i]) * (hi[i] - lo[i]);
        vol *= hi[i] - lo[i];
    }
    if (dist2 > 16 * diam2 || depth <= 0) {
        // 3-point Gauss-Legendre tensor rule.
        static constexpr double node[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
        static constexpr double wt[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
        std::size_t total = 1;
        for (std::size_t i = 0; i < d; ++i) total *= 3;
        double s = 0;
        for (std::size_t n = 0; n < total; ++n) {
            std::size_t r = n;
            double w = 1, r2 = 0;
            for (std::size_t i = 0; i < d; ++i) {
                const std::size_t k = r % 3;
                r /= 3;
                const double x = 0.5 * (lo[i] + hi[i]) + 0.5 * (hi[i] - lo[i]) * node[k];
                r2 += x * x;
                w *= 0.5 * wt[k];
            }
            s += w * std::pow(r2, -0.5 * a);
        }
        return s * vol;
    }
    std::array<double, 16> slo{}, shi{};
    std::size_t total = std::size_t{1} << d;
    double s = 0;
    for (std::size_t n = 0; n < total; ++n) {
        for (std::size_t i = 0; i < d; ++i) {
            const double m = 0.5 * (lo[i] + hi[i]);
            const bool up = (n >> i) & 1u;
            slo[i] = up ? m : lo[i];
            shi[i] = up ? hi[i] : m;
        }
        s += power_space_regular(std::span<const double>(slo.data(), d), std::span<const double>(shi.data(), d), a,
                                 depth - 1);
    }
    return s;
}

/// Integral of |x|^{-a} over [0, L_1] x ... x [0, L_d] via self-similarity at the corner:
/// I = (sum over the 2^d - 1 non-corner halves) / (1 - 2^{-(d - a)}).
inline double power_space_corner(std::span<const double> L, double a) {
    const std::size_t d = L.size();
    std::array<double, 16> slo{}, shi{};
    double s = 0;
    for (std::size_t n = 1; n < (std::size_t{1} << d); ++n) {
        for (std::size_t i = 0; i < d; ++i) {
            const bool up = (n >> i) & 1u;
            slo[i] = up ? 0.5 * L[i] : 0.0;
            shi[i] = up ? L[i] : 0.5 * L[i];
        }
        s += power_space_regular(std::span<const double>(slo.data(), d), std::span<const double>(shi.data(), d), a,
                                 14);
    }
    return s / (1.0 - std::pow(2.0, -(static_cast<double>(d) - a)));
}

/// Average of |x|^{-a} over the box [lo, hi], a < d.
inline double power_space_average(std::span<const double> lo, std::span<const double> hi, double a) {
    const std::size_t d = lo.size();
    double vol = 1;
    for (std::size_t i = 0; i < d; ++i) vol *= hi[i] - lo[i];
    bool touches = true;
    for (std::size_t i = 0; i < d; ++i) touches = touches && lo[i] <= 0 && hi[i] >= 0;
    if (!touches) return power_space_regular(lo, hi, a, 14) / vol;
    // Split at the origin into orthant boxes with the origin at a corner.
    double s = 0;
    std::array<double, 16> L{};
    for (std::size_t n = 0; n < (std::size_t{1} << d); ++n) {
        bool empty = false;
        for (std::size_t i = 0; i < d; ++i) {
            L[i] = ((n >> i) & 1u) ? hi[i] : -lo[i];
            empty = empty || L[i] <= 0;
        }
        if (!empty) s += power_space_corner(std::span<const double>(L.data(), d), a);
    }
    return s / vol;
}

}  // namespace detail

class Example21 {
public:
    Example21(int d, double alpha, double beta) : d_(d), alpha_(alpha), beta_(beta) {
        require(d >= 1, "example21: d must be positive");
        require(alpha > 0 && alpha < d, "example21: alpha must lie in (0, d)");
        require(beta > 0 && beta < 1, "example21: beta must lie in (0, 1)");
        require(std::abs(alpha + 2 * beta - (d + 1)) <= 1e-12, "example21: need alpha + 2 beta = d + 1");
    }

    int d() const { return d_; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    double g(double t, std::span<const double> x) const {
        double r2 = 0;
        for (double v : x) r2 += v * v;
        return std::pow(std::abs(t), -beta_) * std::pow(r2, -0.5 * alpha_);
    }
    double h(double t, std::span<const double> x) const { return std::pow(g(t, x), 1.0 / (d_ + 1)); }

    /// Lattice of exact cell averages of g^power (power = 1 for g, 1/(d+1) for h).
    GridFunction lattice(Point origin, std::vector<double> spacings, std::vector<std::size_t> counts,
                         double power = 1.0) const {
        require(origin.size() == static_cast<std::size_t>(d_ + 1), "example21: lattice must be space-time");
        require(power > 0 && power * beta_ < 1 && power * alpha_ < d_, "example21: power makes g^power non-integrable");
        auto f = GridFunction::zeros(true, std::move(origin), std::move(spacings), std::move(counts));
        f.validate_shape();
        std::vector<double> tav(f.counts[0]);
        for (std::size_t j = 0; j < tav.size(); ++j) {
            const double a = f.origin[0] + static_cast<double>(j) * f.spacings[0];
            tav[j] = detail::power_time_average(a, a + f.spacings[0], power * beta_);
        }
        std::size_t ns = 1;
        for (int i = 1; i <= d_; ++i) ns *= f.counts[i];
        std::vector<double> sav(ns);
        Point lo(static_cast<std::size_t>(d_)), hi(static_cast<std::size_t>(d_));
        for (std::size_t n = 0; n < ns; ++n) {
            std::size_t r = n;
            for (int i = d_; i >= 1; --i) {
                const std::size_t k = r % f.counts[i];
                r /= f.counts[i];
                lo[i - 1] = f.origin[i] + static_cast<double>(k) * f.spacings[i];
                hi[i - 1] = lo[i - 1] + f.spacings[i];
            }
            sav[n] = detail::power_space_average(lo, hi, power * alpha_);
        }
        for (std::size_t j = 0; j < tav.size(); ++j)
            for (std::size_t n = 0; n < ns; ++n) f.values[j * ns + n] = tav[j] * sav[n];
        return f;
    }

    /// Lattice aligned with C_R(t0, x0): nt time cells over [t0, t0 + R^2) and nx cells per axis over
    /// the bounding box of the ball.
    GridFunction cylinder_lattice(const Cylinder& C, std::size_t nt, std::size_t nx, double power = 1.0) const {
        Point o{C.t0};
        std::vector<double> h{C.R * C.R / static_cast<double>(nt)};
        std::vector<std::size_t> c{nt};
        for (int i = 0; i < d_; ++i) {
            o.push_back(C.x0[i] - C.R);
            h.push_back(2 * C.R / static_cast<double>(nx));
            c.push_back(nx);
        }
        return lattice(o, h, c, power);
    }

private:
    int d_;
    double alpha_, beta_;
};

inline Example21 example21_function(int d, double alpha, double beta) { return Example21(d, alpha, beta); }

// ---------------------------------------------------------------------------
// Weights

enum class WeightKind { Phi_lambda, Psi_lambda_spacetime, Psi_lambda_spatial };

struct WeightFunction {
    WeightKind kind = WeightKind::Psi_lambda_spacetime;
    double lambda = 1;
    double xi_bar = 0.5;

    void validate() const {
        require(lambda > 0, "WeightFunction: lambda must be positive");
        require(xi_bar > 0 && xi_bar < 1, "WeightFunction: xi_bar must lie in (0, 1)");
    }
};

inline double weight_eval(const WeightFunction& w, double t, std::span<const double> x) {
    double r2 = 0;
    for (double v : x) r2 += v * v;
    const double r = std::sqrt(r2), sl = std::sqrt(w.lambda);
    switch (w.kind) {
        case WeightKind::Phi_lambda:
            require(t >= 0, "weight_eval: t must be nonnegative");
            return std::exp(-sl * (std::sqrt(t) + r) * w.xi_bar / 4);
        case WeightKind::Psi_lambda_spacetime:
            require(t >= 0, "weight_eval: t must be nonnegative");
            return std::exp(-sl * (r + std::sqrt(t)) * w.xi_bar / 16);
        case WeightKind::Psi_lambda_spatial:
            return std::exp(-sl * r * w.xi_bar / 16);
    }
    return 1.0;
}

// ---------------------------------------------------------------------------
// I/O

/// CSV: '#'-prefixed header lines describing the axes, then one row per cell with the
/// cell-centre coordinates and value.
inline void write_grid_csv(std::ostream& os, const GridFunction& f) {
    f.validate();
    os << "# dims=" << f.dims << " time_axis=" << (f.time_axis ? 1 : 0) << "\n";
    char buf[64];
    auto list = [&](const char* name, auto const& v) {
        os << "# " << name << "=";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(v[i])>>)
                std::snprintf(buf, sizeof buf, "%.17g", v[i]);
            else
                std::snprintf(buf, sizeof buf, "%zu", static_cast<std::size_t>(v[i]));
            os << (i ? "," : "") << buf;
        }
        os << "\n";
    };
    list("origin", f.origin);
    list("spacings", f.spacings);
    list("counts", f.counts);
    for (int a = 0; a < f.dims; ++a) os << (a ? "," : "") << ((f.time_axis && a == 0) ? std::string("t") : "x_" + std::to_string(a + (f.time_axis ? 0 : 1)));
    os << ",value\n";
    std::vector<std::size_t> idx(static_cast<std::size_t>(f.dims), 0);
    for (std::size_t n = 0; n < f.values.size(); ++n) {
        for (int a = 0; a < f.dims; ++a) {
            std::snprintf(buf, sizeof buf, "%.17g,", f.center(a, idx[a]));
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g\n", f.values[n]);
        os << buf;
        for (int a = f.dims - 1; a >= 0; --a) {
            if (++idx[a] < f.counts[a]) break;
            idx[a] = 0;
        }
    }
}

inline GridFunction read_grid_csv(std::istream& is) {
    GridFunction f;
    std::string line;
    auto parse_list = [](const std::string& s) {
        std::vector<double> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
        return out;
    };
    int header = 0;
    while (header < 5 && std::getline(is, line)) {
        require(line.rfind("# ", 0) == 0, "read_grid_csv: malformed header");
        if (line.rfind("# dims=", 0) == 0) {
            std::istringstream ss(line.substr(2));
            std::string a, b;
            ss >> a >> b;
            f.dims = std::stoi(a.substr(5));
            f.time_axis = b == "time_axis=1";
        } else if (line.rfind("# origin=", 0) == 0) {
            f.origin = parse_list(line.substr(9));
        } else if (line.rfind("# spacings=", 0) == 0) {
            f.spacings = parse_list(line.substr(11));
        } else if (line.rfind("# counts=", 0) == 0) {
            for (double v : parse_list(line.substr(9))) f.counts.push_back(static_cast<std::size_t>(v));
        }
        ++header;
        if (header == 4) break;
    }
    require(static_cast<bool>(std::getline(is, line)), "read_grid_csv: missing column header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto pos = line.rfind(',');
        f.values.push_back(std::stod(line.substr(pos + 1)));
    }
    f.validate();
    return f;
}

/// Binary dump: "ITGF" magic, u32 dims, u8 time_axis, dims x f64 origin, dims x f64 spacings,
/// dims x u64 counts, then the values row-major as f64 (native little-endian).
inline void write_grid_binary(std::ostream& os, const GridFunction& f) {
    f.validate();
    os.write("ITGF", 4);
    const auto dims = static_cast<std::uint32_t>(f.dims);
    const std::uint8_t ta = f.time_axis ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&dims), sizeof dims);
    os.write(reinterpret_cast<const char*>(&ta), 1);
    os.write(reinterpret_cast<const char*>(f.origin.data()), static_cast<std::streamsize>(8 * f.origin.size()));
    os.write(reinterpret_cast<const char*>(f.spacings.data()), static_cast<std::streamsize>(8 * f.spacings.size()));
    for (auto c : f.counts) {
        const auto u = static_cast<std::uint64_t>(c);
        os.write(reinterpret_cast<const char*>(&u), 8);
    }
    os.write(reinterpret_cast<const char*>(f.values.data()), static_cast<std::streamsize>(8 * f.values.size()));
}

inline GridFunction read_grid_binary(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is && std::memcmp(magic, "ITGF", 4) == 0, "read_grid_binary: bad magic");
    std::uint32_t dims = 0;
    std::uint8_t ta = 0;
    is.read(reinterpret_cast<char*>(&dims), sizeof dims);
    is.read(reinterpret_cast<char*>(&ta), 1);
    require(is && dims >= 1 && dims <= 16, "read_grid_binary: bad header");
    GridFunction f;
    f.dims = static_cast<int>(dims);
    f.time_axis = ta != 0;
    f.origin.resize(dims);
    f.spacings.resize(dims);
    is.read(reinterpret_cast<char*>(f.origin.data()), 8 * dims);
    is.read(reinterpret_cast<char*>(f.spacings.data()), 8 * dims);
    for (std::uint32_t a = 0; a < dims; ++a) {
        std::uint64_t u = 0;
        is.read(reinterpret_cast<char*>(&u), 8);
        f.counts.push_back(static_cast<std::size_t>(u));
    }
    require(static_cast<bool>(is), "read_grid_binary: truncated header");
    f.values.resize(f.size());
    is.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(8 * f.values.size()));
    require(static_cast<bool>(is), "read_grid_binary: truncated values");
    f.validate();
    return f;
}

}  // namespace itolab
