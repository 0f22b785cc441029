#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "itolab/errors.hpp"

namespace itolab {

/// Mean with a symmetric confidence interval.
struct Estimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;

    double lo(double z = 1.96) const { return mean - z * stderr_; }
    double hi(double z = 1.96) const { return mean + z * stderr_; }
};

/// Welford accumulator. Feed values in a fixed order for reproducible output.
class RunningStats {
public:
    void add(double v) {
        ++n_;
        const double delta = v - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (v - mean_);
        max_ = n_ == 1 ? v : std::max(max_, v);
        min_ = n_ == 1 ? v : std::min(min_, v);
    }

    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }
    double stderr_() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
    double max() const { return max_; }
    double min() const { return min_; }
    Estimate estimate() const { return {mean_, stderr_(), n_}; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
    double max_ = 0.0;
    double min_ = 0.0;
};

inline Estimate mean_estimate(std::span<const double> values) {
    RunningStats s;
    for (double v : values) s.add(v);
    return s.estimate();
}

/// Wilson score interval for a binomial proportion.
struct Proportion {
    double p = 0.0;
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n = 0;
    std::size_t hits = 0;
    double stderr_() const { return n ? std::sqrt(p * (1 - p) / static_cast<double>(n)) : 0.0; }
};

inline Proportion wilson(std::size_t hits, std::size_t n, double z = 1.96) {
    Proportion out;
    out.n = n;
    out.hits = hits;
    if (n == 0) return out;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(hits) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2 * nn)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / denom;
    out.p = p;
    out.lo = std::max(0.0, centre - half);
    out.hi = std::min(1.0, centre + half);
    return out;
}

/// Ordinary least squares y = a + b x.
struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double slope_stderr = 0.0;
    double r_squared = 1.0;
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "linear_fit: size mismatch");
    require(x.size() >= 2, "linear_fit: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0, "linear_fit: degenerate abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss += r * r;
    }
    f.slope_stderr = x.size() > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
    f.r_squared = syy > 0 ? 1.0 - rss / syy : 1.0;
    return f;
}

struct ExponentFit {
    double exponent = 0.0;
    double stderr_ = 0.0;
    double prefactor = 0.0;
    double r_squared = 1.0;
};

/// Least-squares slope of log(value) against log(scale).
inline ExponentFit fit_scaling_exponent(std::span<const std::pair<double, double>> samples) {
    require(samples.size() >= 3, "fit_scaling_exponent: need at least 3 scales");
    std::vector<double> lx, ly;
    for (auto [s, v] : samples) {
        require(s > 0, "fit_scaling_exponent: scale must be positive");
        require(v > 0 && std::isfinite(v), "fit_scaling_exponent: value must be positive");
        lx.push_back(std::log(s));
        ly.push_back(std::log(v));
    }
    const auto lf = linear_fit(lx, ly);
    return {lf.slope, lf.slope_stderr, std::exp(lf.intercept), lf.r_squared};
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Empirical quantile with linear interpolation, q in [0,1].
inline double quantile(std::vector<double> v, double q) {
    require(!v.empty(), "quantile of empty set");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    const double w = pos - static_cast<double>(i);
    return v[i] * (1 - w) + v[i + 1] * w;
}

}  // namespace itolab
