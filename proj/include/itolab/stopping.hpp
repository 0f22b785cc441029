#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "itolab/errors.hpp"
#include "itolab/process.hpp"

namespace itolab::stopping {

enum class StopKind { exit, cap, hit, horizon };

inline const char* to_string(StopKind k) {
    switch (k) {
        case StopKind::exit: return "exit";
        case StopKind::cap: return "cap";
        case StopKind::hit: return "hit";
        case StopKind::horizon: return "horizon";
    }
    return "?";
}

/// Result of a stopping functional. kind == horizon means right-censored:
/// value is then only a lower bound.
struct StoppingOutcome {
    double value = 0;
    StopKind kind = StopKind::horizon;
    Point state_at_stop;
    std::size_t time_index = 0;

    bool censored() const { return kind == StopKind::horizon; }
};

inline double norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Online trackers. Each is fed (k, s, rel, abs) for k = 0, 1, ... where
// rel = x_{t+s} - x_t and abs = x_{t+s}. feed() returns true once stopped.

/// First grid time with |rel - offset| >= R, optionally capped at `cap`.
class ExitTracker {
public:
    ExitTracker(Point offset, double R, double cap = std::numeric_limits<double>::infinity())
        : offset_(std::move(offset)), R_(R), cap_(cap) {
        require(R > 0, "exit time: R must be positive");
    }

    bool feed(std::size_t k, double s, std::span<const double> rel, std::span<const double> abs) {
        if (done_) return true;
        double r2 = 0;
        for (std::size_t i = 0; i < rel.size(); ++i) {
            const double z = rel[i] - offset_[i];
            r2 += z * z;
        }
        if (r2 >= R_ * R_ && s <= cap_) {
            finish(s, StopKind::exit, k, abs);
        } else if (s >= cap_) {
            finish(cap_, StopKind::cap, k, abs);
        }
        last_k_ = k;
        last_s_ = s;
        last_abs_.assign(abs.begin(), abs.end());
        return done_;
    }

    bool done() const { return done_; }

    /// Outcome; if the path ended before stopping, the outcome is horizon-censored.
    StoppingOutcome outcome() const {
        if (done_) return out_;
        return {last_s_, StopKind::horizon, last_abs_, last_k_};
    }

private:
    void finish(double value, StopKind kind, std::size_t k, std::span<const double> abs) {
        done_ = true;
        out_ = {value, kind, Point(abs.begin(), abs.end()), k};
    }

    Point offset_;
    double R_;
    double cap_;
    bool done_ = false;
    StoppingOutcome out_;
    std::size_t last_k_ = 0;
    double last_s_ = 0;
    Point last_abs_;
};

/// First grid time with |rel - offset| <= R (closed ball).
class HitTracker {
public:
    HitTracker(Point offset, double R) : offset_(std::move(offset)), R_(R) {
        require(R > 0, "hitting time: R must be positive");
    }

    bool feed(std::size_t k, double s, std::span<const double> rel, std::span<const double> abs) {
        if (done_) return true;
        if (dist(rel, offset_) <= R_) {
            done_ = true;
            out_ = {s, StopKind::hit, Point(abs.begin(), abs.end()), k};
        }
        last_k_ = k;
        last_s_ = s;
        last_abs_.assign(abs.begin(), abs.end());
        return done_;
    }

    bool done() const { return done_; }
    StoppingOutcome outcome() const {
        if (done_) return out_;
        return {last_s_, StopKind::horizon, last_abs_, last_k_};
    }

private:
    Point offset_;
    double R_;
    bool done_ = false;
    StoppingOutcome out_;
    std::size_t last_k_ = 0;
    double last_s_ = 0;
    Point last_abs_;
};

/// Geometry of a traversal from `start` to the ball B_{R/16}(target) inside the
/// open convex hull of B_R(start) and B_R(target).
struct SausageSpec {
    Point start;
    Point target;
    double R = 1;

    int n() const { return static_cast<int>(std::floor((16 * dist(start, target) + R) / (4 * R))); }

    void validate() const {
        require(R > 0, "SausageSpec: R must be positive");
        require(start.size() == target.size(), "SausageSpec: dimension mismatch");
        require(16 * dist(start, target) >= 3 * R, "SausageSpec: need 16|x - y| >= 3R");
    }
};

/// Distance from z to the segment [a, b].
inline double dist_to_segment(std::span<const double> z, std::span<const double> a, std::span<const double> b) {
    double ab2 = 0, t = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        ab2 += (b[i] - a[i]) * (b[i] - a[i]);
        t += (z[i] - a[i]) * (b[i] - a[i]);
    }
    t = ab2 > 0 ? std::clamp(t / ab2, 0.0, 1.0) : 0.0;
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double p = a[i] + t * (b[i] - a[i]);
        s += (z[i] - p) * (z[i] - p);
    }
    return std::sqrt(s);
}

struct TraversalResult {
    bool reached = false;
    bool within_window = false;
    bool exit_before_hit = false;
    bool censored = false;
    double hit_time = std::numeric_limits<double>::quiet_NaN();
};

class SausageTracker {
public:
    SausageTracker(SausageSpec spec, double T0, double T1) : spec_(std::move(spec)), T0_(T0), T1_(T1) {
        spec_.validate();
        require(T0 >= 0 && T1 > T0, "sausage: need 0 <= T0 < T1");
    }

    bool feed(std::size_t, double s, std::span<const double>, std::span<const double> abs) {
        if (done_) return true;
        if (dist(abs, spec_.target) <= spec_.R / 16) {
            done_ = true;
            res_.reached = true;
            res_.hit_time = s;
            const double n = spec_.n(), r2 = spec_.R * spec_.R;
            res_.within_window = s >= n * T0_ * r2 && s <= n * T1_ * r2;
        } else if (dist_to_segment(abs, spec_.start, spec_.target) >= spec_.R) {
            done_ = true;
            res_.exit_before_hit = true;
        }
        return done_;
    }

    bool done() const { return done_; }
    TraversalResult result() const {
        TraversalResult r = res_;
        r.censored = !done_;
        return r;
    }

private:
    SausageSpec spec_;
    double T0_, T1_;
    bool done_ = false;
    TraversalResult res_;
};

/// Counts completed loops home -> target -> home, where home is the closed ball
/// B_{R/16} around the start and target is B_{R/16}(R/4 e_1), until exit from B_R.
class MeanderTracker {
public:
    explicit MeanderTracker(double R, std::size_t axis = 0) : R_(R), axis_(axis) {
        require(R > 0, "meander: R must be positive");
    }

    bool feed(std::size_t, double, std::span<const double> rel, std::span<const double>) {
        if (done_) return true;
        const double r = norm(rel);
        if (r >= R_) {
            done_ = true;
            return true;
        }
        double dt2 = 0;
        for (std::size_t i = 0; i < rel.size(); ++i) {
            const double c = i == axis_ ? R_ / 4 : 0.0;
            dt2 += (rel[i] - c) * (rel[i] - c);
        }
        const double small = R_ / 16;
        if (!at_target_ && dt2 <= small * small) {
            at_target_ = true;
        } else if (at_target_ && r <= small) {
            at_target_ = false;
            ++loops_;
        }
        return false;
    }

    bool done() const { return done_; }
    int loops() const { return loops_; }

private:
    double R_;
    std::size_t axis_;
    bool at_target_ = false;
    bool done_ = false;
    int loops_ = 0;
};

/// Feeds every grid point of a stored path into a tracker.
template <class Tracker>
void replay(const PathSample& path, Tracker& tr) {
    require(!path.empty(), "stopping functional on an empty path");
    const auto d = static_cast<std::size_t>(path.d);
    Point rel(d);
    const auto x0 = path.state(0);
    for (std::size_t k = 0; k < path.size(); ++k) {
        const auto xk = path.state(k);
        for (std::size_t i = 0; i < d; ++i) rel[i] = xk[i] - x0[i];
        if (tr.feed(k, path.times[k], rel, xk)) return;
    }
}

// ---------------------------------------------------------------------------
// Functionals on stored paths.

/// First exit of x_{t+s} - x_t from B_R(center_offset); 0 when |center_offset| >= R.
inline StoppingOutcome exit_time_ball(const PathSample& path, std::span<const double> center_offset, double R) {
    require(!path.empty(), "exit_time_ball: empty path");
    require(R > 0, "exit_time_ball: R must be positive");
    if (norm(center_offset) >= R) return {0.0, StopKind::exit, Point(path.state(0).begin(), path.state(0).end()), 0};
    ExitTracker tr(Point(center_offset.begin(), center_offset.end()), R);
    replay(path, tr);
    return tr.outcome();
}

/// R^2 wedge exit_time_ball.
inline StoppingOutcome capped_exit_time(const PathSample& path, std::span<const double> center_offset, double R) {
    require(!path.empty(), "capped_exit_time: empty path");
    require(R > 0, "capped_exit_time: R must be positive");
    if (norm(center_offset) >= R) return {0.0, StopKind::exit, Point(path.state(0).begin(), path.state(0).end()), 0};
    ExitTracker tr(Point(center_offset.begin(), center_offset.end()), R, R * R);
    replay(path, tr);
    return tr.outcome();
}

inline StoppingOutcome hitting_time_closed_ball(const PathSample& path, std::span<const double> center_offset,
                                                double R) {
    require(!path.empty(), "hitting_time_closed_ball: empty path");
    HitTracker tr(Point(center_offset.begin(), center_offset.end()), R);
    replay(path, tr);
    return tr.outcome();
}

inline TraversalResult sausage_traversal(const PathSample& path, const SausageSpec& spec, double T0, double T1) {
    SausageTracker tr(spec, T0, T1);
    replay(path, tr);
    return tr.result();
}

inline int meander_loops(const PathSample& path, double R) {
    MeanderTracker tr(R);
    replay(path, tr);
    return tr.loops();
}

}  // namespace itolab::stopping
