// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "itolab/checks.hpp"
#include "itolab/greens.hpp"
#include "itolab/moderation.hpp"
#include "itolab/montecarlo.hpp"
#include "itolab/oracles.hpp"

#ifndef ITOLAB_CLI_PATH
#define ITOLAB_CLI_PATH "itolab"
#endif

using namespace itolab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmtd(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// Empirical xi_bar of planar Brownian motion, shared by criteria 3 and 10.
double xi_emp() {
    static const double xi = [] {
        SimConfig s;
        s.h = 1e-3;
        s.n_paths = 10000;
        s.t_max = 2;
        s.seed = 2024;
        s.check_ellipticity = false;
        return empirical_constants(brownian(2), 1.0, s, {StartPoint{}}).xi_bar;
    }();
    return xi;
}

Outcome brownian_exit_mean() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = brownian(2);
    SimConfig cfg;
    cfg.h = 1e-4;
    cfg.t_max = 20;
    cfg.check_ellipticity = false;
    const Point o{0.0, 0.0};
    const auto st = mc_stats(100000, 1, 101, [&](RandomStream& s, std::size_t) {
        double tau = cfg.t_max;
        simulate_observed(spec, cfg, s, 0.0, o, cfg.t_max, [&](const StepView& v) {
            if (stopping::norm(v.x1) < 1.0) return true;
            tau = v.s1;
            return false;
        });
        return tau;
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double exact = oracles::brownian_exit_mean(2, 1.0, o, 0.5);
    const double rel = std::abs(st.mean() / exact - 1);
    return {rel <= 0.02 && secs <= 120,
            fmtd("E theta = %.5f +- %.5f vs %.3f (rel %.4f)", st.mean(), st.stderr_(), exact, rel) +
                fmtd(", %.1f s", secs)};
}

double l1_to_heat_kernel(const greens::GreensHistogram& H) {
    const auto& G = H.density;
    double num = 0, den = 0;
    const std::size_t ns = G.counts[1] * G.counts[2];
    for (std::size_t j = 0; j < G.counts[0]; ++j)
        for (std::size_t a = 0; a < G.counts[1]; ++a)
            for (std::size_t b = 0; b < G.counts[2]; ++b) {
                const Point lo{G.origin[1] + a * G.spacings[1], G.origin[2] + b * G.spacings[2]};
                const Point hi{lo[0] + G.spacings[1], lo[1] + G.spacings[2]};
                const double t = j * G.spacings[0];
                const double k = oracles::heat_kernel_bin_average(H.lambda, t, t + G.spacings[0], lo, hi, 0.5);
                num += std::abs(G.values[j * ns + a * G.counts[2] + b] - k);
                den += k;
            }
    return num / den;
}

Outcome green_mass_and_shape() {
    const double lambda = 4;
    greens::BinSpec b;
    b.t_extent = std::log(1e6) / lambda;
    b.nt = 28;
    b.half = 6 / std::sqrt(lambda);
    b.nx = 24;
    SimConfig c;
    c.h = 1e-3;
    c.n_paths = 20000;
    c.seed = 202;
    const auto H = greens::estimate_G(brownian(2), {}, {}, lambda, b, c);
    const double mass = (H.mass() + H.outside_mass) * lambda, l1 = l1_to_heat_kernel(H);
    return {std::abs(mass - 1) <= 0.01 && l1 <= 0.05, fmtd("lambda * mass = %.5f, L1 distance %.4f", mass, l1)};
}

Outcome reverse_holder() {
    const double lambda = 4, xi = xi_emp(), kappa = kappa_xibar(xi);
    const double r = kappa / (2 * std::sqrt(lambda));
    SimConfig c;
    c.h = 1e-3;
    c.n_paths = 4000;
    c.seed = 303;
    // a centre lattice reaching 2.5 radii at step r/2 gives 11^2 balls and 4 x 11^2 cylinders
    const double reach = 2.5;
    const auto bins = greens::scan_bins(2, lambda, kappa, reach);
    const auto H1 = greens::estimate_G(brownian(2), {}, {}, lambda, bins, c);
    const auto H2 = greens::estimate_G(brownian(2), {}, {}, lambda, bins.refined(), c);
    const auto cyl = greens::scan_regions(H1.density, r, reach);
    const auto a = greens::reverse_holder_scan(H1.density, cyl, 3.0, 4);
    const auto b = greens::reverse_holder_scan(H2.density, cyl, 3.0, 4);
    const auto g1 = H1.elliptic(), g2 = H2.elliptic();
    const auto balls = greens::scan_regions(g1, r, reach);
    const auto e1 = greens::reverse_holder_scan(g1, balls, 2.0, 4);
    const auto e2 = greens::reverse_holder_scan(g2, balls, 2.0, 4);
    auto change = [](double x, double y) { return std::max(x, y) / std::min(x, y); };
    const double cp = change(a.max_ratio, b.max_ratio), ce = change(e1.max_ratio, e2.max_ratio);
    const bool ok = cyl.size() >= 100 && balls.size() >= 100 && std::isfinite(a.max_ratio) &&
                    std::isfinite(e1.max_ratio) && cp <= 2 && ce <= 2;
    std::ostringstream os;
    os << "xi_emp " << xi << ", r " << r << "; parabolic " << cyl.size() << " cylinders, max ratio " << a.max_ratio
       << " -> " << b.max_ratio << "; elliptic " << balls.size() << " balls, max ratio " << e1.max_ratio << " -> "
       << e2.max_ratio;
    return {ok, os.str()};
}

Outcome example22_closed_forms() {
    const double alpha = 0.5, rho = 0.1;
    const auto spec = example22(2, alpha);
    // Euler bias near the attracting singularity is O(sqrt h): about -4% at h = 1e-4
    SimConfig cfg;
    cfg.h = 1e-5;
    cfg.t_max = 5;
    cfg.check_ellipticity = false;
    // E int_0^tau |b| ds for the exit of x_1 from an interval, started at (x1, 0)
    auto drift_integral = [&](double lo, double hi, double x1, std::size_t n, std::uint64_t seed) {
        const Point x0{x1, 0.0};
        return mc_stats(n, 1, seed, [&](RandomStream& s, std::size_t) {
                   double acc = 0;
                   simulate_observed(spec, cfg, s, 0.0, x0, cfg.t_max, [&](const StepView& v) {
                       acc += v.b_abs * v.h;
                       return v.x1[0] > lo && v.x1[0] < hi;
                   });
                   return acc;
               })
            .estimate();
    };
    const auto phi = drift_integral(-3 * rho, 3 * rho, 0.0, 8000, 401);
    const double phi0 = oracles::example22_phi(alpha, rho, 0);
    const bool phi_ok = std::abs(phi.mean / phi0 - 1) <= 0.05;

    bool psi_ok = true;
    double worst = 0;
    for (auto [y1, x1] : {std::pair{0.2, 0.2}, {0.3, 0.25}, {0.5, 0.45}}) {
        const auto e = drift_integral(y1 - rho, y1 + rho, x1, 500, 402);
        worst = std::max(worst, e.mean / (2 * rho));
        psi_ok = psi_ok && e.mean <= 2 * rho + 3 * e.stderr_;
    }

    std::vector<std::pair<double, double>> pts;
    SimConfig m;
    m.n_paths = 2000;
    m.t_max = 1;
    m.seed = 403;
    const std::vector<GridPoint> o{GridPoint{0.0, Point(2, 0.0), Point(2, 0.0)}};
    for (double r : {0.1, 0.05, 0.025}) {
        m.h = 1e-3 * r * r;
        pts.push_back({r, estimate_bhat_rho(spec, r, o, m).value});
    }
    const double slope = fit_scaling_exponent(pts).exponent;
    const bool slope_ok = std::abs(slope - (1 - alpha)) <= 0.15;
    return {phi_ok && psi_ok && slope_ok,
            fmtd("phi(0) MC %.4f vs %.4f; max psi/(2 rho) %.3f; bhat slope %.3f", phi.mean, phi0, worst, slope)};
}

Outcome moment_bounds() {
    const auto spec = example22(2, 0.5);
    SimConfig cfg;
    cfg.h = 1e-4;
    cfg.n_paths = 4000;
    cfg.t_max = 1;
    cfg.seed = 501;
    const double rho = 0.05;
    const auto bb = estimate_bbar(spec, rho, dyadic_ladder(rho, 2), ModerationGrid{}, cfg, 1.0);
    const auto rows = moment_bound_check(spec, rho, GridPoint{0.0, Point(2, 0.0), Point(2, 0.0)}, 3, cfg, bb.bbar_R());
    bool ok = true;
    std::ostringstream os;
    os << "bbar " << bb.bbar_R();
    for (const auto& r : rows) {
        if (r.n < 2) continue;
        ok = ok && r.pass;
        os << "; n=" << r.n << " " << r.lhs.mean << " <= " << r.rhs;
    }
    return {ok, os.str()};
}

estimates::CheckConfig check_cfg(std::size_t n, std::uint64_t seed) {
    estimates::CheckConfig c;
    auto t = theoretical_constants(2, 0.5);
    t.xi_bar = xi_emp();
    t.m_b = m_b_of(t.xi_bar);
    t.kappa_xibar = kappa_xibar(t.xi_bar);
    c.constants = t;
    c.n_paths = n;
    c.sim.seed = seed;
    return c;
}

Outcome tail_structure() {
    auto cfg = check_cfg(2000, 601);
    cfg.R_grid = {0.5, 1, 2};
    const auto rep = estimates::run_check("C3.6", brownian(2), cfg);
    std::vector<double> scaled;
    for (const auto& r : rep.rows)
        if (r.series == "survival rate") scaled.push_back(r.lhs.mean * r.scale * r.scale);
    std::vector<double> sorted = scaled;
    std::sort(sorted.begin(), sorted.end());
    const double med = sorted[sorted.size() / 2];
    bool rate_ok = scaled.size() == 3;
    for (double v : scaled) rate_ok = rate_ok && std::abs(v / med - 1) <= 0.2;

    SimConfig s;
    s.h = 1e-3;
    s.n_paths = 4000;
    s.seed = 602;
    bool fit_ok = true;
    double worst_r2 = 1;
    for (double R : {0.5, 1.0, 2.0}) {
        s.h = 1e-3 * R * R;
        const auto p = estimates::laplace_exit_profile(brownian(2), R, {4}, {StartPoint{}}, s, xi_emp(), kInf);
        fit_ok = fit_ok && p.loglinear.slope < 0 && p.loglinear.r_squared >= 0.98;
        worst_r2 = std::min(worst_r2, p.loglinear.r_squared);
    }
    return {rate_ok && fit_ok, fmtd("rate R^2 = %.3f, %.3f, %.3f; worst log-linear r^2 %.4f", scaled[0], scaled[1],
                                    scaled[2], worst_r2)};
}

Outcome potential_scaling() {
    const auto rep = estimates::run_check("K3.1", brownian(2), check_cfg(1000, 701));
    const auto& s = rep.series[0];
    if (!s.fit) return {false, "no exponent fit"};
    const double target = -2.0 / 6;
    return {std::abs(s.fit->exponent - target) <= 0.15,
            fmtd("lambda exponent %.4f +- %.4f vs %.4f", s.fit->exponent, s.fit->stderr_, target)};
}

Outcome ito_residual() {
    SimConfig cfg;
    cfg.n_paths = 4000;
    cfg.seed = 801;
    cfg.h = 4e-3;
    const auto spec = constant_drift(2, 1.0);
    const auto a = oracles::ito_residual(spec, oracles::squared_norm_function(), 1.0, 1.0, cfg);
    cfg.h = 1e-3;
    const auto b = oracles::ito_residual(spec, oracles::squared_norm_function(), 1.0, 1.0, cfg);
    const double ratio = a.rms / b.rms;
    const bool ok = std::abs(b.mean.mean) <= 3 * b.mean.stderr_ + 1e-12 && std::abs(a.mean.mean) <= 3 * a.mean.stderr_ + 1e-12 &&
                    ratio >= 1.5 && ratio <= 3;
    return {ok, fmtd("mean residual %.3g +- %.3g; rms ratio h/(h/4) %.3f", b.mean.mean, b.mean.stderr_, ratio)};
}

Outcome mixed_norm_exactness() {
    const auto f = GridFunction::spacetime_box(2, 0.0, 1.0, 10, 1.0, 40, 1.0);
    const Cylinder C1{0.0, {0.0, 0.0}, 1.0};
    const double pi = std::numbers::pi;
    double err = std::abs(mixed_norm(f, {3, 3}, C1) - std::cbrt(pi));
    err = std::max(err, std::abs(mixed_norm(f, {2, 4}, C1) - std::sqrt(pi)));
    err = std::max(err, std::abs(mixed_norm(f, {2, kInf}, C1) - std::sqrt(pi)));

    const auto e = example21_function(2, 1.5, 0.75);
    const Point x{0.4, 0.25};
    double rel = 0;
    for (double R : {0.25, 0.5, 2.0}) {
        const Cylinder C{0.3, x, R};
        const Cylinder D{0.3 / (R * R), {x[0] / R, x[1] / R}, 1.0};
        const double lhs = mixed_norm(e.cylinder_lattice(C, 16, 64), {1, 1}, C);
        const double rhs = R * mixed_norm(e.cylinder_lattice(D, 16, 64), {1, 1}, D);
        rel = std::max(rel, std::abs(lhs / rhs - 1));
    }
    return {err <= 1e-6 && rel <= 1e-4, fmtd("closed-form error %.2e; scaling identity rel error %.2e", err, rel)};
}

Outcome sausage() {
    const auto rep = estimates::run_check("T3.11", brownian(2), check_cfg(4000, 1001));
    const double xi = xi_emp();
    bool ok = false;
    std::ostringstream os;
    os << "xi_emp " << xi;
    for (const auto& r : rep.rows) {
        if (r.series != "sausage traversal") continue;
        ok = true;
        os << "; " << r.member << " lo " << r.ci_lo << " vs " << r.rhs_factor;
    }
    for (const auto& r : rep.rows)
        if (r.series == "sausage traversal") ok = ok && r.pass == 1;
    return {ok, os.str()};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + ITOLAB_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "itolab_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const nlohmann::json cfg{{"process", {{"kind", "brownian"}, {"d", 2}}},
                             {"constants", {{"xi_bar", 0.089}}},
                             {"checks", {{"n_paths", 40}}}};
    std::ofstream(dir / "config.json") << cfg.dump(2);
    const std::string base = "check all --seed 5 --config " + (dir / "config.json").string() + " --out ";
    const int ra = run_cli(base + (dir / "a").string() + " --jobs 1");
    const int rb = run_cli(base + (dir / "b").string() + " --jobs 4");
    if ((ra != 0 && ra != 2) || ra != rb) return {false, fmtd("cli exit codes %g and %g", ra, rb)};
    std::size_t n = 0, diff = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        if (e.path().extension() != ".csv") continue;
        ++n;
        if (slurp(e.path()) != slurp(dir / "b" / e.path().filename())) ++diff;
    }
    return {n >= 36 && diff == 0, fmtd("%g CSV files compared, %g differ", static_cast<double>(n), static_cast<double>(diff))};
}

}  // namespace

int main(int argc, char** argv) {
    // optional arguments select criteria by number
    std::vector<bool> selected(12, argc == 1);
    for (int i = 1; i < argc; ++i) selected.at(static_cast<std::size_t>(std::stoi(argv[i]))) = true;
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"brownian exit mean", brownian_exit_mean},
        {"green mass and shape", green_mass_and_shape},
        {"reverse hoelder", reverse_holder},
        {"singular drift closed forms", example22_closed_forms},
        {"moment bounds", moment_bounds},
        {"tail structure", tail_structure},
        {"potential scaling", potential_scaling},
        {"ito residual", ito_residual},
        {"mixed-norm exactness", mixed_norm_exactness},
        {"sausage traversal", sausage},
        {"determinism across --jobs", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected[i + 1]) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
