// Batch runner: constants, moderation, checks, Green's function scans, norms and summaries.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "itolab/checks.hpp"
#include "itolab/constants.hpp"
#include "itolab/families.hpp"
#include "itolab/greens.hpp"
#include "itolab/mixednorm.hpp"
#include "itolab/moderation.hpp"
#include "itolab/process.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using namespace itolab;

namespace {

enum Exit { kPass = 0, kInternal = 1, kVerdictFail = 2, kUsage = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const char* kCatalogVersion = "1";

// ---- config access with unknown-key detection

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw UsageError("config: section '" + where + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw UsageError("config: unknown key '" + where + "." + it.key() + "'");
}

template <class T>
T get(const json& j, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw UsageError(std::string("config: key '") + key + "' has the wrong type");
    }
}

json section(const json& cfg, const char* name) { return cfg.contains(name) ? cfg.at(name) : json::object(); }

struct Ctx {
    json cfg = json::object();
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    fs::path out = "out";
    std::string config_hash;
    std::string started;
};

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

ProcessSpec make_process(const json& cfg) {
    const auto p = section(cfg, "process");
    check_keys(p, "process", {"kind", "d", "c", "magnitude", "alpha", "beta", "eps", "delta"});
    const auto kind = get<std::string>(p, "kind", "brownian");
    const int d = get<int>(p, "d", 2);
    if (d < 1) throw UsageError("config: process.d must be positive");
    if (kind == "brownian") return brownian(d, get<double>(p, "c", 0.5));
    if (kind == "constant_drift") return constant_drift(d, get<double>(p, "magnitude", 0.1));
    if (kind == "example22") return example22(d, get<double>(p, "alpha", 0.5));
    if (kind == "example21_drift")
        return example21_drift(d, get<double>(p, "alpha", d + 1 - 1.8), get<double>(p, "beta", 0.9),
                               get<double>(p, "eps", 0.01));
    if (kind == "rotating_anisotropic") return rotating_anisotropic(d, get<double>(p, "delta", 0.5));
    throw UsageError("config: unknown process.kind '" + kind + "'");
}

SimConfig make_sim(const Ctx& c) {
    const auto s = section(c.cfg, "sim");
    check_keys(s, "sim", {"h", "eps_drift", "b_max", "t_max", "n_paths", "workers", "check_ellipticity"});
    SimConfig sc;
    sc.h = get<double>(s, "h", sc.h);
    sc.eps_drift = get<double>(s, "eps_drift", sc.eps_drift);
    sc.b_max = get<double>(s, "b_max", sc.b_max);
    sc.t_max = get<double>(s, "t_max", sc.t_max);
    sc.n_paths = get<std::size_t>(s, "n_paths", sc.n_paths);
    sc.workers = get<unsigned>(s, "workers", 1);
    sc.check_ellipticity = get<bool>(s, "check_ellipticity", true);
    sc.seed = c.seed;
    sc.validate();
    return sc;
}

ConstantsTable make_constants(const Ctx& c, const ProcessSpec& spec) {
    const auto k = section(c.cfg, "constants");
    check_keys(k, "constants", {"mode", "delta", "R", "n_paths", "h", "xi_bar", "d0"});
    const auto mode = get<std::string>(k, "mode", "empirical");
    std::optional<double> d0;
    if (k.contains("d0")) d0 = get<double>(k, "d0", 0);
    if (k.contains("xi_bar")) {
        const double xi = get<double>(k, "xi_bar", 0);
        if (!(xi > 0 && xi < 1)) throw UsageError("config: constants.xi_bar must lie in (0, 1)");
        ConstantsTable t = theoretical_constants(spec.d, spec.delta);
        t.mode = ConstantsMode::empirical;
        t.xi_bar = xi;
        t.m_b = m_b_of(xi);
        t.kappa_xibar = kappa_xibar(xi);
        if (d0) t.d0 = *d0;
        t.provenance = "xi_bar given in the config; m_b = xi_bar/2; kappa(xi_bar) = 2 + 2 ln2/xi_bar";
        t.validate();
        return t;
    }
    if (mode == "theoretical") {
        auto t = theoretical_constants(spec.d, get<double>(k, "delta", spec.delta));
        if (d0) {
            t.d0 = *d0;
            t.validate();
        }
        return t;
    }
    if (mode != "empirical") throw UsageError("config: constants.mode must be 'theoretical' or 'empirical'");
    SimConfig sc = make_sim(c);
    sc.n_paths = get<std::size_t>(k, "n_paths", 10000);
    sc.h = get<double>(k, "h", 1e-3);
    const double R = get<double>(k, "R", 1.0);
    sc.t_max = 2 * R * R;
    return empirical_constants(spec, R, sc, {StartPoint{}}, d0);
}

void write_text(const fs::path& p, const std::string& s, std::vector<std::string>& outputs) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
    outputs.push_back(p.filename().string());
}

void write_manifest(const Ctx& c, const std::string& cmd, const std::vector<std::string>& outputs,
                    const std::optional<ConstantsTable>& constants, const ojson& extra = {}) {
    ojson m;
    m["command"] = cmd;
    m["config_hash"] = c.config_hash;
    m["seed"] = c.seed;
    m["jobs"] = c.jobs;
    m["catalog_version"] = kCatalogVersion;
    if (constants) m["constants"] = constants->to_json();
    m["started"] = c.started;
    m["finished"] = now_iso();
    m["outputs"] = outputs;
    if (!extra.is_null()) m["details"] = extra;
    std::ofstream f(c.out / ("manifest_" + cmd + ".json"));
    f << m.dump(2) << '\n';
}

// ---- subcommands

int cmd_constants(const Ctx& c) {
    const auto spec = make_process(c.cfg);
    const auto t = make_constants(c, spec);
    std::vector<std::string> outs;
    write_text(c.out / "constants.json", t.to_json().dump(2) + "\n", outs);
    write_manifest(c, "constants", outs, t);
    std::cout << t.to_json().dump(2) << '\n';
    return kPass;
}

int cmd_moderation(const Ctx& c) {
    const auto spec = make_process(c.cfg);
    const auto m = section(c.cfg, "moderation");
    check_keys(m, "moderation", {"R", "levels", "times", "start_half", "start_n", "offset_frac", "offset_n",
                                 "first_axis_only", "n_paths", "h", "m_b", "check_refinement"});
    ModerationGrid g;
    g.d = spec.d;
    g.times = get<std::vector<double>>(m, "times", {0.0});
    g.start_half = get<double>(m, "start_half", 0.0);
    g.start_n = get<int>(m, "start_n", 1);
    g.offset_frac = get<double>(m, "offset_frac", 0.5);
    g.offset_n = get<int>(m, "offset_n", 1);
    g.first_axis_only = get<bool>(m, "first_axis_only", false);
    g.validate();
    const double R = get<double>(m, "R", 0.25);
    SimConfig sc = make_sim(c);
    sc.n_paths = get<std::size_t>(m, "n_paths", sc.n_paths);
    sc.h = get<double>(m, "h", 1e-3 * R * R);
    sc.t_max = 40 * R * R;
    double mb = 0;
    std::optional<ConstantsTable> table;
    if (m.contains("m_b")) {
        mb = get<double>(m, "m_b", 0.0);
    } else {
        table = make_constants(c, spec);
        mb = table->m_b;
    }
    const auto rep = estimate_bbar(spec, R, dyadic_ladder(R, get<int>(m, "levels", 3)), g, sc, mb,
                                   get<bool>(m, "check_refinement", false));
    std::vector<std::string> outs;
    std::ostringstream csv;
    rep.write_csv(csv);
    write_text(c.out / "moderation.csv", csv.str(), outs);
    write_text(c.out / "moderation.json", rep.to_json().dump(2) + "\n", outs);
    write_manifest(c, "moderation", outs, table);
    std::cout << "bbar_R = " << rep.bbar_R() << ", m_b = " << mb << ": " << (rep.verdict ? "pass" : "fail") << '\n';
    return rep.verdict ? kPass : kVerdictFail;
}

estimates::CheckConfig make_check_config(const Ctx& c, const ProcessSpec& spec, const ConstantsTable& t,
                                         std::vector<std::string>& ids, bool& plots) {
    const auto k = section(c.cfg, "checks");
    check_keys(k, "checks", {"ids", "lambda_grid", "R_grid", "family", "family_seed", "n_paths", "h_rel",
                             "h_rel_fine", "rho_b", "tau_variants", "tau_wait", "bbar", "exponent_tol", "spread_max",
                             "tail_eps", "explicit_slack", "plots"});
    estimates::CheckConfig cc;
    cc.lambda_grid = get<std::vector<double>>(k, "lambda_grid", cc.lambda_grid);
    cc.R_grid = get<std::vector<double>>(k, "R_grid", cc.R_grid);
    try {
        cc.family = families::family_from_string(get<std::string>(k, "family", "cylinder_indicators"));
    } catch (const PreconditionError& e) {
        throw UsageError(std::string("config: checks.family: ") + e.what());
    }
    cc.family_seed = get<std::uint64_t>(k, "family_seed", 1);
    cc.n_paths = get<std::size_t>(k, "n_paths", 1000);
    cc.h_rel = get<double>(k, "h_rel", cc.h_rel);
    cc.h_rel_fine = get<double>(k, "h_rel_fine", cc.h_rel_fine);
    if (k.contains("rho_b")) cc.rho_b = get<double>(k, "rho_b", 0.0);
    cc.tau_variants = get<bool>(k, "tau_variants", true);
    cc.tau_wait = get<double>(k, "tau_wait", cc.tau_wait);
    if (k.contains("bbar")) cc.bbar = get<double>(k, "bbar", 0.0);
    cc.exponent_tol = get<double>(k, "exponent_tol", cc.exponent_tol);
    cc.spread_max = get<double>(k, "spread_max", cc.spread_max);
    cc.tail_eps = get<double>(k, "tail_eps", cc.tail_eps);
    cc.explicit_slack = get<double>(k, "explicit_slack", cc.explicit_slack);
    plots = get<bool>(k, "plots", false);
    cc.constants = t;
    cc.sim = make_sim(c);
    if (spec.has_drift() && !k.contains("rho_b"))
        throw UsageError("config: checks.rho_b is required for a process with drift (the radius below which "
                         "bbar <= m_b holds)");
    if (k.contains("ids")) {
        const auto& v = k.at("ids");
        if (v.is_string())
            ids = {v.get<std::string>()};
        else
            ids = get<std::vector<std::string>>(k, "ids", {});
    }
    cc.validate();
    return cc;
}

int cmd_check(const Ctx& c, const std::string& id_arg) {
    std::vector<std::string> ids;
    const std::string id = id_arg;
    if (id != "all") estimates::find_check(id);  // unknown ids fail before any work
    const auto spec = make_process(c.cfg);
    const auto table = make_constants(c, spec);
    bool plots = false;
    std::vector<std::string> cfg_ids;
    const auto cc = make_check_config(c, spec, table, cfg_ids, plots);
    if (id == "all") {
        if (!cfg_ids.empty()) {
            ids = cfg_ids;
            for (const auto& i : ids) estimates::find_check(i);
        } else {
            for (const auto& e : estimates::catalog()) ids.push_back(e.id);
        }
    } else {
        ids = {id};
    }

    struct Result {
        std::optional<estimates::EstimateReport> rep;
        std::string error;
        bool precondition = false;
        bool internal = false;
    };
    std::vector<Result> results(ids.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < ids.size(); i = next++) {
            try {
                results[i].rep = estimates::run_check(ids[i], spec, cc);
            } catch (const PreconditionError& e) {
                results[i].error = e.what();
                results[i].precondition = true;
            } catch (const CensoredError& e) {
                results[i].error = e.what();
            } catch (const std::exception& e) {
                results[i].error = e.what();
                results[i].internal = true;
            }
            std::lock_guard lk(log_mu);
            std::cerr << ids[i] << ": "
                      << (results[i].rep ? estimates::to_string(results[i].rep->verdict) : "error: " + results[i].error)
                      << '\n';
        }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::max(1u, std::min<unsigned>(c.jobs, static_cast<unsigned>(ids.size())));
    for (unsigned j = 0; j < n; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<std::string> outs;
    ojson summary;
    summary["seed"] = c.seed;
    summary["config_hash"] = c.config_hash;
    auto arr = ojson::array();
    bool all_pass = true, internal = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& r = results[i];
        const auto stem = estimates::file_stem(ids[i]);
        ojson e;
        e["id"] = ids[i];
        if (r.rep) {
            std::ostringstream csv;
            r.rep->write_csv(csv);
            write_text(c.out / (stem + ".csv"), csv.str(), outs);
            write_text(c.out / (stem + ".json"), r.rep->to_json().dump(2) + "\n", outs);
            if (plots) {
                std::ostringstream svg;
                r.rep->write_svg(svg);
                write_text(c.out / (stem + ".svg"), svg.str(), outs);
            }
            e["verdict"] = estimates::to_string(r.rep->verdict);
            e["csv"] = stem + ".csv";
            const auto v = r.rep->verdict;
            all_pass = all_pass && (v == estimates::Verdict::bounded || v == estimates::Verdict::exponent_ok);
        } else {
            e["verdict"] = r.precondition ? "precondition" : (r.internal ? "error" : "censored");
            e["error"] = r.error;
            all_pass = false;
            internal = internal || r.internal;
        }
        arr.push_back(e);
    }
    summary["checks"] = arr;
    write_text(c.out / "summary.json", summary.dump(2) + "\n", outs);
    write_text(c.out / "catalog.json", estimates::catalog_json().dump(2) + "\n", outs);
    write_manifest(c, "check", outs, table);
    for (const auto& e : arr) std::cout << std::left << std::setw(8) << e["id"].get<std::string>() << ' ' << e["verdict"].get<std::string>() << '\n';
    if (internal) return kInternal;
    if (ids.size() == 1 && results[0].precondition) {
        std::cerr << results[0].error << '\n';
        return kUsage;
    }
    return all_pass ? kPass : kVerdictFail;
}

int cmd_greens(const Ctx& c) {
    const auto spec = make_process(c.cfg);
    const auto g = section(c.cfg, "greens");
    check_keys(g, "greens", {"lambda", "n_paths", "h_rel", "p", "p_grid", "reach", "refine"});
    if (!g.contains("lambda")) throw UsageError("config: greens.lambda is required");
    const double lambda = get<double>(g, "lambda", 0.0);
    if (!(lambda > 0)) throw UsageError("config: greens.lambda must be positive");
    const auto table = make_constants(c, spec);
    SimConfig sc = make_sim(c);
    sc.n_paths = get<std::size_t>(g, "n_paths", 4000);
    sc.h = get<double>(g, "h_rel", 2e-3) / lambda;
    const double reach = get<double>(g, "reach", 2.0);
    const auto bins = greens::scan_bins(spec.d, lambda, table.kappa_xibar, reach);
    sc.t_max = bins.horizon();
    const auto H = greens::estimate_G(spec, {}, {}, lambda, bins, sc);
    std::vector<std::string> outs;
    H.write((c.out / "greens.bin").string(), (c.out / "greens.json").string());
    outs.push_back("greens.bin");
    outs.push_back("greens.json");
    const double r = table.kappa_xibar / (2 * std::sqrt(lambda));
    const double p = get<double>(g, "p", spec.d + 1.0);
    const auto regions = greens::scan_regions(H.density, r, reach);
    const auto rh = greens::reverse_holder_scan(H.density, regions, p, sc.workers);
    std::ostringstream csv;
    rh.write_csv(csv);
    write_text(c.out / "reverse_holder.csv", csv.str(), outs);
    const auto ell = H.elliptic();
    const auto eregions = greens::scan_regions(ell, r, reach);
    const auto erh = greens::reverse_holder_scan(ell, eregions, std::max(1.5, p - 1), sc.workers);
    std::ostringstream ecsv;
    erh.write_csv(ecsv);
    write_text(c.out / "reverse_holder_elliptic.csv", ecsv.str(), outs);
    ojson s;
    s["lambda"] = lambda;
    s["mass"] = H.mass();
    s["mass_times_lambda"] = H.mass() * lambda;
    s["p_A"] = H.p_A.p;
    s["radius"] = r;
    s["parabolic"] = {{"p", p}, {"regions", rh.n_regions}, {"max_ratio", rh.max_ratio}, {"median_ratio", rh.median_ratio}};
    s["elliptic"] = {{"p", erh.p}, {"regions", erh.n_regions}, {"max_ratio", erh.max_ratio}, {"median_ratio", erh.median_ratio}};
    if (g.contains("p_grid")) {
        const auto b = greens::estimate_d0(H.density, regions, get<std::vector<double>>(g, "p_grid", {}), sc.workers);
        ojson br;
        br["lo"] = b.lo;
        br["hi"] = b.hi;
        br["collapsed"] = b.collapsed;
        if (!b.warning.empty()) br["warning"] = b.warning;
        auto rs = ojson::array();
        for (auto [pp, mr] : b.ratios) rs.push_back({{"p", pp}, {"max_ratio", mr}});
        br["ratios"] = rs;
        s["d0_bracket"] = br;
    }
    write_text(c.out / "greens_summary.json", s.dump(2) + "\n", outs);
    write_manifest(c, "greens", outs, table);
    std::cout << s.dump(2) << '\n';
    return kPass;
}

int cmd_norms(const Ctx& c) {
    const auto spec = make_process(c.cfg);
    const auto k = section(c.cfg, "checks");
    check_keys(k, "checks", {"ids", "lambda_grid", "R_grid", "family", "family_seed", "n_paths", "h_rel",
                             "h_rel_fine", "rho_b", "tau_variants", "tau_wait", "bbar", "exponent_tol", "spread_max",
                             "tail_eps", "explicit_slack", "plots"});
    families::FamilyKind fam;
    try {
        fam = families::family_from_string(get<std::string>(k, "family", "cylinder_indicators"));
    } catch (const PreconditionError& e) {
        throw UsageError(std::string("config: checks.family: ") + e.what());
    }
    const double d = spec.d;
    std::ostringstream csv;
    csv << "member,p,q,norm,lattice_norm,sup_C1_norm\n";
    csv.precision(17);
    for (const auto& m : families::members(fam, spec.d, 1.0, true, get<std::uint64_t>(k, "family_seed", 1))) {
        for (auto [p, q] : std::vector<std::pair<double, double>>{{d + 1, d + 1}, {d, kInf}, {2 * d, 2}}) {
            const MixedNormSpec s{p, q};
            const double n = families::norm(m, s);
            const auto g = families::detail::member_lattice(m, 48, families::detail::lattice_nx(spec.d), 0, {});
            double ln = std::numeric_limits<double>::quiet_NaN();
            if (std::isfinite(n)) ln = mixed_norm(g, s);
            csv << estimates::csv_field(m.name) << ',' << p << ',' << q << ',' << n << ',' << ln << ','
                << families::sup_cylinder_norm(m, s, 1.0, false) << '\n';
        }
    }
    std::vector<std::string> outs;
    write_text(c.out / "norms.csv", csv.str(), outs);
    write_manifest(c, "norms", outs, std::nullopt);
    std::cout << csv.str();
    return kPass;
}

int cmd_report(const Ctx& c) {
    const auto path = c.out / "summary.json";
    std::ifstream f(path);
    if (!f) throw UsageError("report: " + path.string() + " not found; run 'check' first");
    const auto s = json::parse(f);
    std::ostringstream md;
    md << "| check | verdict | series | spread | exponent | target |\n|---|---|---|---|---|---|\n";
    bool ok = true;
    for (const auto& e : s.at("checks")) {
        const auto id = e.at("id").get<std::string>();
        const auto v = e.at("verdict").get<std::string>();
        ok = ok && (v == "bounded" || v == "exponent_ok");
        const auto rp = c.out / (estimates::file_stem(id) + ".json");
        std::ifstream rf(rp);
        if (!rf) {
            md << "| " << id << " | " << v << " | | | | |\n";
            continue;
        }
        const auto r = json::parse(rf);
        for (const auto& sr : r.at("series")) {
            md << "| " << id << " | " << v << " | " << sr.at("name").get<std::string>() << " | " << sr.at("spread").dump()
               << " | " << (sr.contains("exponent") ? sr.at("exponent").dump() : "") << " | "
               << (sr.contains("target_exponent") ? sr.at("target_exponent").dump() : "") << " |\n";
        }
    }
    std::vector<std::string> outs;
    write_text(c.out / "report.md", md.str(), outs);
    write_manifest(c, "report", outs, std::nullopt);
    std::cout << md.str();
    return ok ? kPass : kVerdictFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"itolab: Monte Carlo checks of potential and exit-time estimates for Ito processes"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::string out = "out";
    app.add_option("--config", config_path, "JSON config file");
    auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides sim.seed)");
    app.add_option("--jobs", jobs, "checks run in parallel")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "output directory");
    auto* c_const = app.add_subcommand("constants", "compute the constants table");
    auto* c_mod = app.add_subcommand("moderation", "estimate bbar_R and compare with m_b");
    auto* c_check = app.add_subcommand("check", "run a catalog check, or 'all'");
    std::string check_id;
    c_check->add_option("id", check_id, "check id or 'all'")->required();
    auto* c_green = app.add_subcommand("greens", "Green's function histogram and reverse Hoelder scans");
    auto* c_norms = app.add_subcommand("norms", "norms of the test-function family");
    auto* c_report = app.add_subcommand("report", "summarize a check output directory");
    auto* c_list = app.add_subcommand("catalog", "print catalog.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    Ctx c;
    c.jobs = jobs;
    c.out = out;
    c.started = now_iso();
    try {
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw UsageError("cannot open config " + config_path);
            try {
                c.cfg = json::parse(f);
            } catch (const json::parse_error& e) {
                throw UsageError(std::string("config: ") + e.what());
            }
            check_keys(c.cfg, "<root>", {"process", "sim", "constants", "checks", "greens", "moderation", "seed"});
        }
        c.seed = seed_opt->count() ? seed : get<std::uint64_t>(c.cfg, "seed", 1);
        json hashed = c.cfg;
        hashed["seed"] = c.seed;
        c.config_hash = hex(estimates::fnv1a(hashed.dump()));
        if (*c_list) {
            std::cout << estimates::catalog_json().dump(2) << '\n';
            return kPass;
        }
        fs::create_directories(c.out);
        if (*c_const) return cmd_constants(c);
        if (*c_mod) return cmd_moderation(c);
        if (*c_check) return cmd_check(c, check_id);
        if (*c_green) return cmd_greens(c);
        if (*c_norms) return cmd_norms(c);
        if (*c_report) return cmd_report(c);
    } catch (const estimates::UnknownCheckError& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    } catch (const UsageError& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    } catch (const PreconditionError& e) {
        std::cerr << e.what() << '\n';
        return kUsage;
    } catch (const CensoredError& e) {
        std::cerr << e.what() << '\n';
        return kVerdictFail;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kUsage;
}
