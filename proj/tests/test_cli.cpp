#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#ifndef ITOLAB_CLI_PATH
#define ITOLAB_CLI_PATH "itolab"
#endif

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("itolab_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
    auto p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + ITOLAB_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

nlohmann::json brownian_cfg(int n_paths) {
    return {{"process", {{"kind", "brownian"}, {"d", 2}}},
            {"constants", {{"xi_bar", 0.089}}},
            {"checks", {{"n_paths", n_paths}}}};
}

}  // namespace

TEST(Cli, UnknownCheckIdIsUsageError) {
    const auto d = scratch("unknown_id");
    const auto cfg = write_config(d, brownian_cfg(10));
    EXPECT_EQ(run("check X9.9 --config " + cfg.string() + " --out " + d.string()), 3);
}

TEST(Cli, UnknownConfigKeyIsUsageError) {
    const auto d = scratch("unknown_key");
    auto j = brownian_cfg(10);
    j["sim"] = {{"hh", 0.1}};
    const auto cfg = write_config(d, j);
    EXPECT_EQ(run("check E3.5 --config " + cfg.string() + " --out " + d.string()), 3);
}

TEST(Cli, GreensRequiresLambda) {
    const auto d = scratch("greens");
    const auto cfg = write_config(d, brownian_cfg(10));
    EXPECT_EQ(run("greens --config " + cfg.string() + " --out " + d.string()), 3);
}

TEST(Cli, DriftlessModerationPasses) {
    const auto d = scratch("mod_zero");
    nlohmann::json j{{"process", {{"kind", "brownian"}}}, {"moderation", {{"n_paths", 20}, {"m_b", 0.01}}}};
    const auto cfg = write_config(d, j);
    EXPECT_EQ(run("moderation --config " + cfg.string() + " --out " + d.string()), 0);
    EXPECT_TRUE(fs::exists(d / "moderation.csv"));
    EXPECT_TRUE(fs::exists(d / "manifest_moderation.json"));
}

TEST(Cli, LargeDriftFailsModeration) {
    const auto d = scratch("mod_big");
    nlohmann::json j{{"process", {{"kind", "constant_drift"}, {"magnitude", 5.0}}},
                     {"moderation", {{"n_paths", 50}, {"m_b", 0.01}, {"R", 0.5}}}};
    const auto cfg = write_config(d, j);
    EXPECT_EQ(run("moderation --config " + cfg.string() + " --out " + d.string()), 2);
}

TEST(Cli, ExitMeanCheckPasses) {
    const auto d = scratch("e35");
    const auto cfg = write_config(d, brownian_cfg(300));
    EXPECT_EQ(run("check E3.5 --config " + cfg.string() + " --out " + d.string()), 0);
    const auto csv = slurp(d / "E3.5.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "scale,lhs,ci_lo,ci_hi,rhs_factor,ratio,series,member,tau,pass");
    const auto rep = nlohmann::json::parse(slurp(d / "E3.5.json"));
    EXPECT_EQ(rep["verdict"], "exponent_ok");
    const auto man = nlohmann::json::parse(slurp(d / "manifest_check.json"));
    EXPECT_EQ(man["seed"], 1);
    EXPECT_TRUE(man.contains("config_hash"));
}

TEST(Cli, ConstantsAreReproducible) {
    const auto d = scratch("constants");
    nlohmann::json j{{"process", {{"kind", "brownian"}}}, {"constants", {{"n_paths", 4000}, {"h", 5e-3}}}};
    const auto cfg = write_config(d, j);
    ASSERT_EQ(run("constants --seed 7 --config " + cfg.string() + " --out " + (d / "a").string()), 0);
    ASSERT_EQ(run("constants --seed 7 --config " + cfg.string() + " --out " + (d / "b").string()), 0);
    const auto a = slurp(d / "a" / "constants.json");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(d / "b" / "constants.json"));
    const auto t = nlohmann::json::parse(a);
    EXPECT_GT(t["xi_bar"].get<double>(), 0.0);
    EXPECT_LT(t["xi_bar"].get<double>(), 1.0);
}

TEST(Cli, ChecksDoNotDependOnJobs) {
    const auto d = scratch("jobs");
    auto j = brownian_cfg(60);
    j["checks"]["ids"] = {"E3.5", "K3.2", "T3.3h", "C3.7"};
    const auto cfg = write_config(d, j);
    ASSERT_EQ(run("check all --jobs 1 --config " + cfg.string() + " --out " + (d / "a").string()), 0);
    ASSERT_EQ(run("check all --jobs 3 --config " + cfg.string() + " --out " + (d / "b").string()), 0);
    for (const char* stem : {"E3.5", "K3.2", "T3.3h", "C3.7"}) {
        const auto a = slurp(d / "a" / (std::string(stem) + ".csv"));
        EXPECT_FALSE(a.empty()) << stem;
        EXPECT_EQ(a, slurp(d / "b" / (std::string(stem) + ".csv"))) << stem;
    }
}

TEST(Cli, CatalogListsEveryCheck) {
    const auto d = scratch("catalog");
    const std::string cmd = std::string("\"") + ITOLAB_CLI_PATH + "\" catalog > " + (d / "catalog.json").string();
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    const auto j = nlohmann::json::parse(slurp(d / "catalog.json"));
    EXPECT_EQ(j["checks"].size(), 36u);
}
