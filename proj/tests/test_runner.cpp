#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbsde/runner.hpp"

using namespace rbsde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path config_dir() {
    // tests run from the build tree; configs sit next to the sources
    fs::path p = fs::path(__FILE__).parent_path().parent_path() / "configs";
    REQUIRE(fs::exists(p));
    return p;
}

int run_file(const fs::path& cfg, const std::vector<std::string>& overrides,
             std::ostream& log) {
    return run_config(cfg.string(), overrides, log);
}

}  // namespace

TEST_CASE("config overrides and parse errors") {
    nlohmann::json j = {{"a", {{"b", 1}}}};
    apply_override(j, "a.b=7");
    CHECK(j["a"]["b"] == 7);
    apply_override(j, "a.c=hello");
    CHECK(j["a"]["c"] == "hello");
    apply_override(j, "lattice.N=100");
    CHECK(j["lattice"]["N"] == 100);
    CHECK_THROWS_AS(apply_override(j, "no_equals"), std::invalid_argument);

    nlohmann::json bad = {{"experiment", "solve"}};
    CHECK_THROWS(RunConfig::parse(bad));

    nlohmann::json decreasing = {
        {"experiment", "solve"},
        {"domain", {{"name", "ball"}, {"radius", 1.0}}},
        {"terminal", {{"name", "constant"}, {"point", {0.1, 0.1}}}},
        {"lattice", {{"N", 10}}},
        {"n_schedule", {8, 4}}};
    CHECK_THROWS_AS(RunConfig::parse(decreasing), std::invalid_argument);
}

TEST_CASE("catalog listing is sorted and complete") {
    const std::string listing = catalog_listing();
    CHECK(listing.find("ball") != std::string::npos);
    CHECK(listing.find("polar_star") != std::string::npos);
    CHECK(listing.find("sector") != std::string::npos);
    CHECK(listing.find("revolve") != std::string::npos);
    CHECK(listing.find("arc_point_pair") != std::string::npos);
    CHECK(listing.find("zero") != std::string::npos);
    // sorted within the terminal section
    CHECK(listing.find("arc_constant") < listing.find("arc_point_pair"));
    CHECK(listing.find("arc_point_pair") < listing.find("arc_smooth"));
}

TEST_CASE("oracle config runs and reports the equality value") {
    std::ostringstream log;
    const fs::path out = fs::temp_directory_path() / "rbsde_test_oracle";
    fs::remove_all(out);
    const int code = run_file(config_dir() / "circle_alpha05.json",
                              {"output_dir=" + (out / "a").string(),
                               "lattice.N=200", "n_paths=2000"},
                              log);
    CHECK(code == kExitOk);
    const auto checks = nlohmann::json::parse(slurp(out / "a" / "checks.json"));
    CHECK(checks["experiment"] == "oracle");
    const double dvar = checks["checks"][0]["expected_total_var"].get<double>();
    CHECK(dvar == Catch::Approx(0.125).margin(1e-12));
}

TEST_CASE("ball constant config exits clean with zero-variation diagnostics") {
    std::ostringstream log;
    const fs::path out = fs::temp_directory_path() / "rbsde_test_ball";
    fs::remove_all(out);
    const int code = run_file(config_dir() / "ball_constant.json",
                              {"output_dir=" + out.string(), "lattice.N=16",
                               "n_schedule=[4,8]", "n_paths=16"},
                              log);
    CHECK(code == kExitOk);
    const auto geo = nlohmann::json::parse(slurp(out / "geometry.json"));
    CHECK(geo["admissible"] == true);
    CHECK(geo["gamma"].get<double>() > 0.0);
    const std::string csv = slurp(out / "convergence.csv");
    CHECK(csv.find("n,sup_dist,sup_n_psi,holder_quotient,var_mean,var_max,"
                   "picard_max_iters") == 0);
    // constant interior data: no variation at all
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        std::stringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 7);
        CHECK(std::stod(cells[4]) == 0.0);  // var_mean
        CHECK(std::stod(cells[5]) == 0.0);  // var_max
    }
}

TEST_CASE("smallness flag is recorded and the run continues (alpha = 0.9)") {
    std::ostringstream log;
    const fs::path out = fs::temp_directory_path() / "rbsde_test_smallness";
    fs::remove_all(out);
    const int code = run_file(config_dir() / "sector_smallness_alpha09.json",
                              {"output_dir=" + out.string(), "lattice.N=24",
                               "n_schedule=[8,16]", "n_paths=16"},
                              log);
    CHECK(code == kExitOk);  // smallness failure is a recorded flag, not an error
    const auto geo = nlohmann::json::parse(slurp(out / "geometry.json"));
    CHECK(geo["smallness_case"] == "I");
    CHECK(geo["smallness_pass"] == false);
    CHECK(geo["admissible"] == true);
}

TEST_CASE("smallness passes for alpha = 0.8") {
    std::ostringstream log;
    const fs::path out = fs::temp_directory_path() / "rbsde_test_smallness08";
    fs::remove_all(out);
    const int code = run_file(config_dir() / "sector_smallness_alpha09.json",
                              {"output_dir=" + out.string(), "domain.alpha=0.8",
                               "terminal.alpha=0.8", "lattice.N=24",
                               "n_schedule=[8,16]", "n_paths=16"},
                              log);
    CHECK(code == kExitOk);
    const auto geo = nlohmann::json::parse(slurp(out / "geometry.json"));
    CHECK(geo["smallness_pass"] == true);
}

TEST_CASE("exit codes: config error and unknown entries") {
    std::ostringstream log;
    CHECK(run_config("/nonexistent/config.json", {}, log) == kExitConfigError);

    const fs::path tmp = fs::temp_directory_path() / "rbsde_bad.json";
    {
        std::ofstream os(tmp);
        os << "{\"experiment\": \"solve\"}";
    }
    CHECK(run_config(tmp.string(), {}, log) == kExitConfigError);

    const fs::path tmp2 = fs::temp_directory_path() / "rbsde_unknown_domain.json";
    {
        std::ofstream os(tmp2);
        os << R"({"experiment":"solve","domain":{"name":"moebius"},)"
           << R"("terminal":{"name":"constant","point":[0,0]},)"
           << R"("lattice":{"N":8},"n_schedule":[4]})";
    }
    CHECK(run_config(tmp2.string(), {}, log) == kExitConfigError);
}

TEST_CASE("same config and seed produce byte-identical outputs") {
    std::ostringstream log;
    const fs::path base = fs::temp_directory_path() / "rbsde_test_det";
    fs::remove_all(base);
    const auto cfg = config_dir() / "sector_alpha07.json";
    const std::vector<std::string> shrink = {
        "lattice.N=30", "n_schedule=[4,8,16]", "n_paths=24",
        "checks=[\"skorokhod\",\"holder\",\"exp_moments\"]"};
    auto with_out = [&](const std::string& sub) {
        std::vector<std::string> o = shrink;
        o.push_back("output_dir=" + (base / sub).string());
        return o;
    };
    CHECK(run_file(cfg, with_out("a"), log) == kExitOk);
    CHECK(run_file(cfg, with_out("b"), log) == kExitOk);
    for (const char* f : {"geometry.json", "convergence.csv", "checks.json"}) {
        CHECK(slurp(base / "a" / f) == slurp(base / "b" / f));
    }
    // two-thread run agrees with the single-thread run bitwise
    auto threaded = with_out("c");
    threaded.push_back("threads=2");
    CHECK(run_file(cfg, threaded, log) == kExitOk);
    CHECK(slurp(base / "a" / "convergence.csv") == slurp(base / "c" / "convergence.csv"));
}

TEST_CASE("geometry-only mode writes the report and stops") {
    std::ostringstream log;
    const fs::path out = fs::temp_directory_path() / "rbsde_test_geomonly";
    fs::remove_all(out);
    const int code = run_config((config_dir() / "ball_constant.json").string(),
                                {"output_dir=" + out.string(), "lattice.N=12"},
                                log, "", 0, /*geometry_only=*/true);
    CHECK(code == kExitOk);
    CHECK(fs::exists(out / "geometry.json"));
    CHECK_FALSE(fs::exists(out / "convergence.csv"));
}
