#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bsb/csv.hpp"
#include "bsb/scenario.hpp"

using namespace bsb;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kTrivialScenario = R"json({
  "name": "trivial",
  "grid": {"n": 16, "length": 8.0, "topology": "truncated"},
  "generator": {"type": "ou"},
  "K": 4,
  "initial": "stationary-gaussian",
  "constraints": {"marginals": "reference", "coupling": "reference"},
  "tol": 1e-10,
  "max_iter": 50
})json";

const char* kOuScenario = R"json({
  "name": "ou-gaussian-c",
  "grid": {"n": 24, "length": 12.0, "topology": "truncated"},
  "generator": {"type": "ou"},
  "K": 4,
  "initial": "stationary-gaussian",
  "constraints": {"marginals": "stationary-gaussian",
                  "coupling": {"type": "gaussian", "c": 0.8}},
  "tol": 1e-9,
  "max_iter": 500
})json";

}  // namespace

TEST_CASE("scenario parsing and diagnostics") {
    ScenarioInstance sc = parse_scenario_text(kOuScenario);
    CHECK(sc.name == "ou-gaussian-c");
    CHECK(sc.grid.n == 24);
    CHECK(sc.chain.steps() == 4);
    CHECK(sc.constraints.marginals.size() == 3);
    CHECK(sc.tol == 1e-9);

    CHECK_THROWS_WITH_AS(parse_scenario_text("{nope"), doctest::Contains("parse error"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        parse_scenario_text(R"({"name":"x","grid":{"n":16,"length":8.0,"topology":"weird"},
          "generator":{"type":"ou"},"K":4,
          "constraints":{"marginals":"reference","coupling":"reference"}})"),
        doctest::Contains("grid.topology"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        parse_scenario_text(R"({"name":"x","grid":{"n":16,"length":8.0,"topology":"truncated"},
          "generator":{"type":"sprocket"},"K":4,
          "constraints":{"marginals":"reference","coupling":"reference"}})"),
        doctest::Contains("generator.type"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        parse_scenario_text(R"({"name":"x","grid":{"n":16,"length":8.0,"topology":"truncated"},
          "generator":{"type":"ou"},"K":4,
          "constraints":{"marginals":"bogus","coupling":"reference"}})"),
        doctest::Contains("constraints.marginals"), std::invalid_argument);

    // the string form of the gaussian coupling preset
    ScenarioInstance sc2 = parse_scenario_text(R"json({
      "name": "x",
      "grid": {"n": 16, "length": 8.0, "topology": "truncated"},
      "generator": {"type": "ou"},
      "K": 3,
      "constraints": {"marginals": "stationary-gaussian",
                      "coupling": "gaussian-coupling c=0.5"}})json");
    double total = 0.0;
    for (double v : sc2.constraints.coupling.data) total += v;
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("trivial scenario solves to the reference") {
    ScenarioInstance sc = parse_scenario_text(kTrivialScenario);
    SolveArtifacts art = run_solve_pipeline(sc);
    CHECK(art.report.converged);
    CHECK(art.report.iterations == 1);
    CHECK(art.entropy_checked <= 1e-10);
    CHECK(art.max_residual_implicit < 1e-10);
    CHECK(art.htransform_gap < 1e-10);
}

TEST_CASE("solve artifacts are written atomically and reproducibly") {
    ScenarioInstance sc = parse_scenario_text(kOuScenario);
    const std::string out1 = "scenario_out1", out2 = "scenario_out2";
    std::filesystem::create_directories(out1);
    std::filesystem::create_directories(out2);
    CHECK(write_solve_artifacts(sc, out1) == 0);
    CHECK(write_solve_artifacts(sc, out2) == 0);
    for (const char* f : {"marginals.csv", "psi.csv", "pressure.csv", "residual.csv",
                          "generator.csv", "report.json"}) {
        CHECK(std::filesystem::exists(out1 + "/" + f));
        CHECK(!std::filesystem::exists(out1 + "/" + std::string(f) + ".tmp"));
        CHECK(slurp(out1 + "/" + f) == slurp(out2 + "/" + f));
    }
    const std::string report = slurp(out1 + "/report.json");
    CHECK(report.find("\"converged\": true") != std::string::npos);
    CHECK(slurp(out1 + "/marginals.csv").rfind("k,z,x,value", 0) == 0);
    CHECK(slurp(out1 + "/psi.csv").rfind("k,z,value", 0) == 0);
}

TEST_CASE("masked residual aggregation") {
    Matrix res(3, 4, 0.0);
    res(0, 0) = 5.0;   // t = 0.25 of 4 slices, heavy state
    res(1, 3) = 9.0;   // light state, must be masked out
    res(2, 1) = -2.0;  // t = 0.75
    Vec weights{1.0, 0.5, 0.2, 1e-9};
    const double dt = 0.25;
    CHECK(masked_residual_max(res, weights, 1e-4, dt, 0.25, 0.75) == doctest::Approx(5.0));
    CHECK(masked_residual_max(res, weights, 1e-4, dt, 0.5, 0.75) == doctest::Approx(2.0));
    CHECK(masked_residual_max(res, weights, 1e-12, dt, 0.25, 0.75) == doctest::Approx(9.0));
}
