#include "bsb/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bsb/csv.hpp"
#include "bsb/densities.hpp"

namespace bsb {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw std::invalid_argument("scenario field '" + field + "': " + what);
}

Topology parse_topology(const std::string& s) {
    if (s == "periodic") return Topology::periodic;
    if (s == "truncated") return Topology::truncated;
    fail("grid.topology", "expected 'periodic' or 'truncated', got '" + s + "'");
}

GeneratorMatrix parse_generator(const json& j, const Grid& grid) {
    if (!j.is_object() || !j.contains("type")) fail("generator", "expected object with 'type'");
    const std::string type = j.at("type").get<std::string>();
    if (type == "heat") return heat_generator(grid);
    if (type == "poisson")
        return poisson_generator(grid, j.value("lambda", 1.0),
                                 j.value("z_steps", std::size_t{1}));
    if (type == "stable") {
        const double alpha = j.value("alpha", 1.5);
        const double k = j.contains("k_alpha") ? j.at("k_alpha").get<double>()
                                               : stable_normalization(alpha);
        return stable_generator(grid, alpha, k);
    }
    if (type == "ou") return ou_generator(grid);
    if (type == "ou-stable") {
        const double alpha = j.value("alpha", 1.5);
        const double k = j.contains("k_alpha") ? j.at("k_alpha").get<double>()
                                               : stable_normalization(alpha);
        return ou_stable_generator(grid, alpha, k);
    }
    if (type == "levy") {
        std::vector<Jump> jumps;
        if (j.contains("jumps"))
            for (const auto& e : j.at("jumps"))
                jumps.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
        LevyTriplet t = LevyTriplet::constant(j.value("drift", 0.0), j.value("diffusion", 0.0),
                                              jumps, j.value("truncation_radius", 1.0));
        return levy_generator(grid, t);
    }
    fail("generator.type", "unknown generator '" + type + "'");
}

Vec parse_law(const json& j, const Grid& grid, const std::string& field) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "stationary-gaussian") return discretized_gaussian(grid);
        if (s == "uniform") return uniform_weights(grid.n);
        fail(field, "unknown preset '" + s + "'");
    }
    if (j.is_object() && j.contains("delta"))
        return delta_weights(grid.n, j.at("delta").get<std::size_t>());
    if (j.is_array()) {
        Vec v = j.get<Vec>();
        if (v.size() != grid.n) fail(field, "length does not match grid");
        return v;
    }
    fail(field, "expected preset string, {\"delta\": i} or array");
}

std::vector<Vec> reference_marginals(const ReferenceChain& chain) {
    std::vector<Vec> out;
    Vec cur = chain.initial_law;
    for (std::size_t k = 1; k < chain.steps(); ++k) {
        cur = vecmat(cur, chain.kernels[k - 1]);
        out.push_back(cur);
    }
    return out;
}

Matrix reference_coupling(const ReferenceChain& chain) {
    Matrix prod = chain.kernels[0];
    for (std::size_t k = 1; k < chain.steps(); ++k) prod = matmul(prod, chain.kernels[k]);
    Matrix ep(prod.rows, prod.cols);
    for (std::size_t x = 0; x < prod.rows; ++x)
        for (std::size_t y = 0; y < prod.cols; ++y)
            ep(x, y) = chain.initial_law[x] * prod(x, y);
    return ep;
}

Matrix parse_coupling(const json& j, const Grid& grid, const ReferenceChain& chain) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "reference") return reference_coupling(chain);
        double c = 0.0;
        if (std::sscanf(s.c_str(), "gaussian-coupling c=%lf", &c) == 1)
            return gaussian_coupling(grid, c);
        fail("constraints.coupling", "unknown preset '" + s + "'");
    }
    if (j.is_object() && j.value("type", "") == "gaussian")
        return gaussian_coupling(grid, j.at("c").get<double>());
    if (j.is_array()) {
        Matrix m(grid.n, grid.n);
        if (j.size() != grid.n) fail("constraints.coupling", "row count");
        for (std::size_t i = 0; i < grid.n; ++i) {
            if (j[i].size() != grid.n) fail("constraints.coupling", "column count");
            for (std::size_t k = 0; k < grid.n; ++k) m(i, k) = j[i][k].get<double>();
        }
        return m;
    }
    fail("constraints.coupling", "expected preset, gaussian spec or matrix");
}

std::vector<Vec> parse_marginals(const json& j, const Grid& grid,
                                 const ReferenceChain& chain) {
    const std::size_t K = chain.steps();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "reference") return reference_marginals(chain);
        Vec one = parse_law(j, grid, "constraints.marginals");
        return std::vector<Vec>(K - 1, one);
    }
    if (j.is_array()) {
        std::vector<Vec> out;
        if (j.size() != K - 1) fail("constraints.marginals", "need K-1 vectors");
        for (const auto& e : j) {
            Vec v = e.get<Vec>();
            if (v.size() != grid.n) fail("constraints.marginals", "length mismatch");
            out.push_back(std::move(v));
        }
        return out;
    }
    fail("constraints.marginals", "expected preset string or array of vectors");
}

}  // namespace

ScenarioInstance parse_scenario_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("scenario: JSON parse error: ") + e.what());
    }
    try {
        ScenarioInstance sc;
        sc.name = j.value("name", "unnamed");
        const json& jg = j.at("grid");
        sc.grid = build_grid(jg.at("n").get<std::size_t>(), jg.at("length").get<double>(),
                             parse_topology(jg.at("topology").get<std::string>()));
        sc.generator = parse_generator(j.at("generator"), sc.grid);
        const std::size_t K = j.at("K").get<std::size_t>();
        if (K < 2) fail("K", "need at least 2 steps");
        sc.kernel = transition(sc.generator, 1.0 / static_cast<double>(K));
        Vec initial = j.contains("initial") ? parse_law(j.at("initial"), sc.grid, "initial")
                                            : discretized_gaussian(sc.grid);
        sc.chain = build_reference(sc.kernel, K, initial);
        const json& jc = j.at("constraints");
        sc.constraints = make_constraints(
            sc.chain, parse_marginals(jc.at("marginals"), sc.grid, sc.chain),
            parse_coupling(jc.at("coupling"), sc.grid, sc.chain));
        sc.tol = j.value("tol", 1e-9);
        sc.max_iter = j.value("max_iter", std::size_t{2000});
        sc.seed = j.value("seed", std::uint64_t{1});
        return sc;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("scenario: ") + e.what());
    }
}

ScenarioInstance load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("scenario: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

double masked_residual_max(const Matrix& residual, const Vec& weights, double mass_cutoff,
                           double dt, double t_lo, double t_hi) {
    double peak = 0.0;
    for (double w : weights) peak = std::max(peak, w);
    double out = 0.0;
    for (std::size_t k = 0; k < residual.rows; ++k) {
        const double t = dt * static_cast<double>(k + 1);
        if (t < t_lo || t > t_hi) continue;
        for (std::size_t z = 0; z < residual.cols; ++z) {
            if (weights[z] < mass_cutoff * peak) continue;
            const double v = residual(k, z);
            if (std::isfinite(v)) out = std::max(out, std::fabs(v));
        }
    }
    return out;
}

SolveArtifacts run_solve_pipeline(const ScenarioInstance& sc) {
    SolveArtifacts art;
    auto [pot, report] = solve_bs(sc.chain, sc.constraints, sc.tol, sc.max_iter);
    art.report = report;
    art.potentials = gauge_normalize(pot, sc.constraints.marginals);
    art.marginals = marginals_all(sc.chain, art.potentials);
    art.entropy_checked = relative_entropy(sc.chain, art.potentials);
    art.htransform_gap = htransform_consistency(sc.chain, art.potentials);

    const Vec& p0 = art.marginals.time[0];
    art.psi_x0 = static_cast<std::size_t>(
        std::max_element(p0.begin(), p0.end()) - p0.begin());
    PsiField psi = recover_psi(sc.chain, art.potentials, art.psi_x0);
    PressureField pres = extract_pressure(art.potentials, sc.constraints.marginals,
                                          sc.chain.dt, PressureGauge::mean_zero_under_mu);
    Matrix imp = hjb_residual_implicit(psi, pres, sc.chain);
    art.max_residual_implicit = max_abs_residual(imp);
    Matrix res = hjb_residual(psi, pres, sc.generator, sc.chain.dt);
    Vec avg_weights(sc.grid.n, 0.0);
    for (std::size_t k = 1; k < sc.chain.steps(); ++k)
        for (std::size_t z = 0; z < sc.grid.n; ++z)
            avg_weights[z] += sc.constraints.marginals[k - 1][z];
    art.max_residual_interior =
        masked_residual_max(res, avg_weights, 1e-4, sc.chain.dt, 0.25, 0.75);
    return art;
}

int write_solve_artifacts(const ScenarioInstance& sc, const std::string& outdir) {
    SolveArtifacts art = run_solve_pipeline(sc);

    const std::string topo = sc.grid.periodic() ? "periodic" : "truncated";
    write_matrix_csv(outdir + "/generator.csv", sc.generator.entries, 0.0, topo);
    write_marginals_csv(outdir + "/marginals.csv", art.marginals.time, sc.grid.points());

    PsiField psi = recover_psi(sc.chain, art.potentials, art.psi_x0);
    write_field_csv(outdir + "/psi.csv", psi.values, 0);
    PressureField pres = extract_pressure(art.potentials, sc.constraints.marginals,
                                          sc.chain.dt, PressureGauge::mean_zero_under_mu);
    write_field_csv(outdir + "/pressure.csv", pres.values, 1);
    Matrix res = hjb_residual(psi, pres, sc.generator, sc.chain.dt);
    write_field_csv(outdir + "/residual.csv", res, 1);

    nlohmann::json rep;
    rep["name"] = sc.name;
    rep["n"] = sc.grid.n;
    rep["K"] = sc.chain.steps();
    rep["dt"] = sc.chain.dt;
    rep["converged"] = art.report.converged;
    rep["iterations"] = art.report.iterations;
    rep["constraint_gap"] = art.report.constraint_gap;
    rep["entropy"] = art.entropy_checked;
    rep["entropy_trace"] = art.report.entropy_trace;
    rep["dual_trace"] = art.report.dual_trace;
    rep["psi_x0"] = art.psi_x0;
    rep["htransform_gap"] = art.htransform_gap;
    rep["max_residual_implicit"] = art.max_residual_implicit;
    rep["max_residual_interior"] = art.max_residual_interior;
    rep["message"] = art.report.message;
    write_text_atomic(outdir + "/report.json", rep.dump(2) + "\n");

    return art.report.converged ? 0 : 2;
}

}  // namespace bsb
