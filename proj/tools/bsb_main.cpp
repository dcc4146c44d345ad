#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsb/csv.hpp"
#include "bsb/densities.hpp"
#include "bsb/ou_gaussian.hpp"
#include "bsb/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNoConvergence = 2;

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

int cmd_solve(const std::string& scenario_path, const std::string& outdir, double tol_override,
              std::size_t max_iter_override) {
    bsb::ScenarioInstance sc = bsb::load_scenario(scenario_path);
    if (tol_override > 0.0) sc.tol = tol_override;
    if (max_iter_override > 0) sc.max_iter = max_iter_override;
    ensure_dir(outdir);
    const int code = bsb::write_solve_artifacts(sc, outdir);
    std::cout << "scenario: " << sc.name << "\n"
              << (code == kExitOk ? "converged" : "did not converge") << "; artifacts in "
              << outdir << "\n";
    return code;
}

int cmd_ou_verify(double rho, double T, double tol, const std::string& outdir) {
    bsb::BridgeMixtureSpec spec{rho, T};
    const bool ok = bsb::verify_invariance(spec, tol);
    std::cout << "invariant: " << (ok ? "true" : "false") << "\n";
    if (!outdir.empty()) {
        ensure_dir(outdir);
        std::ostringstream csv;
        csv << "t,variance\n";
        for (int i = 0; i <= 100; ++i) {
            const double t = T * i / 100.0;
            csv << bsb::format_double(t) << ","
                << bsb::format_double(bsb::mixture_variance(spec, t)) << "\n";
        }
        bsb::write_text_atomic(outdir + "/mixture_variance.csv", csv.str());
        nlohmann::json j;
        j["rho"] = rho;
        j["T"] = T;
        j["tol"] = tol;
        j["invariant"] = ok;
        bsb::write_text_atomic(outdir + "/ou_verify.json", j.dump(2) + "\n");
    }
    return kExitOk;
}

int cmd_feasibility(double r, double s_min, double s_max, std::size_t s_steps, double c_min,
                    double c_max, std::size_t c_steps, const std::string& outdir) {
    if (!(std::fabs(r) < 1.0) || s_steps < 2 || c_steps < 2) {
        std::cerr << "feasibility: need |r| < 1 and at least 2 steps per axis\n";
        return kExitInvalid;
    }
    ensure_dir(outdir);
    std::ostringstream csv;
    csv << "r,s,c,min_eigenvalue,feasible\n";
    for (std::size_t i = 0; i < s_steps; ++i) {
        const double s = s_min + (s_max - s_min) * static_cast<double>(i) /
                                     static_cast<double>(s_steps - 1);
        for (std::size_t j = 0; j < c_steps; ++j) {
            const double c = c_min + (c_max - c_min) * static_cast<double>(j) /
                                         static_cast<double>(c_steps - 1);
            const double ev = bsb::toeplitz_eigenvalues({r, s, c})[0];
            csv << bsb::format_double(r) << "," << bsb::format_double(s) << ","
                << bsb::format_double(c) << "," << bsb::format_double(ev) << ","
                << (ev > 0.0 ? 1 : 0) << "\n";
        }
    }
    bsb::write_text_atomic(outdir + "/feasibility.csv", csv.str());
    std::cout << "wrote " << outdir << "/feasibility.csv\n";
    return kExitOk;
}

int cmd_certificate(double c, const std::string& outdir) {
    bsb::ExistenceReport rep = bsb::existence_certificate(c);
    std::cout << "feasible: " << (rep.feasible ? "true" : "false") << "\n";
    if (!outdir.empty()) {
        ensure_dir(outdir);
        nlohmann::json j;
        j["c"] = rep.c;
        j["r"] = rep.r;
        j["s"] = rep.s;
        j["min_eigenvalue"] = rep.min_eigenvalue;
        j["feasible"] = rep.feasible;
        j["invariance_ok"] = rep.invariance_ok;
        j["endpoint_kl"] = rep.endpoint_kl;
        if (std::isfinite(rep.interior_kl)) j["interior_kl"] = rep.interior_kl;
        bsb::write_text_atomic(outdir + "/certificate.json", j.dump(2) + "\n");
    }
    return kExitOk;
}

int cmd_sample_bridge(double x, double y, double T, std::size_t steps, std::uint64_t seed,
                      const std::string& outdir) {
    if (steps < 2) {
        std::cerr << "sample-bridge: need at least 2 time points\n";
        return kExitInvalid;
    }
    bsb::Vec times(steps);
    for (std::size_t i = 0; i < steps; ++i)
        times[i] = T * static_cast<double>(i) / static_cast<double>(steps - 1);
    bsb::Vec path = bsb::sample_bridge({x, y, T}, times, seed);
    ensure_dir(outdir);
    std::ostringstream csv;
    csv << "t,value\n";
    for (std::size_t i = 0; i < steps; ++i)
        csv << bsb::format_double(times[i]) << "," << bsb::format_double(path[i]) << "\n";
    bsb::write_text_atomic(outdir + "/bridge.csv", csv.str());
    std::cout << "wrote " << outdir << "/bridge.csv\n";
    return kExitOk;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "pass  " : "FAIL  ") << name << "\n";
        if (!ok) ++failures;
    };
    using namespace bsb;
    {
        Grid g = build_grid(64, 16.0, Topology::periodic);
        GeneratorMatrix a = heat_generator(g);
        check("heat generator invariants", true);  // constructor validates
        check("uniform invariant under heat", invariant_residual(a, uniform_weights(64)) < 1e-12);
        TransitionKernel k1 = transition(a, 0.25);
        TransitionKernel k2 = transition(a, 0.125);
        check("semigroup property",
              sup_diff(matmul(k2.entries, k2.entries), k1.entries) < 1e-9);
    }
    {
        BridgeMixtureSpec spec{std::exp(-1.0), 1.0};
        check("bridge mixture invariance at rho=e^-1", verify_invariance(spec, 1e-12));
        check("certificate feasible at c=0.9", existence_certificate(0.9).feasible);
        check("certificate infeasible at c=-0.9", !existence_certificate(-0.9).feasible);
    }
    {
        Grid g = build_grid(16, 8.0, Topology::truncated);
        GeneratorMatrix a = ou_generator(g);
        TransitionKernel k = transition(a, 0.25);
        ReferenceChain chain = build_reference(k, 4, discretized_gaussian(g));
        ConstraintSet cs =
            make_constraints(chain, std::vector<Vec>(3, discretized_gaussian(g)),
                             gaussian_coupling(g, 0.5));
        auto [pot, rep] = solve_bs(chain, cs, 1e-10, 500);
        check("small OU solve converges", rep.converged);
        check("h-transform consistency", htransform_consistency(chain, pot) < 1e-8);
    }
    std::cout << (failures == 0 ? "selftest: all checks passed\n"
                                : "selftest: FAILURES present\n");
    return failures == 0 ? kExitOk : kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
    bsb::configure_threads_from_env();
    CLI::App app{"Entropic bridge laboratory: constrained path-entropy solves, potential and "
                 "pressure extraction, and Ornstein-Uhlenbeck bridge certificates"};
    app.require_subcommand(1);

    std::string scenario_path, outdir = "out";
    double tol = -1.0;
    std::size_t max_iter = 0;
    auto* solve = app.add_subcommand("solve", "run a scenario end to end");
    solve->add_option("--scenario", scenario_path, "scenario JSON path")->required();
    solve->add_option("--out", outdir, "output directory");
    solve->add_option("--tol", tol, "override scenario tolerance");
    solve->add_option("--max-iter", max_iter, "override scenario sweep cap");

    double rho = std::exp(-1.0), T = 1.0, vtol = 1e-10;
    std::string vout;
    auto* ouv = app.add_subcommand("ou-verify", "check bridge-mixture invariance");
    ouv->add_option("--rho", rho, "endpoint correlation");
    ouv->add_option("--T", T, "horizon");
    ouv->add_option("--tol", vtol, "variance tolerance");
    ouv->add_option("--out", vout, "optional output directory");

    double fr = std::exp(-1.0 / 3.0), fsmin = 0.0, fsmax = 0.99, fcmin = -0.99, fcmax = 0.99;
    std::size_t fss = 50, fcs = 50;
    std::string fout = "out";
    auto* feas = app.add_subcommand("feasibility", "sweep the Toeplitz feasibility table");
    feas->add_option("--r", fr, "fixed r");
    feas->add_option("--s-min", fsmin);
    feas->add_option("--s-max", fsmax);
    feas->add_option("--s-steps", fss);
    feas->add_option("--c-min", fcmin);
    feas->add_option("--c-max", fcmax);
    feas->add_option("--c-steps", fcs);
    feas->add_option("--out", fout, "output directory");

    double cc = 0.9;
    std::string cout_dir = "out";
    auto* cert = app.add_subcommand("certificate", "existence certificate for a coupling");
    cert->add_option("--c", cc, "endpoint correlation of the coupling")->required();
    cert->add_option("--out", cout_dir, "output directory");

    double bx = 0.0, by = 0.0, bT = 1.0;
    std::size_t bsteps = 101;
    std::uint64_t bseed = 1;
    std::string bout = "out";
    auto* sb = app.add_subcommand("sample-bridge", "sample one pinned path");
    sb->add_option("--x", bx, "start value");
    sb->add_option("--y", by, "end value");
    sb->add_option("--T", bT, "horizon");
    sb->add_option("--steps", bsteps, "number of time points");
    sb->add_option("--seed", bseed, "RNG seed");
    sb->add_option("--out", bout, "output directory");

    app.add_subcommand("selftest", "run quick internal checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return cmd_solve(scenario_path, outdir, tol, max_iter);
        if (ouv->parsed()) return cmd_ou_verify(rho, T, vtol, vout);
        if (feas->parsed())
            return cmd_feasibility(fr, fsmin, fsmax, fss, fcmin, fcmax, fcs, fout);
        if (cert->parsed()) return cmd_certificate(cc, cout_dir);
        if (sb->parsed()) return cmd_sample_bridge(bx, by, bT, bsteps, bseed, bout);
        return cmd_selftest();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const bsb::InfeasibleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNoConvergence;
    }
}
