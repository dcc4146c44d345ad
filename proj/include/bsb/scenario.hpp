#ifndef BSB_SCENARIO_HPP
#define BSB_SCENARIO_HPP

#include <cstdint>
#include <string>

#include "bsb/generator.hpp"
#include "bsb/grid.hpp"
#include "bsb/hjb.hpp"
#include "bsb/solver.hpp"

namespace bsb {

/// Everything the solve pipeline needs, built from a JSON scenario file.
struct ScenarioInstance {
    std::string name;
    Grid grid;
    GeneratorMatrix generator;
    TransitionKernel kernel;
    ReferenceChain chain;
    ConstraintSet constraints;
    double tol = 1e-9;
    std::size_t max_iter = 2000;
    std::uint64_t seed = 1;
};

/// Parses and builds a scenario. Throws std::invalid_argument with a
/// field-level message on malformed input.
ScenarioInstance load_scenario(const std::string& path);
ScenarioInstance parse_scenario_text(const std::string& text);

struct SolveArtifacts {
    SolveReport report;
    BSPotentials potentials;     // gauge-normalized
    Marginals marginals;
    std::size_t psi_x0 = 0;
    double entropy_checked = 0.0;
    double htransform_gap = 0.0;
    double max_residual_implicit = 0.0;
    double max_residual_interior = 0.0;  // masked to core support and t in [1/4, 3/4]
};

SolveArtifacts run_solve_pipeline(const ScenarioInstance& sc);

/// Runs the pipeline and writes marginals.csv, psi.csv, pressure.csv,
/// residual.csv, generator.csv and report.json under outdir.
/// Returns the CLI exit code: 0 converged, 2 not converged.
int write_solve_artifacts(const ScenarioInstance& sc, const std::string& outdir);

/// Residual aggregation used in reports: states carrying at least
/// `mass_cutoff` of the peak target mass, times within [t_lo, t_hi].
double masked_residual_max(const Matrix& residual, const Vec& weights, double mass_cutoff,
                           double dt, double t_lo, double t_hi);

}  // namespace bsb

#endif
