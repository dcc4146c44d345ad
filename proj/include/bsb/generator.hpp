#ifndef BSB_GENERATOR_HPP
#define BSB_GENERATOR_HPP

#include <functional>
#include <vector>

#include "bsb/dense.hpp"
#include "bsb/grid.hpp"

namespace bsb {

/// One discretized jump: land `offset` grid cells away at the given rate.
struct Jump {
    int offset = 0;
    double rate = 0.0;
};

/// State-dependent drift/diffusion/jump data of a Courrege-form generator.
/// `truncation_radius` is the cutoff below which jumps are drift-compensated.
struct LevyTriplet {
    std::function<double(std::size_t)> drift;
    std::function<double(std::size_t)> diffusion;
    std::function<std::vector<Jump>(std::size_t)> jumps;
    double truncation_radius = 1.0;

    static LevyTriplet constant(double drift, double diffusion, std::vector<Jump> jumps,
                                double truncation_radius = 1.0);
};

/// Conservative Markov generator on a grid: rows sum to zero, off-diagonals
/// nonnegative. Constructors below enforce both on assembly.
struct GeneratorMatrix {
    Matrix entries;
    Grid grid;

    std::size_t size() const { return entries.rows; }
};

/// Row-stochastic transition matrix over one time step.
struct TransitionKernel {
    Matrix entries;
    double dt = 0.0;

    std::size_t size() const { return entries.rows; }
};

// -- constructors -----------------------------------------------------------

/// (1/2) * second difference.
GeneratorMatrix heat_generator(const Grid& grid);

/// A u(x) = lambda (u(x + z_steps*dx) - u(x)). Periodic grids only.
GeneratorMatrix poisson_generator(const Grid& grid, double lambda, std::size_t z_steps);

/// Symmetric alpha-stable jump generator, alpha in (0,2). Rates are the
/// cell integrals of k_alpha |y|^{-1-alpha}, wrapped on periodic grids, with
/// the sub-cell mass folded into an exact second-moment diffusion correction.
GeneratorMatrix stable_generator(const Grid& grid, double alpha, double k_alpha);

/// The constant that makes the alpha-stable jump integral have symbol -|xi|^alpha.
double stable_normalization(double alpha);

/// General Courrege assembly: central-difference drift (rejects CFL-violating
/// drifts), diffusion stencil, explicit jump list with h-compensation.
GeneratorMatrix levy_generator(const Grid& grid, const LevyTriplet& triplet);

/// A u = u'' - x u' with upwinded drift. Truncated grids.
GeneratorMatrix ou_generator(const Grid& grid);

/// Stable jump part plus upwinded drift -x u'. Truncated grids.
GeneratorMatrix ou_stable_generator(const Grid& grid, double alpha, double k_alpha);

// -- operations --------------------------------------------------------------

/// e^{dt A} by uniformization (tail truncated below 1e-14, halved-and-squared
/// when the Poisson rate is large). Row-stochastic and nonnegative by
/// construction.
TransitionKernel transition(const GeneratorMatrix& gen, double dt);

/// sup norm of mu^T A for a probability vector mu.
double invariant_residual(const GeneratorMatrix& gen, const Vec& mu);

/// Throws unless rows sum to ~0 and off-diagonals are nonnegative.
void validate_generator(const Matrix& entries, double row_tol = 1e-10,
                        double offdiag_floor = -1e-12);
void validate_kernel(const Matrix& entries, double row_tol = 1e-10);

}  // namespace bsb

#endif
