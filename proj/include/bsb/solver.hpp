#ifndef BSB_SOLVER_HPP
#define BSB_SOLVER_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsb/dense.hpp"
#include "bsb/generator.hpp"

namespace bsb {

/// Raised when a constraint asks for mass the reference cannot supply.
struct InfeasibleError : std::runtime_error {
    explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// Time-homogeneous in the usual case, but kept as one kernel per step.
/// Times are t_k = k*dt, k = 0..K.
struct ReferenceChain {
    Vec initial_law;
    std::vector<Matrix> kernels;
    double dt = 0.0;

    std::size_t states() const { return initial_law.size(); }
    std::size_t steps() const { return kernels.size(); }
};

/// Interior marginal targets (times 1..K-1) plus the endpoint coupling.
struct ConstraintSet {
    std::vector<Vec> marginals;  // marginals[k-1] targets time k
    Matrix coupling;             // joint law of (X_0, X_K)
};

/// Log-density parameters of the product-form measure
///   P  proportional to  R * exp(eta(x_0,x_K) + sum_k a_k(x_k)).
/// Entries may be -inf exactly where a constraint carries no mass.
struct BSPotentials {
    Matrix eta;
    std::vector<Vec> a;  // a[k-1] lives at time k, k = 1..K-1

    static BSPotentials zero(std::size_t states, std::size_t steps);
};

struct SolveReport {
    std::size_t iterations = 0;  // completed sweeps
    double constraint_gap = 0.0;
    double entropy = 0.0;
    Vec entropy_trace;  // per-sweep H(P|R)
    Vec dual_trace;     // per-sweep dual ascent value; nondecreasing
    bool converged = false;
    std::string message;
};

/// All exact marginals of the product-form measure in one go.
struct Marginals {
    std::vector<Vec> time;  // K+1 probability vectors
    Matrix endpoint;        // joint (X_0, X_K), sums to one
    double log_mass = 0.0;  // log of the unnormalized total mass
};

constexpr std::size_t kEndpointConstraint = 0;  // `which` value for ipf_step

ReferenceChain build_reference(const TransitionKernel& kernel, std::size_t steps,
                               const Vec& initial_law);

ConstraintSet make_constraints(const ReferenceChain& chain, std::vector<Vec> marginals,
                               Matrix coupling);

/// Throws InfeasibleError naming the first constraint whose support the
/// reference cannot cover.
void check_support(const ReferenceChain& chain, const ConstraintSet& constraints);

Marginals marginals_all(const ReferenceChain& chain, const BSPotentials& pot);
Vec marginal(const ReferenceChain& chain, const BSPotentials& pot, std::size_t k);
Matrix endpoint_marginal(const ReferenceChain& chain, const BSPotentials& pot);

/// One exact projection. which = kEndpointConstraint or an interior time
/// index 1..K-1.
BSPotentials ipf_step(const ReferenceChain& chain, const BSPotentials& pot,
                      const ConstraintSet& constraints, std::size_t which);

/// Round-robin sweeps (endpoint, then interior times ascending) until the
/// worst total-variation violation drops below eps.
std::pair<BSPotentials, SolveReport> solve_bs(const ReferenceChain& chain,
                                              const ConstraintSet& constraints, double eps,
                                              std::size_t max_iter);

/// H(P|R), computed from the potentials and cross-checked against the
/// initial-law + step-kernel chain rule. Throws if the two routes disagree
/// beyond 1e-10.
double relative_entropy(const ReferenceChain& chain, const BSPotentials& pot);

/// Shifts each a_k to mean zero under the matching target marginal, folding
/// the constants into eta. The path law is unchanged.
BSPotentials gauge_normalize(const BSPotentials& pot, const std::vector<Vec>& marginals);

/// Exhaustive path table, indexed by x_0 * S^K + x_1 * S^{K-1} + ... + x_K.
struct PathTable {
    std::size_t states = 0;
    std::size_t steps = 0;
    std::vector<double> p;

    std::size_t size() const { return p.size(); }
};

/// Entropy minimizer over explicit path tables via multiplicative projections;
/// no product-form assumption. Rejects instances with more than 10^6 paths.
PathTable brute_force_solve(const ReferenceChain& chain, const ConstraintSet& constraints,
                            double tol = 1e-13, std::size_t max_sweeps = 200000);

PathTable reference_table(const ReferenceChain& chain);
PathTable table_from_potentials(const ReferenceChain& chain, const BSPotentials& pot);
double table_entropy(const PathTable& q, const PathTable& r);
Vec table_marginal(const PathTable& t, std::size_t k);
Matrix table_endpoint(const PathTable& t);

}  // namespace bsb

#endif
