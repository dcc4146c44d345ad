#ifndef BSB_OU_GAUSSIAN_HPP
#define BSB_OU_GAUSSIAN_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "bsb/dense.hpp"

namespace bsb {

/// Ornstein-Uhlenbeck bridge pinned at x (time 0) and y (time T).
struct OUBridgeParams {
    double x = 0.0;
    double y = 0.0;
    double T = 1.0;
};

/// Mixture of OU bridges over the correlated endpoint law gamma_rho.
struct BridgeMixtureSpec {
    double rho = 0.0;
    double T = 1.0;
};

/// Symmetric 4x4 Toeplitz covariance with first row (1, r, s, c).
struct ToeplitzCov {
    double r = 0.0;
    double s = 0.0;
    double c = 0.0;

    Matrix assemble() const;
};

struct BridgePoint {
    double mean = 0.0;
    double variance = 0.0;
};

struct ExistenceReport {
    double c = 0.0;
    double r = 0.0;
    double s = 0.0;  // grid-search witness (best found)
    double min_eigenvalue = 0.0;
    bool feasible = false;
    bool invariance_ok = false;
    double endpoint_kl = 0.0;  // H(gamma_c | gamma_{e^-1})
    double interior_kl = 0.0;  // expected conditional-bridge divergence, feasible case only
    ToeplitzCov cov;
};

/// Pinned marginal: mean sinh(T-t)/sinh(T) x + sinh(t)/sinh(T) y,
/// variance 2 sinh(T-t) sinh(t) / sinh(T).
BridgePoint bridge_marginal(const OUBridgeParams& p, double t);

/// Exact sampling of the bridge at the given sorted times by sequential
/// Gaussian conditioning. Reproducible per seed.
Vec sample_bridge(const OUBridgeParams& p, const Vec& times, std::uint64_t seed);

double mixture_variance(const BridgeMixtureSpec& spec, double t);

/// True iff the mixture marginal variance stays within tol of 1 on a
/// 101-point time grid.
bool verify_invariance(const BridgeMixtureSpec& spec, double tol);

/// Closed-form eigenvalues of the assembled 4x4 matrix, ascending.
std::array<double, 4> toeplitz_eigenvalues(const ToeplitzCov& tc);

/// Open interval of c making C(r,s,c) positive definite, empty unless
/// s lies in (2r^2 - 1, 1).
std::optional<std::pair<double, double>> feasible_c_interval(double r, double s);

/// Searches the admissible s window for r = e^{-1/3}, certifies positive
/// definiteness, finite Gaussian divergences, and sub-bridge invariance.
ExistenceReport existence_certificate(double c);

/// KL divergence between centred Gaussians; both covariances must be
/// symmetric positive definite.
double gaussian_kl(const Matrix& cov1, const Matrix& cov2);

/// z-score of the empirical bridge-mixture variance at time t against
/// mixture_variance, over n Monte Carlo draws.
double mc_mixture_marginal_test(const BridgeMixtureSpec& spec, double t, std::size_t n,
                                std::uint64_t seed);

}  // namespace bsb

#endif
