#ifndef BSB_HJB_HPP
#define BSB_HJB_HPP

#include <vector>

#include "bsb/dense.hpp"
#include "bsb/generator.hpp"
#include "bsb/solver.hpp"

namespace bsb {

/// psi_k(z) = log E[ exp(eta(x0, X_K) + sum_{j>=k} a_j(X_j)) | X_k = z ]
/// conditioned on X_0 = x0, with the convention a_0 = a_K = 0.
struct PsiField {
    Matrix values;  // (K+1) x S, -inf off the reachable support
    std::size_t x0 = 0;
};

enum class PressureGauge { mean_zero_under_mu, raw };

struct PressureField {
    Matrix values;  // (K-1) x S, row k-1 is time k
    PressureGauge gauge = PressureGauge::raw;
};

/// Jump tilt ell and drift tilt beta read off a solved potential field.
struct GirsanovData {
    std::vector<Matrix> ell;  // per step k: ell[k](z,z') = exp(psi_{k+1}(z') - psi_{k+1}(z))
    Matrix beta;              // K x S central gradient of psi_{k+1}
};

/// Backward recursion e^{psi_k} = e^{a_k} (R_k e^{psi_{k+1}}), seeded by
/// psi_K = eta(x0, .).
PsiField recover_psi(const ReferenceChain& chain, const BSPotentials& pot, std::size_t x0);

/// p_k = a_k / dt, optionally shifted to mean zero under the target marginals.
PressureField extract_pressure(const BSPotentials& pot, const std::vector<Vec>& marginals,
                               double dt, PressureGauge gauge = PressureGauge::mean_zero_under_mu);

/// (psi_{k+1}-psi_k)/dt + e^{-psi_k} (A e^{psi_k}) + p_k for interior k.
/// NaN where psi is not finite.
Matrix hjb_residual(const PsiField& psi, const PressureField& p, const GeneratorMatrix& gen,
                    double dt);

/// Kernel (log-domain) form: (psi_{k+1}-psi_k)/dt
///   + log((R_k e^{psi_{k+1}}) / e^{psi_{k+1}})/dt + p_k.
/// Vanishes identically when p is the raw-gauge pressure of the same potentials.
Matrix hjb_residual_implicit(const PsiField& psi, const PressureField& p,
                             const ReferenceChain& chain);

double max_abs_residual(const Matrix& residual);

/// Doob h-transform of the reference by e^{psi}: the conditional chain of the
/// solved measure given X_0 = x0. `spacing` scales the drift-tilt gradient.
std::pair<GirsanovData, ReferenceChain> girsanov_tilt(const PsiField& psi,
                                                      const ReferenceChain& chain,
                                                      double spacing = 1.0);

/// Mixes the per-x0 tilted chains over the solved initial law and returns the
/// sup-norm gap against the solver marginals.
double htransform_consistency(const ReferenceChain& chain, const BSPotentials& pot);

}  // namespace bsb

#endif
