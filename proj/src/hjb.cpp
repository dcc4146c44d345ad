#include "bsb/hjb.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace bsb {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

PsiField recover_psi(const ReferenceChain& chain, const BSPotentials& pot, std::size_t x0) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    if (x0 >= S) throw std::invalid_argument("recover_psi: x0 out of range");
    PsiField out;
    out.x0 = x0;
    out.values = Matrix(K + 1, S, kNegInf);

    Vec cur(S);
    for (std::size_t z = 0; z < S; ++z) cur[z] = pot.eta(x0, z);
    for (std::size_t z = 0; z < S; ++z) out.values(K, z) = cur[z];

    for (std::size_t k = K; k-- > 0;) {
        double top = kNegInf;
        for (double v : cur) top = std::max(top, v);
        if (!std::isfinite(top))
            throw InfeasibleError("recover_psi: field vanished at time " + std::to_string(k + 1));
        Vec e(S);
        for (std::size_t z = 0; z < S; ++z) e[z] = std::exp(cur[z] - top);
        Vec conv = matvec(chain.kernels[k], e);
        Vec next(S);
        for (std::size_t z = 0; z < S; ++z) {
            const double ak = (k >= 1) ? pot.a[k - 1][z] : 0.0;
            next[z] = conv[z] > 0.0 ? ak + top + std::log(conv[z]) : kNegInf;
        }
        cur = std::move(next);
        for (std::size_t z = 0; z < S; ++z) out.values(k, z) = cur[z];
    }
    return out;
}

PressureField extract_pressure(const BSPotentials& pot, const std::vector<Vec>& marginals,
                               double dt, PressureGauge gauge) {
    if (!(dt > 0.0)) throw std::invalid_argument("extract_pressure: dt must be > 0");
    if (marginals.size() != pot.a.size())
        throw std::invalid_argument("extract_pressure: marginal count mismatch");
    const std::size_t S = pot.eta.rows;
    PressureField out;
    out.gauge = gauge;
    out.values = Matrix(pot.a.size(), S, 0.0);
    for (std::size_t k = 0; k < pot.a.size(); ++k) {
        double mean = 0.0;
        if (gauge == PressureGauge::mean_zero_under_mu) {
            for (std::size_t z = 0; z < S; ++z)
                if (marginals[k][z] > 0.0) mean += marginals[k][z] * pot.a[k][z];
            mean /= dt;
        }
        for (std::size_t z = 0; z < S; ++z) out.values(k, z) = pot.a[k][z] / dt - mean;
    }
    return out;
}

Matrix hjb_residual(const PsiField& psi, const PressureField& p, const GeneratorMatrix& gen,
                    double dt) {
    const std::size_t S = psi.values.cols;
    const std::size_t K = psi.values.rows - 1;
    if (p.values.rows != K - 1 || p.values.cols != S || gen.size() != S)
        throw std::invalid_argument("hjb_residual: shape mismatch");
    Matrix res(K - 1, S, kNaN);
    for (std::size_t k = 1; k < K; ++k) {
        Vec e(S);
        for (std::size_t z = 0; z < S; ++z) {
            const double v = psi.values(k, z);
            e[z] = std::isfinite(v) ? std::exp(v) : 0.0;
        }
        Vec ae = matvec(gen.entries, e);
        for (std::size_t z = 0; z < S; ++z) {
            const double pk = psi.values(k, z);
            const double pk1 = psi.values(k + 1, z);
            if (!std::isfinite(pk) || !std::isfinite(pk1)) continue;
            res(k - 1, z) = (pk1 - pk) / dt + ae[z] / e[z] + p.values(k - 1, z);
        }
    }
    return res;
}

Matrix hjb_residual_implicit(const PsiField& psi, const PressureField& p,
                             const ReferenceChain& chain) {
    const std::size_t S = psi.values.cols;
    const std::size_t K = psi.values.rows - 1;
    if (p.values.rows != K - 1 || p.values.cols != S || chain.steps() != K)
        throw std::invalid_argument("hjb_residual_implicit: shape mismatch");
    const double dt = chain.dt;
    Matrix res(K - 1, S, kNaN);
    for (std::size_t k = 1; k < K; ++k) {
        double top = kNegInf;
        for (std::size_t z = 0; z < S; ++z) top = std::max(top, psi.values(k + 1, z));
        if (!std::isfinite(top)) continue;
        Vec e(S);
        for (std::size_t z = 0; z < S; ++z) {
            const double v = psi.values(k + 1, z);
            e[z] = std::isfinite(v) ? std::exp(v - top) : 0.0;
        }
        Vec conv = matvec(chain.kernels[k], e);
        for (std::size_t z = 0; z < S; ++z) {
            const double pk = psi.values(k, z);
            const double pk1 = psi.values(k + 1, z);
            if (!std::isfinite(pk) || !std::isfinite(pk1) || conv[z] <= 0.0) continue;
            const double lognorm = std::log(conv[z]) + top - pk1;
            res(k - 1, z) = (pk1 - pk) / dt + lognorm / dt + p.values(k - 1, z);
        }
    }
    return res;
}

double max_abs_residual(const Matrix& residual) {
    double m = 0.0;
    for (double v : residual.data)
        if (std::isfinite(v)) m = std::max(m, std::fabs(v));
    return m;
}

std::pair<GirsanovData, ReferenceChain> girsanov_tilt(const PsiField& psi,
                                                      const ReferenceChain& chain,
                                                      double spacing) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    if (psi.values.rows != K + 1 || psi.values.cols != S)
        throw std::invalid_argument("girsanov_tilt: shape mismatch");
    if (!(spacing > 0.0)) throw std::invalid_argument("girsanov_tilt: spacing must be > 0");

    GirsanovData data;
    data.ell.reserve(K);
    data.beta = Matrix(K, S, kNaN);
    ReferenceChain tilted;
    tilted.dt = chain.dt;
    tilted.initial_law.assign(S, 0.0);
    tilted.initial_law[psi.x0] = 1.0;
    tilted.kernels.reserve(K);

    for (std::size_t k = 0; k < K; ++k) {
        double top = kNegInf;
        for (std::size_t z = 0; z < S; ++z) top = std::max(top, psi.values(k + 1, z));
        Vec e(S, 0.0);
        if (std::isfinite(top))
            for (std::size_t z = 0; z < S; ++z) {
                const double v = psi.values(k + 1, z);
                e[z] = std::isfinite(v) ? std::exp(v - top) : 0.0;
            }

        Matrix t(S, S, 0.0);
        Matrix l(S, S, kNaN);
        for (std::size_t z = 0; z < S; ++z) {
            const double* row = chain.kernels[k].row(z);
            double denom = 0.0;
            for (std::size_t y = 0; y < S; ++y) denom += row[y] * e[y];
            const bool reachable = std::isfinite(psi.values(k, z));
            if (denom <= 0.0) {
                if (reachable)
                    throw InfeasibleError("girsanov_tilt: zero normalizer at time " +
                                          std::to_string(k) + ", state " + std::to_string(z));
                t(z, z) = 1.0;  // off-support state, never visited
            } else {
                for (std::size_t y = 0; y < S; ++y) t(z, y) = row[y] * e[y] / denom;
            }
            const double pz = psi.values(k + 1, z);
            for (std::size_t y = 0; y < S; ++y) {
                const double py = psi.values(k + 1, y);
                if (std::isfinite(pz) && std::isfinite(py)) l(z, y) = std::exp(py - pz);
            }
        }
        // central gradient, one-sided at the ends
        for (std::size_t z = 0; z < S; ++z) {
            const std::size_t lo = z == 0 ? 0 : z - 1;
            const std::size_t hi = z == S - 1 ? S - 1 : z + 1;
            const double a = psi.values(k + 1, lo);
            const double b = psi.values(k + 1, hi);
            if (std::isfinite(a) && std::isfinite(b) && hi > lo)
                data.beta(k, z) = (b - a) / (static_cast<double>(hi - lo) * spacing);
        }
        data.ell.push_back(std::move(l));
        tilted.kernels.push_back(std::move(t));
    }
    return {std::move(data), std::move(tilted)};
}

double htransform_consistency(const ReferenceChain& chain, const BSPotentials& pot) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    Marginals m = marginals_all(chain, pot);

    std::vector<Vec> mix(K + 1, Vec(S, 0.0));
    std::vector<std::vector<Vec>> slices(S);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t x0 = 0; x0 < S; ++x0) {
        if (m.time[0][x0] <= 0.0) continue;
        PsiField psi = recover_psi(chain, pot, x0);
        auto [data, tilted] = girsanov_tilt(psi, chain);
        std::vector<Vec> local(K + 1);
        Vec cur = tilted.initial_law;
        local[0] = cur;
        for (std::size_t k = 0; k < K; ++k) {
            cur = vecmat(cur, tilted.kernels[k]);
            local[k + 1] = cur;
        }
        slices[x0] = std::move(local);
    }
    for (std::size_t x0 = 0; x0 < S; ++x0) {
        if (slices[x0].empty()) continue;
        for (std::size_t k = 0; k <= K; ++k)
            for (std::size_t z = 0; z < S; ++z)
                mix[k][z] += m.time[0][x0] * slices[x0][k][z];
    }
    double gap = 0.0;
    for (std::size_t k = 0; k <= K; ++k) gap = std::max(gap, sup_diff(mix[k], m.time[k]));
    return gap;
}

}  // namespace bsb
