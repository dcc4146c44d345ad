#include "bsb/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace bsb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double tv_distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return 0.5 * s;
}

double tv_distance(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
    return 0.5 * s;
}

// exp(a_k) per time slice; slices 0 and K carry no factor.
std::vector<Vec> factor_vectors(const BSPotentials& pot, std::size_t states,
                                std::size_t steps) {
    std::vector<Vec> phi(steps + 1, Vec(states, 1.0));
    for (std::size_t k = 1; k < steps; ++k)
        for (std::size_t z = 0; z < states; ++z) phi[k][z] = std::exp(pot.a[k - 1][z]);
    return phi;
}

struct BackwardMessages {
    bool alive = false;
    std::vector<Vec> beta;  // K+1 vectors, each rescaled to max 1
    Vec logscale;           // K+1
};

BackwardMessages backward_messages(const ReferenceChain& chain, const BSPotentials& pot,
                                   const std::vector<Vec>& phi, std::size_t x0) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    BackwardMessages out;
    out.beta.assign(K + 1, Vec(S, 0.0));
    out.logscale.assign(K + 1, 0.0);

    double top = kNegInf;
    for (std::size_t z = 0; z < S; ++z) top = std::max(top, pot.eta(x0, z));
    if (!std::isfinite(top)) return out;
    for (std::size_t z = 0; z < S; ++z) out.beta[K][z] = std::exp(pot.eta(x0, z) - top);
    out.logscale[K] = top;

    for (std::size_t k = K; k-- > 0;) {
        const Matrix& ker = chain.kernels[k];
        Vec t = matvec(ker, out.beta[k + 1]);
        double m = 0.0;
        for (std::size_t z = 0; z < S; ++z) {
            t[z] *= phi[k][z];
            m = std::max(m, t[z]);
        }
        if (m == 0.0) return out;  // dead branch
        for (double& v : t) v /= m;
        out.beta[k] = std::move(t);
        out.logscale[k] = out.logscale[k + 1] + std::log(m);
    }
    out.alive = true;
    return out;
}

// Flattened per-x0 contributions to every time marginal; reduced serially so
// results do not depend on the thread count.
struct SliceContributions {
    std::vector<std::vector<double>> c;       // [x0] -> (K+1)*S values
    std::vector<Vec> expo;                    // [x0] -> K+1 exponents
    std::vector<char> alive;
};

SliceContributions slice_contributions(const ReferenceChain& chain, const BSPotentials& pot) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    const std::vector<Vec> phi = factor_vectors(pot, S, K);

    SliceContributions sc;
    sc.c.assign(S, {});
    sc.expo.assign(S, Vec(K + 1, kNegInf));
    sc.alive.assign(S, 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t x0 = 0; x0 < S; ++x0) {
        if (chain.initial_law[x0] <= 0.0) continue;
        BackwardMessages bm = backward_messages(chain, pot, phi, x0);
        if (!bm.alive) continue;
        std::vector<double> contrib((K + 1) * S, 0.0);
        Vec expo(K + 1, 0.0);
        const double logr0 = std::log(chain.initial_law[x0]);

        Vec f(S, 0.0);
        f[x0] = 1.0;
        double logf = 0.0;
        for (std::size_t k = 0;; ++k) {
            for (std::size_t z = 0; z < S; ++z) contrib[k * S + z] = f[z] * bm.beta[k][z];
            expo[k] = logr0 + logf + bm.logscale[k];
            if (k == K) break;
            Vec g(S, 0.0);
            for (std::size_t z = 0; z < S; ++z) {
                const double w = f[z] * phi[k][z];
                if (w == 0.0) continue;
                const double* row = chain.kernels[k].row(z);
                for (std::size_t y = 0; y < S; ++y) g[y] += w * row[y];
            }
            double m = 0.0;
            for (double v : g) m = std::max(m, v);
            if (m == 0.0) break;  // fully absorbed; later slices contribute nothing
            for (double& v : g) v /= m;
            f = std::move(g);
            logf += std::log(m);
        }
        sc.c[x0] = std::move(contrib);
        sc.expo[x0] = std::move(expo);
        sc.alive[x0] = 1;
    }
    return sc;
}

std::string constraint_name(std::size_t which) {
    if (which == kEndpointConstraint) return "endpoint coupling";
    return "marginal at time " + std::to_string(which);
}

}  // namespace

BSPotentials BSPotentials::zero(std::size_t states, std::size_t steps) {
    BSPotentials p;
    p.eta = Matrix(states, states, 0.0);
    p.a.assign(steps >= 1 ? steps - 1 : 0, Vec(states, 0.0));
    return p;
}

ReferenceChain build_reference(const TransitionKernel& kernel, std::size_t steps,
                               const Vec& initial_law) {
    if (steps < 2) throw std::invalid_argument("build_reference: need at least 2 steps");
    if (initial_law.size() != kernel.size())
        throw std::invalid_argument("build_reference: initial law size mismatch");
    double s = 0.0;
    for (double v : initial_law) {
        if (v < 0.0) throw std::invalid_argument("build_reference: negative initial mass");
        s += v;
    }
    if (std::fabs(s - 1.0) > 1e-8)
        throw std::invalid_argument("build_reference: initial law does not sum to one");
    validate_kernel(kernel.entries);
    ReferenceChain chain;
    chain.initial_law = initial_law;
    chain.kernels.assign(steps, kernel.entries);
    chain.dt = kernel.dt;
    return chain;
}

ConstraintSet make_constraints(const ReferenceChain& chain, std::vector<Vec> marginals,
                               Matrix coupling) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    if (marginals.size() != K - 1)
        throw std::invalid_argument("make_constraints: need K-1 interior marginals");
    for (const Vec& m : marginals) {
        if (m.size() != S) throw std::invalid_argument("make_constraints: marginal size");
        double s = 0.0;
        for (double v : m) {
            if (v < 0.0) throw std::invalid_argument("make_constraints: negative marginal mass");
            s += v;
        }
        if (std::fabs(s - 1.0) > 1e-8)
            throw std::invalid_argument("make_constraints: marginal does not sum to one");
    }
    if (coupling.rows != S || coupling.cols != S)
        throw std::invalid_argument("make_constraints: coupling shape");
    double s = 0.0;
    for (double v : coupling.data) {
        if (v < 0.0) throw std::invalid_argument("make_constraints: negative coupling mass");
        s += v;
    }
    if (std::fabs(s - 1.0) > 1e-8)
        throw std::invalid_argument("make_constraints: coupling does not sum to one");
    return {std::move(marginals), std::move(coupling)};
}

void check_support(const ReferenceChain& chain, const ConstraintSet& constraints) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    // forward push of the reference
    Vec cur = chain.initial_law;
    std::vector<Vec> ref(K + 1);
    ref[0] = cur;
    for (std::size_t k = 0; k < K; ++k) {
        cur = vecmat(cur, chain.kernels[k]);
        ref[k + 1] = cur;
    }
    for (std::size_t k = 1; k < K; ++k)
        for (std::size_t z = 0; z < S; ++z)
            if (constraints.marginals[k - 1][z] > 0.0 && ref[k][z] <= 0.0)
                throw InfeasibleError("infeasible " + constraint_name(k) + ": state " +
                                      std::to_string(z) + " has no reference mass");
    // endpoint support: R_{0K}(x,y) = R_0(x) * (prod kernels)(x,y)
    Matrix prod = chain.kernels[0];
    for (std::size_t k = 1; k < K; ++k) prod = matmul(prod, chain.kernels[k]);
    for (std::size_t x = 0; x < S; ++x)
        for (std::size_t y = 0; y < S; ++y)
            if (constraints.coupling(x, y) > 0.0 &&
                chain.initial_law[x] * prod(x, y) <= 0.0)
                throw InfeasibleError("infeasible endpoint coupling: pair (" +
                                      std::to_string(x) + "," + std::to_string(y) +
                                      ") has no reference mass");
}

Marginals marginals_all(const ReferenceChain& chain, const BSPotentials& pot) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    SliceContributions sc = slice_contributions(chain, pot);

    Marginals out;
    out.time.assign(K + 1, Vec(S, 0.0));
    out.endpoint = Matrix(S, S, 0.0);

    for (std::size_t k = 0; k <= K; ++k) {
        double shift = kNegInf;
        for (std::size_t x0 = 0; x0 < S; ++x0)
            if (sc.alive[x0]) shift = std::max(shift, sc.expo[x0][k]);
        if (!std::isfinite(shift))
            throw InfeasibleError("zero total mass at time " + std::to_string(k) +
                                  ": potentials kill every path");
        double total = 0.0;
        for (std::size_t x0 = 0; x0 < S; ++x0) {
            if (!sc.alive[x0]) continue;
            const double w = std::exp(sc.expo[x0][k] - shift);
            if (w == 0.0) continue;
            const double* c = sc.c[x0].data() + k * S;
            for (std::size_t z = 0; z < S; ++z) {
                const double v = w * c[z];
                out.time[k][z] += v;
                total += v;
                if (k == K) out.endpoint(x0, z) = v;
            }
        }
        if (total <= 0.0)
            throw InfeasibleError("zero total mass at time " + std::to_string(k));
        for (double& v : out.time[k]) v /= total;
        if (k == K) {
            for (double& v : out.endpoint.data) v /= total;
            out.log_mass = shift + std::log(total);
        }
    }
    return out;
}

Vec marginal(const ReferenceChain& chain, const BSPotentials& pot, std::size_t k) {
    if (k > chain.steps()) throw std::invalid_argument("marginal: time index out of range");
    return marginals_all(chain, pot).time[k];
}

Matrix endpoint_marginal(const ReferenceChain& chain, const BSPotentials& pot) {
    return marginals_all(chain, pot).endpoint;
}

BSPotentials ipf_step(const ReferenceChain& chain, const BSPotentials& pot,
                      const ConstraintSet& constraints, std::size_t which) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    if (which != kEndpointConstraint && (which < 1 || which > K - 1))
        throw std::invalid_argument("ipf_step: no constraint with index " +
                                    std::to_string(which));
    Marginals m = marginals_all(chain, pot);
    BSPotentials next = pot;
    if (which == kEndpointConstraint) {
        for (std::size_t x = 0; x < S; ++x)
            for (std::size_t y = 0; y < S; ++y) {
                const double tgt = constraints.coupling(x, y);
                if (tgt == 0.0) {
                    next.eta(x, y) = kNegInf;
                } else {
                    const double cur = m.endpoint(x, y);
                    if (cur <= 0.0)
                        throw InfeasibleError("infeasible endpoint coupling: pair (" +
                                              std::to_string(x) + "," + std::to_string(y) +
                                              ") unreachable under current potentials");
                    next.eta(x, y) += std::log(tgt) - std::log(cur);
                }
            }
    } else {
        const Vec& tgt = constraints.marginals[which - 1];
        for (std::size_t z = 0; z < S; ++z) {
            if (tgt[z] == 0.0) {
                next.a[which - 1][z] = kNegInf;
            } else {
                const double cur = m.time[which][z];
                if (cur <= 0.0)
                    throw InfeasibleError("infeasible " + constraint_name(which) + ": state " +
                                          std::to_string(z) +
                                          " unreachable under current potentials");
                next.a[which - 1][z] += std::log(tgt[z]) - std::log(cur);
            }
        }
    }
    return next;
}

namespace {

double dual_value(const BSPotentials& pot, const ConstraintSet& constraints,
                  double log_mass) {
    double g = -log_mass;
    for (std::size_t i = 0; i < constraints.coupling.data.size(); ++i) {
        const double p = constraints.coupling.data[i];
        if (p > 0.0) g += p * pot.eta.data[i];
    }
    for (std::size_t k = 0; k < constraints.marginals.size(); ++k)
        for (std::size_t z = 0; z < constraints.marginals[k].size(); ++z) {
            const double p = constraints.marginals[k][z];
            if (p > 0.0) g += p * pot.a[k][z];
        }
    return g;
}

double entropy_from_marginals(const BSPotentials& pot, const Marginals& m) {
    double h = -m.log_mass;
    for (std::size_t i = 0; i < m.endpoint.data.size(); ++i)
        if (m.endpoint.data[i] > 0.0) h += m.endpoint.data[i] * pot.eta.data[i];
    for (std::size_t k = 0; k < pot.a.size(); ++k)
        for (std::size_t z = 0; z < pot.a[k].size(); ++z)
            if (m.time[k + 1][z] > 0.0) h += m.time[k + 1][z] * pot.a[k][z];
    return h;
}

}  // namespace

std::pair<BSPotentials, SolveReport> solve_bs(const ReferenceChain& chain,
                                              const ConstraintSet& constraints, double eps,
                                              std::size_t max_iter) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    if (constraints.marginals.size() != K - 1)
        throw std::invalid_argument("solve_bs: constraint count mismatch");
    check_support(chain, constraints);

    BSPotentials pot = BSPotentials::zero(S, K);
    SolveReport report;

    // per-x0 workspaces reused across sweeps
    std::vector<BackwardMessages> bms(S);
    std::vector<Vec> fwd(S);
    Vec logf(S, 0.0);
    std::vector<Vec> phi = factor_vectors(pot, S, K);

    for (std::size_t sweep = 0; sweep < max_iter; ++sweep) {
        // endpoint projection: forward-only pass gives the joint (X_0, X_K)
        {
            std::vector<Vec> rows(S);
            Vec expo(S, kNegInf);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
            for (std::size_t x0 = 0; x0 < S; ++x0) {
                if (chain.initial_law[x0] <= 0.0) continue;
                Vec f(S, 0.0);
                f[x0] = 1.0;
                double lf = 0.0;
                bool dead = false;
                for (std::size_t k = 0; k < K; ++k) {
                    Vec g(S, 0.0);
                    for (std::size_t z = 0; z < S; ++z) {
                        const double w = f[z] * phi[k][z];
                        if (w == 0.0) continue;
                        const double* row = chain.kernels[k].row(z);
                        for (std::size_t y = 0; y < S; ++y) g[y] += w * row[y];
                    }
                    double mx = 0.0;
                    for (double v : g) mx = std::max(mx, v);
                    if (mx == 0.0) { dead = true; break; }
                    for (double& v : g) v /= mx;
                    f = std::move(g);
                    lf += std::log(mx);
                }
                if (dead) continue;
                double etop = kNegInf;
                for (std::size_t y = 0; y < S; ++y) etop = std::max(etop, pot.eta(x0, y));
                if (!std::isfinite(etop)) continue;
                Vec row(S, 0.0);
                for (std::size_t y = 0; y < S; ++y)
                    row[y] = f[y] * std::exp(pot.eta(x0, y) - etop);
                rows[x0] = std::move(row);
                expo[x0] = std::log(chain.initial_law[x0]) + lf + etop;
            }
            double shift = kNegInf;
            for (double e : expo) shift = std::max(shift, e);
            if (!std::isfinite(shift)) throw InfeasibleError("solve_bs: reference chain is empty");
            Matrix ep(S, S, 0.0);
            double total = 0.0;
            for (std::size_t x0 = 0; x0 < S; ++x0) {
                if (rows[x0].empty()) continue;
                const double w = std::exp(expo[x0] - shift);
                for (std::size_t y = 0; y < S; ++y) {
                    ep(x0, y) = w * rows[x0][y];
                    total += ep(x0, y);
                }
            }
            for (double& v : ep.data) v /= total;
            for (std::size_t x = 0; x < S; ++x)
                for (std::size_t y = 0; y < S; ++y) {
                    const double tgt = constraints.coupling(x, y);
                    if (tgt == 0.0) {
                        pot.eta(x, y) = kNegInf;
                    } else {
                        if (ep(x, y) <= 0.0)
                            throw InfeasibleError(
                                "infeasible endpoint coupling: pair (" + std::to_string(x) + "," +
                                std::to_string(y) + ") unreachable under current potentials");
                        pot.eta(x, y) += std::log(tgt) - std::log(ep(x, y));
                    }
                }
        }

        // backward messages under the fresh eta
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
        for (std::size_t x0 = 0; x0 < S; ++x0) {
            if (chain.initial_law[x0] <= 0.0) {
                bms[x0] = BackwardMessages{};
                continue;
            }
            bms[x0] = backward_messages(chain, pot, phi, x0);
        }

        // ascending interior projections with incrementally advanced forwards
        for (std::size_t x0 = 0; x0 < S; ++x0) {
            fwd[x0].assign(S, 0.0);
            fwd[x0][x0] = 1.0;
            logf[x0] = 0.0;
        }
        for (std::size_t k = 1; k < K; ++k) {
            std::vector<Vec> contrib(S);
            Vec expo(S, kNegInf);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
            for (std::size_t x0 = 0; x0 < S; ++x0) {
                if (!bms[x0].alive) continue;
                Vec g(S, 0.0);
                for (std::size_t z = 0; z < S; ++z) {
                    const double w = fwd[x0][z] * phi[k - 1][z];
                    if (w == 0.0) continue;
                    const double* row = chain.kernels[k - 1].row(z);
                    for (std::size_t y = 0; y < S; ++y) g[y] += w * row[y];
                }
                double mx = 0.0;
                for (double v : g) mx = std::max(mx, v);
                if (mx == 0.0) { bms[x0].alive = false; continue; }
                for (double& v : g) v /= mx;
                fwd[x0] = std::move(g);
                logf[x0] += std::log(mx);
                Vec c(S, 0.0);
                for (std::size_t z = 0; z < S; ++z) c[z] = fwd[x0][z] * bms[x0].beta[k][z];
                contrib[x0] = std::move(c);
                expo[x0] = std::log(chain.initial_law[x0]) + logf[x0] + bms[x0].logscale[k];
            }
            double shift = kNegInf;
            for (double e : expo) shift = std::max(shift, e);
            if (!std::isfinite(shift))
                throw InfeasibleError("zero total mass at time " + std::to_string(k));
            Vec mk(S, 0.0);
            double total = 0.0;
            for (std::size_t x0 = 0; x0 < S; ++x0) {
                if (contrib[x0].empty()) continue;
                const double w = std::exp(expo[x0] - shift);
                for (std::size_t z = 0; z < S; ++z) {
                    mk[z] += w * contrib[x0][z];
                    total += w * contrib[x0][z];
                }
            }
            for (double& v : mk) v /= total;
            const Vec& tgt = constraints.marginals[k - 1];
            for (std::size_t z = 0; z < S; ++z) {
                if (tgt[z] == 0.0) {
                    pot.a[k - 1][z] = kNegInf;
                } else {
                    if (mk[z] <= 0.0)
                        throw InfeasibleError("infeasible " + constraint_name(k) + ": state " +
                                              std::to_string(z) +
                                              " unreachable under current potentials");
                    pot.a[k - 1][z] += std::log(tgt[z]) - std::log(mk[z]);
                }
                phi[k][z] = std::exp(pot.a[k - 1][z]);
            }
        }

        // sweep bookkeeping
        Marginals m = marginals_all(chain, pot);
        double gap = tv_distance(m.endpoint, constraints.coupling);
        for (std::size_t k = 1; k < K; ++k)
            gap = std::max(gap, tv_distance(m.time[k], constraints.marginals[k - 1]));
        report.iterations = sweep + 1;
        report.constraint_gap = gap;
        report.entropy = entropy_from_marginals(pot, m);
        report.entropy_trace.push_back(report.entropy);
        report.dual_trace.push_back(dual_value(pot, constraints, m.log_mass));
        if (gap <= eps) {
            report.converged = true;
            report.message = "converged";
            return {pot, report};
        }
    }
    report.converged = false;
    report.message = "constraint gap " + std::to_string(report.constraint_gap) + " after " +
                     std::to_string(report.iterations) + " sweeps";
    return {pot, report};
}

double relative_entropy(const ReferenceChain& chain, const BSPotentials& pot) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    Marginals m = marginals_all(chain, pot);
    const double route1 = entropy_from_marginals(pot, m);

    // chain rule: time-0 entropy plus expected step-kernel divergences of the
    // conditional (per-x0) h-transformed chains
    double route2 = 0.0;
    for (std::size_t z = 0; z < S; ++z) {
        const double p0 = m.time[0][z];
        if (p0 <= 0.0) continue;
        if (chain.initial_law[z] <= 0.0)
            throw InfeasibleError("relative_entropy: initial mass outside reference support");
        route2 += p0 * (std::log(p0) - std::log(chain.initial_law[z]));
    }
    const std::vector<Vec> phi = factor_vectors(pot, S, K);
    Vec percond(S, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t x0 = 0; x0 < S; ++x0) {
        if (m.time[0][x0] <= 0.0) continue;
        BackwardMessages bm = backward_messages(chain, pot, phi, x0);
        if (!bm.alive) continue;
        Vec cur(S, 0.0);
        cur[x0] = 1.0;
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const Matrix& ker = chain.kernels[k];
            Vec next(S, 0.0);
            for (std::size_t z = 0; z < S; ++z) {
                if (cur[z] <= 0.0) continue;
                const double* row = ker.row(z);
                double denom = 0.0;
                for (std::size_t y = 0; y < S; ++y) denom += row[y] * bm.beta[k + 1][y];
                if (denom <= 0.0)
                    throw InfeasibleError("relative_entropy: dead state inside support");
                double kl = 0.0;
                for (std::size_t y = 0; y < S; ++y) {
                    const double t = row[y] * bm.beta[k + 1][y] / denom;
                    if (t > 0.0) {
                        kl += t * std::log(t / row[y]);
                        next[y] += cur[z] * t;
                    }
                }
                acc += cur[z] * kl;
            }
            cur = std::move(next);
        }
        percond[x0] = acc;
    }
    for (std::size_t x0 = 0; x0 < S; ++x0) route2 += m.time[0][x0] * percond[x0];

    if (std::fabs(route1 - route2) > 1e-10)
        throw std::runtime_error("relative_entropy: chain-rule cross-check failed (" +
                                 std::to_string(route1) + " vs " + std::to_string(route2) + ")");
    return route1;
}

BSPotentials gauge_normalize(const BSPotentials& pot, const std::vector<Vec>& marginals) {
    if (marginals.size() != pot.a.size())
        throw std::invalid_argument("gauge_normalize: marginal count mismatch");
    BSPotentials out = pot;
    double shift = 0.0;
    for (std::size_t k = 0; k < out.a.size(); ++k) {
        double mean = 0.0;
        for (std::size_t z = 0; z < out.a[k].size(); ++z) {
            if (marginals[k][z] <= 0.0) continue;
            if (!std::isfinite(out.a[k][z]))
                throw std::invalid_argument("gauge_normalize: -inf potential on support");
            mean += marginals[k][z] * out.a[k][z];
        }
        for (double& v : out.a[k]) v -= mean;
        shift += mean;
    }
    for (double& v : out.eta.data)
        if (std::isfinite(v)) v += shift;
    return out;
}

// ---- exhaustive path tables -------------------------------------------------

namespace {

std::size_t table_size(std::size_t S, std::size_t K) {
    double sz = std::pow(static_cast<double>(S), static_cast<double>(K + 1));
    if (sz > 1e6) throw std::invalid_argument("path table too large (cap 10^6 paths)");
    std::size_t n = 1;
    for (std::size_t i = 0; i <= K; ++i) n *= S;
    return n;
}

inline std::size_t digit(std::size_t idx, std::size_t k, std::size_t K, std::size_t S,
                         const std::vector<std::size_t>& pw) {
    return (idx / pw[K - k]) % S;
}

std::vector<std::size_t> powers(std::size_t S, std::size_t K) {
    std::vector<std::size_t> pw(K + 1, 1);
    for (std::size_t i = 1; i <= K; ++i) pw[i] = pw[i - 1] * S;
    return pw;
}

}  // namespace

PathTable reference_table(const ReferenceChain& chain) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    PathTable t{S, K, std::vector<double>(table_size(S, K), 0.0)};
    const auto pw = powers(S, K);
    for (std::size_t idx = 0; idx < t.p.size(); ++idx) {
        double v = chain.initial_law[digit(idx, 0, K, S, pw)];
        for (std::size_t k = 0; k < K && v > 0.0; ++k)
            v *= chain.kernels[k](digit(idx, k, K, S, pw), digit(idx, k + 1, K, S, pw));
        t.p[idx] = v;
    }
    return t;
}

PathTable table_from_potentials(const ReferenceChain& chain, const BSPotentials& pot) {
    PathTable t = reference_table(chain);
    const std::size_t S = t.states, K = t.steps;
    const auto pw = powers(S, K);
    double total = 0.0;
    for (std::size_t idx = 0; idx < t.p.size(); ++idx) {
        if (t.p[idx] == 0.0) continue;
        double w = pot.eta(digit(idx, 0, K, S, pw), digit(idx, K, K, S, pw));
        for (std::size_t k = 1; k < K; ++k) w += pot.a[k - 1][digit(idx, k, K, S, pw)];
        t.p[idx] = std::isfinite(w) ? t.p[idx] * std::exp(w) : 0.0;
        total += t.p[idx];
    }
    if (total <= 0.0) throw InfeasibleError("table_from_potentials: zero mass");
    for (double& v : t.p) v /= total;
    return t;
}

double table_entropy(const PathTable& q, const PathTable& r) {
    if (q.p.size() != r.p.size()) throw std::invalid_argument("table_entropy: size mismatch");
    double h = 0.0;
    for (std::size_t i = 0; i < q.p.size(); ++i) {
        if (q.p[i] <= 0.0) continue;
        if (r.p[i] <= 0.0) throw InfeasibleError("table_entropy: q not dominated by r");
        h += q.p[i] * std::log(q.p[i] / r.p[i]);
    }
    return h;
}

Vec table_marginal(const PathTable& t, std::size_t k) {
    if (k > t.steps) throw std::invalid_argument("table_marginal: time out of range");
    const auto pw = powers(t.states, t.steps);
    Vec m(t.states, 0.0);
    for (std::size_t idx = 0; idx < t.p.size(); ++idx)
        m[digit(idx, k, t.steps, t.states, pw)] += t.p[idx];
    return m;
}

Matrix table_endpoint(const PathTable& t) {
    const auto pw = powers(t.states, t.steps);
    Matrix ep(t.states, t.states, 0.0);
    for (std::size_t idx = 0; idx < t.p.size(); ++idx)
        ep(digit(idx, 0, t.steps, t.states, pw), digit(idx, t.steps, t.steps, t.states, pw)) +=
            t.p[idx];
    return ep;
}

PathTable brute_force_solve(const ReferenceChain& chain, const ConstraintSet& constraints,
                            double tol, std::size_t max_sweeps) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    PathTable q = reference_table(chain);
    const auto pw = powers(S, K);

    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        Matrix ep = table_endpoint(q);
        Matrix ratio(S, S, 0.0);
        for (std::size_t x = 0; x < S; ++x)
            for (std::size_t y = 0; y < S; ++y) {
                const double tgt = constraints.coupling(x, y);
                if (tgt == 0.0) continue;
                if (ep(x, y) <= 0.0)
                    throw InfeasibleError("brute_force_solve: infeasible endpoint coupling at (" +
                                          std::to_string(x) + "," + std::to_string(y) + ")");
                ratio(x, y) = tgt / ep(x, y);
            }
        for (std::size_t idx = 0; idx < q.p.size(); ++idx)
            q.p[idx] *= ratio(digit(idx, 0, K, S, pw), digit(idx, K, K, S, pw));
        for (std::size_t k = 1; k < K; ++k) {
            Vec mk = table_marginal(q, k);
            Vec r(S, 0.0);
            for (std::size_t z = 0; z < S; ++z) {
                const double tgt = constraints.marginals[k - 1][z];
                if (tgt == 0.0) continue;
                if (mk[z] <= 0.0)
                    throw InfeasibleError("brute_force_solve: infeasible " + constraint_name(k) +
                                          " at state " + std::to_string(z));
                r[z] = tgt / mk[z];
            }
            for (std::size_t idx = 0; idx < q.p.size(); ++idx)
                q.p[idx] *= r[digit(idx, k, K, S, pw)];
        }
        gap = tv_distance(table_endpoint(q), constraints.coupling);
        for (std::size_t k = 1; k < K; ++k)
            gap = std::max(gap, tv_distance(table_marginal(q, k), constraints.marginals[k - 1]));
        if (gap <= tol) return q;
    }
    throw std::runtime_error("brute_force_solve: no convergence (gap " + std::to_string(gap) +
                             ")");
}

}  // namespace bsb
