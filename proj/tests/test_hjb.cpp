#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "bsb/densities.hpp"
#include "bsb/generator.hpp"
#include "bsb/grid.hpp"
#include "bsb/hjb.hpp"
#include "bsb/scenario.hpp"
#include "bsb/solver.hpp"
#include "oracles.hpp"

using namespace bsb;

namespace {

ReferenceChain random_chain(std::size_t S, std::size_t K, std::mt19937_64& eng) {
    TransitionKernel k{oracle::random_kernel(S, eng), 1.0 / static_cast<double>(K)};
    ReferenceChain chain = build_reference(k, K, oracle::random_probability(S, eng));
    for (std::size_t j = 0; j < K; ++j) chain.kernels[j] = oracle::random_kernel(S, eng);
    return chain;
}

ConstraintSet random_feasible_constraints(const ReferenceChain& chain, std::mt19937_64& eng) {
    std::uniform_real_distribution<double> u(0.1, 1.0);
    PathTable t = reference_table(chain);
    double total = 0.0;
    for (double& v : t.p) {
        v = u(eng);
        total += v;
    }
    for (double& v : t.p) v /= total;
    std::vector<Vec> mus;
    for (std::size_t k = 1; k < chain.steps(); ++k) mus.push_back(table_marginal(t, k));
    return make_constraints(chain, mus, table_endpoint(t));
}

// conditional expectation E[ exp(eta(x0,X_K) + sum of remaining slice factors)
// given X_k = z ] by explicit enumeration of the remaining path segment
double enumerated_exp_psi(const ReferenceChain& chain, const BSPotentials& pot, std::size_t x0,
                          std::size_t k, std::size_t z) {
    const std::size_t S = chain.states();
    const std::size_t K = chain.steps();
    const double own = (k >= 1 && k <= K - 1) ? pot.a[k - 1][z] : 0.0;
    if (k == K) return std::exp(pot.eta(x0, z));
    std::vector<std::size_t> idx(K - k, 0);
    double total = 0.0;
    while (true) {
        double w = 1.0;
        std::size_t prev = z;
        double lg = own;
        for (std::size_t j = 0; j < K - k; ++j) {
            const std::size_t cur = idx[j];
            w *= chain.kernels[k + j](prev, cur);
            const std::size_t t = k + j + 1;
            if (t <= K - 1) lg += pot.a[t - 1][cur];
            prev = cur;
        }
        lg += pot.eta(x0, prev);
        if (w > 0.0 && std::isfinite(lg)) total += w * std::exp(lg);
        std::size_t d = K - k;
        bool done = false;
        while (d-- > 0) {
            if (++idx[d] < S) break;
            idx[d] = 0;
            if (d == 0) done = true;
        }
        if (done) break;
    }
    return total;
}

struct OuSetup {
    Grid grid;
    GeneratorMatrix gen;
    ReferenceChain chain;
    ConstraintSet cs;
    BSPotentials pot;  // gauge-normalized
};

OuSetup solved_ou(std::size_t n, std::size_t K, double c, double eps = 1e-10) {
    OuSetup s;
    s.grid = build_grid(n, 16.0, Topology::truncated);
    s.gen = ou_generator(s.grid);
    TransitionKernel k = transition(s.gen, 1.0 / static_cast<double>(K));
    s.chain = build_reference(k, K, discretized_gaussian(s.grid));
    s.cs = make_constraints(s.chain, std::vector<Vec>(K - 1, discretized_gaussian(s.grid)),
                            gaussian_coupling(s.grid, c));
    auto [pot, rep] = solve_bs(s.chain, s.cs, eps, 2000);
    REQUIRE(rep.converged);
    s.pot = gauge_normalize(pot, s.cs.marginals);
    return s;
}

}  // namespace

TEST_CASE("recover_psi constants") {
    std::mt19937_64 eng(7);
    ReferenceChain chain = random_chain(3, 3, eng);
    BSPotentials zero = BSPotentials::zero(3, 3);
    PsiField psi = recover_psi(chain, zero, 1);
    for (double v : psi.values.data) CHECK(std::fabs(v) < 1e-13);

    BSPotentials shifted = zero;
    for (double& v : shifted.eta.data) v = 0.7;
    PsiField psi2 = recover_psi(chain, shifted, 0);
    for (double v : psi2.values.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-13));
}

TEST_CASE("recover_psi equals the enumerated conditional expectation") {
    std::mt19937_64 eng(8);
    ReferenceChain chain = random_chain(3, 3, eng);
    BSPotentials pot = BSPotentials::zero(3, 3);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (double& v : pot.eta.data) v = u(eng);
    for (auto& a : pot.a)
        for (double& v : a) v = u(eng);
    for (std::size_t x0 = 0; x0 < 3; ++x0) {
        PsiField psi = recover_psi(chain, pot, x0);
        for (std::size_t k = 0; k <= 3; ++k)
            for (std::size_t z = 0; z < 3; ++z) {
                const double expected = enumerated_exp_psi(chain, pot, x0, k, z);
                CHECK(std::exp(psi.values(k, z)) == doctest::Approx(expected).epsilon(1e-12));
            }
    }
}

TEST_CASE("discrete backward identity holds exactly") {
    std::mt19937_64 eng(9);
    ReferenceChain chain = random_chain(4, 4, eng);
    ConstraintSet cs = random_feasible_constraints(chain, eng);
    auto [rawpot, rep] = solve_bs(chain, cs, 1e-12, 3000);
    BSPotentials pot = gauge_normalize(rawpot, cs.marginals);
    for (std::size_t x0 = 0; x0 < 4; ++x0) {
        PsiField psi = recover_psi(chain, pot, x0);
        for (std::size_t k = 0; k < 4; ++k) {
            for (std::size_t z = 0; z < 4; ++z) {
                double conv = 0.0;
                for (std::size_t y = 0; y < 4; ++y)
                    conv += chain.kernels[k](z, y) * std::exp(psi.values(k + 1, y));
                const double ak = k >= 1 ? pot.a[k - 1][z] : 0.0;
                const double lhs = std::exp(psi.values(k, z));
                const double rhs = std::exp(ak) * conv;
                CHECK(std::fabs(lhs - rhs) <= 1e-12 * std::max(1.0, std::fabs(rhs)));
            }
        }
    }
}

TEST_CASE("extract_pressure gauges") {
    BSPotentials pot = BSPotentials::zero(3, 3);
    std::vector<Vec> mus(2, Vec{0.2, 0.3, 0.5});
    const double dt = 0.25;
    PressureField p0 = extract_pressure(pot, mus, dt);
    for (double v : p0.values.data) CHECK(v == 0.0);

    // constant slice potentials are pure gauge
    for (auto& a : pot.a)
        for (double& v : a) v = 0.4 * dt;
    PressureField pz = extract_pressure(pot, mus, dt, PressureGauge::mean_zero_under_mu);
    for (double v : pz.values.data) CHECK(std::fabs(v) < 1e-14);
    PressureField praw = extract_pressure(pot, mus, dt, PressureGauge::raw);
    for (double v : praw.values.data) CHECK(v == doctest::Approx(0.4));

    std::mt19937_64 eng(10);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& a : pot.a)
        for (double& v : a) v = u(eng);
    PressureField p = extract_pressure(pot, mus, dt);
    for (std::size_t k = 0; k < 2; ++k) {
        double mean = 0.0;
        for (std::size_t z = 0; z < 3; ++z) mean += mus[k][z] * p.values(k, z);
        CHECK(std::fabs(mean) < 1e-12);
    }
}

TEST_CASE("hjb residual vanishes for constant fields") {
    Grid g = build_grid(16, 8.0, Topology::truncated);
    GeneratorMatrix gen = ou_generator(g);
    PsiField psi;
    psi.x0 = 8;
    psi.values = Matrix(5, 16, 0.3);
    PressureField p;
    p.values = Matrix(3, 16, 0.0);
    Matrix res = hjb_residual(psi, p, gen, 0.25);
    CHECK(max_abs_residual(res) < 1e-11);  // generator rows sum to zero
}

TEST_CASE("implicit residual vanishes on solved instances") {
    OuSetup s = solved_ou(32, 8, 0.8);
    PressureField p = extract_pressure(s.pot, s.cs.marginals, s.chain.dt,
                                       PressureGauge::mean_zero_under_mu);
    Marginals m = marginals_all(s.chain, s.pot);
    for (std::size_t x0 = 0; x0 < s.grid.n; x0 += 7) {
        if (m.time[0][x0] <= 0.0) continue;
        PsiField psi = recover_psi(s.chain, s.pot, x0);
        Matrix imp = hjb_residual_implicit(psi, p, s.chain);
        CHECK(max_abs_residual(imp) < 1e-10);
    }
}

TEST_CASE("explicit residual shrinks when the time grid doubles") {
    OuSetup s8 = solved_ou(64, 8, 0.9);
    OuSetup s16 = solved_ou(64, 16, 0.9);
    auto windowed = [](const OuSetup& s) {
        Marginals m = marginals_all(s.chain, s.pot);
        const Vec& p0 = m.time[0];
        const std::size_t x0 = static_cast<std::size_t>(
            std::max_element(p0.begin(), p0.end()) - p0.begin());
        PsiField psi = recover_psi(s.chain, s.pot, x0);
        PressureField p = extract_pressure(s.pot, s.cs.marginals, s.chain.dt,
                                           PressureGauge::mean_zero_under_mu);
        Matrix res = hjb_residual(psi, p, s.gen, s.chain.dt);
        return masked_residual_max(res, s.cs.marginals[0], 1e-4, s.chain.dt, 0.25, 0.75);
    };
    const double r8 = windowed(s8);
    const double r16 = windowed(s16);
    CHECK(r8 > 0.0);
    CHECK(r8 / r16 >= 1.5);
}

TEST_CASE("girsanov tilt of a constant field is the reference") {
    std::mt19937_64 eng(12);
    ReferenceChain chain = random_chain(4, 3, eng);
    BSPotentials pot = BSPotentials::zero(4, 3);
    for (double& v : pot.eta.data) v = 1.3;
    PsiField psi = recover_psi(chain, pot, 2);
    auto [data, tilted] = girsanov_tilt(psi, chain);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(sup_diff(tilted.kernels[k], chain.kernels[k]) < 1e-13);
        for (double v : data.ell[k].data) CHECK(v == doctest::Approx(1.0).epsilon(1e-13));
        for (std::size_t z = 0; z < 4; ++z) CHECK(std::fabs(data.beta(k, z)) < 1e-13);
    }
}

TEST_CASE("endpoint-only tilt reproduces the conditional endpoint law") {
    std::mt19937_64 eng(13);
    ReferenceChain chain = random_chain(4, 4, eng);
    ConstraintSet cs = random_feasible_constraints(chain, eng);
    BSPotentials pot = ipf_step(chain, BSPotentials::zero(4, 4), cs, kEndpointConstraint);
    const std::size_t x0 = 1;
    PsiField psi = recover_psi(chain, pot, x0);
    auto [data, tilted] = girsanov_tilt(psi, chain);
    Vec cur = tilted.initial_law;
    for (std::size_t k = 0; k < 4; ++k) cur = vecmat(cur, tilted.kernels[k]);
    double rowsum = 0.0;
    for (std::size_t y = 0; y < 4; ++y) rowsum += cs.coupling(x0, y);
    for (std::size_t y = 0; y < 4; ++y)
        CHECK(cur[y] == doctest::Approx(cs.coupling(x0, y) / rowsum).epsilon(1e-10));
}

TEST_CASE("tilted chain reproduces the brute-force path law") {
    std::mt19937_64 eng(14);
    ReferenceChain chain = random_chain(3, 3, eng);
    ConstraintSet cs = random_feasible_constraints(chain, eng);
    auto [rawpot, rep] = solve_bs(chain, cs, 1e-12, 3000);
    BSPotentials pot = gauge_normalize(rawpot, cs.marginals);
    Marginals m = marginals_all(chain, pot);
    PathTable brute = brute_force_solve(chain, cs);

    PathTable mix{3, 3, std::vector<double>(81, 0.0)};
    for (std::size_t x0 = 0; x0 < 3; ++x0) {
        if (m.time[0][x0] <= 0.0) continue;
        PsiField psi = recover_psi(chain, pot, x0);
        auto [data, tilted] = girsanov_tilt(psi, chain);
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = 0; b < 3; ++b)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double w = m.time[0][x0] * tilted.kernels[0](x0, a) *
                                     tilted.kernels[1](a, b) * tilted.kernels[2](b, c);
                    mix.p[((x0 * 3 + a) * 3 + b) * 3 + c] += w;
                }
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < 81; ++i)
        worst = std::max(worst, std::fabs(mix.p[i] - brute.p[i]));
    CHECK(worst < 1e-8);
}

TEST_CASE("htransform consistency") {
    std::mt19937_64 eng(15);
    ReferenceChain chain = random_chain(3, 3, eng);
    CHECK(htransform_consistency(chain, BSPotentials::zero(3, 3)) < 1e-14);

    ConstraintSet cs = random_feasible_constraints(chain, eng);
    auto [pot, rep] = solve_bs(chain, cs, 1e-12, 3000);
    CHECK(htransform_consistency(chain, pot) < 1e-8);

    OuSetup s = solved_ou(32, 6, 0.7);
    CHECK(htransform_consistency(s.chain, s.pot) < 1e-8);
}

TEST_CASE("jump and drift tilts are trivial only for constant potentials") {
    std::mt19937_64 eng(16);
    ReferenceChain chain = random_chain(3, 3, eng);
    ConstraintSet cs = random_feasible_constraints(chain, eng);
    auto [pot, rep] = solve_bs(chain, cs, 1e-12, 3000);
    PsiField psi = recover_psi(chain, pot, 0);
    auto [data, tilted] = girsanov_tilt(psi, chain);
    double dev = 0.0;
    for (const Matrix& l : data.ell)
        for (double v : l.data)
            if (std::isfinite(v)) dev = std::max(dev, std::fabs(v - 1.0));
    CHECK(dev > 1e-6);  // genuinely tilted instance

    BSPotentials flat = BSPotentials::zero(3, 3);
    for (double& v : flat.eta.data) v = -0.2;
    PsiField psi2 = recover_psi(chain, flat, 1);
    auto [data2, tilted2] = girsanov_tilt(psi2, chain);
    for (const Matrix& l : data2.ell)
        for (double v : l.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}
