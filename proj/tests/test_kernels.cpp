#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "bsb/csv.hpp"
#include "bsb/densities.hpp"
#include "bsb/generator.hpp"
#include "bsb/grid.hpp"
#include "oracles.hpp"

using namespace bsb;

namespace {

Vec discretized_ou_stable_invariant(const Grid& g, double alpha) {
    Vec w(g.n);
    double s = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        w[i] = std::max(0.0, oracle::ou_stable_invariant_density(g.point(i), alpha));
        s += w[i];
    }
    for (double& v : w) v /= s;
    return w;
}

Vec kernel_stationary(const GeneratorMatrix& gen) {
    TransitionKernel longrun = transition(gen, 60.0);
    Vec st(gen.size());
    for (std::size_t z = 0; z < gen.size(); ++z) st[z] = longrun.entries(gen.size() / 2, z);
    return st;
}

double max_row_tv(const Matrix& k, const Vec& target) {
    double worst = 0.0;
    for (std::size_t i = 0; i < k.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k.cols; ++j) s += std::fabs(k(i, j) - target[j]);
        worst = std::max(worst, 0.5 * s);
    }
    return worst;
}

}  // namespace

TEST_CASE("grid construction") {
    Grid g = build_grid(4, 4.0, Topology::periodic);
    CHECK(g.spacing == doctest::Approx(1.0));
    CHECK(g.point(0) == doctest::Approx(-2.0));
    CHECK(g.point(3) == doctest::Approx(1.0));

    Grid t = build_grid(3, 2.0, Topology::truncated);
    CHECK(t.point(0) == doctest::Approx(-1.0));
    CHECK(t.point(1) == doctest::Approx(0.0));
    CHECK(t.point(2) == doctest::Approx(1.0));

    CHECK(build_grid(64, 16.0, Topology::truncated).spacing == doctest::Approx(16.0 / 63.0));

    CHECK_THROWS_AS(build_grid(2, 1.0, Topology::periodic), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(8, 0.0, Topology::periodic), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(8, -1.0, Topology::truncated), std::invalid_argument);
}

TEST_CASE("heat generator stencil and symmetry") {
    Grid g = build_grid(4, 4.0, Topology::periodic);
    GeneratorMatrix a = heat_generator(g);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.entries(i, i) == doctest::Approx(-1.0));
        CHECK(a.entries(i, (i + 1) % 4) == doctest::Approx(0.5));
        CHECK(a.entries(i, (i + 3) % 4) == doctest::Approx(0.5));
        CHECK(a.entries(i, (i + 2) % 4) == doctest::Approx(0.0));
    }
    CHECK(invariant_residual(a, uniform_weights(4)) < 1e-12);

    Grid big = build_grid(128, 32.0, Topology::periodic);
    GeneratorMatrix ab = heat_generator(big);
    double asym = 0.0;
    for (std::size_t i = 0; i < big.n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            asym = std::max(asym, std::fabs(ab.entries(i, j) - ab.entries(j, i)));
    CHECK(asym < 1e-14);
}

TEST_CASE("heat kernel matches the exact gaussian") {
    Grid g = build_grid(256, 32.0, Topology::truncated);
    GeneratorMatrix a = heat_generator(g);
    const double t = 0.5;
    TransitionKernel k = transition(a, t);
    const std::size_t i0 = g.n / 2;  // near 0
    double err = 0.0;
    for (std::size_t j = 0; j < g.n; ++j) {
        const double exact = oracle::normal_density(g.point(j) - g.point(i0), t) * g.spacing;
        err = std::max(err, std::fabs(k.entries(i0, j) - exact));
    }
    CHECK(err < 1e-3);
}

TEST_CASE("poisson generator") {
    Grid g = build_grid(4, 4.0, Topology::periodic);
    GeneratorMatrix a = poisson_generator(g, 1.0, 1);
    CHECK(a.entries(0, 0) == doctest::Approx(-1.0));
    CHECK(a.entries(0, 1) == doctest::Approx(1.0));
    CHECK(a.entries(0, 2) == doctest::Approx(0.0));
    CHECK(a.entries(0, 3) == doctest::Approx(0.0));
    CHECK(invariant_residual(a, uniform_weights(4)) < 1e-12);

    CHECK_THROWS_AS(poisson_generator(build_grid(8, 4.0, Topology::truncated), 1.0, 1),
                    std::invalid_argument);
}

TEST_CASE("poisson kernel equals the wrapped poisson pmf") {
    Grid g = build_grid(64, 64.0, Topology::periodic);
    GeneratorMatrix a = poisson_generator(g, 1.0, 1);
    TransitionKernel k = transition(a, 0.1);  // rate*t = 0.1
    CHECK(std::fabs(k.entries(0, 0) - std::exp(-0.1)) < 1e-12);
    for (std::size_t j = 0; j < g.n; ++j) {
        const double pmf = oracle::wrapped_poisson_pmf(0.1, j, g.n);
        CHECK(std::fabs(k.entries(0, j) - pmf) < 1e-10);
        CHECK(std::fabs(k.entries(17, (17 + j) % g.n) - pmf) < 1e-10);
    }
}

TEST_CASE("stable generator symmetry and invariant measure") {
    Grid g = build_grid(128, 32.0, Topology::periodic);
    GeneratorMatrix a = stable_generator(g, 1.5, 1.0);
    for (std::size_t i = 0; i < g.n; i += 17)
        for (std::size_t j = 1; j < g.n / 2; j += 5)
            CHECK(a.entries(i, (i + j) % g.n) ==
                  doctest::Approx(a.entries(i, (i + g.n - j) % g.n)).epsilon(1e-14));
    double asym = 0.0, rowsum = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.n; ++j) {
            s += a.entries(i, j);
            if (j < i) asym = std::max(asym, std::fabs(a.entries(i, j) - a.entries(j, i)));
        }
        rowsum = std::max(rowsum, std::fabs(s));
    }
    CHECK(asym < 1e-14);
    CHECK(rowsum < 1e-12);
    CHECK(invariant_residual(a, uniform_weights(g.n)) < 1e-12);

    CHECK_THROWS_AS(stable_generator(g, 2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(stable_generator(g, 0.0, 1.0), std::invalid_argument);

    // odd state counts keep the mirror exact too
    Grid odd = build_grid(33, 16.0, Topology::periodic);
    GeneratorMatrix ao = stable_generator(odd, 1.2, 1.0);
    CHECK(invariant_residual(ao, uniform_weights(33)) < 1e-12);
    for (std::size_t j = 1; j < 16; ++j)
        CHECK(ao.entries(5, (5 + j) % 33) ==
              doctest::Approx(ao.entries(5, (5 + 33 - j) % 33)).epsilon(1e-15));
}

TEST_CASE("stable generator spectrum tracks the stable symbol") {
    const double alpha = 1.5;
    const double L = 32.0;
    Grid g = build_grid(128, L, Topology::periodic);
    GeneratorMatrix a = stable_generator(g, alpha, stable_normalization(alpha));
    std::vector<double> ev = oracle::circulant_eigenvalues(a.entries);
    for (std::size_t m = 1; m <= 8; ++m) {
        const double xi = 2.0 * M_PI * static_cast<double>(m) / L;
        const double expected = std::pow(xi, alpha);
        CHECK(std::fabs(-ev[m] - expected) / expected < 0.05);
    }
}

TEST_CASE("levy generator reductions") {
    Grid g = build_grid(64, 16.0, Topology::periodic);
    GeneratorMatrix heat = heat_generator(g);
    GeneratorMatrix levy_heat = levy_generator(g, LevyTriplet::constant(0.0, 1.0, {}));
    CHECK(sup_diff(heat.entries, levy_heat.entries) < 1e-14);

    GeneratorMatrix pois = poisson_generator(g, 0.7, 1);
    GeneratorMatrix levy_pois =
        levy_generator(g, LevyTriplet::constant(0.0, 0.0, {{1, 0.7}}, 0.1 * g.spacing));
    CHECK(sup_diff(pois.entries, levy_pois.entries) < 1e-14);
}

TEST_CASE("levy generator general triplet and CFL rejection") {
    Grid g = build_grid(64, 16.0, Topology::periodic);
    GeneratorMatrix a = levy_generator(g, LevyTriplet::constant(0.2, 1.0, {{2, 0.3}}));
    for (std::size_t i = 0; i < g.n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.n; ++j) s += a.entries(i, j);
        CHECK(std::fabs(s) < 1e-12);
    }
    CHECK_THROWS_AS(levy_generator(g, LevyTriplet::constant(100.0, 0.01, {})),
                    std::invalid_argument);
    CHECK_THROWS_AS(levy_generator(g, LevyTriplet::constant(0.0, 0.0, {{0, 1.0}})),
                    std::invalid_argument);
}

TEST_CASE("ou generator drift vanishes at the origin") {
    Grid g = build_grid(17, 16.0, Topology::truncated);  // odd n puts 0 on the grid
    GeneratorMatrix a = ou_generator(g);
    const std::size_t mid = 8;
    CHECK(g.point(mid) == doctest::Approx(0.0));
    const double w = 1.0 / (g.spacing * g.spacing);
    CHECK(a.entries(mid, mid) == doctest::Approx(-2.0 * w));
    CHECK(a.entries(mid, mid + 1) == doctest::Approx(w));
    CHECK(a.entries(mid, mid - 1) == doctest::Approx(w));

    CHECK_THROWS_AS(ou_generator(build_grid(16, 8.0, Topology::periodic)),
                    std::invalid_argument);
}

TEST_CASE("ou generator keeps the discretized gaussian nearly invariant") {
    Grid fine = build_grid(256, 16.0, Topology::truncated);
    GeneratorMatrix a = ou_generator(fine);
    const double res = invariant_residual(a, discretized_gaussian(fine));
    CHECK(res > 0.0);
    CHECK(res < fine.spacing);  // O(dx) with constant < 1

    Grid coarse = build_grid(128, 16.0, Topology::truncated);
    const double res_coarse = invariant_residual(ou_generator(coarse), discretized_gaussian(coarse));
    CHECK(res_coarse / res >= 1.5);
}

TEST_CASE("ou kernel mixes to its stationary law") {
    Grid g = build_grid(128, 16.0, Topology::truncated);
    GeneratorMatrix a = ou_generator(g);
    Vec st = kernel_stationary(a);
    TransitionKernel k9 = transition(a, 9.0);
    CHECK(max_row_tv(k9.entries, st) < 1e-3);

    // stationary law converges to the discretized gaussian as dx refines
    auto tv_to_gaussian = [](std::size_t n) {
        Grid gg = build_grid(n, 16.0, Topology::truncated);
        Vec stat = kernel_stationary(ou_generator(gg));
        Vec target = discretized_gaussian(gg);
        double s = 0.0;
        for (std::size_t z = 0; z < n; ++z) s += std::fabs(stat[z] - target[z]);
        return 0.5 * s;
    };
    const double tv64 = tv_to_gaussian(64);
    const double tv128 = tv_to_gaussian(128);
    CHECK(tv128 < tv64);
    CHECK(tv64 / tv128 >= 1.5);
}

TEST_CASE("ou-stable generator") {
    Grid g = build_grid(128, 20.0, Topology::truncated);
    const double alpha = 1.5;
    const double k = stable_normalization(alpha);
    GeneratorMatrix full = ou_stable_generator(g, alpha, k);

    for (std::size_t i = 0; i < g.n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.n; ++j) s += full.entries(i, j);
        CHECK(std::fabs(s) < 1e-12);
    }

    // the drift upwinding is shared with the pure-diffusion construction:
    // (ou_stable - stable) == (ou - full second difference)
    GeneratorMatrix jump = stable_generator(g, alpha, k);
    GeneratorMatrix ou = ou_generator(g);
    GeneratorMatrix heat = heat_generator(g);
    double worst = 0.0;
    for (std::size_t i = 0; i < full.entries.data.size(); ++i) {
        const double lhs = full.entries.data[i] - jump.entries.data[i];
        const double rhs = ou.entries.data[i] - 2.0 * heat.entries.data[i];
        worst = std::max(worst, std::fabs(lhs - rhs));
    }
    CHECK(worst < 1e-9);

    CHECK_THROWS_AS(ou_stable_generator(build_grid(16, 8.0, Topology::periodic), alpha, k),
                    std::invalid_argument);
}

TEST_CASE("ou-stable invariant residual decays under refinement") {
    const double alpha = 1.5;
    const double k = stable_normalization(alpha);
    auto residual = [&](std::size_t n) {
        Grid g = build_grid(n, 20.0, Topology::truncated);
        return invariant_residual(ou_stable_generator(g, alpha, k),
                                  discretized_ou_stable_invariant(g, alpha));
    };
    const double r128 = residual(128);
    const double r256 = residual(256);
    CHECK(r256 > 0.0);
    CHECK(r128 / r256 >= 1.5);
}

TEST_CASE("transition kernel semigroup and edge cases") {
    Grid g = build_grid(64, 16.0, Topology::truncated);
    GeneratorMatrix a = ou_generator(g);
    TransitionKernel half = transition(a, 0.125);
    TransitionKernel full = transition(a, 0.25);
    validate_kernel(half.entries);
    CHECK(sup_diff(matmul(half.entries, half.entries), full.entries) < 1e-10);

    GeneratorMatrix zero = levy_generator(g, LevyTriplet::constant(0.0, 0.0, {}));
    TransitionKernel id = transition(zero, 1.0);
    CHECK(sup_diff(id.entries, Matrix::identity(g.n)) == 0.0);

    CHECK_THROWS_AS(transition(a, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(transition(a, -1.0), std::invalid_argument);
}

TEST_CASE("invariant_residual input validation") {
    Grid g = build_grid(8, 8.0, Topology::periodic);
    GeneratorMatrix a = heat_generator(g);
    Vec bad(8, 0.25);  // sums to 2
    CHECK_THROWS_AS(invariant_residual(a, bad), std::invalid_argument);
    Vec neg(8, 0.25);
    neg[0] = -0.75;
    CHECK_THROWS_AS(invariant_residual(a, neg), std::invalid_argument);
}

TEST_CASE("generator csv round trip") {
    Grid g = build_grid(16, 8.0, Topology::periodic);
    GeneratorMatrix a = stable_generator(g, 1.2, 0.7);
    const std::string path = "kernels_roundtrip.csv";
    write_matrix_csv(path, a.entries, 0.0, "periodic");
    MatrixCsv back = read_matrix_csv(path);
    CHECK(back.topology == "periodic");
    CHECK(back.dt == 0.0);
    CHECK(sup_diff(back.matrix, a.entries) == 0.0);  // %.17g round-trips exactly
}
