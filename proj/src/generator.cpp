#include "bsb/generator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bsb {

namespace {

constexpr double kTailTol = 1e-14;   // uniformization series tail
constexpr double kMaxPoissonRate = 40.0;  // halve-and-square above this
constexpr int kStableImages = 256;   // wrap images per side on periodic grids

// Out-of-range columns on truncated grids fold back into the diagonal so the
// row stays conservative.
void add_entry(Matrix& a, const Grid& g, std::size_t i, long col, double v) {
    const long n = static_cast<long>(g.n);
    if (g.periodic()) {
        long c = col % n;
        if (c < 0) c += n;
        a(i, static_cast<std::size_t>(c)) += v;
    } else if (col >= 0 && col < n) {
        a(i, static_cast<std::size_t>(col)) += v;
    } else {
        a(i, i) += v;
    }
}

void add_second_difference(Matrix& a, const Grid& g, std::size_t i, double coeff) {
    const double w = coeff / (g.spacing * g.spacing);
    add_entry(a, g, i, static_cast<long>(i) - 1, w);
    add_entry(a, g, i, static_cast<long>(i) + 1, w);
    a(i, i) -= 2.0 * w;
}

void add_upwind_drift(Matrix& a, const Grid& g, std::size_t i, double b) {
    if (b == 0.0) return;
    const double w = std::fabs(b) / g.spacing;
    const long dir = b > 0.0 ? 1 : -1;
    add_entry(a, g, i, static_cast<long>(i) + dir, w);
    a(i, i) -= w;
}

double cell_mass(double lo, double hi, double alpha) {
    return (std::pow(lo, -alpha) - std::pow(hi, -alpha)) / alpha;
}

double cell_second_moment(double lo, double hi, double alpha) {
    return (std::pow(hi, 2.0 - alpha) - std::pow(lo, 2.0 - alpha)) / (2.0 - alpha);
}

// Cell-integrated stable jump rates per column offset, plus the quadratic
// defect folded into an equivalent diffusion coefficient. Periodic grids wrap
// the measure (images o + m*n) and spread the analytic remainder uniformly;
// truncated grids keep single cells and let add_entry clip at the boundary.
struct StableRates {
    std::vector<double> rate;  // index = column offset 1..n-1
    double diffusion = 0.0;
};

StableRates stable_rates(const Grid& g, double alpha) {
    const std::size_t n = g.n;
    const double dx = g.spacing;
    StableRates out;
    out.rate.assign(n, 0.0);
    double defect = 2.0 * std::pow(dx / 2.0, 2.0 - alpha) / (2.0 - alpha);
    if (g.periodic()) {
        const std::size_t half = n / 2;
        for (std::size_t o = 1; o <= half; ++o) {
            double r = 0.0;
            for (int m = -kStableImages; m <= kStableImages; ++m) {
                const long p = static_cast<long>(o) + static_cast<long>(m) * static_cast<long>(n);
                if (p == 0) continue;
                const double c = std::fabs(static_cast<double>(p)) * dx;
                r += cell_mass(c - dx / 2.0, c + dx / 2.0, alpha);
            }
            out.rate[o] = r;
            if (o < half && n - o != o) out.rate[n - o] = r;  // exact mirror
        }
        if (n % 2 == 1) {
            // odd n: columns half+1..n-1 were filled by the mirror above
            for (std::size_t o = half + 1; o < n; ++o) out.rate[o] = out.rate[n - o];
        }
        const double radius = static_cast<double>(kStableImages) * static_cast<double>(n) * dx;
        const double tail = 2.0 * std::pow(radius, -alpha) / alpha;
        for (std::size_t o = 1; o < n; ++o) out.rate[o] += tail / static_cast<double>(n - 1);
        const std::size_t pmax = static_cast<std::size_t>(kStableImages) * n;
        for (std::size_t p = 1; p < pmax; ++p) {
            const double c = static_cast<double>(p) * dx;
            const double mass = cell_mass(c - dx / 2.0, c + dx / 2.0, alpha);
            defect += 2.0 * (cell_second_moment(c - dx / 2.0, c + dx / 2.0, alpha) - c * c * mass);
        }
    } else {
        for (std::size_t o = 1; o < n; ++o) {
            const double c = static_cast<double>(o) * dx;
            const double mass = cell_mass(c - dx / 2.0, c + dx / 2.0, alpha);
            out.rate[o] = mass;
            defect += 2.0 * (cell_second_moment(c - dx / 2.0, c + dx / 2.0, alpha) - c * c * mass);
        }
    }
    out.diffusion = defect;
    return out;
}

void add_stable_part(Matrix& a, const Grid& g, double alpha, double k_alpha) {
    const StableRates sr = stable_rates(g, alpha);
    const std::size_t n = g.n;
    for (std::size_t i = 0; i < n; ++i) {
        if (g.periodic()) {
            for (std::size_t o = 1; o < n; ++o) {
                const double r = k_alpha * sr.rate[o];
                add_entry(a, g, i, static_cast<long>(i + o), r);
                a(i, i) -= r;
            }
        } else {
            for (std::size_t o = 1; o < n; ++o) {
                const double r = k_alpha * sr.rate[o];
                if (r == 0.0) continue;
                add_entry(a, g, i, static_cast<long>(i) + static_cast<long>(o), r);
                a(i, i) -= r;
                add_entry(a, g, i, static_cast<long>(i) - static_cast<long>(o), r);
                a(i, i) -= r;
            }
        }
        add_second_difference(a, g, i, k_alpha * sr.diffusion / 2.0);
    }
}

void check_grid(const Grid& g) {
    if (g.n < 3 || !(g.spacing > 0.0)) throw std::invalid_argument("invalid grid");
}

}  // namespace

LevyTriplet LevyTriplet::constant(double drift, double diffusion, std::vector<Jump> jumps,
                                  double truncation_radius) {
    LevyTriplet t;
    t.drift = [drift](std::size_t) { return drift; };
    t.diffusion = [diffusion](std::size_t) { return diffusion; };
    t.jumps = [jumps](std::size_t) { return jumps; };
    t.truncation_radius = truncation_radius;
    return t;
}

void validate_generator(const Matrix& entries, double row_tol, double offdiag_floor) {
    for (std::size_t i = 0; i < entries.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < entries.cols; ++j) {
            s += entries(i, j);
            if (i != j && entries(i, j) < offdiag_floor)
                throw std::invalid_argument("generator: negative off-diagonal in row " +
                                            std::to_string(i));
        }
        if (std::fabs(s) > row_tol)
            throw std::invalid_argument("generator: row " + std::to_string(i) +
                                        " does not sum to zero");
    }
}

void validate_kernel(const Matrix& entries, double row_tol) {
    for (std::size_t i = 0; i < entries.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < entries.cols; ++j) {
            if (entries(i, j) < 0.0)
                throw std::invalid_argument("kernel: negative entry in row " + std::to_string(i));
            s += entries(i, j);
        }
        if (std::fabs(s - 1.0) > row_tol)
            throw std::invalid_argument("kernel: row " + std::to_string(i) +
                                        " does not sum to one");
    }
}

GeneratorMatrix heat_generator(const Grid& grid) {
    check_grid(grid);
    Matrix a(grid.n, grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) add_second_difference(a, grid, i, 0.5);
    validate_generator(a);
    return {a, grid};
}

GeneratorMatrix poisson_generator(const Grid& grid, double lambda, std::size_t z_steps) {
    check_grid(grid);
    if (!grid.periodic())
        throw std::invalid_argument("poisson_generator: shift needs a periodic grid");
    if (!(lambda > 0.0)) throw std::invalid_argument("poisson_generator: lambda must be > 0");
    if (z_steps == 0) throw std::invalid_argument("poisson_generator: z_steps must be >= 1");
    Matrix a(grid.n, grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        add_entry(a, grid, i, static_cast<long>(i + z_steps), lambda);
        a(i, i) -= lambda;
    }
    validate_generator(a);
    return {a, grid};
}

double stable_normalization(double alpha) {
    if (!(alpha > 0.0) || !(alpha < 2.0))
        throw std::invalid_argument("stable_normalization: alpha must be in (0,2)");
    return std::tgamma(1.0 + alpha) * std::sin(M_PI * alpha / 2.0) / M_PI;
}

GeneratorMatrix stable_generator(const Grid& grid, double alpha, double k_alpha) {
    check_grid(grid);
    if (!(alpha > 0.0) || !(alpha < 2.0))
        throw std::invalid_argument("stable_generator: alpha must be in (0,2)");
    if (!(k_alpha > 0.0)) throw std::invalid_argument("stable_generator: k_alpha must be > 0");
    Matrix a(grid.n, grid.n);
    add_stable_part(a, grid, alpha, k_alpha);
    validate_generator(a);
    return {a, grid};
}

GeneratorMatrix levy_generator(const Grid& grid, const LevyTriplet& triplet) {
    check_grid(grid);
    Matrix a(grid.n, grid.n);
    const double dx = grid.spacing;
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double b = triplet.drift ? triplet.drift(i) : 0.0;
        const double c = triplet.diffusion ? triplet.diffusion(i) : 0.0;
        if (c < 0.0) throw std::invalid_argument("levy_generator: negative diffusion");
        if (b != 0.0) {
            add_entry(a, grid, i, static_cast<long>(i) + 1, b / (2.0 * dx));
            add_entry(a, grid, i, static_cast<long>(i) - 1, -b / (2.0 * dx));
        }
        if (c != 0.0) add_second_difference(a, grid, i, c / 2.0);
        if (triplet.jumps) {
            for (const Jump& jp : triplet.jumps(i)) {
                if (jp.offset == 0)
                    throw std::invalid_argument("levy_generator: jump offset 0 is forbidden");
                if (jp.rate < 0.0)
                    throw std::invalid_argument("levy_generator: negative jump rate");
                if (jp.rate == 0.0) continue;
                add_entry(a, grid, i, static_cast<long>(i) + jp.offset, jp.rate);
                a(i, i) -= jp.rate;
                if (std::fabs(jp.offset * dx) <= triplet.truncation_radius) {
                    // compensator -rate * (offset*dx) * central gradient
                    const double w = jp.rate * static_cast<double>(jp.offset) / 2.0;
                    add_entry(a, grid, i, static_cast<long>(i) + 1, -w);
                    add_entry(a, grid, i, static_cast<long>(i) - 1, w);
                }
            }
        }
    }
    try {
        validate_generator(a);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("levy_generator: assembled matrix invalid "
                                                "(drift too large for spacing?): ") +
                                    e.what());
    }
    return {a, grid};
}

GeneratorMatrix ou_generator(const Grid& grid) {
    check_grid(grid);
    if (grid.periodic()) throw std::invalid_argument("ou_generator: needs a truncated grid");
    Matrix a(grid.n, grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) {
        add_second_difference(a, grid, i, 1.0);
        add_upwind_drift(a, grid, i, -grid.point(i));
    }
    validate_generator(a);
    return {a, grid};
}

GeneratorMatrix ou_stable_generator(const Grid& grid, double alpha, double k_alpha) {
    check_grid(grid);
    if (grid.periodic())
        throw std::invalid_argument("ou_stable_generator: needs a truncated grid");
    if (!(alpha > 0.0) || !(alpha < 2.0))
        throw std::invalid_argument("ou_stable_generator: alpha must be in (0,2)");
    if (!(k_alpha > 0.0))
        throw std::invalid_argument("ou_stable_generator: k_alpha must be > 0");
    Matrix a(grid.n, grid.n);
    add_stable_part(a, grid, alpha, k_alpha);
    for (std::size_t i = 0; i < grid.n; ++i) add_upwind_drift(a, grid, i, -grid.point(i));
    validate_generator(a);
    return {a, grid};
}

TransitionKernel transition(const GeneratorMatrix& gen, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("transition: dt must be > 0");
    const std::size_t n = gen.size();
    double lam = 0.0;
    for (std::size_t i = 0; i < n; ++i) lam = std::max(lam, std::fabs(gen.entries(i, i)));
    if (lam == 0.0) return {Matrix::identity(n), dt};

    double mu = lam * dt;
    int halvings = 0;
    while (mu > kMaxPoissonRate) {
        mu /= 2.0;
        ++halvings;
    }

    Matrix p = Matrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            p(i, j) += gen.entries(i, j) / lam;
            if (p(i, j) < 0.0) p(i, j) = 0.0;  // clears sub-1e-12 assembly dust
        }

    Matrix result(n, n);
    Matrix term = Matrix::identity(n);
    double w = std::exp(-mu);
    double cum = w;
    for (std::size_t i = 0; i < result.data.size(); ++i) result.data[i] = w * term.data[i];
    for (int k = 1; 1.0 - cum > kTailTol && k < 100000; ++k) {
        term = matmul(term, p);
        w *= mu / static_cast<double>(k);
        cum += w;
        for (std::size_t i = 0; i < result.data.size(); ++i)
            result.data[i] += w * term.data[i];
    }
    for (double& v : result.data) v /= cum;
    for (int s = 0; s < halvings; ++s) result = matmul(result, result);
    return {result, dt};
}

double invariant_residual(const GeneratorMatrix& gen, const Vec& mu) {
    if (mu.size() != gen.size())
        throw std::invalid_argument("invariant_residual: size mismatch");
    double s = 0.0;
    for (double v : mu) {
        if (v < 0.0) throw std::invalid_argument("invariant_residual: mu has negative mass");
        s += v;
    }
    if (std::fabs(s - 1.0) > 1e-8)
        throw std::invalid_argument("invariant_residual: mu does not sum to one");
    return max_abs(vecmat(mu, gen.entries));
}

}  // namespace bsb
