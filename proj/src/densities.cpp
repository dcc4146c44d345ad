#include "bsb/densities.hpp"

#include <cmath>
#include <stdexcept>

namespace bsb {

Vec discretized_gaussian(const Grid& grid) {
    Vec w(grid.n);
    double s = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = grid.point(i);
        w[i] = std::exp(-x * x / 2.0);
        s += w[i];
    }
    for (double& v : w) v /= s;
    return w;
}

Matrix gaussian_coupling(const Grid& grid, double c) {
    if (!(std::fabs(c) < 1.0))
        throw std::invalid_argument("gaussian_coupling: need |c| < 1");
    const double q = 1.0 - c * c;
    Matrix m(grid.n, grid.n);
    double s = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = grid.point(i);
        for (std::size_t j = 0; j < grid.n; ++j) {
            const double y = grid.point(j);
            m(i, j) = std::exp(-(x * x - 2.0 * c * x * y + y * y) / (2.0 * q));
            s += m(i, j);
        }
    }
    for (double& v : m.data) v /= s;
    return m;
}

Vec uniform_weights(std::size_t n) {
    return Vec(n, 1.0 / static_cast<double>(n));
}

Vec delta_weights(std::size_t n, std::size_t i) {
    if (i >= n) throw std::invalid_argument("delta_weights: index out of range");
    Vec w(n, 0.0);
    w[i] = 1.0;
    return w;
}

}  // namespace bsb
