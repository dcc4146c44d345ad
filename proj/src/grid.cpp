#include "bsb/grid.hpp"

#include <stdexcept>

namespace bsb {

std::vector<double> Grid::points() const {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = point(i);
    return p;
}

Grid build_grid(std::size_t n, double length, Topology topology) {
    if (n < 3) throw std::invalid_argument("build_grid: need n >= 3");
    if (!(length > 0.0)) throw std::invalid_argument("build_grid: need length > 0");
    Grid g;
    g.n = n;
    g.topology = topology;
    g.spacing = topology == Topology::periodic ? length / static_cast<double>(n)
                                               : length / static_cast<double>(n - 1);
    g.origin = -length / 2.0;
    return g;
}

}  // namespace bsb
