#ifndef BSB_GRID_HPP
#define BSB_GRID_HPP

#include <cstddef>
#include <vector>

namespace bsb {

enum class Topology { periodic, truncated };

/// Uniform 1-D state grid centred at 0.
struct Grid {
    std::size_t n = 0;
    double spacing = 0.0;
    double origin = 0.0;
    Topology topology = Topology::truncated;

    double point(std::size_t i) const { return origin + spacing * static_cast<double>(i); }
    std::vector<double> points() const;
    bool periodic() const { return topology == Topology::periodic; }
};

/// spacing = length/n on periodic grids (last point wraps to the first),
/// length/(n-1) on truncated ones. Throws std::invalid_argument for n < 3
/// or non-positive length.
Grid build_grid(std::size_t n, double length, Topology topology);

}  // namespace bsb

#endif
