#ifndef BSB_DENSITIES_HPP
#define BSB_DENSITIES_HPP

#include "bsb/dense.hpp"
#include "bsb/grid.hpp"

namespace bsb {

/// N(0,1) density sampled at grid points, normalized to a probability vector.
Vec discretized_gaussian(const Grid& grid);

/// Centred bivariate Gaussian with correlation c, sampled on grid x grid and
/// normalized to total mass one.
Matrix gaussian_coupling(const Grid& grid, double c);

Vec uniform_weights(std::size_t n);

/// Dirac mass at state i.
Vec delta_weights(std::size_t n, std::size_t i);

}  // namespace bsb

#endif
