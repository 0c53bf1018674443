#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "diffcal/shapes.hpp"

namespace diffcal {

// p = exp(-6 ((x + b1 sin(2 pi b3 y))^2 + (y + b2 cos(2 pi b4 x))^2)) on a
// size x size cell-centred grid over [0, 1]^2, with (x, y) measured from the
// grid centre.
GridImage toy_image(const Eigen::Vector4d& beta, int size = 32);

Eigen::Vector4d toy_reference_beta();
Eigen::Vector4d toy_lower_bounds();
Eigen::Vector4d toy_upper_bounds();

// n x p Latin hypercube design in the box [lo, hi].
Eigen::MatrixXd latin_hypercube(int n, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                std::uint64_t seed);

}  // namespace diffcal
