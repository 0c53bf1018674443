#include "diffcal/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "diffcal/error.hpp"

namespace diffcal {

GridImage toy_image(const Eigen::Vector4d& beta, int size) {
  if (size < 2) throw InvalidInput("toy image size must be at least 2");
  if (!beta.allFinite()) throw InvalidInput("toy parameters are not finite");
  GridImage img{GridGeometry{size, size, 0.0, 0.0, 1.0, 1.0}, GridField(size, size)};
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (int r = 0; r < size; ++r) {
    const double y = img.geometry.y_center(r) - 0.5;
    for (int c = 0; c < size; ++c) {
      const double x = img.geometry.x_center(c) - 0.5;
      const double a = x + beta(0) * std::sin(two_pi * beta(2) * y);
      const double b = y + beta(1) * std::cos(two_pi * beta(3) * x);
      img.values(r, c) = std::exp(-6.0 * (a * a + b * b));
    }
  }
  return img;
}

Eigen::Vector4d toy_reference_beta() { return {0.2, 0.3, 0.4, 0.8}; }
Eigen::Vector4d toy_lower_bounds() { return Eigen::Vector4d::Zero(); }
Eigen::Vector4d toy_upper_bounds() { return {0.5, 0.5, 0.7, 0.7}; }

Eigen::MatrixXd latin_hypercube(int n, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                std::uint64_t seed) {
  if (n < 1) throw InvalidInput("Latin hypercube needs n >= 1");
  if (lo.size() != hi.size() || lo.size() == 0) throw InvalidInput("bounds size mismatch");
  if (!lo.allFinite() || !hi.allFinite() || (hi.array() <= lo.array()).any()) {
    throw InvalidInput("bounds must satisfy lo < hi");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Index p = lo.size();
  Eigen::MatrixXd design(n, p);
  std::vector<int> perm(n);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) {
      const double s = (perm[i] + u(rng)) / n;
      design(i, j) = lo(j) + s * (hi(j) - lo(j));
    }
  }
  return design;
}

}  // namespace diffcal
