#include "mur/rng.hpp"

#include <cmath>
#include <numbers>

namespace mur {

double GaussianSampler::operator()(Engine& engine) {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(engine);
  const double u2 = uniform01(engine);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace mur
