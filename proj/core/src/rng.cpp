#include "ffseg/rng.hpp"

#include <cmath>
#include <numbers>

namespace ffseg {

double CounterRng::Normal() {
  double u1 = Uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace ffseg
