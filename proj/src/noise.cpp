#include "dcdm/noise.hpp"

#include <stdexcept>
#include <string>

namespace dcdm {

double NoiseSchedule::alpha(double t) const {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("alpha: t = " + std::to_string(t) + " outside [0, 1]");
  return 1.0 - t;
}

double NoiseSchedule::nelbo_weight(double t) const {
  if (t < eps_t || t > 1.0)
    throw std::invalid_argument("nelbo_weight: t = " + std::to_string(t) + " outside [eps_t, 1]");
  return 1.0 / t;
}

DiffusionBatch corrupt(const NoiseSchedule& sched, const std::vector<int>& x, double t, Rng& rng,
                       int mask_id) {
  if (t < sched.eps_t || t > 1.0)
    throw std::invalid_argument("corrupt: t = " + std::to_string(t) + " outside [eps_t, 1]");
  DiffusionBatch b;
  b.x = x;
  b.z.resize(x.size());
  b.nu.resize(x.size());
  b.t = t;
  b.weight = sched.nelbo_weight(t);
  const double mask_rate = 1.0 - sched.alpha(t);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] >= mask_id)
      throw std::invalid_argument("corrupt: token id " + std::to_string(x[i]) +
                                  " outside vocabulary [0, " + std::to_string(mask_id) + ")");
    const bool masked = rng.uniform() < mask_rate;
    b.nu[i] = masked;
    b.z[i] = masked ? mask_id : x[i];
  }
  return b;
}

}  // namespace dcdm
