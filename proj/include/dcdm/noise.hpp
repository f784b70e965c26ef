#pragma once

#include <cstdint>
#include <vector>

#include "dcdm/rng.hpp"

// Continuous-time absorbing ("masked") forward process with a linear
// schedule: alpha(t) = 1 - t, so the marginal mask rate at time t is t.
// The loss weight -alpha'(t) / (1 - alpha(t)) = 1/t multiplies the
// cross-entropy over masked positions; t is clamped away from 0 by eps_t.

namespace dcdm {

inline constexpr int kMaskId = 256;      // byte vocabulary 0..255 plus MASK
inline constexpr int kVocabSize = 257;

struct NoiseSchedule {
  double eps_t = 1e-3;

  // Survival probability of a token at time t; linear in t.
  double alpha(double t) const;
  // NELBO weight 1/t (positive-loss convention).
  double nelbo_weight(double t) const;
};

// One corrupted training sequence.
struct DiffusionBatch {
  std::vector<int> x;             // clean tokens
  std::vector<int> z;             // corrupted tokens (masked positions -> kMaskId)
  std::vector<std::uint8_t> nu;   // 1 where masked
  double t = 0.0;
  double weight = 0.0;            // nelbo_weight(t)
};

// Masks each position independently with probability 1 - alpha(t) = t.
// Requires eps_t <= t <= 1 and all token ids in [0, mask_id). mask_id is the
// last id of the active vocabulary (kMaskId for the byte vocabulary).
DiffusionBatch corrupt(const NoiseSchedule& sched, const std::vector<int>& x, double t, Rng& rng,
                       int mask_id = kMaskId);

}  // namespace dcdm
