#pragma once

#include <cstdint>
#include <string>

#include "dcdm/model.hpp"

namespace dcdm {

// The tiny reference model used by every self-check: small enough that a full
// finite-difference sweep over all parameters finishes in seconds.
ModelConfig tiny_reference_config(Mode mode);

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  long worst_index = -1;
  long long param_count = 0;
  double seconds = 0.0;
  bool pass = false;  // max_rel_err < 1e-5
};

// Sweeps every trainable parameter of the tiny model with the
// finite-difference oracle (routing pinned, softmax surrogate forward).
GradcheckResult run_gradcheck(std::uint64_t seed);

struct LeakageFuzzResult {
  int mask_instances = 0;
  int perturbation_runs = 0;
  int violations = 0;
  std::string first_failure;  // flow path or perturbation description
  double seconds = 0.0;
  bool pass = false;  // zero violations
};

// n_masks random (c, nu) instances at lengths <= 16 through the reachability
// verifier, then n_perturb end-to-end checks that perturbing a hidden clean
// token never moves a logit it must not reach (tolerance 1e-12).
// sabotage_clause2 additionally opens one noisy->clean same-chunk edge in a
// handcrafted mask, which the verifier must catch and report as a path.
LeakageFuzzResult run_leakage_fuzz(int n_masks, int n_perturb, std::uint64_t seed,
                                   bool sabotage_clause2 = false);

struct DegenerateResult {
  bool positional_ids_equal = false;
  bool positional_masks_equal = false;
  double positional_logit_diff = 0.0;
  double positional_loss_diff = 0.0;
  double single_cluster_loss_diff = 0.0;
  double seconds = 0.0;
  bool pass = false;  // ids/masks equal, diffs <= 1e-12
};

// Positional-override routing must reproduce the block baseline, and a
// single-cluster model must reproduce the plain masked baseline.
DegenerateResult run_degenerate_checks(std::uint64_t seed);

}  // namespace dcdm
