#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dcdm/config.hpp"
#include "dcdm/model.hpp"

namespace dcdm {

// AdamW with decoupled weight decay and bias correction. Moment tensors are
// kept in trainable-parameter order and mirror each parameter's shape.
struct OptimizerState {
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::vector<std::pair<std::string, Tensor>> m, v;

  static OptimizerState init(const Parameters& params);
};

// Linear ramp 0 -> peak over warmup steps, then cosine decay to 0 at max_steps.
double lr_schedule(long long step, double peak, long long warmup, long long max_steps);

// Scales all grads in place when the global l2 norm exceeds max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<std::pair<std::string, Tensor>>& grads,
                        double max_norm);

void adamw_step(Parameters& params,
                const std::vector<std::pair<std::string, Tensor>>& grads,
                OptimizerState& state, double lr);

struct TrainResult {
  std::string checkpoint_path;
  std::string state_path;
  std::string metrics_path;
  double final_nelbo = 0.0;
  double final_violation = 0.0;
  long long opt_steps = 0;
  long long bias_updates = 0;
};

// Runs the full loop: sample windows, sample t, corrupt, forward, backward,
// clip, step, bias update, metrics row per step (flushed immediately),
// checkpoints at the configured cadence plus a final one. Fully reproducible
// from the seed; pass resume_from (a checkpoint path with its .state sidecar)
// to continue an interrupted run bit-for-bit.
TrainResult train(const RunConfig& cfg, const std::string& out_dir,
                  std::uint64_t seed, const std::string& resume_from = "");

}  // namespace dcdm
