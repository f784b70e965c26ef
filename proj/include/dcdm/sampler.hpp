#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dcdm/model.hpp"

namespace dcdm {

// Ancestral generation job. Routing is computed once on the initial
// prompt+mask sequence and frozen, so chunks are denoised in ascending id
// order and tokens committed in chunk k are never revisited by chunk k' > k.
// reroute=true is the experimental alternative: reassign chunks before every
// round (t_inner becomes a total-round budget and commitment ordering is no
// longer guaranteed).
struct SampleJob {
  std::vector<int> prompt;
  int length = 64;
  int t_inner = 8;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool reroute = false;
};

struct RoundTrace {
  int chunk = 0;
  std::vector<std::pair<int, int>> committed;  // (position, token)
  double min_selected_confidence = 0.0;
  double max_unselected_confidence = -1.0;  // -1 when the round drained the chunk
};

struct SampleTrace {
  std::vector<int> chunks;
  std::vector<RoundTrace> rounds;
};

std::vector<int> generate(const ModelConfig& cfg, const Parameters& params,
                          const SampleJob& job, SampleTrace* trace = nullptr);

// Baseline decode: whole-sequence confidence-ordered unmasking over t_inner
// rounds. Requires an mdlm-mode config; identical machinery with the single
// trivial chunk.
std::vector<int> generate_mdlm(const ModelConfig& cfg, const Parameters& params,
                               const SampleJob& job, SampleTrace* trace = nullptr);

}  // namespace dcdm
