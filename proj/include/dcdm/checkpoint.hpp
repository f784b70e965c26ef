#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dcdm/model.hpp"

namespace dcdm {

// Model snapshot: "DCDM" magic, u32 format version, the resolved config text,
// then each parameter as a named record (u32 name length, name bytes, u32
// rank, u32 dims, raw little-endian 64-bit reals). Round-trips bitwise.
struct Checkpoint {
  std::string config_text;
  Parameters params;
};

void write_checkpoint(const std::string& path, const std::string& config_text,
                      const Parameters& params);
Checkpoint read_checkpoint(const std::string& path);

// Optimizer sidecar ("DCST"): everything beyond the weights that resuming a
// run needs — step counter, serialized rng, bias-controller counts, cumulative
// wall seconds, and the Adam moment tensors as m.<name> / v.<name> records.
struct TrainState {
  long long step = 0;
  double seconds = 0.0;
  std::string rng_state;
  std::vector<long long> counts;
  std::vector<std::pair<std::string, Tensor>> moments;
};

void write_train_state(const std::string& path, const TrainState& state);
TrainState read_train_state(const std::string& path);

// Record-level helpers shared by both files.
void write_named_tensors(std::ostream& out,
                         const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_named_tensors(std::istream& in,
                                                               const std::string& path);

}  // namespace dcdm
