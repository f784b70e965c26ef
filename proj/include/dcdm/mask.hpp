#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Attention mask construction for the dual-stream training layout and the
// single-stream inference layout, plus a graph-reachability verifier that
// proves no ground-truth token can leak into a prediction that must not see
// it.
//
// Dual-stream convention: positions 0..L-1 are the noisy half (z), positions
// L..2L-1 the clean half (x). Chunk ids are shared across halves by position
// mod L and take values in {1..K}.

namespace dcdm {

struct JointMask {
  int size = 0;
  std::vector<std::uint8_t> allow;  // row-major [query * size + key], 1 = may attend

  bool at(int q, int k) const { return allow[static_cast<long>(q) * size + k] != 0; }
  void set(int q, int k, bool v) { allow[static_cast<long>(q) * size + k] = v; }
  static JointMask all_true(int n);
  static JointMask all_false(int n);
};

// Chunking-stage mask over one stream: a query may attend unmasked keys,
// and a masked query additionally attends itself.
JointMask noise_mask(const std::vector<std::uint8_t>& nu);

// Chunking-stage mask over the dual stream: the noise rule applied per half
// (by position mod L), with no attention across halves.
JointMask stage1_train_mask(const std::vector<std::uint8_t>& nu);

// Inference mask: query l may attend key m iff c[m] <= c[l].
JointMask chunk_mask_inference(const std::vector<int>& c);

// The three clause permissions of the dual-stream training mask, before the
// clean-query noise intersection:
//   (1) noisy->noisy within the same chunk,
//   (2) noisy->clean in strictly earlier chunks,
//   (3) clean->clean in the same or earlier chunks.
JointMask training_chunk_clauses(const std::vector<int>& c, const std::vector<std::uint8_t>& nu);

// Full training mask: the clauses with every clean-query row additionally
// intersected with the noise rule (ground truth at masked positions stays
// identifiable only to itself). Clean->noisy entries are always false.
JointMask joint_training_mask(const std::vector<int>& c, const std::vector<std::uint8_t>& nu);

// Block-positional chunk ids: position l gets chunk floor(l / block) + 1.
std::vector<int> positional_chunks(int length, int block);

struct LeakageReport {
  bool ok = true;
  // On failure: information-flow path of dual-stream node indices from a
  // clean masked source to an offending noisy query (node < L is noisy
  // position node; node >= L is clean position node - L).
  std::vector<int> path;
  std::string description;
};

// Builds the directed information-flow graph (key -> query) consisting of
// one chunking-stage layer of the per-half noise mask followed by
// arbitrarily many layers of `mask` plus residual self-edges, then checks
// that no masked clean token x_m can reach the noisy query at any masked
// position l with c[l] <= c[m] (including l == m). Reachability is computed
// to a fixed point, so the verdict holds for any layer count.
LeakageReport verify_no_leakage(const JointMask& mask, const std::vector<int>& c,
                                const std::vector<std::uint8_t>& nu);

std::string format_leakage_path(const LeakageReport& report, int length);

}  // namespace dcdm
