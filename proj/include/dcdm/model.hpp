#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dcdm/chunking.hpp"
#include "dcdm/mask.hpp"
#include "dcdm/noise.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

enum class Mode { mdlm, bdlm, dcdm };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct ModelConfig {
  Mode mode = Mode::dcdm;
  int d = 64;
  int n_layers = 4;
  int n_heads = 4;
  int k = 8;           // routing clusters; every mode carries the layer (default 1 off-mode)
  int h = 16;          // subspace dimension
  int block_size = 0;  // positional block width, bdlm only
  int max_len = 512;
  int seq_len = 64;
  int d_ff = 128;
  int vocab_size = kVocabSize;
  double lambda_chunk = 1e-2;
  double rms_eps = 1e-6;
  double tau = 1.0;
  double init_std = 0.02;
  double mu_init_skew = 0.0;  // inflates the first subspace to start routing badly skewed

  void validate() const;  // throws std::invalid_argument naming the offending field
};

// Named parameter store; iteration order is fixed at construction and shared
// by the optimizer and the checkpoint format.
struct Parameters {
  std::vector<std::string> order;
  std::unordered_map<std::string, Tensor> by_name;

  void add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return by_name.count(name) != 0; }
  long long count() const;

  // chunk.bias is carried in the store (it shapes routing at inference) but
  // is control state, not a trainable weight.
  static bool trainable(const std::string& name) { return name != "chunk.bias"; }

  static Parameters init(const ModelConfig& cfg, Rng& rng);
};

struct DenoiserOutput {
  Tensor logits;           // {L, V}: noisy-half rows only
  ChunkAssignment chunks;  // length L, ids shared by both halves
  Tensor aux;              // scalar; constant zero outside routed training
};

struct ForwardOptions {
  bool gumbel_soft = false;                          // surrogate forward for fd checks
  const std::vector<int>* chunk_override = nullptr;  // pin c; aux still computed
  bool positional_override = false;                  // c from block_size; aux skipped
  const std::vector<double>* gumbel_noise = nullptr; // pre-drawn, row-major L*K
  BiasState* bias = nullptr;                         // live controller (counts accrue)
  Rng* rng = nullptr;                                // gumbel source when noise not given
};

// Dual-stream training pass (single stream for mdlm). The caller owns tape
// watching; parameters are read-only here.
DenoiserOutput forward_train(Tape* tape, const ModelConfig& cfg, const Parameters& params,
                             const DiffusionBatch& batch, const ForwardOptions& opt = {});

// Single-stream inference pass; mask from routed (or frozen) chunk ids.
DenoiserOutput forward_infer(const ModelConfig& cfg, const Parameters& params,
                             const std::vector<int>& z, double t,
                             const std::vector<int>* frozen_c = nullptr);

// {1, d} sinusoidal embedding of the diffusion time, added to every position.
Tensor time_embedding(int d, double t);

}  // namespace dcdm
