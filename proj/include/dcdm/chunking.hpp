#pragma once

#include <vector>

#include "dcdm/mask.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

// Bank of K learned d-by-h subspaces shared by routing and the bilinear gate.
struct SubspaceBank {
  std::vector<Tensor> mu;  // each {d, h}

  int num_clusters() const { return static_cast<int>(mu.size()); }
  int model_dim() const { return mu.empty() ? 0 : mu[0].rows(); }
  int subspace_dim() const { return mu.empty() ? 0 : mu[0].cols(); }
};

struct RoutingScores {
  Tensor r;               // {L, K}: alignment magnitude of token l with subspace k
  std::vector<Tensor> p;  // K projections, each {L, h}
};

struct ChunkAssignment {
  std::vector<int> c;  // 1-based ids in {1..K}
};

// Non-trainable control state for global load balancing. Single writer; no
// gradient ever touches b.
struct BiasState {
  std::vector<double> b;
  std::vector<long long> counts;
  double eta_b = 1e-3;
  int update_interval = 1;
  long long updates = 0;

  explicit BiasState(int k) : b(k, 0.0), counts(k, 0) {}
};

// p[k] = H * mu_k, r(l,k) = |p[k] row l|.
RoutingScores project(Tape* tape, const Tensor& hidden, const SubspaceBank& bank);

// A_k = p_k p_k^T / sqrt(h); symmetric, diagonal r^2 / sqrt(h).
Tensor affinity(Tape* tape, const Tensor& p_k);

// Y = ((1/sqrt(K)) sum_k softmax_rows(A_k, mask)) * (H W_V) * W_O.
Tensor soft_aggregate(Tape* tape, const Tensor& hidden,
                      const std::vector<Tensor>& affinities, const Tensor& w_v,
                      const Tensor& w_o, const JointMask& mask);

// c_l = argmax_k (r(l,k) + b_k), ties to the smallest k. Reads forward values
// only; when bias is non-null its b is applied and its counts incremented.
ChunkAssignment route_hard(const RoutingScores& scores, BiasState* bias);

// samples: {L, K} one-hot rows. loss = -(1/K) sum_k log(mean_l samples(l,k) + eps).
Tensor chunk_balance_loss(Tape* tape, const Tensor& samples, double eps = 1e-8);

// b_k <- b_k - eta_b * (N_k/N - 1/K), corrections balanced to sum to zero
// exactly; counts reset. No-op when N == 0.
void bias_update(BiasState& state);

// V = (K/2) * sum_k |N_k/N - 1/K|, in [0, K-1]; zero iff exactly uniform.
double cluster_violation(const std::vector<long long>& counts);

}  // namespace dcdm
