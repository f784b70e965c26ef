#include "dcdm/chunking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dcdm {

RoutingScores project(Tape* tape, const Tensor& hidden, const SubspaceBank& bank) {
  if (bank.mu.empty()) throw std::invalid_argument("project: empty subspace bank");
  const int d = bank.model_dim();
  const int h = bank.subspace_dim();
  if (h < 1 || h > d)
    throw std::invalid_argument("project: subspace dim " + std::to_string(h) +
                                " outside [1, " + std::to_string(d) + "]");
  if (hidden.shape.size() != 2 || hidden.cols() != d)
    throw std::invalid_argument("project: hidden " + shape_str(hidden.shape) +
                                " does not match bank dim " + std::to_string(d));
  RoutingScores out;
  out.p.reserve(bank.mu.size());
  std::vector<Tensor> norms;
  norms.reserve(bank.mu.size());
  for (const Tensor& mu_k : bank.mu) {
    if (mu_k.shape.size() != 2 || mu_k.rows() != d || mu_k.cols() != h)
      throw std::invalid_argument("project: subspace " + shape_str(mu_k.shape) +
                                  " disagrees with bank [" + std::to_string(d) + "x" +
                                  std::to_string(h) + "]");
    Tensor p_k = matmul(tape, hidden, mu_k);
    norms.push_back(row_norms(tape, p_k));
    out.p.push_back(std::move(p_k));
  }
  out.r = concat_cols(tape, norms);
  return out;
}

Tensor affinity(Tape* tape, const Tensor& p_k) {
  if (p_k.shape.size() != 2)
    throw std::invalid_argument("affinity: expected rank-2 projections, got " +
                                shape_str(p_k.shape));
  return scale(tape, matmul_nt(tape, p_k, p_k), 1.0 / std::sqrt(double(p_k.cols())));
}

Tensor soft_aggregate(Tape* tape, const Tensor& hidden,
                      const std::vector<Tensor>& affinities, const Tensor& w_v,
                      const Tensor& w_o, const JointMask& mask) {
  if (affinities.empty()) throw std::invalid_argument("soft_aggregate: no affinities");
  const int l = hidden.rows();
  const int d = hidden.cols();
  if (w_v.shape.size() != 2 || w_v.rows() != d || w_v.cols() != d ||
      w_o.shape.size() != 2 || w_o.rows() != d || w_o.cols() != d)
    throw std::invalid_argument("soft_aggregate: W_V " + shape_str(w_v.shape) + " / W_O " +
                                shape_str(w_o.shape) + " must be [" + std::to_string(d) +
                                "x" + std::to_string(d) + "]");
  if (mask.size != l)
    throw std::invalid_argument("soft_aggregate: mask size " + std::to_string(mask.size) +
                                " != sequence length " + std::to_string(l));
  Tensor mix;
  for (std::size_t k = 0; k < affinities.size(); ++k) {
    const Tensor& a_k = affinities[k];
    if (a_k.shape.size() != 2 || a_k.rows() != l || a_k.cols() != l)
      throw std::invalid_argument("soft_aggregate: affinity " + shape_str(a_k.shape) +
                                  " != [" + std::to_string(l) + "x" + std::to_string(l) + "]");
    Tensor s = softmax_rows(tape, a_k, mask.allow.data());
    mix = k == 0 ? std::move(s) : add(tape, mix, s);
  }
  mix = scale(tape, mix, 1.0 / std::sqrt(double(affinities.size())));
  return matmul(tape, matmul(tape, mix, matmul(tape, hidden, w_v)), w_o);
}

ChunkAssignment route_hard(const RoutingScores& scores, BiasState* bias) {
  const Tensor& r = scores.r;
  if (r.shape.size() != 2)
    throw std::invalid_argument("route_hard: scores " + shape_str(r.shape) + " not rank-2");
  const int l = r.rows();
  const int k = r.cols();
  if (bias && static_cast<int>(bias->b.size()) != k)
    throw std::invalid_argument("route_hard: bias length " + std::to_string(bias->b.size()) +
                                " != K " + std::to_string(k));
  ChunkAssignment out;
  out.c.resize(l);
  for (int i = 0; i < l; ++i) {
    int best = 0;
    double best_score = r.at(i, 0) + (bias ? bias->b[0] : 0.0);
    for (int j = 1; j < k; ++j) {
      const double s = r.at(i, j) + (bias ? bias->b[j] : 0.0);
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    out.c[i] = best + 1;
    if (bias) ++bias->counts[best];
  }
  return out;
}

Tensor chunk_balance_loss(Tape* tape, const Tensor& samples, double eps) {
  if (samples.shape.size() != 2)
    throw std::invalid_argument("chunk_balance_loss: samples " + shape_str(samples.shape) +
                                " not rank-2");
  const int k = samples.cols();
  Tensor f = col_means(tape, samples);
  return scale(tape, sum_all(tape, log_elem(tape, scale_shift(tape, f, 1.0, eps))),
               -1.0 / double(k));
}

void bias_update(BiasState& state) {
  const int k = static_cast<int>(state.b.size());
  long long total = 0;
  for (long long n : state.counts) total += n;
  if (total == 0) return;
  std::vector<double> delta(k);
  double partial = 0.0;
  for (int i = 0; i + 1 < k; ++i) {
    delta[i] = state.eta_b * (double(state.counts[i]) / double(total) - 1.0 / double(k));
    partial += delta[i];
  }
  delta[k - 1] = -partial;  // corrections sum to zero exactly
  for (int i = 0; i < k; ++i) state.b[i] -= delta[i];
  std::fill(state.counts.begin(), state.counts.end(), 0);
  state.updates += 1;
}

double cluster_violation(const std::vector<long long>& counts) {
  if (counts.empty()) throw std::invalid_argument("cluster_violation: empty counts");
  const int k = static_cast<int>(counts.size());
  long long total = 0;
  for (long long n : counts) total += n;
  if (total == 0) throw std::invalid_argument("cluster_violation: zero total count");
  double sum = 0.0;
  for (int i = 0; i < k; ++i)
    sum += std::fabs(double(counts[i]) / double(total) - 1.0 / double(k));
  return 0.5 * double(k) * sum;
}

}  // namespace dcdm
