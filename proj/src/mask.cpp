#include "dcdm/mask.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace dcdm {

namespace {

void check_chunk_ids(const std::vector<int>& c) {
  if (c.empty()) throw std::invalid_argument("mask: empty chunk assignment");
  for (int v : c)
    if (v < 1)
      throw std::invalid_argument("mask: chunk ids must be >= 1, got " + std::to_string(v));
}

}  // namespace

JointMask JointMask::all_true(int n) {
  JointMask m;
  m.size = n;
  m.allow.assign(static_cast<long>(n) * n, 1);
  return m;
}

JointMask JointMask::all_false(int n) {
  JointMask m;
  m.size = n;
  m.allow.assign(static_cast<long>(n) * n, 0);
  return m;
}

JointMask noise_mask(const std::vector<std::uint8_t>& nu) {
  const int l = static_cast<int>(nu.size());
  if (l == 0) throw std::invalid_argument("noise_mask: empty sequence");
  JointMask m = JointMask::all_false(l);
  for (int q = 0; q < l; ++q)
    for (int k = 0; k < l; ++k)
      m.set(q, k, nu[k] == 0 || (nu[q] == 1 && q == k));
  return m;
}

JointMask stage1_train_mask(const std::vector<std::uint8_t>& nu) {
  const int l = static_cast<int>(nu.size());
  if (l == 0) throw std::invalid_argument("stage1_train_mask: empty sequence");
  JointMask half = noise_mask(nu);
  JointMask m = JointMask::all_false(2 * l);
  for (int q = 0; q < l; ++q)
    for (int k = 0; k < l; ++k) {
      m.set(q, k, half.at(q, k));
      m.set(l + q, l + k, half.at(q, k));
    }
  return m;
}

JointMask chunk_mask_inference(const std::vector<int>& c) {
  check_chunk_ids(c);
  const int l = static_cast<int>(c.size());
  JointMask m = JointMask::all_false(l);
  for (int q = 0; q < l; ++q)
    for (int k = 0; k < l; ++k) m.set(q, k, c[k] <= c[q]);
  return m;
}

JointMask training_chunk_clauses(const std::vector<int>& c, const std::vector<std::uint8_t>& nu) {
  check_chunk_ids(c);
  const int l = static_cast<int>(c.size());
  if (static_cast<int>(nu.size()) != l)
    throw std::invalid_argument("training_chunk_clauses: |nu| != |c|");
  JointMask m = JointMask::all_false(2 * l);
  for (int q = 0; q < 2 * l; ++q) {
    const bool q_noisy = q < l;
    const int cq = c[q % l];
    for (int k = 0; k < 2 * l; ++k) {
      const bool k_noisy = k < l;
      const int ck = c[k % l];
      bool ok = false;
      if (q_noisy && k_noisy)
        ok = cq == ck;        // denoise a chunk with bidirectional attention inside it
      else if (q_noisy && !k_noisy)
        ok = cq > ck;         // condition on ground truth of strictly earlier chunks
      else if (!q_noisy && !k_noisy)
        ok = cq >= ck;        // clean stream is chunk-causal
      m.set(q, k, ok);        // clean -> noisy stays false
    }
  }
  return m;
}

JointMask joint_training_mask(const std::vector<int>& c, const std::vector<std::uint8_t>& nu) {
  JointMask m = training_chunk_clauses(c, nu);
  const int l = static_cast<int>(c.size());
  // Clean queries keep the noise rule in every layer: a masked clean token
  // must stay identifiable only to itself, or later layers of the clean
  // stream would blend ground truth into states that noisy queries read.
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j) {
      const bool noise_ok = nu[j] == 0 || (nu[i] == 1 && i == j);
      if (!noise_ok) m.set(l + i, l + j, false);
    }
  return m;
}

std::vector<int> positional_chunks(int length, int block) {
  if (length <= 0 || block <= 0)
    throw std::invalid_argument("positional_chunks: length and block must be positive");
  std::vector<int> c(length);
  for (int i = 0; i < length; ++i) c[i] = i / block + 1;
  return c;
}

LeakageReport verify_no_leakage(const JointMask& mask, const std::vector<int>& c,
                                const std::vector<std::uint8_t>& nu) {
  const int l = static_cast<int>(c.size());
  if (mask.size != 2 * l)
    throw std::invalid_argument("verify_no_leakage: mask size " + std::to_string(mask.size) +
                                " does not match 2 * " + std::to_string(l));
  if (static_cast<int>(nu.size()) != l)
    throw std::invalid_argument("verify_no_leakage: |nu| != |c|");
  const int n = 2 * l;
  const JointMask stage1 = stage1_train_mask(nu);

  for (int m = 0; m < l; ++m) {
    if (!nu[m]) continue;  // only masked positions carry leakable ground truth
    const int source = l + m;  // clean-half node holding x_m

    // BFS: first hop through the chunking-stage mask, then a fixed point
    // over the training mask; residual connections add self-edges, so a
    // node once reached stays reached.
    std::vector<int> parent(n, -2);  // -2 unvisited, -1 source
    std::deque<int> queue;
    parent[source] = -1;
    queue.push_back(source);
    // stage-1 edges from the source
    for (int q = 0; q < n; ++q)
      if (parent[q] == -2 && stage1.at(q, source)) {
        parent[q] = source;
        queue.push_back(q);
      }
    // training-mask closure
    while (!queue.empty()) {
      const int k = queue.front();
      queue.pop_front();
      for (int q = 0; q < n; ++q)
        if (parent[q] == -2 && mask.at(q, k)) {
          parent[q] = k;
          queue.push_back(q);
        }
    }

    for (int pos = 0; pos < l; ++pos) {
      if (!nu[pos]) continue;
      if (c[pos] > c[m]) continue;  // strictly earlier chunks may be conditioned on
      if (parent[pos] == -2) continue;
      LeakageReport rep;
      rep.ok = false;
      for (int node = pos; node != -1; node = parent[node]) rep.path.push_back(node);
      std::reverse(rep.path.begin(), rep.path.end());
      std::ostringstream os;
      os << "ground truth x[" << m << "] (chunk " << c[m] << ") reaches noisy query " << pos
         << " (chunk " << c[pos] << ")";
      rep.description = os.str();
      return rep;
    }
  }
  return {};
}

std::string format_leakage_path(const LeakageReport& report, int length) {
  if (report.ok) return "no leakage";
  std::ostringstream os;
  os << report.description << ": ";
  for (std::size_t i = 0; i < report.path.size(); ++i) {
    const int node = report.path[i];
    if (i) os << " -> ";
    if (node < length)
      os << "noisy[" << node << "]";
    else
      os << "clean[" << node - length << "]";
  }
  return os.str();
}

}  // namespace dcdm
