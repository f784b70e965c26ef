#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcdm/rng.hpp"

// Reverse-mode autodiff over dense 64-bit real tensors.
//
// The tape is define-by-run: every differentiable op appends one node in
// execution order, and backward() replays the nodes once in reverse. A tape
// is rebuilt from scratch for each forward pass and is single-threaded;
// parallelism lives inside the kernels, never across tape operations.

namespace dcdm {

class Tape;

// Rank-1 {n} or rank-2 {rows, cols} tensor; scalars use shape {1}.
// Data is shared, so copies alias; `node` ties a value to the tape that
// produced it (-1 for constants and fresh values).
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  int node = -1;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, std::vector<double> values);

  long numel() const;
  int rows() const;  // rank-2 only
  int cols() const;  // rank-2 only
  double& at(int i) { return (*data)[i]; }
  double at(int i) const { return (*data)[i]; }
  double& at(int i, int j) { return (*data)[static_cast<long>(i) * cols() + j]; }
  double at(int i, int j) const { return (*data)[static_cast<long>(i) * cols() + j]; }
  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }
  Tensor clone() const;  // deep copy, detached from any tape

  static Tensor zeros(std::vector<int> s);
  static Tensor full(std::vector<int> s, double v);
  static Tensor scalar(double v) { return full({1}, v); }
  static Tensor randn(std::vector<int> s, Rng& rng, double stddev);
};

std::string shape_str(const std::vector<int>& s);

class Tape {
 public:
  using GradMap = std::unordered_map<int, Tensor>;

  // Registers `t` as a trainable leaf and assigns it a node id.
  int watch(Tensor& t);

  // Reverse pass from a scalar loss. Visits each recorded node exactly once
  // and returns the accumulated gradient for every watched leaf (zeros for
  // leaves the loss does not reach). Throws if the loss is not a scalar or
  // is detached from this tape.
  GradMap backward(const Tensor& loss);

  // --- used by op implementations ---
  // Appends a node; `back` runs during the reverse pass with the node's
  // output gradient already accumulated. Returns the node id.
  int record(std::vector<int> out_shape, std::function<void(Tape&)> back);
  // Gradient buffer for a node, allocated on first touch.
  std::vector<double>& grad(int node);
  bool grad_defined(int node) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct NodeRec {
    std::vector<int> shape;
    bool leaf = false;
    std::function<void(Tape&)> back;
  };
  std::vector<NodeRec> nodes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const void*, int> watched_;  // data ptr -> leaf id (watch is idempotent)
};

// --- primitive operations -------------------------------------------------
// Each op validates shapes, rejects non-finite outputs (hard error), and
// records itself on `tape` when given one and at least one input is traced.
// Passing tape = nullptr evaluates forward only.

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double s);
// a*x + b elementwise with constant a, b.
Tensor scale_shift(Tape* tape, const Tensor& x, double a, double b);
Tensor log_elem(Tape* tape, const Tensor& x);
Tensor silu(Tape* tape, const Tensor& x);

// c[m x n] = a[m x p] * b[p x n]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
// c[m x n] = a[m x p] * b[n x p]^T
Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b);

// Row-wise softmax; `allow` is an optional row-major boolean mask of the
// same shape (1 = key permitted). Masked entries are exact zeros and a
// fully masked row yields the all-zero row (its gradient is zero as well).
Tensor softmax_rows(Tape* tape, const Tensor& x, const std::uint8_t* allow = nullptr);

// y[i,:] = x[i,:] * gain / sqrt(mean(x[i,:]^2) + eps)
Tensor rmsnorm(Tape* tape, const Tensor& x, const Tensor& gain, double eps);

// out[i,:] = table[ids[i],:]
Tensor embedding(Tape* tape, const Tensor& table, const std::vector<int>& ids);

// out[i,:] = x[i,:] + v  (v has shape {cols})
Tensor add_rowvec(Tape* tape, const Tensor& x, const Tensor& v);

Tensor slice_rows(Tape* tape, const Tensor& x, int r0, int r1);
Tensor slice_cols(Tape* tape, const Tensor& x, int c0, int c1);
Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts);

// out[i] = ||x[i,:]||_2, shape {rows, 1}. Zero rows get zero gradient.
Tensor row_norms(Tape* tape, const Tensor& x);

// out[j] = mean_i x[i,j], shape {1, cols}
Tensor col_means(Tape* tape, const Tensor& x);

Tensor sum_all(Tape* tape, const Tensor& x);

// Sum over rows with mask[i] != 0 of -log softmax(logits[i,:])[targets[i]].
// Stable log-sum-exp forward; the usual (softmax - onehot) backward.
Tensor masked_nll(Tape* tape, const Tensor& logits, const std::vector<int>& targets,
                  const std::vector<std::uint8_t>& mask);

// Straight-through Gumbel sampling, row-wise over scores [L x K].
// Forward: one-hot at argmax_k (scores[l,k] + noise[l,k]) / tau, unless
// soft_forward is set, in which case the forward value is the softmax
// surrogate itself (used by finite-difference validation).
// Backward (both modes): the Jacobian of softmax((scores + noise) / tau).
Tensor gumbel_st_rows(Tape* tape, const Tensor& scores, double tau,
                      const std::vector<double>& noise, bool soft_forward = false);

// --- finite-difference oracle ----------------------------------------------

// f evaluates a scalar loss from `params`; when `tape` is null it must run
// forward-only. Richardson-extrapolated central differences (evaluated at the
// given step and step/2); the relative error uses max(|analytic|, |numeric|,
// 1e-6) as denominator, so sub-1e-6 entries are held to an absolute bound
// instead of a relative one. Runs f twice up front and throws if the two
// values differ (non-deterministic f).
// f must read from the exact Tensor objects in `params`: the harness watches
// them for the analytic pass and perturbs them in place for the numeric one.
struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  long worst_index = -1;
};
FdReport finite_difference_check(
    const std::function<Tensor(Tape*)>& f,
    std::vector<std::pair<std::string, Tensor>>& params, double step = 1e-5);

void ensure_finite(const Tensor& t, const char* op);

}  // namespace dcdm
