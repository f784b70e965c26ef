#include "dcdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "dcdm/kernels.hpp"

namespace dcdm {

namespace {

long shape_numel(const std::vector<int>& s) {
  if (s.empty()) throw std::invalid_argument("Tensor: empty shape");
  long n = 1;
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument("Tensor: extents must be positive, got " + shape_str(s));
    n *= e;
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

void check_rank2(const Tensor& t, const char* op) {
  if (t.shape.size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape));
}

int node_of(const Tape* tape, const Tensor& t) { return tape ? t.node : -1; }

}  // namespace

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  data = std::make_shared<std::vector<double>>(shape_numel(shape), 0.0);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)) {
  if (shape_numel(shape) != static_cast<long>(values.size()))
    throw std::invalid_argument("Tensor: data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  data = std::make_shared<std::vector<double>>(std::move(values));
}

long Tensor::numel() const { return data ? static_cast<long>(data->size()) : 0; }

int Tensor::rows() const {
  if (shape.size() != 2) throw std::invalid_argument("Tensor::rows: not rank-2");
  return shape[0];
}

int Tensor::cols() const {
  if (shape.size() != 2) throw std::invalid_argument("Tensor::cols: not rank-2");
  return shape[1];
}

Tensor Tensor::clone() const {
  Tensor out;
  out.shape = shape;
  out.data = std::make_shared<std::vector<double>>(*data);
  return out;
}

Tensor Tensor::zeros(std::vector<int> s) { return Tensor(std::move(s)); }

Tensor Tensor::full(std::vector<int> s, double v) {
  Tensor t(std::move(s));
  std::fill(t.data->begin(), t.data->end(), v);
  return t;
}

Tensor Tensor::randn(std::vector<int> s, Rng& rng, double stddev) {
  Tensor t(std::move(s));
  for (double& x : *t.data) x = rng.normal() * stddev;
  return t;
}

void ensure_finite(const Tensor& t, const char* op) {
  for (double v : *t.data)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(op) + ": non-finite value in output");
}

// --- Tape -------------------------------------------------------------------

int Tape::watch(Tensor& t) {
  if (!t.data) throw std::invalid_argument("Tape::watch: empty tensor");
  const void* key = t.data.get();
  if (auto it = watched_.find(key); it != watched_.end()) {
    t.node = it->second;
    return it->second;
  }
  NodeRec rec;
  rec.shape = t.shape;
  rec.leaf = true;
  nodes_.push_back(std::move(rec));
  const int id = static_cast<int>(nodes_.size()) - 1;
  watched_.emplace(key, id);
  t.node = id;
  return id;
}

int Tape::record(std::vector<int> out_shape, std::function<void(Tape&)> back) {
  NodeRec rec;
  rec.shape = std::move(out_shape);
  rec.back = std::move(back);
  nodes_.push_back(std::move(rec));
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad(int node) {
  auto& g = grads_[node];
  if (g.empty()) g.assign(shape_numel(nodes_[node].shape), 0.0);
  return g;
}

bool Tape::grad_defined(int node) const {
  return node >= 0 && node < static_cast<int>(grads_.size()) && !grads_[node].empty();
}

Tape::GradMap Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("Tape::backward: loss must be a scalar");
  if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape::backward: loss is detached from this tape");
  grads_.assign(nodes_.size(), {});
  grad(loss.node)[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    if (!grads_[i].empty() && nodes_[i].back) nodes_[i].back(*this);
  }
  GradMap out;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (!nodes_[i].leaf) continue;
    Tensor g;
    g.shape = nodes_[i].shape;
    if (!grads_[i].empty())
      g.data = std::make_shared<std::vector<double>>(std::move(grads_[i]));
    else
      g.data = std::make_shared<std::vector<double>>(shape_numel(nodes_[i].shape), 0.0);
    out.emplace(i, std::move(g));
  }
  return out;
}

// --- elementwise ops ---------------------------------------------------------

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape);
  const long n = out.numel();
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (long i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  ensure_finite(out, "add");
  const int an = node_of(tape, a), bn = node_of(tape, b);
  if (tape && (an >= 0 || bn >= 0)) {
    out.node = tape->record(out.shape, [an, bn, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      if (an >= 0) {
        auto& ga = tp.grad(an);
        for (long i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = tp.grad(bn);
        for (long i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape);
  const long n = out.numel();
  const double* pa = a.ptr();
  const double* pb = b.ptr();
  double* po = out.ptr();
  for (long i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  ensure_finite(out, "mul");
  const int an = node_of(tape, a), bn = node_of(tape, b);
  if (tape && (an >= 0 || bn >= 0)) {
    out.node = tape->record(out.shape, [a, b, an, bn, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      if (an >= 0) {
        auto& ga = tp.grad(an);
        const double* pb2 = b.ptr();
        for (long i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
      }
      if (bn >= 0) {
        auto& gb = tp.grad(bn);
        const double* pa2 = a.ptr();
        for (long i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, double s) { return scale_shift(tape, a, s, 0.0); }

Tensor scale_shift(Tape* tape, const Tensor& x, double a, double b) {
  Tensor out(x.shape);
  const long n = out.numel();
  const double* px = x.ptr();
  double* po = out.ptr();
  for (long i = 0; i < n; ++i) po[i] = a * px[i] + b;
  ensure_finite(out, "scale_shift");
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [xn, a, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gx = tp.grad(xn);
      for (long i = 0; i < n; ++i) gx[i] += a * g[i];
    });
  }
  return out;
}

Tensor log_elem(Tape* tape, const Tensor& x) {
  Tensor out(x.shape);
  const long n = out.numel();
  const double* px = x.ptr();
  double* po = out.ptr();
  for (long i = 0; i < n; ++i) {
    if (px[i] <= 0.0) throw std::runtime_error("log_elem: input must be positive");
    po[i] = std::log(px[i]);
  }
  ensure_finite(out, "log_elem");
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [x, xn, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gx = tp.grad(xn);
      const double* px2 = x.ptr();
      for (long i = 0; i < n; ++i) gx[i] += g[i] / px2[i];
    });
  }
  return out;
}

Tensor silu(Tape* tape, const Tensor& x) {
  Tensor out(x.shape);
  const long n = out.numel();
  const double* px = x.ptr();
  double* po = out.ptr();
  for (long i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-px[i]));
    po[i] = px[i] * s;
  }
  ensure_finite(out, "silu");
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [x, xn, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gx = tp.grad(xn);
      const double* px2 = x.ptr();
      for (long i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-px2[i]));
        gx[i] += g[i] * s * (1.0 + px2[i] * (1.0 - s));
      }
    });
  }
  return out;
}

// --- matrix ops ---------------------------------------------------------------

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  const int m = a.rows(), p = a.cols(), n = b.cols();
  Tensor out({m, n});
  kernels::matmul_nn(a.ptr(), b.ptr(), out.ptr(), m, p, n, false);
  ensure_finite(out, "matmul");
  const int an = node_of(tape, a), bn = node_of(tape, b);
  if (tape && (an >= 0 || bn >= 0)) {
    out.node = tape->record(out.shape, [a, b, an, bn, m, p, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      if (an >= 0) kernels::matmul_nt(g.data(), b.ptr(), tp.grad(an).data(), m, n, p, true);
      if (bn >= 0) kernels::matmul_tn(a.ptr(), g.data(), tp.grad(bn).data(), p, m, n, true);
    });
  }
  return out;
}

Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul_nt");
  check_rank2(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: inner dimensions disagree, " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  const int m = a.rows(), p = a.cols(), n = b.rows();
  Tensor out({m, n});
  kernels::matmul_nt(a.ptr(), b.ptr(), out.ptr(), m, p, n, false);
  ensure_finite(out, "matmul_nt");
  const int an = node_of(tape, a), bn = node_of(tape, b);
  if (tape && (an >= 0 || bn >= 0)) {
    out.node = tape->record(out.shape, [a, b, an, bn, m, p, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      // out = a * b^T: da = g * b, db = g^T * a
      if (an >= 0) kernels::matmul_nn(g.data(), b.ptr(), tp.grad(an).data(), m, n, p, true);
      if (bn >= 0) kernels::matmul_tn(g.data(), a.ptr(), tp.grad(bn).data(), n, m, p, true);
    });
  }
  return out;
}

Tensor softmax_rows(Tape* tape, const Tensor& x, const std::uint8_t* allow) {
  check_rank2(x, "softmax_rows");
  const int r = x.rows(), c = x.cols();
  Tensor out({r, c});
  kernels::softmax_rows_masked(x.ptr(), allow, out.ptr(), r, c);
  ensure_finite(out, "softmax_rows");
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    // The mask buffer must outlive the tape; copy it into the closure.
    std::shared_ptr<std::vector<std::uint8_t>> mask_copy;
    if (allow) mask_copy = std::make_shared<std::vector<std::uint8_t>>(allow, allow + static_cast<long>(r) * c);
    out.node = tape->record(out.shape, [out, xn, mask_copy, r, c, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      kernels::softmax_rows_masked_backward(out.ptr(), g.data(),
                                            mask_copy ? mask_copy->data() : nullptr,
                                            tp.grad(xn).data(), r, c);
    });
  }
  return out;
}

Tensor rmsnorm(Tape* tape, const Tensor& x, const Tensor& gain, double eps) {
  check_rank2(x, "rmsnorm");
  if (gain.shape != std::vector<int>{x.cols()})
    throw std::invalid_argument("rmsnorm: gain shape " + shape_str(gain.shape) +
                                " does not match feature dim " + std::to_string(x.cols()));
  const int r = x.rows(), c = x.cols();
  Tensor out({r, c});
  auto inv = std::make_shared<std::vector<double>>(r);
  for (int i = 0; i < r; ++i) {
    const double* xi = x.ptr() + static_cast<long>(i) * c;
    double ss = 0.0;
    for (int j = 0; j < c; ++j) ss += xi[j] * xi[j];
    const double s = 1.0 / std::sqrt(ss / c + eps);
    (*inv)[i] = s;
    double* oi = out.ptr() + static_cast<long>(i) * c;
    for (int j = 0; j < c; ++j) oi[j] = xi[j] * s * gain.at(j);
  }
  ensure_finite(out, "rmsnorm");
  const int xn = node_of(tape, x), gn = node_of(tape, gain);
  if (tape && (xn >= 0 || gn >= 0)) {
    out.node = tape->record(out.shape, [x, gain, inv, xn, gn, r, c, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      for (int i = 0; i < r; ++i) {
        const double* xi = x.ptr() + static_cast<long>(i) * c;
        const double* gi = g.data() + static_cast<long>(i) * c;
        const double s = (*inv)[i];
        if (gn >= 0) {
          auto& gg = tp.grad(gn);
          for (int j = 0; j < c; ++j) gg[j] += gi[j] * xi[j] * s;
        }
        if (xn >= 0) {
          auto& gx = tp.grad(xn);
          double dot = 0.0;  // sum_j u_j * gain_j * x_j
          for (int j = 0; j < c; ++j) dot += gi[j] * gain.at(j) * xi[j];
          const double coef = s * s * s * dot / c;
          double* oxi = gx.data() + static_cast<long>(i) * c;
          for (int j = 0; j < c; ++j) oxi[j] += gi[j] * gain.at(j) * s - xi[j] * coef;
        }
      }
    });
  }
  return out;
}

Tensor embedding(Tape* tape, const Tensor& table, const std::vector<int>& ids) {
  check_rank2(table, "embedding");
  const int v = table.rows(), d = table.cols();
  const int l = static_cast<int>(ids.size());
  if (l == 0) throw std::invalid_argument("embedding: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embedding: id " + std::to_string(id) + " outside table of " +
                                  std::to_string(v) + " rows");
  Tensor out({l, d});
  for (int i = 0; i < l; ++i)
    std::memcpy(out.ptr() + static_cast<long>(i) * d, table.ptr() + static_cast<long>(ids[i]) * d,
                sizeof(double) * d);
  ensure_finite(out, "embedding");
  const int tn = node_of(tape, table);
  if (tape && tn >= 0) {
    out.node = tape->record(out.shape, [ids, tn, l, d, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gt = tp.grad(tn);
      for (int i = 0; i < l; ++i) {
        const double* gi = g.data() + static_cast<long>(i) * d;
        double* ti = gt.data() + static_cast<long>(ids[i]) * d;
        for (int j = 0; j < d; ++j) ti[j] += gi[j];
      }
    });
  }
  return out;
}

Tensor add_rowvec(Tape* tape, const Tensor& x, const Tensor& v) {
  check_rank2(x, "add_rowvec");
  if (v.shape != std::vector<int>{x.cols()})
    throw std::invalid_argument("add_rowvec: vector shape " + shape_str(v.shape) +
                                " does not match columns " + std::to_string(x.cols()));
  const int r = x.rows(), c = x.cols();
  Tensor out({r, c});
  for (int i = 0; i < r; ++i) {
    const double* xi = x.ptr() + static_cast<long>(i) * c;
    double* oi = out.ptr() + static_cast<long>(i) * c;
    for (int j = 0; j < c; ++j) oi[j] = xi[j] + v.at(j);
  }
  ensure_finite(out, "add_rowvec");
  const int xn = node_of(tape, x), vn = node_of(tape, v);
  if (tape && (xn >= 0 || vn >= 0)) {
    out.node = tape->record(out.shape, [xn, vn, r, c, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      if (xn >= 0) {
        auto& gx = tp.grad(xn);
        for (long i = 0; i < static_cast<long>(r) * c; ++i) gx[i] += g[i];
      }
      if (vn >= 0) {
        auto& gv = tp.grad(vn);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gv[j] += g[static_cast<long>(i) * c + j];
      }
    });
  }
  return out;
}

Tensor slice_rows(Tape* tape, const Tensor& x, int r0, int r1) {
  check_rank2(x, "slice_rows");
  if (r0 < 0 || r1 > x.rows() || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," +
                                std::to_string(r1) + ") for " + shape_str(x.shape));
  const int c = x.cols(), r = r1 - r0;
  Tensor out({r, c});
  std::memcpy(out.ptr(), x.ptr() + static_cast<long>(r0) * c, sizeof(double) * r * c);
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [xn, r0, r, c, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gx = tp.grad(xn);
      for (long i = 0; i < static_cast<long>(r) * c; ++i) gx[static_cast<long>(r0) * c + i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(Tape* tape, const Tensor& x, int c0, int c1) {
  check_rank2(x, "slice_cols");
  if (c0 < 0 || c1 > x.cols() || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") for " + shape_str(x.shape));
  const int r = x.rows(), c = x.cols(), w = c1 - c0;
  Tensor out({r, w});
  for (int i = 0; i < r; ++i)
    std::memcpy(out.ptr() + static_cast<long>(i) * w, x.ptr() + static_cast<long>(i) * c + c0,
                sizeof(double) * w);
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [xn, c0, r, c, w, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gx = tp.grad(xn);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) gx[static_cast<long>(i) * c + c0 + j] += g[static_cast<long>(i) * w + j];
    });
  }
  return out;
}

Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int r = parts[0].rows();
  int total = 0;
  for (const auto& p : parts) {
    check_rank2(p, "concat_cols");
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row counts differ");
    total += p.cols();
  }
  Tensor out({r, total});
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < r; ++i)
      std::memcpy(out.ptr() + static_cast<long>(i) * total + off, p.ptr() + static_cast<long>(i) * w,
                  sizeof(double) * w);
    off += w;
  }
  bool traced = false;
  std::vector<int> pn(parts.size(), -1);
  std::vector<int> pw(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    pn[k] = node_of(tape, parts[k]);
    pw[k] = parts[k].cols();
    traced = traced || pn[k] >= 0;
  }
  if (tape && traced) {
    out.node = tape->record(out.shape, [pn, pw, r, total, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      int off2 = 0;
      for (std::size_t k = 0; k < pn.size(); ++k) {
        const int w = pw[k];
        if (pn[k] >= 0) {
          auto& gp = tp.grad(pn[k]);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
              gp[static_cast<long>(i) * w + j] += g[static_cast<long>(i) * total + off2 + j];
        }
        off2 += w;
      }
    });
  }
  return out;
}

Tensor row_norms(Tape* tape, const Tensor& x) {
  check_rank2(x, "row_norms");
  const int r = x.rows(), c = x.cols();
  Tensor out({r, 1});
  for (int i = 0; i < r; ++i) {
    const double* xi = x.ptr() + static_cast<long>(i) * c;
    double ss = 0.0;
    for (int j = 0; j < c; ++j) ss += xi[j] * xi[j];
    out.at(i) = std::sqrt(ss);
  }
  ensure_finite(out, "row_norms");
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [x, out, xn, r, c, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gx = tp.grad(xn);
      for (int i = 0; i < r; ++i) {
        const double nrm = out.at(i);
        if (nrm == 0.0) continue;  // subgradient 0 at the origin
        const double coef = g[i] / nrm;
        const double* xi = x.ptr() + static_cast<long>(i) * c;
        double* gi = gx.data() + static_cast<long>(i) * c;
        for (int j = 0; j < c; ++j) gi[j] += coef * xi[j];
      }
    });
  }
  return out;
}

Tensor col_means(Tape* tape, const Tensor& x) {
  check_rank2(x, "col_means");
  const int r = x.rows(), c = x.cols();
  Tensor out({1, c});
  for (int j = 0; j < c; ++j) {
    double s = 0.0;
    for (int i = 0; i < r; ++i) s += x.at(i, j);
    out.at(j) = s / r;
  }
  ensure_finite(out, "col_means");
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [xn, r, c, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      auto& gx = tp.grad(xn);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) gx[static_cast<long>(i) * c + j] += g[j] / r;
    });
  }
  return out;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
  Tensor out({1});
  double s = 0.0;
  for (double v : *x.data) s += v;
  out.at(0) = s;
  ensure_finite(out, "sum_all");
  const int xn = node_of(tape, x);
  if (tape && xn >= 0) {
    const long n = x.numel();
    out.node = tape->record(out.shape, [xn, n, on = static_cast<int>(tape->size())](Tape& tp) {
      const double g = tp.grad(on)[0];
      auto& gx = tp.grad(xn);
      for (long i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor masked_nll(Tape* tape, const Tensor& logits, const std::vector<int>& targets,
                  const std::vector<std::uint8_t>& mask) {
  check_rank2(logits, "masked_nll");
  const int l = logits.rows(), v = logits.cols();
  if (static_cast<int>(targets.size()) != l || static_cast<int>(mask.size()) != l)
    throw std::invalid_argument("masked_nll: targets/mask length must equal logit rows");
  // softmax probabilities are kept for masked rows only (backward needs them)
  auto probs = std::make_shared<std::vector<double>>(static_cast<long>(l) * v, 0.0);
  Tensor out({1});
  double total = 0.0;
  for (int i = 0; i < l; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || targets[i] >= v)
      throw std::invalid_argument("masked_nll: target " + std::to_string(targets[i]) +
                                  " outside vocabulary of " + std::to_string(v));
    const double* xi = logits.ptr() + static_cast<long>(i) * v;
    double mx = xi[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < v; ++j) sum += std::exp(xi[j] - mx);
    const double lse = mx + std::log(sum);
    total += lse - xi[targets[i]];
    double* pi = probs->data() + static_cast<long>(i) * v;
    for (int j = 0; j < v; ++j) pi[j] = std::exp(xi[j] - lse);
  }
  out.at(0) = total;
  ensure_finite(out, "masked_nll");
  const int xn = node_of(tape, logits);
  if (tape && xn >= 0) {
    out.node = tape->record(out.shape, [probs, targets, mask, xn, l, v, on = static_cast<int>(tape->size())](Tape& tp) {
      const double g = tp.grad(on)[0];
      auto& gx = tp.grad(xn);
      for (int i = 0; i < l; ++i) {
        if (!mask[i]) continue;
        const double* pi = probs->data() + static_cast<long>(i) * v;
        double* gi = gx.data() + static_cast<long>(i) * v;
        for (int j = 0; j < v; ++j) gi[j] += g * pi[j];
        gi[targets[i]] -= g;
      }
    });
  }
  return out;
}

Tensor gumbel_st_rows(Tape* tape, const Tensor& scores, double tau,
                      const std::vector<double>& noise, bool soft_forward) {
  check_rank2(scores, "gumbel_st_rows");
  if (tau <= 0.0) throw std::invalid_argument("gumbel_st_rows: tau must be positive");
  const int l = scores.rows(), k = scores.cols();
  if (static_cast<int>(noise.size()) != static_cast<int>(l) * k)
    throw std::invalid_argument("gumbel_st_rows: noise length must match scores");
  // soft surrogate, needed for backward in both modes
  Tensor perturbed({l, k});
  for (long i = 0; i < static_cast<long>(l) * k; ++i)
    perturbed.at(static_cast<int>(i)) = (scores.at(static_cast<int>(i)) + noise[i]) / tau;
  Tensor soft({l, k});
  kernels::softmax_rows_masked(perturbed.ptr(), nullptr, soft.ptr(), l, k);

  Tensor out({l, k});
  if (soft_forward) {
    std::memcpy(out.ptr(), soft.ptr(), sizeof(double) * l * k);
  } else {
    for (int i = 0; i < l; ++i) {
      int best = 0;
      double bv = perturbed.at(i, 0);
      for (int j = 1; j < k; ++j)
        if (perturbed.at(i, j) > bv) {  // ties keep the smallest index
          bv = perturbed.at(i, j);
          best = j;
        }
      out.at(i, best) = 1.0;
    }
  }
  ensure_finite(out, "gumbel_st_rows");
  const int sn = node_of(tape, scores);
  if (tape && sn >= 0) {
    out.node = tape->record(out.shape, [soft, sn, tau, l, k, on = static_cast<int>(tape->size())](Tape& tp) {
      const auto& g = tp.grad(on);
      // straight-through: route the one-hot's gradient through the softmax surrogate
      std::vector<double> gs(static_cast<long>(l) * k, 0.0);
      kernels::softmax_rows_masked_backward(soft.ptr(), g.data(), nullptr, gs.data(), l, k);
      auto& gx = tp.grad(sn);
      for (long i = 0; i < static_cast<long>(l) * k; ++i) gx[i] += gs[i] / tau;
    });
  }
  return out;
}

// --- finite differences -------------------------------------------------------

FdReport finite_difference_check(
    const std::function<Tensor(Tape*)>& f,
    std::vector<std::pair<std::string, Tensor>>& params, double step) {
  auto eval = [&f]() {
    Tensor v = f(nullptr);
    if (v.numel() != 1) throw std::invalid_argument("finite_difference_check: f must return a scalar");
    return v.at(0);
  };
  const double v1 = eval(), v2 = eval();
  if (std::memcmp(&v1, &v2, sizeof(double)) != 0)
    throw std::runtime_error("finite_difference_check: f is not deterministic (" +
                             std::to_string(v1) + " vs " + std::to_string(v2) + ")");

  Tape tape;
  for (auto& [name, t] : params) tape.watch(t);
  Tensor loss = f(&tape);
  auto grads = tape.backward(loss);

  FdReport rep;
  for (auto& [name, t] : params) {
    const Tensor& analytic = grads.at(t.node);
    auto& data = *t.data;
    for (long i = 0; i < t.numel(); ++i) {
      const double orig = data[i];
      auto central = [&](double h) {
        data[i] = orig + h;
        const double fp = eval();
        data[i] = orig - h;
        const double fm = eval();
        data[i] = orig;
        return (fp - fm) / (2.0 * h);
      };
      // Richardson pair cancels the h^2 truncation term, so the step can stay
      // large enough to keep cancellation roundoff below the comparison floor.
      const double d1 = central(step);
      const double d2 = central(step / 2.0);
      const double numeric = (4.0 * d2 - d1) / 3.0;
      const double a = analytic.at(static_cast<int>(i));
      // Elements below the floor are held to an absolute bound of floor*tol;
      // central differences at |f|~1 carry ~1e-11 roundoff, so a relative
      // comparison below 1e-6 would measure noise, not the gradient.
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

}  // namespace dcdm
