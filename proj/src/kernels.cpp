#include "dcdm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dcdm::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelCutoff = 1 << 14;
}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int p, int n, bool acc) {
  const long work = static_cast<long>(m) * p * n;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<long>(i) * n;
    if (!acc) std::memset(ci, 0, sizeof(double) * n);
    const double* ai = a + static_cast<long>(i) * p;
    for (int l = 0; l < p; ++l) {
      const double al = ai[l];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += al * bl[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int p, int n, bool acc) {
  const long work = static_cast<long>(m) * p * n;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<long>(i) * p;
    double* ci = c + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<long>(j) * p;
      double s = 0.0;
      for (int l = 0; l < p; ++l) s += ai[l] * bj[l];
      ci[j] = acc ? ci[j] + s : s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int p, int n, bool acc) {
  const long work = static_cast<long>(m) * p * n;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<long>(i) * n;
    if (!acc) std::memset(ci, 0, sizeof(double) * n);
    for (int l = 0; l < p; ++l) {
      const double al = a[static_cast<long>(l) * m + i];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += al * bl[j];
    }
  }
}

void softmax_rows_masked(const double* x, const std::uint8_t* allow, double* y, int rows, int cols) {
  const long work = static_cast<long>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
  for (int i = 0; i < rows; ++i) {
    const double* xi = x + static_cast<long>(i) * cols;
    const std::uint8_t* mi = allow ? allow + static_cast<long>(i) * cols : nullptr;
    double* yi = y + static_cast<long>(i) * cols;
    double mx = -HUGE_VAL;
    for (int j = 0; j < cols; ++j)
      if (!mi || mi[j]) mx = std::max(mx, xi[j]);
    if (mx == -HUGE_VAL) {  // fully masked row -> exact zeros
      std::memset(yi, 0, sizeof(double) * cols);
      continue;
    }
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = (!mi || mi[j]) ? std::exp(xi[j] - mx) : 0.0;
      yi[j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) yi[j] *= inv;
  }
}

void softmax_rows_masked_backward(const double* y, const double* gy, const std::uint8_t* allow,
                                  double* gx, int rows, int cols) {
  const long work = static_cast<long>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff)
  for (int i = 0; i < rows; ++i) {
    const double* yi = y + static_cast<long>(i) * cols;
    const double* gi = gy + static_cast<long>(i) * cols;
    const std::uint8_t* mi = allow ? allow + static_cast<long>(i) * cols : nullptr;
    double* oi = gx + static_cast<long>(i) * cols;
    double dot = 0.0;
    for (int j = 0; j < cols; ++j)
      if (!mi || mi[j]) dot += gi[j] * yi[j];
    for (int j = 0; j < cols; ++j)
      if (!mi || mi[j]) oi[j] += yi[j] * (gi[j] - dot);
  }
}

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, int m, int p, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<long>(i) * n;
    if (!acc) std::memset(ci, 0, sizeof(double) * n);
    const double* ai = a + static_cast<long>(i) * p;
    for (int l = 0; l < p; ++l) {
      const double al = ai[l];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += al * bl[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int p, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<long>(i) * p;
    double* ci = c + static_cast<long>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<long>(j) * p;
      double s = 0.0;
      for (int l = 0; l < p; ++l) s += ai[l] * bj[l];
      ci[j] = acc ? ci[j] + s : s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int p, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<long>(i) * n;
    if (!acc) std::memset(ci, 0, sizeof(double) * n);
    for (int l = 0; l < p; ++l) {
      const double al = a[static_cast<long>(l) * m + i];
      const double* bl = b + static_cast<long>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += al * bl[j];
    }
  }
}

void softmax_rows_masked(const double* x, const std::uint8_t* allow, double* y, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const double* xi = x + static_cast<long>(i) * cols;
    const std::uint8_t* mi = allow ? allow + static_cast<long>(i) * cols : nullptr;
    double* yi = y + static_cast<long>(i) * cols;
    double mx = -HUGE_VAL;
    for (int j = 0; j < cols; ++j)
      if (!mi || mi[j]) mx = std::max(mx, xi[j]);
    if (mx == -HUGE_VAL) {
      std::memset(yi, 0, sizeof(double) * cols);
      continue;
    }
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = (!mi || mi[j]) ? std::exp(xi[j] - mx) : 0.0;
      yi[j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) yi[j] *= inv;
  }
}

void softmax_rows_masked_backward(const double* y, const double* gy, const std::uint8_t* allow,
                                  double* gx, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const double* yi = y + static_cast<long>(i) * cols;
    const double* gi = gy + static_cast<long>(i) * cols;
    const std::uint8_t* mi = allow ? allow + static_cast<long>(i) * cols : nullptr;
    double* oi = gx + static_cast<long>(i) * cols;
    double dot = 0.0;
    for (int j = 0; j < cols; ++j)
      if (!mi || mi[j]) dot += gi[j] * yi[j];
    for (int j = 0; j < cols; ++j)
      if (!mi || mi[j]) oi[j] += yi[j] * (gi[j] - dot);
  }
}

}  // namespace serial

}  // namespace dcdm::kernels
