// Timing table for the OpenMP kernels against their serial references, plus a
// bitwise agreement check on every measured case.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dcdm/kernels.hpp"
#include "dcdm/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    fn();
    const double s = std::chrono::duration<double>(clock_type::now() - t0).count();
    if (s < best) best = s;
  }
  return best;
}

std::vector<double> random_vec(std::size_t n, dcdm::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() * 2.0 - 1.0;
  return v;
}

void row(const char* name, double serial_s, double parallel_s, double work_flops,
         bool bitwise) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx %9.2f GF/s  %s\n", name,
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              work_flops / parallel_s * 1e-9, bitwise ? "bitwise" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int size = 512;
  int reps = 5;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--size") == 0 && i + 1 < argc) size = std::atoi(argv[++i]);
    else if (std::strcmp(argv[i], "--reps") == 0 && i + 1 < argc) reps = std::atoi(argv[++i]);
    else {
      std::fprintf(stderr, "usage: bench_kernels [--size n] [--reps n]\n");
      return 2;
    }
  }

#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif
  std::printf("matrices: %d x %d, best of %d\n\n", size, size, reps);
  std::printf("%-28s %13s %13s %9s %12s\n", "kernel", "serial", "parallel", "speedup",
              "throughput");

  dcdm::Rng rng(1);
  const int n = size;
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  std::vector<double> a = random_vec(nn, rng);
  std::vector<double> b = random_vec(nn, rng);
  std::vector<double> c_serial(nn), c_parallel(nn);

  bool all_bitwise = true;
  auto check = [&]() {
    const bool same = std::memcmp(c_serial.data(), c_parallel.data(),
                                  nn * sizeof(double)) == 0;
    all_bitwise = all_bitwise && same;
    return same;
  };

  const double mm_flops = 2.0 * n * static_cast<double>(n) * n;
  {
    const double s = time_best_of(reps, [&] {
      dcdm::kernels::serial::matmul_nn(a.data(), b.data(), c_serial.data(), n, n, n, false);
    });
    const double p = time_best_of(reps, [&] {
      dcdm::kernels::matmul_nn(a.data(), b.data(), c_parallel.data(), n, n, n, false);
    });
    row("matmul_nn", s, p, mm_flops, check());
  }
  {
    const double s = time_best_of(reps, [&] {
      dcdm::kernels::serial::matmul_nt(a.data(), b.data(), c_serial.data(), n, n, n, false);
    });
    const double p = time_best_of(reps, [&] {
      dcdm::kernels::matmul_nt(a.data(), b.data(), c_parallel.data(), n, n, n, false);
    });
    row("matmul_nt", s, p, mm_flops, check());
  }
  {
    const double s = time_best_of(reps, [&] {
      dcdm::kernels::serial::matmul_tn(a.data(), b.data(), c_serial.data(), n, n, n, false);
    });
    const double p = time_best_of(reps, [&] {
      dcdm::kernels::matmul_tn(a.data(), b.data(), c_parallel.data(), n, n, n, false);
    });
    row("matmul_tn", s, p, mm_flops, check());
  }

  std::vector<std::uint8_t> allow(nn);
  for (auto& v : allow) v = static_cast<std::uint8_t>(rng.below(4) != 0);
  const double sm_flops = 5.0 * n * static_cast<double>(n);
  {
    const double s = time_best_of(reps, [&] {
      dcdm::kernels::serial::softmax_rows_masked(a.data(), allow.data(), c_serial.data(), n, n);
    });
    const double p = time_best_of(reps, [&] {
      dcdm::kernels::softmax_rows_masked(a.data(), allow.data(), c_parallel.data(), n, n);
    });
    row("softmax_rows_masked", s, p, sm_flops, check());
  }
  {
    std::vector<double> y = c_parallel;  // softmax output from the previous case
    const double s = time_best_of(reps, [&] {
      std::fill(c_serial.begin(), c_serial.end(), 0.0);
      dcdm::kernels::serial::softmax_rows_masked_backward(y.data(), b.data(), allow.data(),
                                                          c_serial.data(), n, n);
    });
    const double p = time_best_of(reps, [&] {
      std::fill(c_parallel.begin(), c_parallel.end(), 0.0);
      dcdm::kernels::softmax_rows_masked_backward(y.data(), b.data(), allow.data(),
                                                  c_parallel.data(), n, n);
    });
    row("softmax_backward", s, p, 4.0 * n * static_cast<double>(n), check());
  }

  if (!all_bitwise) {
    std::printf("\nserial and parallel kernels disagree\n");
    return 1;
  }
  return 0;
}
