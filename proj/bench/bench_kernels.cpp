// Timing comparison: OpenMP kernels vs the serial reference. Sizes mirror a
// training step of the default model (batch 64, channels up to 32, length
// 128). Outputs are checked bit-identical before timing.
#include <omp.h>

#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "seqdream/kernels.hpp"

using namespace seqdream;

namespace {

std::vector<double> randn(size_t count, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(count);
  for (double& x : v) x = n(rng);
  return v;
}

template <typename F>
double time_best_of(int repeats, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const double t0 = omp_get_wtime();
    fn();
    best = std::min(best, omp_get_wtime() - t0);
  }
  return best;
}

struct Row {
  std::string name;
  double flops;
  double serial_s;
  double omp_s;
};

void print_row(const Row& r) {
  std::printf("%-22s %10.3f ms %10.3f ms %8.2fx %9.2f GFLOP/s\n", r.name.c_str(),
              r.serial_s * 1e3, r.omp_s * 1e3, r.serial_s / r.omp_s, r.flops / r.omp_s / 1e9);
}

bool identical(const std::vector<double>& a, const std::vector<double>& b) {
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main() {
  const int n = 64, c_in = 32, c_out = 32, len = 128, k = 5;
  const int repeats = 5;
  std::mt19937_64 rng(42);

  const std::vector<double> x = randn(static_cast<size_t>(n) * c_in * len, rng);
  const std::vector<double> w = randn(static_cast<size_t>(c_out) * c_in * k, rng);
  const std::vector<double> b = randn(c_out, rng);
  const std::vector<double> gout = randn(static_cast<size_t>(n) * c_out * len, rng);

  std::printf("threads: %d (set OMP_NUM_THREADS to vary)\n", omp_get_max_threads());
  std::printf("shape: n=%d c_in=%d c_out=%d len=%d k=%d, best of %d\n\n", n, c_in, c_out, len, k,
              repeats);
  std::printf("%-22s %13s %13s %9s %17s\n", "kernel", "serial", "openmp", "speedup", "throughput");

  std::vector<double> out_s(static_cast<size_t>(n) * c_out * len);
  std::vector<double> out_p(out_s.size());

  {
    kern::serial::conv1d_forward(n, c_in, len, c_out, k, x.data(), w.data(), b.data(),
                                 out_s.data());
    kern::conv1d_forward(n, c_in, len, c_out, k, x.data(), w.data(), b.data(), out_p.data());
    if (!identical(out_s, out_p)) {
      std::fprintf(stderr, "conv1d_forward: serial and OpenMP outputs differ\n");
      return 1;
    }
    Row r{"conv1d_forward", 2.0 * n * c_out * len * c_in * k, 0, 0};
    r.serial_s = time_best_of(repeats, [&] {
      kern::serial::conv1d_forward(n, c_in, len, c_out, k, x.data(), w.data(), b.data(),
                                   out_s.data());
    });
    r.omp_s = time_best_of(repeats, [&] {
      kern::conv1d_forward(n, c_in, len, c_out, k, x.data(), w.data(), b.data(), out_p.data());
    });
    print_row(r);
  }

  {
    std::vector<double> gin_s(x.size()), gin_p(x.size());
    kern::serial::conv1d_grad_input(n, c_in, len, c_out, k, w.data(), gout.data(), gin_s.data());
    kern::conv1d_grad_input(n, c_in, len, c_out, k, w.data(), gout.data(), gin_p.data());
    if (!identical(gin_s, gin_p)) {
      std::fprintf(stderr, "conv1d_grad_input: serial and OpenMP outputs differ\n");
      return 1;
    }
    Row r{"conv1d_grad_input", 2.0 * n * c_out * len * c_in * k, 0, 0};
    r.serial_s = time_best_of(repeats, [&] {
      std::fill(gin_s.begin(), gin_s.end(), 0.0);
      kern::serial::conv1d_grad_input(n, c_in, len, c_out, k, w.data(), gout.data(), gin_s.data());
    });
    r.omp_s = time_best_of(repeats, [&] {
      std::fill(gin_p.begin(), gin_p.end(), 0.0);
      kern::conv1d_grad_input(n, c_in, len, c_out, k, w.data(), gout.data(), gin_p.data());
    });
    print_row(r);
  }

  {
    std::vector<double> gw_s(w.size()), gb_s(b.size()), gw_p(w.size()), gb_p(b.size());
    kern::serial::conv1d_grad_weight(n, c_in, len, c_out, k, x.data(), gout.data(), gw_s.data(),
                                     gb_s.data());
    kern::conv1d_grad_weight(n, c_in, len, c_out, k, x.data(), gout.data(), gw_p.data(),
                             gb_p.data());
    if (!identical(gw_s, gw_p) || !identical(gb_s, gb_p)) {
      std::fprintf(stderr, "conv1d_grad_weight: serial and OpenMP outputs differ\n");
      return 1;
    }
    Row r{"conv1d_grad_weight", 2.0 * n * c_out * len * c_in * k, 0, 0};
    r.serial_s = time_best_of(repeats, [&] {
      std::fill(gw_s.begin(), gw_s.end(), 0.0);
      std::fill(gb_s.begin(), gb_s.end(), 0.0);
      kern::serial::conv1d_grad_weight(n, c_in, len, c_out, k, x.data(), gout.data(), gw_s.data(),
                                       gb_s.data());
    });
    r.omp_s = time_best_of(repeats, [&] {
      std::fill(gw_p.begin(), gw_p.end(), 0.0);
      std::fill(gb_p.begin(), gb_p.end(), 0.0);
      kern::conv1d_grad_weight(n, c_in, len, c_out, k, x.data(), gout.data(), gw_p.data(),
                               gb_p.data());
    });
    print_row(r);
  }

  {
    std::vector<double> mean(c_in), var(c_in), bn_s(x.size()), bn_p(x.size());
    const std::vector<double> gamma = randn(c_in, rng), beta = randn(c_in, rng);
    kern::bn_batch_stats(n, c_in, len, x.data(), mean.data(), var.data());
    kern::serial::bn_forward(n, c_in, len, x.data(), mean.data(), var.data(), gamma.data(),
                             beta.data(), 1e-5, bn_s.data());
    kern::bn_forward(n, c_in, len, x.data(), mean.data(), var.data(), gamma.data(), beta.data(),
                     1e-5, bn_p.data());
    if (!identical(bn_s, bn_p)) {
      std::fprintf(stderr, "bn_forward: serial and OpenMP outputs differ\n");
      return 1;
    }
    Row r{"bn_forward", 4.0 * n * c_in * len, 0, 0};
    r.serial_s = time_best_of(repeats, [&] {
      kern::serial::bn_forward(n, c_in, len, x.data(), mean.data(), var.data(), gamma.data(),
                               beta.data(), 1e-5, bn_s.data());
    });
    r.omp_s = time_best_of(repeats, [&] {
      kern::bn_forward(n, c_in, len, x.data(), mean.data(), var.data(), gamma.data(), beta.data(),
                       1e-5, bn_p.data());
    });
    print_row(r);
  }

  {
    const int f_in = 128, f_out = 64;
    const std::vector<double> lx = randn(static_cast<size_t>(n) * f_in, rng);
    const std::vector<double> lw = randn(static_cast<size_t>(f_out) * f_in, rng);
    const std::vector<double> lb = randn(f_out, rng);
    std::vector<double> lo_s(static_cast<size_t>(n) * f_out), lo_p(lo_s.size());
    kern::serial::linear_forward(n, f_in, f_out, lx.data(), lw.data(), lb.data(), lo_s.data());
    kern::linear_forward(n, f_in, f_out, lx.data(), lw.data(), lb.data(), lo_p.data());
    if (!identical(lo_s, lo_p)) {
      std::fprintf(stderr, "linear_forward: serial and OpenMP outputs differ\n");
      return 1;
    }
    Row r{"linear_forward", 2.0 * n * f_in * f_out, 0, 0};
    r.serial_s = time_best_of(repeats, [&] {
      kern::serial::linear_forward(n, f_in, f_out, lx.data(), lw.data(), lb.data(), lo_s.data());
    });
    r.omp_s = time_best_of(repeats, [&] {
      kern::linear_forward(n, f_in, f_out, lx.data(), lw.data(), lb.data(), lo_p.data());
    });
    print_row(r);
  }

  return 0;
}
