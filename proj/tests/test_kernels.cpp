#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "seqdream/kernels.hpp"

using namespace seqdream;

namespace {

std::vector<double> randn(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("conv1d forward matches hand computation") {
  // x = [1,2,3], w = [1,0,-1], zero pad 1: out = [-2,-2,2]
  const std::vector<double> x{1, 2, 3};
  const std::vector<double> w{1, 0, -1};
  const std::vector<double> b{0};
  std::vector<double> out(3);
  kern::serial::conv1d_forward(1, 1, 3, 1, 3, x.data(), w.data(), b.data(), out.data());
  CHECK(out[0] == doctest::Approx(-2).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(-2).epsilon(1e-14));
  CHECK(out[2] == doctest::Approx(2).epsilon(1e-14));

  std::vector<double> out_omp(3);
  kern::conv1d_forward(1, 1, 3, 1, 3, x.data(), w.data(), b.data(), out_omp.data());
  CHECK(bitwise_equal(out, out_omp));
}

TEST_CASE("conv1d bias broadcasts per output channel") {
  const std::vector<double> x{0, 0, 0, 0};
  const std::vector<double> w{1, 1, 1, 1, 1, 1};  // 2 out channels, k=3
  const std::vector<double> b{2.5, -1};
  std::vector<double> out(8);
  kern::serial::conv1d_forward(1, 1, 4, 2, 3, x.data(), w.data(), b.data(), out.data());
  for (int i = 0; i < 4; ++i) {
    CHECK(out[i] == 2.5);
    CHECK(out[4 + i] == -1.0);
  }
}

TEST_CASE("conv1d is linear in its input") {
  const int n = 2, cin = 3, len = 17, cout = 4, k = 5;
  const auto x = randn(static_cast<size_t>(n) * cin * len, 11);
  const auto y = randn(static_cast<size_t>(n) * cin * len, 12);
  const auto w = randn(static_cast<size_t>(cout) * cin * k, 13);
  const std::vector<double> b(cout, 0.0);
  const double a = 0.7, c = -1.3;

  std::vector<double> mix(x.size());
  for (size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + c * y[i];
  std::vector<double> out_mix(static_cast<size_t>(n) * cout * len);
  std::vector<double> out_x(out_mix.size()), out_y(out_mix.size());
  kern::conv1d_forward(n, cin, len, cout, k, mix.data(), w.data(), b.data(), out_mix.data());
  kern::conv1d_forward(n, cin, len, cout, k, x.data(), w.data(), b.data(), out_x.data());
  kern::conv1d_forward(n, cin, len, cout, k, y.data(), w.data(), b.data(), out_y.data());
  for (size_t i = 0; i < out_mix.size(); ++i)
    CHECK(out_mix[i] == doctest::Approx(a * out_x[i] + c * out_y[i]).epsilon(1e-10));
}

TEST_CASE("batchnorm statistics and forward match hand computation") {
  // One channel, values 1..4: mean 2.5, biased var 1.25.
  const std::vector<double> x{1, 2, 3, 4};
  std::vector<double> mean(1), var(1);
  kern::serial::bn_batch_stats(1, 1, 4, x.data(), mean.data(), var.data());
  CHECK(mean[0] == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(var[0] == doctest::Approx(1.25).epsilon(1e-15));

  const std::vector<double> gamma{2.0}, beta{1.0};
  std::vector<double> out(4);
  kern::serial::bn_forward(1, 1, 4, x.data(), mean.data(), var.data(), gamma.data(), beta.data(),
                           0.0, out.data());
  for (int i = 0; i < 4; ++i)
    CHECK(out[i] == doctest::Approx(2.0 * (x[i] - 2.5) / std::sqrt(1.25) + 1.0).epsilon(1e-12));
}

TEST_CASE("avgpool and linear match hand computation") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};  // [1][2][3]
  std::vector<double> pooled(2);
  kern::serial::avgpool_forward(1, 2, 3, x.data(), pooled.data());
  CHECK(pooled[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(pooled[1] == doctest::Approx(5.0).epsilon(1e-15));

  const std::vector<double> w{1, -1, 0.5, 0.5};  // [2][2]
  const std::vector<double> b{0, 10};
  std::vector<double> out(2);
  kern::serial::linear_forward(1, 2, 2, pooled.data(), w.data(), b.data(), out.data());
  CHECK(out[0] == doctest::Approx(-3.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(13.5).epsilon(1e-15));
}

TEST_CASE("OpenMP kernels are bit-identical to the serial reference") {
  omp_set_num_threads(3);
  const int n = 3, cin = 4, len = 21, cout = 5, k = 7;
  const auto x = randn(static_cast<size_t>(n) * cin * len, 21);
  const auto w = randn(static_cast<size_t>(cout) * cin * k, 22);
  const auto bias = randn(cout, 23);
  const auto gout = randn(static_cast<size_t>(n) * cout * len, 24);

  SUBCASE("conv1d forward") {
    std::vector<double> a(static_cast<size_t>(n) * cout * len), b(a.size());
    kern::serial::conv1d_forward(n, cin, len, cout, k, x.data(), w.data(), bias.data(), a.data());
    kern::conv1d_forward(n, cin, len, cout, k, x.data(), w.data(), bias.data(), b.data());
    CHECK(bitwise_equal(a, b));
  }

  SUBCASE("conv1d grad input accumulates identically") {
    auto a = randn(x.size(), 25);
    auto b = a;
    kern::serial::conv1d_grad_input(n, cin, len, cout, k, w.data(), gout.data(), a.data());
    kern::conv1d_grad_input(n, cin, len, cout, k, w.data(), gout.data(), b.data());
    CHECK(bitwise_equal(a, b));
  }

  SUBCASE("conv1d grad weight accumulates identically") {
    auto gw_a = randn(w.size(), 26);
    auto gb_a = randn(cout, 27);
    auto gw_b = gw_a;
    auto gb_b = gb_a;
    kern::serial::conv1d_grad_weight(n, cin, len, cout, k, x.data(), gout.data(), gw_a.data(),
                                     gb_a.data());
    kern::conv1d_grad_weight(n, cin, len, cout, k, x.data(), gout.data(), gw_b.data(),
                             gb_b.data());
    CHECK(bitwise_equal(gw_a, gw_b));
    CHECK(bitwise_equal(gb_a, gb_b));
  }

  SUBCASE("batchnorm forward and backward") {
    const int c = cin;
    const auto g2 = randn(static_cast<size_t>(n) * c * len, 28);
    std::vector<double> mean_a(c), var_a(c), mean_b(c), var_b(c);
    kern::serial::bn_batch_stats(n, c, len, x.data(), mean_a.data(), var_a.data());
    kern::bn_batch_stats(n, c, len, x.data(), mean_b.data(), var_b.data());
    CHECK(bitwise_equal(mean_a, mean_b));
    CHECK(bitwise_equal(var_a, var_b));

    const auto gamma = randn(c, 29);
    const auto beta = randn(c, 30);
    std::vector<double> fa(x.size()), fb(x.size());
    kern::serial::bn_forward(n, c, len, x.data(), mean_a.data(), var_a.data(), gamma.data(),
                             beta.data(), 1e-5, fa.data());
    kern::bn_forward(n, c, len, x.data(), mean_b.data(), var_b.data(), gamma.data(), beta.data(),
                     1e-5, fb.data());
    CHECK(bitwise_equal(fa, fb));

    std::vector<double> gin_a(x.size(), 0.0), gg_a(c, 0.0), gb_a(c, 0.0);
    std::vector<double> gin_b(x.size(), 0.0), gg_b(c, 0.0), gb_b(c, 0.0);
    kern::serial::bn_train_backward(n, c, len, x.data(), mean_a.data(), var_a.data(),
                                    gamma.data(), 1e-5, g2.data(), gin_a.data(), gg_a.data(),
                                    gb_a.data());
    kern::bn_train_backward(n, c, len, x.data(), mean_b.data(), var_b.data(), gamma.data(), 1e-5,
                            g2.data(), gin_b.data(), gg_b.data(), gb_b.data());
    CHECK(bitwise_equal(gin_a, gin_b));
    CHECK(bitwise_equal(gg_a, gg_b));
    CHECK(bitwise_equal(gb_a, gb_b));
  }

  SUBCASE("relu, pool, linear") {
    std::vector<double> ra(x.size()), rb(x.size());
    kern::serial::relu_forward(x.size(), x.data(), ra.data());
    kern::relu_forward(x.size(), x.data(), rb.data());
    CHECK(bitwise_equal(ra, rb));

    std::vector<double> pa(static_cast<size_t>(n) * cin), pb(pa.size());
    kern::serial::avgpool_forward(n, cin, len, x.data(), pa.data());
    kern::avgpool_forward(n, cin, len, x.data(), pb.data());
    CHECK(bitwise_equal(pa, pb));

    const int f_in = cin, f_out = 6;
    const auto lw = randn(static_cast<size_t>(f_out) * f_in, 31);
    const auto lb = randn(f_out, 32);
    const auto lg = randn(static_cast<size_t>(n) * f_out, 33);
    std::vector<double> la(static_cast<size_t>(n) * f_out), lbo(la.size());
    kern::serial::linear_forward(n, f_in, f_out, pa.data(), lw.data(), lb.data(), la.data());
    kern::linear_forward(n, f_in, f_out, pa.data(), lw.data(), lb.data(), lbo.data());
    CHECK(bitwise_equal(la, lbo));

    std::vector<double> gia(pa.size(), 0.0), gib(pa.size(), 0.0);
    kern::serial::linear_grad_input(n, f_in, f_out, lw.data(), lg.data(), gia.data());
    kern::linear_grad_input(n, f_in, f_out, lw.data(), lg.data(), gib.data());
    CHECK(bitwise_equal(gia, gib));

    std::vector<double> gwa(lw.size(), 0.0), gba(f_out, 0.0);
    std::vector<double> gwb(lw.size(), 0.0), gbb(f_out, 0.0);
    kern::serial::linear_grad_weight(n, f_in, f_out, pa.data(), lg.data(), gwa.data(),
                                     gba.data());
    kern::linear_grad_weight(n, f_in, f_out, pa.data(), lg.data(), gwb.data(), gbb.data());
    CHECK(bitwise_equal(gwa, gwb));
    CHECK(bitwise_equal(gba, gbb));
  }
}

TEST_CASE("even kernel sizes are rejected") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> w{1, 1, 1, 1};
  const std::vector<double> b{0};
  std::vector<double> out(4);
  CHECK_THROWS(kern::conv1d_forward(1, 1, 4, 1, 4, x.data(), w.data(), b.data(), out.data()));
}
