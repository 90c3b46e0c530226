#include "seqdream/kernels.hpp"

#include <cassert>
#include <cmath>
#include <vector>

#include "seqdream/common.hpp"

namespace seqdream::kern {

namespace {

constexpr int kMaxKernel = 31;

// Copies x [n][c][len] into a zero-padded buffer [n][c][len + k - 1] with
// (k-1)/2 zeros on each side.
std::vector<double> pad_input(int n, int c, int len, int k, const double* x) {
  const int pad = (k - 1) / 2;
  const int plen = len + k - 1;
  std::vector<double> xp(static_cast<size_t>(n) * c * plen, 0.0);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double* src = x + (static_cast<size_t>(in) * c + ic) * len;
      double* dst = xp.data() + (static_cast<size_t>(in) * c + ic) * plen + pad;
      for (int i = 0; i < len; ++i) dst[i] = src[i];
    }
  return xp;
}

void check_kernel_size(int k) {
  if (k < 1 || k > kMaxKernel || k % 2 == 0)
    fail(ErrorKind::shape, "conv1d kernel size must be odd and in [1, 31], got " + std::to_string(k));
}

}  // namespace

// ---------------------------------------------------------------------------
// OpenMP variants. Each parallel loop assigns every output element to exactly
// one thread and keeps the inner summation order fixed, so results match the
// serial reference bit for bit.
// ---------------------------------------------------------------------------

void conv1d_forward(int n, int c_in, int len, int c_out, int k, const double* x, const double* w,
                    const double* b, double* out) {
  check_kernel_size(k);
  const int plen = len + k - 1;
  const std::vector<double> xp = pad_input(n, c_in, len, k, x);
  const double* __restrict xpd = xp.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < n; ++in)
    for (int o = 0; o < c_out; ++o) {
      double* __restrict orow = out + (static_cast<size_t>(in) * c_out + o) * len;
      for (int i = 0; i < len; ++i) orow[i] = b[o];
      for (int c = 0; c < c_in; ++c) {
        const double* __restrict xr = xpd + (static_cast<size_t>(in) * c_in + c) * plen;
        const double* __restrict wr = w + (static_cast<size_t>(o) * c_in + c) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double wv = wr[kk];
          for (int i = 0; i < len; ++i) orow[i] += wv * xr[i + kk];
        }
      }
    }
}

void conv1d_grad_input(int n, int c_in, int len, int c_out, int k, const double* w,
                       const double* gout, double* gin) {
  check_kernel_size(k);
  const int plen = len + k - 1;
  const std::vector<double> gp = pad_input(n, c_out, len, k, gout);
  const double* __restrict gpd = gp.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < n; ++in)
    for (int c = 0; c < c_in; ++c) {
      double* __restrict grow = gin + (static_cast<size_t>(in) * c_in + c) * len;
      for (int o = 0; o < c_out; ++o) {
        const double* __restrict gr = gpd + (static_cast<size_t>(in) * c_out + o) * plen;
        const double* __restrict wr = w + (static_cast<size_t>(o) * c_in + c) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double wv = wr[kk];
          const double* __restrict gs = gr + (k - 1 - kk);
          for (int j = 0; j < len; ++j) grow[j] += wv * gs[j];
        }
      }
    }
}

void conv1d_grad_weight(int n, int c_in, int len, int c_out, int k, const double* x,
                        const double* gout, double* gw, double* gb) {
  check_kernel_size(k);
  const int plen = len + k - 1;
  const std::vector<double> xp = pad_input(n, c_in, len, k, x);
  const double* __restrict xpd = xp.data();
#pragma omp parallel for schedule(static)
  for (int o = 0; o < c_out; ++o) {
    for (int c = 0; c < c_in; ++c) {
      double acc[kMaxKernel + 1] = {0.0};
      for (int in = 0; in < n; ++in) {
        const double* __restrict gr = gout + (static_cast<size_t>(in) * c_out + o) * len;
        const double* __restrict xr = xpd + (static_cast<size_t>(in) * c_in + c) * plen;
        for (int i = 0; i < len; ++i) {
          const double gv = gr[i];
          for (int kk = 0; kk < k; ++kk) acc[kk] += gv * xr[i + kk];
        }
      }
      double* __restrict gwr = gw + (static_cast<size_t>(o) * c_in + c) * k;
      for (int kk = 0; kk < k; ++kk) gwr[kk] += acc[kk];
    }
    double bacc = 0.0;
    for (int in = 0; in < n; ++in) {
      const double* __restrict gr = gout + (static_cast<size_t>(in) * c_out + o) * len;
      for (int i = 0; i < len; ++i) bacc += gr[i];
    }
    gb[o] += bacc;
  }
}

void relu_forward(int64_t count, const double* x, double* out) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(int64_t count, const double* x, const double* gout, double* gin) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < count; ++i) gin[i] += x[i] > 0.0 ? gout[i] : 0.0;
}

void bn_batch_stats(int n, int c, int len, const double* x, double* mean, double* var) {
  const double count = static_cast<double>(n) * len;
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < c; ++ic) {
    double s = 0.0;
    for (int in = 0; in < n; ++in) {
      const double* row = x + (static_cast<size_t>(in) * c + ic) * len;
      for (int i = 0; i < len; ++i) s += row[i];
    }
    const double m = s / count;
    double v = 0.0;
    for (int in = 0; in < n; ++in) {
      const double* row = x + (static_cast<size_t>(in) * c + ic) * len;
      for (int i = 0; i < len; ++i) {
        const double d = row[i] - m;
        v += d * d;
      }
    }
    mean[ic] = m;
    var[ic] = v / count;
  }
}

void bn_forward(int n, int c, int len, const double* x, const double* mean, const double* var,
                const double* gamma, const double* beta, double eps, double* out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double inv = 1.0 / std::sqrt(var[ic] + eps);
      const double g = gamma[ic], m = mean[ic], bt = beta[ic];
      const double* __restrict row = x + (static_cast<size_t>(in) * c + ic) * len;
      double* __restrict orow = out + (static_cast<size_t>(in) * c + ic) * len;
      for (int i = 0; i < len; ++i) orow[i] = (row[i] - m) * inv * g + bt;
    }
}

void bn_train_backward(int n, int c, int len, const double* x, const double* mean,
                       const double* var, const double* gamma, double eps, const double* gout,
                       double* gin, double* ggamma, double* gbeta) {
  const double count = static_cast<double>(n) * len;
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < c; ++ic) {
    const double inv = 1.0 / std::sqrt(var[ic] + eps);
    const double m = mean[ic];
    double sg = 0.0;   // sum of gout
    double sgx = 0.0;  // sum of gout * xhat
    for (int in = 0; in < n; ++in) {
      const double* row = x + (static_cast<size_t>(in) * c + ic) * len;
      const double* grow = gout + (static_cast<size_t>(in) * c + ic) * len;
      for (int i = 0; i < len; ++i) {
        sg += grow[i];
        sgx += grow[i] * (row[i] - m) * inv;
      }
    }
    const double scale = gamma[ic] * inv / count;
    for (int in = 0; in < n; ++in) {
      const double* __restrict row = x + (static_cast<size_t>(in) * c + ic) * len;
      const double* __restrict grow = gout + (static_cast<size_t>(in) * c + ic) * len;
      double* __restrict irow = gin + (static_cast<size_t>(in) * c + ic) * len;
      for (int i = 0; i < len; ++i) {
        const double xhat = (row[i] - m) * inv;
        irow[i] += scale * (count * grow[i] - sg - xhat * sgx);
      }
    }
    ggamma[ic] += sgx;
    gbeta[ic] += sg;
  }
}

void bn_eval_backward(int n, int c, int len, const double* var, const double* gamma, double eps,
                      const double* gout, double* gin) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double scale = gamma[ic] / std::sqrt(var[ic] + eps);
      const double* __restrict grow = gout + (static_cast<size_t>(in) * c + ic) * len;
      double* __restrict irow = gin + (static_cast<size_t>(in) * c + ic) * len;
      for (int i = 0; i < len; ++i) irow[i] += scale * grow[i];
    }
}

void avgpool_forward(int n, int c, int len, const double* x, double* out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double* row = x + (static_cast<size_t>(in) * c + ic) * len;
      double s = 0.0;
      for (int i = 0; i < len; ++i) s += row[i];
      out[static_cast<size_t>(in) * c + ic] = s / len;
    }
}

void avgpool_backward(int n, int c, int len, const double* gout, double* gin) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double g = gout[static_cast<size_t>(in) * c + ic] / len;
      double* __restrict irow = gin + (static_cast<size_t>(in) * c + ic) * len;
      for (int i = 0; i < len; ++i) irow[i] += g;
    }
}

void linear_forward(int n, int f_in, int f_out, const double* x, const double* w, const double* b,
                    double* out) {
#pragma omp parallel for schedule(static)
  for (int in = 0; in < n; ++in) {
    const double* __restrict xr = x + static_cast<size_t>(in) * f_in;
    double* __restrict orow = out + static_cast<size_t>(in) * f_out;
    for (int j = 0; j < f_out; ++j) {
      const double* __restrict wr = w + static_cast<size_t>(j) * f_in;
      double acc = b[j];
      for (int f = 0; f < f_in; ++f) acc += wr[f] * xr[f];
      orow[j] = acc;
    }
  }
}

void linear_grad_input(int n, int f_in, int f_out, const double* w, const double* gout,
                       double* gin) {
#pragma omp parallel for schedule(static)
  for (int in = 0; in < n; ++in) {
    const double* __restrict grow = gout + static_cast<size_t>(in) * f_out;
    double* __restrict irow = gin + static_cast<size_t>(in) * f_in;
    for (int j = 0; j < f_out; ++j) {
      const double g = grow[j];
      const double* __restrict wr = w + static_cast<size_t>(j) * f_in;
      for (int f = 0; f < f_in; ++f) irow[f] += g * wr[f];
    }
  }
}

void linear_grad_weight(int n, int f_in, int f_out, const double* x, const double* gout,
                        double* gw, double* gb) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < f_out; ++j) {
    double* __restrict gwr = gw + static_cast<size_t>(j) * f_in;
    double bacc = 0.0;
    for (int in = 0; in < n; ++in) {
      const double g = gout[static_cast<size_t>(in) * f_out + j];
      const double* __restrict xr = x + static_cast<size_t>(in) * f_in;
      for (int f = 0; f < f_in; ++f) gwr[f] += g * xr[f];
      bacc += g;
    }
    gb[j] += bacc;
  }
}

// ---------------------------------------------------------------------------
// Serial reference implementations. Written as the plainest correct loops;
// per-element accumulation order matches the OpenMP variants above.
// ---------------------------------------------------------------------------

namespace serial {

void conv1d_forward(int n, int c_in, int len, int c_out, int k, const double* x, const double* w,
                    const double* b, double* out) {
  check_kernel_size(k);
  const int plen = len + k - 1;
  const std::vector<double> xp = pad_input(n, c_in, len, k, x);
  for (int in = 0; in < n; ++in)
    for (int o = 0; o < c_out; ++o) {
      double* orow = out + (static_cast<size_t>(in) * c_out + o) * len;
      for (int i = 0; i < len; ++i) orow[i] = b[o];
      for (int c = 0; c < c_in; ++c) {
        const double* xr = xp.data() + (static_cast<size_t>(in) * c_in + c) * plen;
        const double* wr = w + (static_cast<size_t>(o) * c_in + c) * k;
        for (int kk = 0; kk < k; ++kk)
          for (int i = 0; i < len; ++i) orow[i] += wr[kk] * xr[i + kk];
      }
    }
}

void conv1d_grad_input(int n, int c_in, int len, int c_out, int k, const double* w,
                       const double* gout, double* gin) {
  check_kernel_size(k);
  const int plen = len + k - 1;
  const std::vector<double> gp = pad_input(n, c_out, len, k, gout);
  for (int in = 0; in < n; ++in)
    for (int c = 0; c < c_in; ++c) {
      double* grow = gin + (static_cast<size_t>(in) * c_in + c) * len;
      for (int o = 0; o < c_out; ++o) {
        const double* gr = gp.data() + (static_cast<size_t>(in) * c_out + o) * plen;
        const double* wr = w + (static_cast<size_t>(o) * c_in + c) * k;
        for (int kk = 0; kk < k; ++kk)
          for (int j = 0; j < len; ++j) grow[j] += wr[kk] * gr[j + k - 1 - kk];
      }
    }
}

void conv1d_grad_weight(int n, int c_in, int len, int c_out, int k, const double* x,
                        const double* gout, double* gw, double* gb) {
  check_kernel_size(k);
  const int plen = len + k - 1;
  const std::vector<double> xp = pad_input(n, c_in, len, k, x);
  for (int o = 0; o < c_out; ++o) {
    for (int c = 0; c < c_in; ++c) {
      double acc[kMaxKernel + 1] = {0.0};
      for (int in = 0; in < n; ++in) {
        const double* gr = gout + (static_cast<size_t>(in) * c_out + o) * len;
        const double* xr = xp.data() + (static_cast<size_t>(in) * c_in + c) * plen;
        for (int i = 0; i < len; ++i)
          for (int kk = 0; kk < k; ++kk) acc[kk] += gr[i] * xr[i + kk];
      }
      for (int kk = 0; kk < k; ++kk) gw[(static_cast<size_t>(o) * c_in + c) * k + kk] += acc[kk];
    }
    double bacc = 0.0;
    for (int in = 0; in < n; ++in) {
      const double* gr = gout + (static_cast<size_t>(in) * c_out + o) * len;
      for (int i = 0; i < len; ++i) bacc += gr[i];
    }
    gb[o] += bacc;
  }
}

void relu_forward(int64_t count, const double* x, double* out) {
  for (int64_t i = 0; i < count; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(int64_t count, const double* x, const double* gout, double* gin) {
  for (int64_t i = 0; i < count; ++i) gin[i] += x[i] > 0.0 ? gout[i] : 0.0;
}

void bn_batch_stats(int n, int c, int len, const double* x, double* mean, double* var) {
  const double count = static_cast<double>(n) * len;
  for (int ic = 0; ic < c; ++ic) {
    double s = 0.0;
    for (int in = 0; in < n; ++in)
      for (int i = 0; i < len; ++i) s += x[(static_cast<size_t>(in) * c + ic) * len + i];
    const double m = s / count;
    double v = 0.0;
    for (int in = 0; in < n; ++in)
      for (int i = 0; i < len; ++i) {
        const double d = x[(static_cast<size_t>(in) * c + ic) * len + i] - m;
        v += d * d;
      }
    mean[ic] = m;
    var[ic] = v / count;
  }
}

void bn_forward(int n, int c, int len, const double* x, const double* mean, const double* var,
                const double* gamma, const double* beta, double eps, double* out) {
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double inv = 1.0 / std::sqrt(var[ic] + eps);
      for (int i = 0; i < len; ++i) {
        const size_t at = (static_cast<size_t>(in) * c + ic) * len + i;
        out[at] = (x[at] - mean[ic]) * inv * gamma[ic] + beta[ic];
      }
    }
}

void bn_train_backward(int n, int c, int len, const double* x, const double* mean,
                       const double* var, const double* gamma, double eps, const double* gout,
                       double* gin, double* ggamma, double* gbeta) {
  const double count = static_cast<double>(n) * len;
  for (int ic = 0; ic < c; ++ic) {
    const double inv = 1.0 / std::sqrt(var[ic] + eps);
    double sg = 0.0, sgx = 0.0;
    for (int in = 0; in < n; ++in)
      for (int i = 0; i < len; ++i) {
        const size_t at = (static_cast<size_t>(in) * c + ic) * len + i;
        sg += gout[at];
        sgx += gout[at] * (x[at] - mean[ic]) * inv;
      }
    const double scale = gamma[ic] * inv / count;
    for (int in = 0; in < n; ++in)
      for (int i = 0; i < len; ++i) {
        const size_t at = (static_cast<size_t>(in) * c + ic) * len + i;
        const double xhat = (x[at] - mean[ic]) * inv;
        gin[at] += scale * (count * gout[at] - sg - xhat * sgx);
      }
    ggamma[ic] += sgx;
    gbeta[ic] += sg;
  }
}

void bn_eval_backward(int n, int c, int len, const double* var, const double* gamma, double eps,
                      const double* gout, double* gin) {
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double scale = gamma[ic] / std::sqrt(var[ic] + eps);
      for (int i = 0; i < len; ++i) {
        const size_t at = (static_cast<size_t>(in) * c + ic) * len + i;
        gin[at] += scale * gout[at];
      }
    }
}

void avgpool_forward(int n, int c, int len, const double* x, double* out) {
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      double s = 0.0;
      for (int i = 0; i < len; ++i) s += x[(static_cast<size_t>(in) * c + ic) * len + i];
      out[static_cast<size_t>(in) * c + ic] = s / len;
    }
}

void avgpool_backward(int n, int c, int len, const double* gout, double* gin) {
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic) {
      const double g = gout[static_cast<size_t>(in) * c + ic] / len;
      for (int i = 0; i < len; ++i) gin[(static_cast<size_t>(in) * c + ic) * len + i] += g;
    }
}

void linear_forward(int n, int f_in, int f_out, const double* x, const double* w, const double* b,
                    double* out) {
  for (int in = 0; in < n; ++in)
    for (int j = 0; j < f_out; ++j) {
      double acc = b[j];
      for (int f = 0; f < f_in; ++f)
        acc += w[static_cast<size_t>(j) * f_in + f] * x[static_cast<size_t>(in) * f_in + f];
      out[static_cast<size_t>(in) * f_out + j] = acc;
    }
}

void linear_grad_input(int n, int f_in, int f_out, const double* w, const double* gout,
                       double* gin) {
  for (int in = 0; in < n; ++in)
    for (int j = 0; j < f_out; ++j)
      for (int f = 0; f < f_in; ++f)
        gin[static_cast<size_t>(in) * f_in + f] +=
            gout[static_cast<size_t>(in) * f_out + j] * w[static_cast<size_t>(j) * f_in + f];
}

void linear_grad_weight(int n, int f_in, int f_out, const double* x, const double* gout,
                        double* gw, double* gb) {
  for (int j = 0; j < f_out; ++j) {
    double bacc = 0.0;
    for (int in = 0; in < n; ++in) {
      const double g = gout[static_cast<size_t>(in) * f_out + j];
      for (int f = 0; f < f_in; ++f)
        gw[static_cast<size_t>(j) * f_in + f] += g * x[static_cast<size_t>(in) * f_in + f];
      bacc += g;
    }
    gb[j] += bacc;
  }
}

}  // namespace serial

}  // namespace seqdream::kern
