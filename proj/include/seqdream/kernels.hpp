#pragma once

#include <cstdint>

// Raw numeric kernels over contiguous [N][C][L] row-major buffers.
//
// The default entry points are OpenMP-parallel. seqdream::kern::serial holds
// the plain reference implementations used by the tests and the benchmark.
// Both variants accumulate per-element contributions in the same order, so
// their outputs are bit-identical at any thread count.
//
// Gradient kernels accumulate (+=) into their output buffers; callers zero
// the buffers once when a fresh gradient is wanted.

namespace seqdream::kern {

// 1-D cross-correlation, stride 1, zero padding (k-1)/2 on each side (k odd,
// k <= 31), so the output length equals the input length.
// x: [n][c_in][len], w: [c_out][c_in][k], b: [c_out], out: [n][c_out][len]
void conv1d_forward(int n, int c_in, int len, int c_out, int k, const double* x, const double* w,
                    const double* b, double* out);
void conv1d_grad_input(int n, int c_in, int len, int c_out, int k, const double* w,
                       const double* gout, double* gin);
void conv1d_grad_weight(int n, int c_in, int len, int c_out, int k, const double* x,
                        const double* gout, double* gw, double* gb);

void relu_forward(int64_t count, const double* x, double* out);
void relu_backward(int64_t count, const double* x, const double* gout, double* gin);

// Batch norm statistics per channel across the n*len axis; var is biased.
void bn_batch_stats(int n, int c, int len, const double* x, double* mean, double* var);
// Normalizes with whatever mean/var the caller supplies (batch or running).
void bn_forward(int n, int c, int len, const double* x, const double* mean, const double* var,
                const double* gamma, const double* beta, double eps, double* out);
void bn_train_backward(int n, int c, int len, const double* x, const double* mean,
                       const double* var, const double* gamma, double eps, const double* gout,
                       double* gin, double* ggamma, double* gbeta);
void bn_eval_backward(int n, int c, int len, const double* var, const double* gamma, double eps,
                      const double* gout, double* gin);

void avgpool_forward(int n, int c, int len, const double* x, double* out);  // out: [n][c]
void avgpool_backward(int n, int c, int len, const double* gout, double* gin);

// w: [f_out][f_in], x: [n][f_in], out: [n][f_out]
void linear_forward(int n, int f_in, int f_out, const double* x, const double* w, const double* b,
                    double* out);
void linear_grad_input(int n, int f_in, int f_out, const double* w, const double* gout,
                       double* gin);
void linear_grad_weight(int n, int f_in, int f_out, const double* x, const double* gout,
                        double* gw, double* gb);

namespace serial {

void conv1d_forward(int n, int c_in, int len, int c_out, int k, const double* x, const double* w,
                    const double* b, double* out);
void conv1d_grad_input(int n, int c_in, int len, int c_out, int k, const double* w,
                       const double* gout, double* gin);
void conv1d_grad_weight(int n, int c_in, int len, int c_out, int k, const double* x,
                        const double* gout, double* gw, double* gb);
void relu_forward(int64_t count, const double* x, double* out);
void relu_backward(int64_t count, const double* x, const double* gout, double* gin);
void bn_batch_stats(int n, int c, int len, const double* x, double* mean, double* var);
void bn_forward(int n, int c, int len, const double* x, const double* mean, const double* var,
                const double* gamma, const double* beta, double eps, double* out);
void bn_train_backward(int n, int c, int len, const double* x, const double* mean,
                       const double* var, const double* gamma, double eps, const double* gout,
                       double* gin, double* ggamma, double* gbeta);
void bn_eval_backward(int n, int c, int len, const double* var, const double* gamma, double eps,
                      const double* gout, double* gin);
void avgpool_forward(int n, int c, int len, const double* x, double* out);
void avgpool_backward(int n, int c, int len, const double* gout, double* gin);
void linear_forward(int n, int f_in, int f_out, const double* x, const double* w, const double* b,
                    double* out);
void linear_grad_input(int n, int f_in, int f_out, const double* w, const double* gout,
                       double* gin);
void linear_grad_weight(int n, int f_in, int f_out, const double* x, const double* gout,
                        double* gw, double* gb);

}  // namespace serial

}  // namespace seqdream::kern
