#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace seqdream {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // accumulated gradient; empty until a backward pass touches it
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> shape_in, std::vector<double> data_in, bool rg = false);
  static Tensor zeros(std::vector<int> shape_in, bool rg = false);
  static Tensor full(std::vector<int> shape_in, double value, bool rg = false);

  int64_t numel() const;
  int rank() const { return static_cast<int>(shape.size()); }
  std::string shape_str() const;
};

// Running statistics owned by the model, updated by train-mode batchnorm.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool populated() const { return !running_mean.empty(); }
};

enum class BnMode { train, eval };

// Reverse-mode tape. Ops append a value slot plus a backward closure; backward
// replays closures in reverse creation order with a fixed per-element
// accumulation order, so gradients are bit-reproducible. Tapes are
// single-owner and not shared across threads.
class Tape {
 public:
  using Id = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Id leaf(const Tensor& t);
  Id leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

  // Network ops. conv1d/batchnorm1d/global_avg_pool accept [C,L] or [N,C,L];
  // linear accepts [F] or [N,F]; output rank follows the input.
  Id conv1d(Id x, Id w, Id b);
  Id relu(Id x);
  Id batchnorm1d(Id x, Id gamma, Id beta, BatchNormState& state, BnMode mode,
                 double momentum = 0.1, double eps = 1e-5);
  Id global_avg_pool(Id x);
  Id linear(Id x, Id w, Id b);
  Id softmax_cross_entropy(Id logits, int label);
  Id softmax_cross_entropy_mean(Id logits, const std::vector<int>& labels);

  // Scalar/elementwise ops used to assemble the dreaming losses.
  Id add(Id a, Id b);
  Id pick(Id v, int index);                             // flat index -> scalar
  Id sub_const(Id v, const std::vector<double>& t);     // v - t elementwise
  Id sum_sq(Id v);
  Id scale(Id v, double s);
  Id alpha_norm(Id v, double alpha);  // (1/m) * sum |v_i|^alpha
  Id tv(Id v, double beta);           // sum |v_{i+1} - v_i|^beta
  Id sm(Id v);                        // mean |v_{i+1} - v_i|

  // Accumulates d(root)/d(slot) into every requires_grad slot's grad; repeated
  // calls without zero_grad() add up.
  void backward(Id root);
  void zero_grad();

  const Tensor& value(Id id) const;
  double scalar(Id id) const;
  const std::vector<double>& grad(Id id) const;
  int size() const { return static_cast<int>(slots_.size()); }

 private:
  using Scratch = std::vector<std::vector<double>>;
  using BackwardFn = std::function<void(Tape&, Scratch&)>;

  Id push(Tensor t, BackwardFn fn);
  void check(Id id, const char* what) const;
  const Tensor& in(Id id, const char* what) const;

  std::vector<Tensor> slots_;
  std::vector<BackwardFn> nodes_;
};

// Compares the tape gradient of f against central finite differences around x
// and returns max over coordinates of |g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|).
// f receives a fresh tape plus the leaf id of x and must return a scalar id.
double grad_check(const std::function<Tape::Id(Tape&, Tape::Id)>& f, const Tensor& x,
                  double step);

}  // namespace seqdream
