#include "seqdream/tensor.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "seqdream/common.hpp"
#include "seqdream/kernels.hpp"

namespace seqdream {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail(ErrorKind::shape, "tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

// Splits [C,L] / [N,C,L] into batch, channels, length.
struct Ncl {
  int n, c, l;
};

Ncl as_ncl(const Tensor& t, const char* what) {
  if (t.rank() == 2) return {1, t.shape[0], t.shape[1]};
  if (t.rank() == 3) return {t.shape[0], t.shape[1], t.shape[2]};
  fail(ErrorKind::shape,
       std::string(what) + " expects rank 2 [C,L] or rank 3 [N,C,L], got " + t.shape_str());
}

// d|x|^a/dx with subgradient 0 at x = 0 (also avoids pow(0,0) = 1 for a = 1).
double abs_pow_grad(double x, double a) {
  if (x == 0.0) return 0.0;
  const double s = x > 0.0 ? 1.0 : -1.0;
  return a * std::pow(std::fabs(x), a - 1.0) * s;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> data_in, bool rg)
    : shape(std::move(shape_in)), data(std::move(data_in)), requires_grad(rg) {
  if (static_cast<int64_t>(data.size()) != shape_numel(shape))
    fail(ErrorKind::shape, "tensor data size " + std::to_string(data.size()) +
                               " does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int> shape_in, bool rg) {
  const int64_t n = shape_numel(shape_in);
  return Tensor(std::move(shape_in), std::vector<double>(n, 0.0), rg);
}

Tensor Tensor::full(std::vector<int> shape_in, double value, bool rg) {
  const int64_t n = shape_numel(shape_in);
  return Tensor(std::move(shape_in), std::vector<double>(n, value), rg);
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Id Tape::push(Tensor t, BackwardFn fn) {
  slots_.push_back(std::move(t));
  nodes_.push_back(std::move(fn));
  return static_cast<Id>(slots_.size()) - 1;
}

void Tape::check(Id id, const char* what) const {
  if (id < 0 || id >= static_cast<Id>(slots_.size()))
    fail(ErrorKind::state, std::string(what) + ": id " + std::to_string(id) + " not on this tape");
}

const Tensor& Tape::in(Id id, const char* what) const {
  check(id, what);
  return slots_[id];
}

Tape::Id Tape::leaf(const Tensor& t) { return push(t, nullptr); }

Tape::Id Tape::leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  return push(Tensor(std::move(shape), std::move(data), requires_grad), nullptr);
}

const Tensor& Tape::value(Id id) const {
  check(id, "value");
  return slots_[id];
}

double Tape::scalar(Id id) const {
  const Tensor& t = value(id);
  if (t.numel() != 1)
    fail(ErrorKind::shape, "scalar: tensor has shape " + t.shape_str());
  return t.data[0];
}

const std::vector<double>& Tape::grad(Id id) const {
  check(id, "grad");
  return slots_[id].grad;
}

void Tape::zero_grad() {
  for (Tensor& t : slots_)
    if (!t.grad.empty()) t.grad.assign(t.grad.size(), 0.0);
}

void Tape::backward(Id root) {
  check(root, "backward");
  if (slots_[root].numel() != 1)
    fail(ErrorKind::shape, "backward: root must be scalar, got " + slots_[root].shape_str());
  Scratch g(slots_.size());
  for (size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].requires_grad) g[i].assign(slots_[i].data.size(), 0.0);
  if (!slots_[root].requires_grad) return;  // nothing on the tape needs gradients
  g[root][0] = 1.0;
  for (Id i = root; i >= 0; --i)
    if (nodes_[i] && slots_[i].requires_grad) nodes_[i](*this, g);
  for (size_t i = 0; i < slots_.size(); ++i) {
    if (!slots_[i].requires_grad) continue;
    Tensor& t = slots_[i];
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    for (size_t j = 0; j < t.grad.size(); ++j) t.grad[j] += g[i][j];
  }
}

// ---------------------------------------------------------------------------
// Network ops
// ---------------------------------------------------------------------------

Tape::Id Tape::conv1d(Id x, Id w, Id b) {
  const Tensor& xt = in(x, "conv1d input");
  const Tensor& wt = in(w, "conv1d weight");
  const Tensor& bt = in(b, "conv1d bias");
  const Ncl d = as_ncl(xt, "conv1d");
  if (wt.rank() != 3)
    fail(ErrorKind::shape, "conv1d weight must be [Cout,Cin,K], got " + wt.shape_str());
  const int c_out = wt.shape[0], k = wt.shape[2];
  if (wt.shape[1] != d.c)
    fail(ErrorKind::shape, "conv1d: input channels " + xt.shape_str() + " vs weight " +
                               wt.shape_str() + " disagree");
  if (bt.rank() != 1 || bt.shape[0] != c_out)
    fail(ErrorKind::shape, "conv1d bias must be [" + std::to_string(c_out) + "], got " +
                               bt.shape_str());
  std::vector<int> oshape = xt.rank() == 2 ? std::vector<int>{c_out, d.l}
                                           : std::vector<int>{d.n, c_out, d.l};
  Tensor out = Tensor::zeros(std::move(oshape));
  kern::conv1d_forward(d.n, d.c, d.l, c_out, k, xt.data.data(), wt.data.data(), bt.data.data(),
                       out.data.data());
  out.requires_grad = xt.requires_grad || wt.requires_grad || bt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [x, w, b, d, c_out, k, out_id](Tape& tp, Scratch& g) {
    const std::vector<double>& go = g[out_id];
    if (tp.slots_[x].requires_grad)
      kern::conv1d_grad_input(d.n, d.c, d.l, c_out, k, tp.slots_[w].data.data(), go.data(),
                              g[x].data());
    const bool wreq = tp.slots_[w].requires_grad, breq = tp.slots_[b].requires_grad;
    if (wreq && breq) {
      kern::conv1d_grad_weight(d.n, d.c, d.l, c_out, k, tp.slots_[x].data.data(), go.data(),
                               g[w].data(), g[b].data());
    } else if (wreq || breq) {
      std::vector<double> gw(tp.slots_[w].data.size(), 0.0), gb(c_out, 0.0);
      kern::conv1d_grad_weight(d.n, d.c, d.l, c_out, k, tp.slots_[x].data.data(), go.data(),
                               gw.data(), gb.data());
      if (wreq)
        for (size_t i = 0; i < gw.size(); ++i) g[w][i] += gw[i];
      if (breq)
        for (int i = 0; i < c_out; ++i) g[b][i] += gb[i];
    }
  };
  return out_id;
}

Tape::Id Tape::relu(Id x) {
  const Tensor& xt = in(x, "relu");
  Tensor out = Tensor::zeros(xt.shape);
  kern::relu_forward(xt.numel(), xt.data.data(), out.data.data());
  out.requires_grad = xt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [x, out_id](Tape& tp, Scratch& g) {
    if (tp.slots_[x].requires_grad)
      kern::relu_backward(tp.slots_[x].numel(), tp.slots_[x].data.data(), g[out_id].data(),
                          g[x].data());
  };
  return out_id;
}

Tape::Id Tape::batchnorm1d(Id x, Id gamma, Id beta, BatchNormState& state, BnMode mode,
                           double momentum, double eps) {
  const Tensor& xt = in(x, "batchnorm1d input");
  const Tensor& gt = in(gamma, "batchnorm1d gamma");
  const Tensor& bt = in(beta, "batchnorm1d beta");
  const Ncl d = as_ncl(xt, "batchnorm1d");
  if (gt.rank() != 1 || gt.shape[0] != d.c || bt.rank() != 1 || bt.shape[0] != d.c)
    fail(ErrorKind::shape, "batchnorm1d: gamma " + gt.shape_str() + " / beta " + bt.shape_str() +
                               " must be [" + std::to_string(d.c) + "]");
  Tensor out = Tensor::zeros(xt.shape);
  out.requires_grad = xt.requires_grad || gt.requires_grad || bt.requires_grad;

  if (mode == BnMode::train) {
    std::vector<double> mean(d.c), var(d.c);
    kern::bn_batch_stats(d.n, d.c, d.l, xt.data.data(), mean.data(), var.data());
    kern::bn_forward(d.n, d.c, d.l, xt.data.data(), mean.data(), var.data(), gt.data.data(),
                     bt.data.data(), eps, out.data.data());
    if (!state.populated()) {
      state.running_mean.assign(d.c, 0.0);
      state.running_var.assign(d.c, 1.0);
    }
    const double count = static_cast<double>(d.n) * d.l;
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    for (int c = 0; c < d.c; ++c) {
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mean[c];
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * var[c] * unbias;
    }
    const Id out_id = push(std::move(out), nullptr);
    nodes_[out_id] = [x, gamma, beta, d, eps, out_id, mean = std::move(mean),
                      var = std::move(var)](Tape& tp, Scratch& g) {
      const std::vector<double>& go = g[out_id];
      const bool xreq = tp.slots_[x].requires_grad;
      const bool greq = tp.slots_[gamma].requires_grad;
      const bool breq = tp.slots_[beta].requires_grad;
      if (xreq && greq && breq) {
        kern::bn_train_backward(d.n, d.c, d.l, tp.slots_[x].data.data(), mean.data(), var.data(),
                                tp.slots_[gamma].data.data(), eps, go.data(), g[x].data(),
                                g[gamma].data(), g[beta].data());
      } else if (xreq || greq || breq) {
        std::vector<double> gx(tp.slots_[x].data.size(), 0.0), gg(d.c, 0.0), gb(d.c, 0.0);
        kern::bn_train_backward(d.n, d.c, d.l, tp.slots_[x].data.data(), mean.data(), var.data(),
                                tp.slots_[gamma].data.data(), eps, go.data(), gx.data(), gg.data(),
                                gb.data());
        if (xreq)
          for (size_t i = 0; i < gx.size(); ++i) g[x][i] += gx[i];
        if (greq)
          for (int c = 0; c < d.c; ++c) g[gamma][c] += gg[c];
        if (breq)
          for (int c = 0; c < d.c; ++c) g[beta][c] += gb[c];
      }
    };
    return out_id;
  }

  if (!state.populated())
    fail(ErrorKind::state, "batchnorm1d: eval mode requires populated running statistics");
  if (static_cast<int>(state.running_mean.size()) != d.c)
    fail(ErrorKind::shape, "batchnorm1d: running stats hold " +
                               std::to_string(state.running_mean.size()) + " channels, input has " +
                               std::to_string(d.c));
  kern::bn_forward(d.n, d.c, d.l, xt.data.data(), state.running_mean.data(),
                   state.running_var.data(), gt.data.data(), bt.data.data(), eps,
                   out.data.data());
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [x, gamma, beta, d, eps, out_id, rmean = state.running_mean,
                    rvar = state.running_var](Tape& tp, Scratch& g) {
    const std::vector<double>& go = g[out_id];
    if (tp.slots_[x].requires_grad)
      kern::bn_eval_backward(d.n, d.c, d.l, rvar.data(), tp.slots_[gamma].data.data(), eps,
                             go.data(), g[x].data());
    if (tp.slots_[gamma].requires_grad || tp.slots_[beta].requires_grad) {
      const std::vector<double>& xd = tp.slots_[x].data;
      for (int c = 0; c < d.c; ++c) {
        const double inv = 1.0 / std::sqrt(rvar[c] + eps);
        double sg = 0.0, sgx = 0.0;
        for (int n = 0; n < d.n; ++n)
          for (int i = 0; i < d.l; ++i) {
            const size_t at = (static_cast<size_t>(n) * d.c + c) * d.l + i;
            sg += go[at];
            sgx += go[at] * (xd[at] - rmean[c]) * inv;
          }
        if (tp.slots_[gamma].requires_grad) g[gamma][c] += sgx;
        if (tp.slots_[beta].requires_grad) g[beta][c] += sg;
      }
    }
  };
  return out_id;
}

Tape::Id Tape::global_avg_pool(Id x) {
  const Tensor& xt = in(x, "global_avg_pool");
  const Ncl d = as_ncl(xt, "global_avg_pool");
  std::vector<int> oshape =
      xt.rank() == 2 ? std::vector<int>{d.c} : std::vector<int>{d.n, d.c};
  Tensor out = Tensor::zeros(std::move(oshape));
  kern::avgpool_forward(d.n, d.c, d.l, xt.data.data(), out.data.data());
  out.requires_grad = xt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [x, d, out_id](Tape& tp, Scratch& g) {
    if (tp.slots_[x].requires_grad)
      kern::avgpool_backward(d.n, d.c, d.l, g[out_id].data(), g[x].data());
  };
  return out_id;
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  const Tensor& xt = in(x, "linear input");
  const Tensor& wt = in(w, "linear weight");
  const Tensor& bt = in(b, "linear bias");
  if (xt.rank() != 1 && xt.rank() != 2)
    fail(ErrorKind::shape, "linear input must be [F] or [N,F], got " + xt.shape_str());
  const int n = xt.rank() == 2 ? xt.shape[0] : 1;
  const int f_in = xt.rank() == 2 ? xt.shape[1] : xt.shape[0];
  if (wt.rank() != 2 || wt.shape[1] != f_in)
    fail(ErrorKind::shape,
         "linear: weight " + wt.shape_str() + " does not match input " + xt.shape_str());
  const int f_out = wt.shape[0];
  if (bt.rank() != 1 || bt.shape[0] != f_out)
    fail(ErrorKind::shape, "linear bias must be [" + std::to_string(f_out) + "], got " +
                               bt.shape_str());
  std::vector<int> oshape =
      xt.rank() == 2 ? std::vector<int>{n, f_out} : std::vector<int>{f_out};
  Tensor out = Tensor::zeros(std::move(oshape));
  kern::linear_forward(n, f_in, f_out, xt.data.data(), wt.data.data(), bt.data.data(),
                       out.data.data());
  out.requires_grad = xt.requires_grad || wt.requires_grad || bt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [x, w, b, n, f_in, f_out, out_id](Tape& tp, Scratch& g) {
    const std::vector<double>& go = g[out_id];
    if (tp.slots_[x].requires_grad)
      kern::linear_grad_input(n, f_in, f_out, tp.slots_[w].data.data(), go.data(), g[x].data());
    const bool wreq = tp.slots_[w].requires_grad, breq = tp.slots_[b].requires_grad;
    if (wreq && breq) {
      kern::linear_grad_weight(n, f_in, f_out, tp.slots_[x].data.data(), go.data(), g[w].data(),
                               g[b].data());
    } else if (wreq || breq) {
      std::vector<double> gw(tp.slots_[w].data.size(), 0.0), gb(f_out, 0.0);
      kern::linear_grad_weight(n, f_in, f_out, tp.slots_[x].data.data(), go.data(), gw.data(),
                               gb.data());
      if (wreq)
        for (size_t i = 0; i < gw.size(); ++i) g[w][i] += gw[i];
      if (breq)
        for (int i = 0; i < f_out; ++i) g[b][i] += gb[i];
    }
  };
  return out_id;
}

namespace {

// Stable softmax of one row.
void softmax_row(const double* z, int k, double* p) {
  double mx = z[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, z[i]);
  double s = 0.0;
  for (int i = 0; i < k; ++i) {
    p[i] = std::exp(z[i] - mx);
    s += p[i];
  }
  for (int i = 0; i < k; ++i) p[i] /= s;
}

}  // namespace

Tape::Id Tape::softmax_cross_entropy(Id logits, int label) {
  const Tensor& lt = in(logits, "softmax_cross_entropy");
  if (lt.rank() != 1)
    fail(ErrorKind::shape, "softmax_cross_entropy expects rank-1 logits, got " + lt.shape_str());
  const int k = lt.shape[0];
  if (label < 0 || label >= k)
    fail(ErrorKind::shape, "softmax_cross_entropy: label " + std::to_string(label) +
                               " out of range [0, " + std::to_string(k) + ")");
  std::vector<double> p(k);
  softmax_row(lt.data.data(), k, p.data());
  Tensor out({1}, {-std::log(p[label])});
  out.requires_grad = lt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [logits, label, k, out_id, p = std::move(p)](Tape& tp, Scratch& g) {
    if (!tp.slots_[logits].requires_grad) return;
    const double go = g[out_id][0];
    for (int i = 0; i < k; ++i)
      g[logits][i] += go * (p[i] - (i == label ? 1.0 : 0.0));
  };
  return out_id;
}

Tape::Id Tape::softmax_cross_entropy_mean(Id logits, const std::vector<int>& labels) {
  const Tensor& lt = in(logits, "softmax_cross_entropy_mean");
  if (lt.rank() != 2)
    fail(ErrorKind::shape,
         "softmax_cross_entropy_mean expects [N,k] logits, got " + lt.shape_str());
  const int n = lt.shape[0], k = lt.shape[1];
  if (static_cast<int>(labels.size()) != n)
    fail(ErrorKind::shape, "softmax_cross_entropy_mean: " + std::to_string(labels.size()) +
                               " labels for " + std::to_string(n) + " rows");
  std::vector<double> p(static_cast<size_t>(n) * k);
  double loss = 0.0;
  for (int r = 0; r < n; ++r) {
    const int lab = labels[r];
    if (lab < 0 || lab >= k)
      fail(ErrorKind::shape, "softmax_cross_entropy_mean: label " + std::to_string(lab) +
                                 " out of range [0, " + std::to_string(k) + ")");
    softmax_row(lt.data.data() + static_cast<size_t>(r) * k, k, p.data() + static_cast<size_t>(r) * k);
    loss += -std::log(p[static_cast<size_t>(r) * k + lab]);
  }
  Tensor out({1}, {loss / n});
  out.requires_grad = lt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [logits, labels, n, k, out_id, p = std::move(p)](Tape& tp, Scratch& g) {
    if (!tp.slots_[logits].requires_grad) return;
    const double go = g[out_id][0] / n;
    for (int r = 0; r < n; ++r)
      for (int i = 0; i < k; ++i)
        g[logits][static_cast<size_t>(r) * k + i] +=
            go * (p[static_cast<size_t>(r) * k + i] - (i == labels[r] ? 1.0 : 0.0));
  };
  return out_id;
}

// ---------------------------------------------------------------------------
// Loss-assembly ops
// ---------------------------------------------------------------------------

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& at = in(a, "add");
  const Tensor& bt = in(b, "add");
  if (at.shape != bt.shape)
    fail(ErrorKind::shape, "add: shapes " + at.shape_str() + " and " + bt.shape_str() + " differ");
  Tensor out = Tensor::zeros(at.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = at.data[i] + bt.data[i];
  out.requires_grad = at.requires_grad || bt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [a, b, out_id](Tape& tp, Scratch& g) {
    const std::vector<double>& go = g[out_id];
    if (tp.slots_[a].requires_grad)
      for (size_t i = 0; i < go.size(); ++i) g[a][i] += go[i];
    if (tp.slots_[b].requires_grad)
      for (size_t i = 0; i < go.size(); ++i) g[b][i] += go[i];
  };
  return out_id;
}

Tape::Id Tape::pick(Id v, int index) {
  const Tensor& vt = in(v, "pick");
  if (index < 0 || index >= vt.numel())
    fail(ErrorKind::shape, "pick: index " + std::to_string(index) + " out of range for " +
                               vt.shape_str());
  Tensor out({1}, {vt.data[index]});
  out.requires_grad = vt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [v, index, out_id](Tape& tp, Scratch& g) {
    if (tp.slots_[v].requires_grad) g[v][index] += g[out_id][0];
  };
  return out_id;
}

Tape::Id Tape::sub_const(Id v, const std::vector<double>& t) {
  const Tensor& vt = in(v, "sub_const");
  if (t.size() != vt.data.size())
    fail(ErrorKind::shape, "sub_const: constant size " + std::to_string(t.size()) +
                               " vs tensor " + vt.shape_str());
  Tensor out = Tensor::zeros(vt.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = vt.data[i] - t[i];
  out.requires_grad = vt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [v, out_id](Tape& tp, Scratch& g) {
    if (!tp.slots_[v].requires_grad) return;
    const std::vector<double>& go = g[out_id];
    for (size_t i = 0; i < go.size(); ++i) g[v][i] += go[i];
  };
  return out_id;
}

Tape::Id Tape::sum_sq(Id v) {
  const Tensor& vt = in(v, "sum_sq");
  double s = 0.0;
  for (double x : vt.data) s += x * x;
  Tensor out({1}, {s});
  out.requires_grad = vt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [v, out_id](Tape& tp, Scratch& g) {
    if (!tp.slots_[v].requires_grad) return;
    const double go = g[out_id][0];
    const std::vector<double>& vd = tp.slots_[v].data;
    for (size_t i = 0; i < vd.size(); ++i) g[v][i] += go * 2.0 * vd[i];
  };
  return out_id;
}

Tape::Id Tape::scale(Id v, double s) {
  const Tensor& vt = in(v, "scale");
  Tensor out = Tensor::zeros(vt.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = s * vt.data[i];
  out.requires_grad = vt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [v, s, out_id](Tape& tp, Scratch& g) {
    if (!tp.slots_[v].requires_grad) return;
    const std::vector<double>& go = g[out_id];
    for (size_t i = 0; i < go.size(); ++i) g[v][i] += s * go[i];
  };
  return out_id;
}

Tape::Id Tape::alpha_norm(Id v, double alpha) {
  const Tensor& vt = in(v, "alpha_norm");
  if (alpha <= 0.0) fail(ErrorKind::numeric, "alpha_norm: alpha must be > 0");
  const double m = static_cast<double>(vt.numel());
  double s = 0.0;
  for (double x : vt.data) s += std::pow(std::fabs(x), alpha);
  Tensor out({1}, {s / m});
  out.requires_grad = vt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [v, alpha, m, out_id](Tape& tp, Scratch& g) {
    if (!tp.slots_[v].requires_grad) return;
    const double go = g[out_id][0] / m;
    const std::vector<double>& vd = tp.slots_[v].data;
    for (size_t i = 0; i < vd.size(); ++i) g[v][i] += go * abs_pow_grad(vd[i], alpha);
  };
  return out_id;
}

Tape::Id Tape::tv(Id v, double beta) {
  const Tensor& vt = in(v, "tv");
  if (vt.numel() < 2) fail(ErrorKind::shape, "tv: series must have at least 2 points");
  if (beta < 1.0) fail(ErrorKind::numeric, "tv: beta must be >= 1");
  const size_t m = vt.data.size();
  double s = 0.0;
  for (size_t i = 0; i + 1 < m; ++i) s += std::pow(std::fabs(vt.data[i + 1] - vt.data[i]), beta);
  Tensor out({1}, {s});
  out.requires_grad = vt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [v, beta, m, out_id](Tape& tp, Scratch& g) {
    if (!tp.slots_[v].requires_grad) return;
    const double go = g[out_id][0];
    const std::vector<double>& vd = tp.slots_[v].data;
    for (size_t i = 0; i + 1 < m; ++i) {
      const double dgrad = go * abs_pow_grad(vd[i + 1] - vd[i], beta);
      g[v][i + 1] += dgrad;
      g[v][i] -= dgrad;
    }
  };
  return out_id;
}

Tape::Id Tape::sm(Id v) {
  const Tensor& vt = in(v, "sm");
  if (vt.numel() < 2) fail(ErrorKind::shape, "sm: series must have at least 2 points");
  const size_t m = vt.data.size();
  double s = 0.0;
  for (size_t i = 0; i + 1 < m; ++i) s += std::fabs(vt.data[i + 1] - vt.data[i]);
  Tensor out({1}, {s / static_cast<double>(m - 1)});
  out.requires_grad = vt.requires_grad;
  const Id out_id = push(std::move(out), nullptr);
  nodes_[out_id] = [v, m, out_id](Tape& tp, Scratch& g) {
    if (!tp.slots_[v].requires_grad) return;
    const double go = g[out_id][0] / static_cast<double>(m - 1);
    const std::vector<double>& vd = tp.slots_[v].data;
    for (size_t i = 0; i + 1 < m; ++i) {
      const double d = vd[i + 1] - vd[i];
      if (d == 0.0) continue;  // subgradient 0 at exactly-zero differences
      const double dgrad = d > 0.0 ? go : -go;
      g[v][i + 1] += dgrad;
      g[v][i] -= dgrad;
    }
  };
  return out_id;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tape::Id(Tape&, Tape::Id)>& f, const Tensor& x,
                  double step) {
  Tensor base = x;
  base.requires_grad = true;
  Tape tape;
  const Tape::Id xid = tape.leaf(base);
  const Tape::Id root = f(tape, xid);
  const double f0 = tape.scalar(root);
  if (!std::isfinite(f0)) fail(ErrorKind::numeric, "grad_check: f(x) is not finite");
  tape.backward(root);
  const std::vector<double> gad = tape.grad(xid);

  auto eval = [&](const Tensor& at) {
    Tape t;
    Tensor plain = at;
    plain.requires_grad = false;
    const double val = t.scalar(f(t, t.leaf(plain)));
    if (!std::isfinite(val)) fail(ErrorKind::numeric, "grad_check: f(x +/- step) is not finite");
    return val;
  };

  double max_err = 0.0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.data[i] += step;
    xm.data[i] -= step;
    const double gfd = (eval(xp) - eval(xm)) / (2.0 * step);
    const double err =
        std::fabs(gad[i] - gfd) / std::max(1e-12, std::fabs(gad[i]) + std::fabs(gfd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace seqdream
