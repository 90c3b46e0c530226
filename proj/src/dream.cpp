#include "seqdream/dream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "seqdream/common.hpp"

namespace seqdream {

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

DreamVariant parse_dream_variant(const std::string& text) {
  if (text == "ascent") return DreamVariant::ascent;
  if (text == "target") return DreamVariant::target;
  if (text == "sd") return DreamVariant::sd;
  fail(ErrorKind::config, "invalid dream variant '" + text + "' (expected ascent, target, or sd)");
}

DreamMode parse_dream_mode(const std::string& text) {
  if (text == "center") return DreamMode::center;
  if (text == "max") return DreamMode::max;
  fail(ErrorKind::config, "invalid dream mode '" + text + "' (expected center or max)");
}

SeedStrategy parse_seed_strategy(const std::string& text) {
  if (text == "mean-activation-nearest") return SeedStrategy::mean_activation_nearest;
  if (text == "random-noise") return SeedStrategy::random_noise;
  if (text == "given-series") return SeedStrategy::given_series;
  fail(ErrorKind::config, "invalid seed strategy '" + text +
                              "' (expected mean-activation-nearest, random-noise, or given-series)");
}

SmoothKind parse_smooth_kind(const std::string& text) {
  if (text == "exponential") return SmoothKind::exponential;
  if (text == "moving-average") return SmoothKind::moving_average;
  fail(ErrorKind::config,
       "invalid smoother '" + text + "' (expected exponential or moving-average)");
}

std::string str(DreamVariant v) {
  switch (v) {
    case DreamVariant::ascent: return "ascent";
    case DreamVariant::target: return "target";
    case DreamVariant::sd: return "sd";
  }
  return "sd";
}

std::string str(DreamMode m) { return m == DreamMode::center ? "center" : "max"; }

std::string str(SeedStrategy s) {
  switch (s) {
    case SeedStrategy::mean_activation_nearest: return "mean-activation-nearest";
    case SeedStrategy::random_noise: return "random-noise";
    case SeedStrategy::given_series: return "given-series";
  }
  return "given-series";
}

std::string str(SmoothKind k) {
  return k == SmoothKind::exponential ? "exponential" : "moving-average";
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

int DreamConfig::resolved_blur_every() const {
  if (blur_every >= 0) return blur_every;
  switch (variant) {
    case DreamVariant::ascent: return 1;
    case DreamVariant::sd: return 5;
    case DreamVariant::target: return 0;
  }
  return 0;
}

void DreamConfig::validate() const {
  if (steps < 1) fail(ErrorKind::config, "dream: steps must be >= 1");
  if (lr <= 0.0) fail(ErrorKind::config, "dream: lr must be > 0");
  if (alpha <= 2.0) fail(ErrorKind::config, "dream: alpha must be > 2");
  if (beta < 1.0) fail(ErrorKind::config, "dream: beta must be >= 1");
  if (sigma <= 0.0) fail(ErrorKind::config, "dream: sigma must be > 0");
  if (lambda_alpha < 0.0 || lambda_beta < 0.0 || lambda_sm < 0.0)
    fail(ErrorKind::config, "dream: lambda weights must be >= 0");
  if (target_multiplier <= 0.0) fail(ErrorKind::config, "dream: target_multiplier must be > 0");
  if (l2_decay_rate < 0.0 || l2_decay_rate >= 1.0)
    fail(ErrorKind::config, "dream: l2_decay_rate must be in [0, 1)");
  if (scale_jitter < 0.0 || scale_jitter >= 1.0)
    fail(ErrorKind::config, "dream: scale_jitter must be in [0, 1)");
  if (ma_window < 1 || ma_window % 2 == 0)
    fail(ErrorKind::config, "dream: ma_window must be odd and >= 1");
  if (exp_gamma <= 0.0 || exp_gamma > 1.0)
    fail(ErrorKind::config, "dream: exp_gamma must be in (0, 1]");
  if (plateau_eps < 0.0) fail(ErrorKind::config, "dream: plateau_eps must be >= 0");
  if (plateau_window < 1) fail(ErrorKind::config, "dream: plateau_window must be >= 1");
  if (reinit_noise_std < 0.0 || overshoot_noise_std < 0.0)
    fail(ErrorKind::config,
         "dream: noise stds unresolved; call resolve_dream_defaults or set them");
  if (!(clamp_lo < clamp_hi))
    fail(ErrorKind::config,
         "dream: clamp bounds unresolved or not lo < hi; call resolve_dream_defaults or set them");
}

DreamConfig resolve_dream_defaults(DreamConfig cfg, const DatasetStats& stats) {
  if (cfg.blur_every < 0) cfg.blur_every = cfg.resolved_blur_every();
  if (cfg.reinit_noise_std < 0.0) cfg.reinit_noise_std = 0.05 * stats.std;
  if (cfg.overshoot_noise_std < 0.0) cfg.overshoot_noise_std = 0.02 * stats.std;
  if (std::isnan(cfg.clamp_lo)) cfg.clamp_lo = stats.min;
  if (std::isnan(cfg.clamp_hi)) cfg.clamp_hi = stats.max;
  return cfg;
}

// ---------------------------------------------------------------------------
// Regularizer toolkit
// ---------------------------------------------------------------------------

namespace {

void need_length(const std::vector<double>& ts, size_t m, const char* what) {
  if (ts.size() < m)
    fail(ErrorKind::shape, std::string(what) + ": series must have at least " +
                               std::to_string(m) + " points, got " + std::to_string(ts.size()));
}

}  // namespace

double tv(const std::vector<double>& ts, double beta) {
  need_length(ts, 2, "tv");
  if (beta < 1.0) fail(ErrorKind::config, "tv: beta must be >= 1");
  double acc = 0.0;
  for (size_t i = 0; i + 1 < ts.size(); ++i) acc += std::pow(std::abs(ts[i + 1] - ts[i]), beta);
  return acc;
}

double sm(const std::vector<double>& ts) {
  need_length(ts, 2, "sm");
  double acc = 0.0;
  for (size_t i = 0; i + 1 < ts.size(); ++i) acc += std::abs(ts[i + 1] - ts[i]);
  return acc / static_cast<double>(ts.size() - 1);
}

double alpha_norm(const std::vector<double>& ts, double alpha) {
  need_length(ts, 1, "alpha_norm");
  if (alpha <= 0.0) fail(ErrorKind::config, "alpha_norm: alpha must be > 0");
  double acc = 0.0;
  for (double t : ts) acc += std::pow(std::abs(t), alpha);
  return acc / static_cast<double>(ts.size());
}

std::vector<double> clamp_to_bounds(std::vector<double> ts, double lo, double hi) {
  if (!(lo < hi)) fail(ErrorKind::config, "clamp_to_bounds: requires lo < hi");
  for (double& t : ts) t = std::min(hi, std::max(lo, t));
  return ts;
}

std::vector<double> l2_decay(std::vector<double> ts, double rate) {
  if (rate < 0.0 || rate >= 1.0) fail(ErrorKind::config, "l2_decay: rate must be in [0, 1)");
  for (double& t : ts) t *= 1.0 - rate;
  return ts;
}

std::vector<double> random_scale(std::vector<double> ts, double s, std::mt19937_64& rng,
                                 bool whole_series) {
  if (s < 0.0 || s >= 1.0) fail(ErrorKind::config, "random_scale: s must be in [0, 1)");
  std::uniform_real_distribution<double> u(1.0 - s, 1.0 + s);
  if (whole_series) {
    const double f = u(rng);
    for (double& t : ts) t *= f;
  } else {
    for (double& t : ts) t *= u(rng);
  }
  return ts;
}

std::vector<double> moving_average_smooth(const std::vector<double>& ts, int window) {
  if (window < 1 || window % 2 == 0)
    fail(ErrorKind::config, "moving_average_smooth: window must be odd and >= 1");
  const int m = static_cast<int>(ts.size());
  const int h = window / 2;
  std::vector<double> out(ts.size());
  for (int i = 0; i < m; ++i) {
    const int a = std::max(0, i - h), b = std::min(m - 1, i + h);
    double acc = 0.0;
    for (int j = a; j <= b; ++j) acc += ts[j];
    out[i] = acc / (b - a + 1);
  }
  return out;
}

std::vector<double> exponential_smooth(const std::vector<double>& ts, double gamma,
                                       bool zero_phase) {
  if (gamma <= 0.0 || gamma > 1.0)
    fail(ErrorKind::config, "exponential_smooth: gamma must be in (0, 1]");
  if (ts.empty()) return {};
  const size_t m = ts.size();
  std::vector<double> fwd(m);
  fwd[0] = ts[0];
  for (size_t i = 1; i < m; ++i) fwd[i] = gamma * ts[i] + (1.0 - gamma) * fwd[i - 1];
  if (!zero_phase) return fwd;
  std::vector<double> out(m);
  out[m - 1] = fwd[m - 1];
  for (size_t i = m - 1; i-- > 0;) out[i] = gamma * fwd[i] + (1.0 - gamma) * out[i + 1];
  return out;
}

namespace {

// Mirror index without repeating the edge sample: -1 -> 1, m -> m-2.
int reflect_index(int i, int m) {
  if (m == 1) return 0;
  const int period = 2 * m - 2;
  i %= period;
  if (i < 0) i += period;
  return i < m ? i : period - i;
}

}  // namespace

std::vector<double> gaussian_blur_1d(const std::vector<double>& ts, double sigma) {
  if (sigma <= 0.0) fail(ErrorKind::config, "gaussian_blur_1d: sigma must be > 0");
  if (ts.empty()) return {};
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * r + 1);
  double ksum = 0.0;
  for (int j = -r; j <= r; ++j) {
    kernel[j + r] = std::exp(-0.5 * (j / sigma) * (j / sigma));
    ksum += kernel[j + r];
  }
  for (double& k : kernel) k /= ksum;
  const int m = static_cast<int>(ts.size());
  std::vector<double> out(ts.size());
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = -r; j <= r; ++j) acc += kernel[j + r] * ts[reflect_index(i + j, m)];
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plateau reinit
// ---------------------------------------------------------------------------

namespace {

bool plateau_detected(const std::vector<double>& trace, int window, double eps) {
  if (static_cast<int>(trace.size()) < window) return false;
  double lo = trace.back(), hi = trace.back();
  for (size_t i = trace.size() - window; i < trace.size(); ++i) {
    lo = std::min(lo, trace[i]);
    hi = std::max(hi, trace[i]);
  }
  return (hi - lo) / std::max(std::abs(trace.back()), 1e-12) < eps;
}

void add_noise(std::vector<double>& ts, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& t : ts) t += std_dev * n(rng);
}

}  // namespace

bool reinit_on_plateau(DreamState& state, const std::vector<double>& loss_trace,
                       const DreamConfig& cfg) {
  if (cfg.reinit_noise_std < 0.0)
    fail(ErrorKind::config, "reinit_on_plateau: reinit_noise_std unresolved");
  if (!plateau_detected(loss_trace, cfg.plateau_window, cfg.plateau_eps)) return false;
  add_noise(state.series, cfg.reinit_noise_std, state.rng);
  ++state.reinit_count;
  return true;
}

// ---------------------------------------------------------------------------
// Targets and seeds
// ---------------------------------------------------------------------------

namespace {

std::vector<size_t> class_indices(const Dataset& train, int c) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < train.series.size(); ++i)
    if (c < 0 || train.series[i].label == c) idx.push_back(i);
  return idx;
}

std::vector<std::vector<double>> gather_logits(const ModelWeights& model, const Dataset& train,
                                               const std::vector<size_t>& idx) {
  std::vector<std::vector<double>> series;
  series.reserve(idx.size());
  for (size_t i : idx) series.push_back(train.series[i].values);
  return logits_batch(model, series);
}

}  // namespace

TargetSpec target_logits(const ModelWeights& model, const Dataset& train, int c, DreamMode mode,
                         double k) {
  if (c < 0 || c >= model.config.num_classes)
    fail(ErrorKind::config, "target_logits: class " + std::to_string(c) + " out of range [0, " +
                                std::to_string(model.config.num_classes) + ")");
  const std::vector<size_t> idx = class_indices(train, c);
  if (idx.empty())
    fail(ErrorKind::config,
         "target_logits: training data has no class-" + std::to_string(c) + " samples");
  const std::vector<std::vector<double>> lg = gather_logits(model, train, idx);
  const size_t kdim = lg[0].size();
  std::vector<double> mean(kdim, 0.0);
  for (const std::vector<double>& row : lg)
    for (size_t j = 0; j < kdim; ++j) mean[j] += row[j];
  for (double& v : mean) v /= static_cast<double>(lg.size());

  TargetSpec spec;
  spec.c = c;
  if (mode == DreamMode::center) {
    spec.logits = mean;
  } else {
    spec.logits.assign(kdim, 0.0);
    for (size_t j = 0; j < kdim; ++j) {
      if (static_cast<int>(j) == c) {
        spec.logits[j] = k * mean[j];
      } else {
        double lo = lg[0][j];
        for (const std::vector<double>& row : lg) lo = std::min(lo, row[j]);
        spec.logits[j] = lo;
      }
    }
  }
  spec.scalar = spec.logits[c];
  return spec;
}

SeedSelection select_seed_input(const ModelWeights& model, const Dataset& train,
                                const TargetSpec& spec, SeedStrategy strategy, uint64_t seed,
                                const std::vector<double>* given) {
  if (strategy == SeedStrategy::given_series) {
    if (!given)
      fail(ErrorKind::config, "select_seed_input: given-series strategy needs a series");
    if (static_cast<int>(given->size()) != model.config.input_length)
      fail(ErrorKind::shape, "select_seed_input: given series length " +
                                 std::to_string(given->size()) + " does not match model input " +
                                 std::to_string(model.config.input_length));
    return {*given, -1};
  }
  if (train.size() == 0) fail(ErrorKind::shape, "select_seed_input: empty dataset");

  if (strategy == SeedStrategy::random_noise) {
    std::mt19937_64 rng(mix_seed(seed, 0x5eed));
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> out(model.config.input_length);
    for (double& v : out) v = train.stats.mean + train.stats.std * n(rng);
    return {std::move(out), -1};
  }

  const std::vector<size_t> idx = class_indices(train, spec.c);
  if (idx.empty())
    fail(ErrorKind::config,
         "select_seed_input: training data has no class-" + std::to_string(spec.c) + " samples");
  const std::vector<std::vector<double>> lg = gather_logits(model, train, idx);
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < lg.size(); ++i) {
    double d = 0.0;
    for (size_t j = 0; j < lg[i].size(); ++j) {
      const double diff = lg[i][j] - spec.logits[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return {train.series[idx[best]].values, static_cast<int>(idx[best])};
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

DreamLoss build_dream_loss(Tape& tape, const ModelWeights& model, Tape::Id x,
                           const TargetSpec& spec, const DreamConfig& cfg) {
  if (static_cast<int>(spec.logits.size()) != model.config.num_classes)
    fail(ErrorKind::shape, "dream loss: target has " + std::to_string(spec.logits.size()) +
                               " logits, model outputs " +
                               std::to_string(model.config.num_classes));
  // Eval-mode forward never mutates the model; see eval_batch for the same
  // const_cast rationale.
  ModelWeights& m = const_cast<ModelWeights&>(model);
  const ForwardTap tap = resnet_forward(tape, m, x, BnMode::eval, false);

  Tape::Id dist;
  if (cfg.scalar_distance) {
    const double den = spec.scalar * spec.scalar;
    if (den == 0.0) fail(ErrorKind::numeric, "dream loss: zero target score");
    dist = tape.scale(tape.sum_sq(tape.sub_const(tape.pick(tap.logits, spec.c), {spec.scalar})),
                      1.0 / den);
  } else {
    double den = 0.0;
    for (double v : spec.logits) den += v * v;
    if (den == 0.0) fail(ErrorKind::numeric, "dream loss: zero target logit vector");
    dist = tape.scale(tape.sum_sq(tape.sub_const(tap.logits, spec.logits)), 1.0 / den);
  }
  Tape::Id loss = dist;
  if (cfg.lambda_alpha > 0.0)
    loss = tape.add(loss, tape.scale(tape.alpha_norm(x, cfg.alpha), cfg.lambda_alpha));
  if (cfg.lambda_beta > 0.0)
    loss = tape.add(loss, tape.scale(tape.tv(x, cfg.beta), cfg.lambda_beta));
  if (cfg.variant == DreamVariant::sd && cfg.lambda_sm > 0.0)
    loss = tape.add(loss, tape.scale(tape.sm(x), cfg.lambda_sm));
  return {loss, tap.logits};
}

double dream_loss_value(const ModelWeights& model, const std::vector<double>& ts,
                        const TargetSpec& spec, const DreamConfig& cfg) {
  Tape tape;
  const Tape::Id x = tape.leaf({1, 1, static_cast<int>(ts.size())}, ts, false);
  return tape.scalar(build_dream_loss(tape, model, x, spec, cfg).loss);
}

// ---------------------------------------------------------------------------
// Dreaming loops
// ---------------------------------------------------------------------------

namespace {

struct StepEval {
  double loss = 0.0;         // variant loss (ascent: -score)
  double score = 0.0;        // class-c logit
  std::vector<double> grad;  // d(loss or score)/d(series)
};

void check_series_input(const ModelWeights& model, const std::vector<double>& series,
                        const char* what) {
  if (static_cast<int>(series.size()) != model.config.input_length)
    fail(ErrorKind::shape, std::string(what) + ": series length " +
                               std::to_string(series.size()) + " does not match model input " +
                               std::to_string(model.config.input_length));
}

// Forward + backward at the current series; ascent differentiates the class-c
// score, the descent variants the full dream loss.
StepEval eval_ascent_step(const ModelWeights& model, const std::vector<double>& x, int c) {
  Tape tape;
  const Tape::Id in = tape.leaf({1, 1, static_cast<int>(x.size())}, x, true);
  ModelWeights& m = const_cast<ModelWeights&>(model);
  const ForwardTap tap = resnet_forward(tape, m, in, BnMode::eval, false);
  const Tape::Id score = tape.pick(tap.logits, c);
  StepEval e;
  e.score = tape.scalar(score);
  e.loss = -e.score;
  tape.backward(score);
  e.grad = tape.grad(in);
  return e;
}

StepEval eval_descent_step(const ModelWeights& model, const std::vector<double>& x,
                           const TargetSpec& spec, const DreamConfig& cfg) {
  Tape tape;
  const Tape::Id in = tape.leaf({1, 1, static_cast<int>(x.size())}, x, true);
  const DreamLoss dl = build_dream_loss(tape, model, in, spec, cfg);
  StepEval e;
  e.loss = tape.scalar(dl.loss);
  e.score = tape.value(dl.logits).data[spec.c];
  tape.backward(dl.loss);
  e.grad = tape.grad(in);
  return e;
}

void finish_prediction(const ModelWeights& model, DreamResult& r) {
  const std::vector<double> lg = logits(model, r.series);
  double mx = lg[0];
  int arg = 0;
  for (size_t j = 1; j < lg.size(); ++j)
    if (lg[j] > mx) {
      mx = lg[j];
      arg = static_cast<int>(j);
    }
  double denom = 0.0;
  for (double v : lg) denom += std::exp(v - mx);
  r.prediction = arg;
  r.confidence = 1.0 / denom;  // exp(mx - mx) / sum
  for (double v : r.series)
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "dream: non-finite value in result series");
}

bool blur_due(int step, int every) { return every > 0 && (step + 1) % every == 0; }

struct DescentOpts {
  bool adam = false;       // otherwise plain gradient descent
  bool overshoot = false;  // noise when the class-c score exceeds the target
  bool reinit = false;     // plateau reinit
};

// Shared descent loop for dream_target and sequence_dream. Runs one taped
// forward per step; the overshoot/plateau checks for step t use the next
// step's forward of the post-clamp state (the same values the per-step order
// prescribes), so a noise injection refreshes the forward before the update.
// Checks trailing the final step are dropped; the final state still enters
// the best-loss tracking.
DreamResult run_descent(const ModelWeights& model, const TargetSpec& spec,
                        std::vector<double> seed_series, const DreamConfig& cfg,
                        const DescentOpts& opt) {
  check_series_input(model, seed_series, "dream");
  if (spec.c < 0 || spec.c >= model.config.num_classes)
    fail(ErrorKind::config, "dream: target class " + std::to_string(spec.c) + " out of range");
  DreamState st{clamp_to_bounds(std::move(seed_series), cfg.clamp_lo, cfg.clamp_hi),
                std::mt19937_64(cfg.seed), 0};

  DreamResult r;
  r.target_class = spec.c;
  r.target = spec.logits;
  r.loss_trace.reserve(cfg.steps);
  r.score_trace.reserve(cfg.steps);

  std::vector<double> adam_m(st.series.size(), 0.0), adam_v(st.series.size(), 0.0);
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_series = st.series;
  const auto track_best = [&](double loss) {
    if (loss < best_loss) {
      best_loss = loss;
      best_series = st.series;
    }
  };

  int last_reinit = -(cfg.plateau_window + 1);
  StepEval e = eval_descent_step(model, st.series, spec, cfg);
  for (int t = 0; t < cfg.steps; ++t) {
    if (!std::isfinite(e.loss))
      fail(ErrorKind::numeric, "dream: non-finite loss at step " + std::to_string(t));
    r.loss_trace.push_back(e.loss);
    r.score_trace.push_back(e.score);
    track_best(e.loss);

    if (t > 0) {  // checks owed by the previous step's post-clamp state
      bool fired = false;
      if (opt.overshoot && e.score > spec.scalar) {
        add_noise(st.series, cfg.overshoot_noise_std, st.rng);
        fired = true;
      }
      if (opt.reinit && t - last_reinit > cfg.plateau_window &&
          reinit_on_plateau(st, r.loss_trace, cfg)) {
        last_reinit = t;
        fired = true;
      }
      if (fired) {
        st.series = clamp_to_bounds(std::move(st.series), cfg.clamp_lo, cfg.clamp_hi);
        e = eval_descent_step(model, st.series, spec, cfg);
        if (!std::isfinite(e.loss))
          fail(ErrorKind::numeric, "dream: non-finite loss at step " + std::to_string(t));
        track_best(e.loss);
      }
    }

    if (opt.adam) {
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t + 1));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t + 1));
      for (size_t j = 0; j < st.series.size(); ++j) {
        adam_m[j] = b1 * adam_m[j] + (1.0 - b1) * e.grad[j];
        adam_v[j] = b2 * adam_v[j] + (1.0 - b2) * e.grad[j] * e.grad[j];
        st.series[j] -= cfg.lr * (adam_m[j] / bc1) / (std::sqrt(adam_v[j] / bc2) + adam_eps);
      }
    } else {
      for (size_t j = 0; j < st.series.size(); ++j) st.series[j] -= cfg.lr * e.grad[j];
    }
    if (blur_due(t, cfg.blur_every)) st.series = gaussian_blur_1d(st.series, cfg.sigma);
    st.series = clamp_to_bounds(std::move(st.series), cfg.clamp_lo, cfg.clamp_hi);
    e = eval_descent_step(model, st.series, spec, cfg);
  }
  if (std::isfinite(e.loss)) track_best(e.loss);

  r.series = std::move(best_series);
  r.steps_used = cfg.steps;
  r.reinit_count = st.reinit_count;
  finish_prediction(model, r);
  return r;
}

}  // namespace

DreamResult dream_ascent(const ModelWeights& model, const std::vector<double>& seed_series, int c,
                         const DreamConfig& cfg) {
  if (cfg.variant != DreamVariant::ascent)
    fail(ErrorKind::config, "dream_ascent: cfg.variant must be ascent");
  cfg.validate();
  if (c < 0 || c >= model.config.num_classes)
    fail(ErrorKind::config, "dream_ascent: class " + std::to_string(c) + " out of range");
  check_series_input(model, seed_series, "dream_ascent");

  DreamState st{clamp_to_bounds(seed_series, cfg.clamp_lo, cfg.clamp_hi),
                std::mt19937_64(cfg.seed), 0};
  DreamResult r;
  r.target_class = c;
  r.loss_trace.reserve(cfg.steps);
  r.score_trace.reserve(cfg.steps);

  int last_reinit = -(cfg.plateau_window + 1);
  for (int t = 0; t < cfg.steps; ++t) {
    const StepEval e = eval_ascent_step(model, st.series, c);
    if (!std::isfinite(e.score))
      fail(ErrorKind::numeric, "dream_ascent: non-finite score at step " + std::to_string(t));
    r.score_trace.push_back(e.score);
    r.loss_trace.push_back(e.loss);

    for (size_t j = 0; j < st.series.size(); ++j) st.series[j] += cfg.lr * e.grad[j];
    st.series = l2_decay(std::move(st.series), cfg.l2_decay_rate);
    st.series = random_scale(std::move(st.series), cfg.scale_jitter, st.rng,
                             cfg.scale_whole_series);
    st.series = cfg.smooth == SmoothKind::exponential
                    ? exponential_smooth(st.series, cfg.exp_gamma, !cfg.smooth_single_pass)
                    : moving_average_smooth(st.series, cfg.ma_window);
    if (blur_due(t, cfg.blur_every)) st.series = gaussian_blur_1d(st.series, cfg.sigma);
    st.series = clamp_to_bounds(std::move(st.series), cfg.clamp_lo, cfg.clamp_hi);
    if (t - last_reinit > cfg.plateau_window && reinit_on_plateau(st, r.loss_trace, cfg)) {
      last_reinit = t;
      st.series = clamp_to_bounds(std::move(st.series), cfg.clamp_lo, cfg.clamp_hi);
    }
  }

  r.series = std::move(st.series);
  r.steps_used = cfg.steps;
  r.reinit_count = st.reinit_count;
  r.seed_strategy = SeedStrategy::given_series;
  finish_prediction(model, r);
  return r;
}

DreamResult dream_target(const ModelWeights& model, const std::vector<double>& seed_series,
                         const TargetSpec& spec, const DreamConfig& cfg) {
  if (cfg.variant != DreamVariant::target)
    fail(ErrorKind::config, "dream_target: cfg.variant must be target");
  cfg.validate();
  DreamResult r = run_descent(model, spec, seed_series, cfg, {/*adam=*/true, false, false});
  r.seed_strategy = SeedStrategy::given_series;
  return r;
}

DreamResult sequence_dream(const ModelWeights& model, const Dataset& train, int c,
                           const DreamConfig& cfg_in, const std::vector<double>* given_seed) {
  if (cfg_in.variant != DreamVariant::sd)
    fail(ErrorKind::config, "sequence_dream: cfg.variant must be sd");
  const DreamConfig cfg = resolve_dream_defaults(cfg_in, train.stats);
  cfg.validate();
  const TargetSpec spec = target_logits(model, train, c, cfg.mode, cfg.target_multiplier);
  const SeedSelection sel =
      select_seed_input(model, train, spec, cfg.seed_strategy, cfg.seed, given_seed);
  DreamResult r = run_descent(model, spec, sel.values, cfg,
                              {/*adam=*/false, /*overshoot=*/true, /*reinit=*/true});
  r.seed_strategy = cfg.seed_strategy;
  r.seed_source_index = sel.source_index;
  return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

void write_vector(std::ostream& out, const char* key, const std::vector<double>& v) {
  out << key << ' ' << v.size();
  for (double x : v) out << ' ' << fmt_double(x);
  out << '\n';
}

}  // namespace

void save_dream_result(const DreamResult& result, const DreamConfig& cfg,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << "SEQDREAM-D1\n";
  out << "variant " << str(cfg.variant) << '\n';
  out << "mode " << str(cfg.mode) << '\n';
  out << "class " << result.target_class << '\n';
  out << "steps " << cfg.steps << '\n';
  out << "lr " << fmt_double(cfg.lr) << '\n';
  out << "alpha " << fmt_double(cfg.alpha) << '\n';
  out << "beta " << fmt_double(cfg.beta) << '\n';
  out << "sigma " << fmt_double(cfg.sigma) << '\n';
  out << "lambda_alpha " << fmt_double(cfg.lambda_alpha) << '\n';
  out << "lambda_beta " << fmt_double(cfg.lambda_beta) << '\n';
  out << "lambda_sm " << fmt_double(cfg.lambda_sm) << '\n';
  out << "target_multiplier " << fmt_double(cfg.target_multiplier) << '\n';
  out << "blur_every " << cfg.resolved_blur_every() << '\n';
  out << "l2_decay " << fmt_double(cfg.l2_decay_rate) << '\n';
  out << "scale_jitter " << fmt_double(cfg.scale_jitter) << '\n';
  out << "smooth " << str(cfg.smooth) << '\n';
  out << "smooth_single_pass " << (cfg.smooth_single_pass ? 1 : 0) << '\n';
  out << "scale_whole_series " << (cfg.scale_whole_series ? 1 : 0) << '\n';
  out << "scalar_distance " << (cfg.scalar_distance ? 1 : 0) << '\n';
  out << "ma_window " << cfg.ma_window << '\n';
  out << "exp_gamma " << fmt_double(cfg.exp_gamma) << '\n';
  out << "plateau_eps " << fmt_double(cfg.plateau_eps) << '\n';
  out << "plateau_window " << cfg.plateau_window << '\n';
  out << "reinit_noise_std " << fmt_double(cfg.reinit_noise_std) << '\n';
  out << "overshoot_noise_std " << fmt_double(cfg.overshoot_noise_std) << '\n';
  out << "clamp_lo " << fmt_double(cfg.clamp_lo) << '\n';
  out << "clamp_hi " << fmt_double(cfg.clamp_hi) << '\n';
  out << "seed " << cfg.seed << '\n';
  out << "seed_strategy " << str(result.seed_strategy) << '\n';
  out << "seed_source_index " << result.seed_source_index << '\n';
  out << "steps_used " << result.steps_used << '\n';
  out << "reinit_count " << result.reinit_count << '\n';
  out << "prediction " << result.prediction << '\n';
  out << "confidence " << fmt_double(result.confidence) << '\n';
  write_vector(out, "target_logits", result.target);
  write_vector(out, "series", result.series);
  write_vector(out, "loss_trace", result.loss_trace);
  write_vector(out, "score_trace", result.score_trace);
  out << "end\n";
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

namespace {

class DreamReader {
 public:
  DreamReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) fail(ErrorKind::io, "cannot open " + path.string());
  }

  std::string expect(const std::string& key) {
    std::string line;
    if (!std::getline(in_, line))
      fail(ErrorKind::parse, path_.string() + ": unexpected end of file, wanted '" + key + "'");
    const size_t sp = line.find(' ');
    const std::string got = line.substr(0, sp);
    if (got != key)
      fail(ErrorKind::parse, path_.string() + ": expected key '" + key + "', got '" + got + "'");
    return sp == std::string::npos ? std::string() : line.substr(sp + 1);
  }

  double num(const std::string& key) { return parse_num(expect(key), key); }
  int integer(const std::string& key) { return static_cast<int>(num(key)); }

  uint64_t u64(const std::string& key) {
    const std::string text = expect(key);
    try {
      size_t used = 0;
      const uint64_t v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::parse, path_.string() + ": bad integer for '" + key + "': " + text);
    }
  }

  std::vector<double> vec(const std::string& key) {
    std::istringstream ss(expect(key));
    size_t n = 0;
    if (!(ss >> n)) fail(ErrorKind::parse, path_.string() + ": bad count for '" + key + "'");
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i)
      if (!(ss >> out[i]))
        fail(ErrorKind::parse, path_.string() + ": short vector for '" + key + "'");
    return out;
  }

  void magic() {
    std::string line;
    if (!std::getline(in_, line) || line.rfind("SEQDREAM-D", 0) != 0)
      fail(ErrorKind::parse, path_.string() + ": not a dream result file");
    if (line != "SEQDREAM-D1")
      fail(ErrorKind::parse, path_.string() + ": unsupported dream format " + line);
  }

  void end() {
    std::string line;
    if (!std::getline(in_, line) || line != "end")
      fail(ErrorKind::parse, path_.string() + ": missing end marker");
  }

 private:
  double parse_num(const std::string& text, const std::string& key) {
    try {
      size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::parse, path_.string() + ": bad number for '" + key + "': " + text);
    }
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

LoadedDream load_dream_result(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "no such file: " + path.string());
  DreamReader rd(path);
  rd.magic();
  LoadedDream out;
  DreamConfig& cfg = out.config;
  DreamResult& r = out.result;
  cfg.variant = parse_dream_variant(rd.expect("variant"));
  cfg.mode = parse_dream_mode(rd.expect("mode"));
  r.target_class = rd.integer("class");
  cfg.steps = rd.integer("steps");
  cfg.lr = rd.num("lr");
  cfg.alpha = rd.num("alpha");
  cfg.beta = rd.num("beta");
  cfg.sigma = rd.num("sigma");
  cfg.lambda_alpha = rd.num("lambda_alpha");
  cfg.lambda_beta = rd.num("lambda_beta");
  cfg.lambda_sm = rd.num("lambda_sm");
  cfg.target_multiplier = rd.num("target_multiplier");
  cfg.blur_every = rd.integer("blur_every");
  cfg.l2_decay_rate = rd.num("l2_decay");
  cfg.scale_jitter = rd.num("scale_jitter");
  cfg.smooth = parse_smooth_kind(rd.expect("smooth"));
  cfg.smooth_single_pass = rd.integer("smooth_single_pass") != 0;
  cfg.scale_whole_series = rd.integer("scale_whole_series") != 0;
  cfg.scalar_distance = rd.integer("scalar_distance") != 0;
  cfg.ma_window = rd.integer("ma_window");
  cfg.exp_gamma = rd.num("exp_gamma");
  cfg.plateau_eps = rd.num("plateau_eps");
  cfg.plateau_window = rd.integer("plateau_window");
  cfg.reinit_noise_std = rd.num("reinit_noise_std");
  cfg.overshoot_noise_std = rd.num("overshoot_noise_std");
  cfg.clamp_lo = rd.num("clamp_lo");
  cfg.clamp_hi = rd.num("clamp_hi");
  cfg.seed = rd.u64("seed");
  cfg.seed_strategy = parse_seed_strategy(rd.expect("seed_strategy"));
  r.seed_strategy = cfg.seed_strategy;
  r.seed_source_index = rd.integer("seed_source_index");
  r.steps_used = rd.integer("steps_used");
  r.reinit_count = rd.integer("reinit_count");
  r.prediction = rd.integer("prediction");
  r.confidence = rd.num("confidence");
  r.target = rd.vec("target_logits");
  r.series = rd.vec("series");
  r.loss_trace = rd.vec("loss_trace");
  r.score_trace = rd.vec("score_trace");
  rd.end();
  return out;
}

}  // namespace seqdream
