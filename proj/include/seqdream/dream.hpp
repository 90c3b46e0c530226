#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "seqdream/dataset.hpp"
#include "seqdream/resnet.hpp"
#include "seqdream/tensor.hpp"

namespace seqdream {

enum class DreamVariant { ascent, target, sd };
enum class DreamMode { center, max };
enum class SeedStrategy { mean_activation_nearest, random_noise, given_series };
enum class SmoothKind { exponential, moving_average };

DreamVariant parse_dream_variant(const std::string& text);  // ascent | target | sd
DreamMode parse_dream_mode(const std::string& text);        // center | max
SeedStrategy parse_seed_strategy(const std::string& text);
SmoothKind parse_smooth_kind(const std::string& text);
std::string str(DreamVariant v);
std::string str(DreamMode m);
std::string str(SeedStrategy s);
std::string str(SmoothKind k);

// Negative / NaN fields mean "derive from the training data"; call
// resolve_dream_defaults before validate() or any dreaming loop.
struct DreamConfig {
  DreamVariant variant = DreamVariant::sd;
  DreamMode mode = DreamMode::center;
  int steps = 100;
  double lr = 1e-2;
  double alpha = 6.0;   // alpha-norm exponent
  double beta = 2.0;    // total-variation exponent
  double sigma = 3.0;   // Gaussian blur std, in time steps
  double lambda_alpha = 1e-5;
  double lambda_beta = 1e-5;
  double lambda_sm = 1e-1;
  double target_multiplier = 2.5;  // k: max-mode target = k x class-mean logit
  int blur_every = -1;             // -1: variant default (ascent 1, sd 5, target 0)
  double l2_decay_rate = 0.01;     // ascent only
  double scale_jitter = 0.01;      // ascent only
  SmoothKind smooth = SmoothKind::exponential;  // ascent per-step smoother
  bool smooth_single_pass = false;   // exponential smoothing: forward-only
  bool scale_whole_series = false;   // random_scale: one factor for the series
  bool scalar_distance = false;      // score distance on S_c alone, not S(T)
  int ma_window = 3;
  double exp_gamma = 0.6;
  double plateau_eps = 1e-4;
  int plateau_window = 10;
  double reinit_noise_std = -1.0;     // -1: 0.05 x training std
  double overshoot_noise_std = -1.0;  // -1: 0.02 x training std
  double clamp_lo = std::numeric_limits<double>::quiet_NaN();  // NaN: training min
  double clamp_hi = std::numeric_limits<double>::quiet_NaN();  // NaN: training max
  uint64_t seed = 0;
  SeedStrategy seed_strategy = SeedStrategy::mean_activation_nearest;

  int resolved_blur_every() const;  // applies the variant default for -1
  void validate() const;            // requires resolved noise/clamp fields
};

DreamConfig resolve_dream_defaults(DreamConfig cfg, const DatasetStats& stats);

struct TargetSpec {
  int c = 0;                   // target class; -1 marks a dataset-center target
  std::vector<double> logits;  // S(T), one entry per class
  double scalar = 0.0;         // S_c(T)
};

struct DreamResult {
  std::vector<double> series;
  std::vector<double> loss_trace;   // per-step loss of the series entering each step
  std::vector<double> score_trace;  // per-step class-c logit, same convention
  int steps_used = 0;
  int reinit_count = 0;
  int prediction = 0;
  double confidence = 0.0;  // softmax probability of `prediction`
  int target_class = 0;
  std::vector<double> target;  // S(T) echo; empty for the ascent variant
  SeedStrategy seed_strategy = SeedStrategy::given_series;
  int seed_source_index = -1;  // train index behind mean-activation-nearest
};

// Plain (non-tape) regularizer toolkit. tv and sm require m >= 2.
double tv(const std::vector<double>& ts, double beta);
double sm(const std::vector<double>& ts);
double alpha_norm(const std::vector<double>& ts, double alpha);
std::vector<double> clamp_to_bounds(std::vector<double> ts, double lo, double hi);
std::vector<double> l2_decay(std::vector<double> ts, double rate);
std::vector<double> random_scale(std::vector<double> ts, double s, std::mt19937_64& rng,
                                 bool whole_series = false);
std::vector<double> moving_average_smooth(const std::vector<double>& ts, int window);
std::vector<double> exponential_smooth(const std::vector<double>& ts, double gamma,
                                       bool zero_phase = true);
// Discrete Gaussian kernel truncated at radius ceil(3*sigma), renormalized,
// reflective edge padding (mirror without repeating the edge sample).
std::vector<double> gaussian_blur_1d(const std::vector<double>& ts, double sigma);

struct DreamState {
  std::vector<double> series;
  std::mt19937_64 rng;
  int reinit_count = 0;
};

// Fires when the spread of the last plateau_window trace entries, relative to
// the latest entry, drops below plateau_eps; then perturbs the series with
// Gaussian noise of std cfg.reinit_noise_std. Traces shorter than the window
// never fire.
bool reinit_on_plateau(DreamState& state, const std::vector<double>& loss_trace,
                       const DreamConfig& cfg);

// center: S(T) = mean logit vector over class-c training samples.
// max: entry c = k x (mean class-c logit); every other entry = the minimum of
// that entry over class-c samples.
TargetSpec target_logits(const ModelWeights& model, const Dataset& train, int c, DreamMode mode,
                         double k);

struct SeedSelection {
  std::vector<double> values;
  int source_index = -1;  // train index, or -1 for noise / given series
};

// mean-activation-nearest scans class-spec.c series (all classes when
// spec.c < 0) for the logit vector closest to S(T) in Euclidean distance,
// ties to the lowest index. random-noise draws mean + std x N(0,1) per point
// from the training stats. given-series copies `given`.
SeedSelection select_seed_input(const ModelWeights& model, const Dataset& train,
                                const TargetSpec& spec, SeedStrategy strategy, uint64_t seed,
                                const std::vector<double>* given = nullptr);

// Score-matching loss on the tape: |S(ts) - S(T)|^2 / |S(T)|^2 (or the scalar
// S_c form per cfg.scalar_distance) + lambda_alpha x alpha_norm + lambda_beta
// x tv, plus lambda_sm x sm when cfg.variant == sd. `x` must be a [1,1,L]
// leaf already on the tape.
struct DreamLoss {
  Tape::Id loss = -1;
  Tape::Id logits = -1;
};
DreamLoss build_dream_loss(Tape& tape, const ModelWeights& model, Tape::Id x,
                           const TargetSpec& spec, const DreamConfig& cfg);
double dream_loss_value(const ModelWeights& model, const std::vector<double>& ts,
                        const TargetSpec& spec, const DreamConfig& cfg);

// Gradient ascent on the class-c logit; per step, in order: ascent update,
// l2_decay, random_scale, configured smoother, blur every blur_every steps,
// clamp, plateau reinit. Returns the final iterate.
DreamResult dream_ascent(const ModelWeights& model, const std::vector<double>& seed_series, int c,
                         const DreamConfig& cfg);

// Adam descent on the score-matching loss with a clamp each step (blur only
// if blur_every > 0). Returns the best-loss iterate.
DreamResult dream_target(const ModelWeights& model, const std::vector<double>& seed_series,
                         const TargetSpec& spec, const DreamConfig& cfg);

// Builds the target from cfg.mode, picks the seed via cfg.seed_strategy, then
// plain gradient descent on the sd loss; per step: update, blur every
// blur_every steps, clamp, overshoot noise when S_c exceeds the scalar
// target, plateau reinit. Returns the best-loss iterate.
DreamResult sequence_dream(const ModelWeights& model, const Dataset& train, int c,
                           const DreamConfig& cfg,
                           const std::vector<double>* given_seed = nullptr);

// Text format, magic SEQDREAM-D1: config echo, provenance, prediction,
// target/series/trace vectors, trailing end marker. Bit-stable round trip.
void save_dream_result(const DreamResult& result, const DreamConfig& cfg,
                       const std::filesystem::path& path);
struct LoadedDream {
  DreamResult result;
  DreamConfig config;
};
LoadedDream load_dream_result(const std::filesystem::path& path);

}  // namespace seqdream
