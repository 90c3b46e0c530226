#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "seqdream/common.hpp"
#include "seqdream/dataset.hpp"
#include "seqdream/dream.hpp"
#include "seqdream/resnet.hpp"

using namespace seqdream;

namespace {

ResNetConfig tiny_config() {
  ResNetConfig cfg;
  cfg.blocks = 2;
  cfg.convs_per_block = 2;
  cfg.channels = {4, 4};
  cfg.kernels = {3, 3};
  cfg.num_classes = 2;
  cfg.input_length = 32;
  return cfg;
}

struct Fixture {
  Dataset train;
  ModelWeights model;

  Fixture() : train(synth_binary(24, 4, 32, 5).first), model(build_resnet(tiny_config(), 11)) {}
};

DreamConfig resolved_sd(const Dataset& train) {
  DreamConfig cfg;
  cfg.variant = DreamVariant::sd;
  return resolve_dream_defaults(cfg, train.stats);
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("regularizer oracle values") {
  CHECK(std::abs(tv({0.0, 1.0, 0.0}, 2.0) - 2.0) <= 1e-12);
  CHECK(std::abs(tv({0.5, 1.5, 1.0}, 1.5) - (1.0 + std::pow(0.5, 1.5))) <= 1e-12);
  CHECK(tv({3.0, 3.0, 3.0, 3.0}, 1.0) == 0.0);
  CHECK(std::abs(sm({0.0, 1.0, 0.0}) - 1.0) <= 1e-12);
  CHECK(std::abs(sm({1.0, 4.0, 2.0, 2.0}) - 5.0 / 3.0) <= 1e-12);
  CHECK(sm({2.0, 2.0}) == 0.0);
  CHECK(alpha_norm({0.0, 0.0, 0.0}, 6.0) == 0.0);
  CHECK(std::abs(alpha_norm({1.0, 1.0}, 6.0) - 1.0) <= 1e-12);
  CHECK(std::abs(alpha_norm({2.0}, 6.0) - 64.0) <= 1e-12);
}

TEST_CASE("regularizer algebraic properties") {
  const std::vector<double> ts = {0.3, -1.2, 0.7, 2.4, -0.5};
  std::vector<double> rev(ts.rbegin(), ts.rend());
  for (double beta : {1.0, 1.5, 2.0})
    CHECK(tv(ts, beta) == doctest::Approx(tv(rev, beta)).epsilon(1e-14));
  CHECK(sm(ts) == doctest::Approx(sm(rev)).epsilon(1e-14));
  CHECK(alpha_norm(ts, 4.0) == doctest::Approx(alpha_norm(rev, 4.0)).epsilon(1e-14));

  std::vector<double> scaled = ts;
  for (double& v : scaled) v *= -2.5;
  CHECK(sm(scaled) == doctest::Approx(2.5 * sm(ts)).epsilon(1e-13));
  CHECK(tv(scaled, 1.5) == doctest::Approx(std::pow(2.5, 1.5) * tv(ts, 1.5)).epsilon(1e-13));

  CHECK(tv({1.0, 1.0 + 1e-15, 1.0}, 2.0) > 0.0);  // nonconstant => positive
  CHECK_THROWS_AS(tv({1.0}, 2.0), Error);
  CHECK_THROWS_AS(sm({1.0}), Error);
}

TEST_CASE("clamp, decay, and random scale") {
  CHECK(clamp_to_bounds({-5.0, 0.2, 7.0}, -1.0, 1.0) == std::vector<double>{-1.0, 0.2, 1.0});
  const std::vector<double> inside = {0.1, -0.4};
  CHECK(clamp_to_bounds(inside, -1.0, 1.0) == inside);
  const std::vector<double> once = clamp_to_bounds({-5.0, 0.2, 7.0}, -1.0, 1.0);
  CHECK(clamp_to_bounds(once, -1.0, 1.0) == once);
  CHECK_THROWS_AS(clamp_to_bounds({0.0}, 1.0, 1.0), Error);

  CHECK(l2_decay({2.0, -4.0}, 0.0) == std::vector<double>{2.0, -4.0});
  CHECK(l2_decay({2.0, -4.0}, 0.5) == std::vector<double>{1.0, -2.0});
  std::vector<double> many = {3.0};
  for (int i = 0; i < 4; ++i) many = l2_decay(many, 0.25);
  CHECK(many[0] == doctest::Approx(3.0 * std::pow(0.75, 4)).epsilon(1e-14));

  std::mt19937_64 rng(3);
  CHECK(random_scale({1.5, -2.0}, 0.0, rng) == std::vector<double>{1.5, -2.0});
  CHECK(random_scale({0.0, 0.0}, 0.3, rng) == std::vector<double>{0.0, 0.0});
  std::mt19937_64 r1(9), r2(9);
  const std::vector<double> in = {1.0, 2.0, 3.0};
  CHECK(random_scale(in, 0.2, r1) == random_scale(in, 0.2, r2));
  std::mt19937_64 r3(9);
  const std::vector<double> whole = random_scale(in, 0.2, r3, true);
  CHECK(whole[0] / in[0] == doctest::Approx(whole[1] / in[1]).epsilon(1e-14));
  CHECK(whole[1] / in[1] == doctest::Approx(whole[2] / in[2]).epsilon(1e-14));
}

TEST_CASE("smoothers") {
  const std::vector<double> ts = {0.0, 3.0, 0.0};
  CHECK(moving_average_smooth(ts, 1) == ts);
  CHECK(moving_average_smooth({2.0, 2.0, 2.0}, 3) == std::vector<double>{2.0, 2.0, 2.0});
  const std::vector<double> ma = moving_average_smooth(ts, 3);
  CHECK(ma[0] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(ma[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ma[2] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK_THROWS_AS(moving_average_smooth(ts, 2), Error);

  CHECK(exponential_smooth({1.0, -2.0, 0.5}, 1.0) == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(exponential_smooth({4.0, 4.0}, 0.3) == std::vector<double>{4.0, 4.0});
  const std::vector<double> fwd = exponential_smooth({0.0, 2.0}, 0.5, false);
  CHECK(fwd == std::vector<double>{0.0, 1.0});
  const std::vector<double> zp = exponential_smooth({0.0, 2.0}, 0.5, true);
  CHECK(zp[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(zp[1] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(exponential_smooth(ts, 0.0), Error);
  CHECK_THROWS_AS(exponential_smooth(ts, 1.5), Error);
}

TEST_CASE("gaussian blur") {
  const std::vector<double> constant(10, 1.7);
  const std::vector<double> bc = gaussian_blur_1d(constant, 2.0);
  for (double v : bc) CHECK(v == doctest::Approx(1.7).epsilon(1e-12));

  std::vector<double> impulse(9, 0.0);
  impulse[4] = 1.0;
  const std::vector<double> bi = gaussian_blur_1d(impulse, 1.0);
  for (int d = 1; d <= 3; ++d) CHECK(bi[4 - d] == doctest::Approx(bi[4 + d]).epsilon(1e-14));
  double ksum = 0.0;
  for (int j = -3; j <= 3; ++j) ksum += std::exp(-0.5 * j * j);
  CHECK(bi[4] == doctest::Approx(1.0 / ksum).epsilon(1e-12));
  double total = 0.0;  // footprint stays interior, so mass is conserved
  for (double v : bi) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reinit on plateau") {
  DreamConfig cfg;
  cfg.plateau_window = 4;
  cfg.plateau_eps = 1e-4;
  cfg.reinit_noise_std = 0.1;

  std::vector<double> falling;
  for (int i = 0; i < 8; ++i) falling.push_back(10.0 - i);
  DreamState st{{1.0, 2.0, 3.0}, std::mt19937_64(7), 0};
  CHECK_FALSE(reinit_on_plateau(st, falling, cfg));
  CHECK(st.series == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(st.reinit_count == 0);

  const std::vector<double> flat(6, 2.5);
  DreamState s1{{1.0, 2.0, 3.0}, std::mt19937_64(7), 0};
  DreamState s2{{1.0, 2.0, 3.0}, std::mt19937_64(7), 0};
  CHECK(reinit_on_plateau(s1, flat, cfg));
  CHECK(reinit_on_plateau(s2, flat, cfg));
  CHECK(s1.series == s2.series);  // deterministic per seed
  CHECK(s1.series != std::vector<double>{1.0, 2.0, 3.0});
  CHECK(s1.reinit_count == 1);

  DreamState s3{{1.0}, std::mt19937_64(7), 0};
  CHECK_FALSE(reinit_on_plateau(s3, {2.5, 2.5}, cfg));  // shorter than the window
}

TEST_CASE("target_logits center and max modes") {
  Fixture fx;
  const int c = 1;
  std::vector<std::vector<double>> class_logits;
  for (const LabeledSeries& s : fx.train.series)
    if (s.label == c) class_logits.push_back(logits(fx.model, s.values));
  REQUIRE(!class_logits.empty());
  std::vector<double> mean(2, 0.0);
  for (const auto& row : class_logits)
    for (int j = 0; j < 2; ++j) mean[j] += row[j];
  for (double& v : mean) v /= static_cast<double>(class_logits.size());

  const TargetSpec center = target_logits(fx.model, fx.train, c, DreamMode::center, 2.5);
  CHECK(center.c == c);
  CHECK(center.logits[0] == doctest::Approx(mean[0]).epsilon(1e-12));
  CHECK(center.logits[1] == doctest::Approx(mean[1]).epsilon(1e-12));
  CHECK(center.scalar == center.logits[c]);

  const TargetSpec mx = target_logits(fx.model, fx.train, c, DreamMode::max, 2.0);
  CHECK(mx.logits[c] == doctest::Approx(2.0 * mean[c]).epsilon(1e-12));
  double lo0 = class_logits[0][0];
  for (const auto& row : class_logits) lo0 = std::min(lo0, row[0]);
  CHECK(mx.logits[0] == doctest::Approx(lo0).epsilon(1e-12));
  for (const auto& row : class_logits) CHECK(mx.logits[0] <= row[0] + 1e-12);

  SUBCASE("single-sample center equals that sample") {
    Dataset one;
    one.num_classes = 2;
    one.series.push_back(fx.train.series[0]);
    one.series.push_back(fx.train.series[1]);
    one.recompute_stats();
    const int lbl = one.series[0].label;
    const TargetSpec t = target_logits(fx.model, one, lbl, DreamMode::center, 2.5);
    const std::vector<double> lg = logits(fx.model, one.series[0].values);
    CHECK(t.logits[0] == doctest::Approx(lg[0]).epsilon(1e-12));
    CHECK(t.logits[1] == doctest::Approx(lg[1]).epsilon(1e-12));
  }

  SUBCASE("missing class fails") {
    Dataset only0;
    only0.num_classes = 2;
    for (const LabeledSeries& s : fx.train.series)
      if (s.label == 0) only0.series.push_back(s);
    only0.recompute_stats();
    CHECK_THROWS_AS(target_logits(fx.model, only0, 1, DreamMode::center, 2.5), Error);
    CHECK_THROWS_AS(target_logits(fx.model, fx.train, 7, DreamMode::center, 2.5), Error);
  }
}

TEST_CASE("select_seed_input strategies") {
  Fixture fx;
  const TargetSpec spec = target_logits(fx.model, fx.train, 1, DreamMode::center, 2.5);

  SUBCASE("nearest matches a brute-force scan over class-c series") {
    const SeedSelection sel =
        select_seed_input(fx.model, fx.train, spec, SeedStrategy::mean_activation_nearest, 0);
    int best = -1;
    double best_d = 1e300;
    for (int i = 0; i < fx.train.size(); ++i) {
      if (fx.train.series[i].label != spec.c) continue;
      const std::vector<double> lg = logits(fx.model, fx.train.series[i].values);
      double d = 0.0;
      for (int j = 0; j < 2; ++j) d += (lg[j] - spec.logits[j]) * (lg[j] - spec.logits[j]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    CHECK(sel.source_index == best);
    CHECK(sel.values == fx.train.series[best].values);
    CHECK(fx.train.series[best].label == spec.c);
  }

  SUBCASE("class -1 scans the whole dataset") {
    TargetSpec any = spec;
    any.c = -1;
    const SeedSelection sel =
        select_seed_input(fx.model, fx.train, any, SeedStrategy::mean_activation_nearest, 0);
    CHECK(sel.source_index >= 0);
    CHECK(sel.source_index < fx.train.size());
  }

  SUBCASE("random noise is deterministic and stats-scaled") {
    const SeedSelection a =
        select_seed_input(fx.model, fx.train, spec, SeedStrategy::random_noise, 42);
    const SeedSelection b =
        select_seed_input(fx.model, fx.train, spec, SeedStrategy::random_noise, 42);
    CHECK(a.values == b.values);
    CHECK(a.values.size() == 32);
    CHECK(a.source_index == -1);
    const SeedSelection c =
        select_seed_input(fx.model, fx.train, spec, SeedStrategy::random_noise, 43);
    CHECK(a.values != c.values);
  }

  SUBCASE("given series is copied, not aliased") {
    const std::vector<double> given(32, 0.25);
    const SeedSelection sel =
        select_seed_input(fx.model, fx.train, spec, SeedStrategy::given_series, 0, &given);
    CHECK(sel.values == given);
    CHECK(sel.values.data() != given.data());
    CHECK_THROWS_AS(
        select_seed_input(fx.model, fx.train, spec, SeedStrategy::given_series, 0, nullptr),
        Error);
  }

  SUBCASE("dataset of one candidate returns it") {
    Dataset two;
    two.num_classes = 2;
    two.series.push_back(fx.train.series[0]);
    two.series.push_back(fx.train.series[1]);
    two.recompute_stats();
    TargetSpec t = spec;
    t.c = two.series[1].label;
    const SeedSelection sel =
        select_seed_input(fx.model, two, t, SeedStrategy::mean_activation_nearest, 0);
    CHECK(sel.source_index == 1);
    CHECK(sel.values == two.series[1].values);
  }
}

TEST_CASE("dream loss gradient matches finite differences") {
  Fixture fx;
  DreamConfig cfg = resolved_sd(fx.train);
  cfg.lambda_alpha = 1e-3;
  cfg.lambda_beta = 1e-3;
  cfg.lambda_sm = 1e-1;
  cfg.alpha = 4.0;
  cfg.beta = 2.0;
  const TargetSpec spec = target_logits(fx.model, fx.train, 1, DreamMode::max, 2.5);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor x = Tensor::zeros({1, 1, 32});
    for (double& v : x.data) v = n(rng);
    const double err = grad_check(
        [&](Tape& tape, Tape::Id id) { return build_dream_loss(tape, fx.model, id, spec, cfg).loss; },
        x, 1e-5);
    CHECK(err < 1e-4);
  }

  SUBCASE("beta 1.5 and the scalar-distance form") {
    cfg.beta = 1.5;
    cfg.scalar_distance = true;
    Tensor x = Tensor::zeros({1, 1, 32});
    for (double& v : x.data) v = n(rng);
    const double err = grad_check(
        [&](Tape& tape, Tape::Id id) { return build_dream_loss(tape, fx.model, id, spec, cfg).loss; },
        x, 1e-5);
    CHECK(err < 1e-4);
  }

  SUBCASE("dream_loss_value agrees with the tape") {
    const std::vector<double> ts(32, 0.3);
    Tape tape;
    const Tape::Id id = tape.leaf({1, 1, 32}, ts, false);
    const double via_tape = tape.scalar(build_dream_loss(tape, fx.model, id, spec, cfg).loss);
    CHECK(dream_loss_value(fx.model, ts, spec, cfg) == via_tape);
  }

  SUBCASE("zero target rejected") {
    TargetSpec zero = spec;
    zero.logits.assign(2, 0.0);
    zero.scalar = 0.0;
    CHECK_THROWS_AS(dream_loss_value(fx.model, std::vector<double>(32, 0.1), zero, cfg), Error);
  }
}

TEST_CASE("dream_target converges and keeps the best iterate") {
  Fixture fx;
  DreamConfig cfg = resolved_sd(fx.train);
  cfg.variant = DreamVariant::target;
  cfg.blur_every = 0;
  cfg.steps = 6;
  cfg.lr = 0.05;

  SUBCASE("seed already at target stays put with zero loss") {
    cfg.lambda_alpha = 0.0;
    cfg.lambda_beta = 0.0;
    const std::vector<double>& seed = fx.train.series[3].values;
    TargetSpec spec;
    spec.c = fx.train.series[3].label;
    spec.logits = logits(fx.model, seed);
    spec.scalar = spec.logits[spec.c];
    const DreamResult r = dream_target(fx.model, seed, spec, cfg);
    CHECK(r.series == seed);
    for (double l : r.loss_trace) CHECK(l == 0.0);
    CHECK(r.steps_used == cfg.steps);
  }

  SUBCASE("final loss never exceeds the initial loss") {
    const TargetSpec spec = target_logits(fx.model, fx.train, 0, DreamMode::max, 2.5);
    cfg.steps = 25;
    const std::vector<double> seed(32, 0.0);
    const DreamResult r = dream_target(fx.model, seed, spec, cfg);
    const double final_loss = dream_loss_value(fx.model, r.series, spec, cfg);
    CHECK(final_loss <= r.loss_trace.front() + 1e-12);
    CHECK(final_loss <= *std::min_element(r.loss_trace.begin(), r.loss_trace.end()) + 1e-12);
  }
}

TEST_CASE("sequence_dream behavior") {
  Fixture fx;
  DreamConfig cfg = resolved_sd(fx.train);
  cfg.mode = DreamMode::max;
  cfg.steps = 20;
  cfg.lr = 0.05;
  cfg.seed = 99;

  const DreamResult a = sequence_dream(fx.model, fx.train, 1, cfg);
  const DreamResult b = sequence_dream(fx.model, fx.train, 1, cfg);
  CHECK(a.series == b.series);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.score_trace == b.score_trace);
  CHECK(a.reinit_count == b.reinit_count);
  CHECK(a.steps_used == 20);
  CHECK(a.loss_trace.size() == 20);
  CHECK(a.score_trace.size() == 20);
  CHECK(a.target_class == 1);
  CHECK(a.target.size() == 2);
  CHECK(a.seed_source_index >= 0);

  for (double v : a.series) {
    CHECK(v >= fx.train.stats.min);
    CHECK(v <= fx.train.stats.max);
    CHECK(std::isfinite(v));
  }

  SUBCASE("returned series attains the best traced loss") {
    const double final_loss = dream_loss_value(fx.model, a.series, target_logits(fx.model, fx.train, 1, DreamMode::max, cfg.target_multiplier), cfg);
    const double best_traced = *std::min_element(a.loss_trace.begin(), a.loss_trace.end());
    CHECK(final_loss <= best_traced + 1e-12);
  }

  SUBCASE("high lr stays within clamp bounds") {
    DreamConfig wild = cfg;
    wild.lr = 10.0;
    wild.steps = 12;
    const DreamResult w = sequence_dream(fx.model, fx.train, 0, wild);
    for (double v : w.series) {
      CHECK(v >= fx.train.stats.min - 1e-15);
      CHECK(v <= fx.train.stats.max + 1e-15);
    }
  }

  SUBCASE("seed at target with zero lambdas keeps loss zero") {
    // One class-c sample makes the center target exactly that sample's logits,
    // so seeding with the sample itself starts at loss 0.
    const int c = fx.train.series[2].label;
    Dataset single;
    single.num_classes = 2;
    single.series.push_back(fx.train.series[2]);
    single.series.push_back({fx.train.series[3].values, 1 - c});
    single.recompute_stats();

    DreamConfig zero = cfg;
    zero.lambda_alpha = 0.0;
    zero.lambda_beta = 0.0;
    zero.lambda_sm = 0.0;
    zero.steps = 8;
    zero.mode = DreamMode::center;
    zero.seed_strategy = SeedStrategy::given_series;
    zero = resolve_dream_defaults(zero, single.stats);

    const std::vector<double>& seed = fx.train.series[2].values;
    const DreamResult r = sequence_dream(fx.model, single, c, zero, &seed);
    CHECK(r.loss_trace.front() == 0.0);
    CHECK(*std::min_element(r.loss_trace.begin(), r.loss_trace.end()) == 0.0);
    const TargetSpec spec =
        target_logits(fx.model, single, c, DreamMode::center, zero.target_multiplier);
    CHECK(dream_loss_value(fx.model, r.series, spec, zero) == 0.0);
  }

  SUBCASE("variant guard") {
    DreamConfig wrong = cfg;
    wrong.variant = DreamVariant::target;
    CHECK_THROWS_AS(sequence_dream(fx.model, fx.train, 1, wrong), Error);
  }
}

TEST_CASE("dream_ascent mechanics") {
  Fixture fx;
  DreamConfig cfg;
  cfg.variant = DreamVariant::ascent;
  cfg = resolve_dream_defaults(cfg, fx.train.stats);
  cfg.steps = 30;
  cfg.lr = 1e-3;
  cfg.seed = 4;

  SUBCASE("pure ascent is near-monotone in score") {
    DreamConfig pure = cfg;
    pure.l2_decay_rate = 0.0;
    pure.scale_jitter = 0.0;
    pure.exp_gamma = 1.0;  // identity smoother
    pure.blur_every = 0;
    pure.plateau_eps = 0.0;  // disables reinit
    const DreamResult r = dream_ascent(fx.model, fx.train.series[0].values, 1, pure);
    int violations = 0;
    for (size_t t = 1; t < r.score_trace.size(); ++t)
      if (r.score_trace[t] < r.score_trace[t - 1] - 1e-12) ++violations;
    CHECK(violations == 0);
    CHECK(r.loss_trace.size() == r.score_trace.size());
    for (size_t t = 0; t < r.loss_trace.size(); ++t)
      CHECK(r.loss_trace[t] == -r.score_trace[t]);
  }

  SUBCASE("full regularizer stack stays bounded and deterministic") {
    const DreamResult a = dream_ascent(fx.model, fx.train.series[4].values, 0, cfg);
    const DreamResult b = dream_ascent(fx.model, fx.train.series[4].values, 0, cfg);
    CHECK(a.series == b.series);
    CHECK(a.score_trace == b.score_trace);
    for (double v : a.series) {
      CHECK(v >= cfg.clamp_lo);
      CHECK(v <= cfg.clamp_hi);
    }
    CHECK(a.steps_used == cfg.steps);
  }

  SUBCASE("variant guard") {
    DreamConfig wrong = cfg;
    wrong.variant = DreamVariant::sd;
    CHECK_THROWS_AS(dream_ascent(fx.model, fx.train.series[0].values, 0, wrong), Error);
  }
}

TEST_CASE("config resolution and validation") {
  DatasetStats stats{-2.0, 3.0, 0.4, 1.5};

  DreamConfig sd;
  sd.variant = DreamVariant::sd;
  const DreamConfig r = resolve_dream_defaults(sd, stats);
  CHECK(r.blur_every == 5);
  CHECK(r.reinit_noise_std == doctest::Approx(0.075).epsilon(1e-14));
  CHECK(r.overshoot_noise_std == doctest::Approx(0.03).epsilon(1e-14));
  CHECK(r.clamp_lo == -2.0);
  CHECK(r.clamp_hi == 3.0);
  CHECK_NOTHROW(r.validate());

  DreamConfig asc;
  asc.variant = DreamVariant::ascent;
  CHECK(resolve_dream_defaults(asc, stats).blur_every == 1);
  DreamConfig tgt;
  tgt.variant = DreamVariant::target;
  CHECK(resolve_dream_defaults(tgt, stats).blur_every == 0);

  DreamConfig keep;
  keep.blur_every = 7;
  keep.reinit_noise_std = 0.5;
  keep.clamp_lo = -9.0;
  keep.clamp_hi = 9.0;
  const DreamConfig k = resolve_dream_defaults(keep, stats);
  CHECK(k.blur_every == 7);
  CHECK(k.reinit_noise_std == 0.5);
  CHECK(k.clamp_lo == -9.0);

  DreamConfig bad = r;
  bad.alpha = 2.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = r;
  bad.beta = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = r;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  DreamConfig unresolved;
  try {
    unresolved.validate();
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}

TEST_CASE("dream result round trip") {
  Fixture fx;
  DreamConfig cfg = resolved_sd(fx.train);
  cfg.steps = 10;
  cfg.seed = 123456789012345ULL;
  const DreamResult r = sequence_dream(fx.model, fx.train, 1, cfg);

  const std::filesystem::path p = temp_file("seqdream_dream_roundtrip.txt");
  save_dream_result(r, resolve_dream_defaults(cfg, fx.train.stats), p);
  const LoadedDream back = load_dream_result(p);
  CHECK(back.result.series == r.series);
  CHECK(back.result.loss_trace == r.loss_trace);
  CHECK(back.result.score_trace == r.score_trace);
  CHECK(back.result.target == r.target);
  CHECK(back.result.reinit_count == r.reinit_count);
  CHECK(back.result.prediction == r.prediction);
  CHECK(back.result.confidence == r.confidence);
  CHECK(back.result.seed_source_index == r.seed_source_index);
  CHECK(back.config.seed == cfg.seed);
  CHECK(back.config.steps == 10);
  CHECK(back.config.variant == DreamVariant::sd);
  std::filesystem::remove(p);

  SUBCASE("load errors carry the right kinds") {
    CHECK_THROWS_AS(load_dream_result("/nonexistent/nowhere.dream"), Error);
    const std::filesystem::path bad = temp_file("seqdream_dream_bad.txt");
    {
      std::ofstream out(bad);
      out << "NOT-A-DREAM\n";
    }
    try {
      load_dream_result(bad);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
    }
    std::filesystem::remove(bad);
  }
}
