// seqdream: train a 1D-ResNet time-series classifier and generate/evaluate
// activation-maximization ("dreamed") series.
//
// Exit codes: 0 success, 2 usage, 3 config, 4 io, 5 parse, 6 weights missing,
// 7 weights corrupt/version, 8 numeric/shape, 9 internal.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "seqdream/common.hpp"
#include "seqdream/config.hpp"
#include "seqdream/dataset.hpp"
#include "seqdream/dream.hpp"
#include "seqdream/eval.hpp"
#include "seqdream/grid.hpp"
#include "seqdream/resnet.hpp"

namespace fs = std::filesystem;
using namespace seqdream;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::config: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::parse: return 5;
    case ErrorKind::weights_missing: return 6;
    case ErrorKind::weights_corrupt:
    case ErrorKind::weights_version: return 7;
    case ErrorKind::numeric:
    case ErrorKind::shape: return 8;
    case ErrorKind::state: return 9;
  }
  return 9;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::weights_missing: return "weights-missing";
    case ErrorKind::weights_corrupt: return "weights-corrupt";
    case ErrorKind::weights_version: return "weights-version";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::shape: return "shape";
    case ErrorKind::state: return "state";
  }
  return "internal";
}

// Options shared by every subcommand. Precedence: flag > environment > default.
struct Common {
  std::string config_path;
  std::string out_flag;
  bool out_given = false;

  fs::path out_dir() const {
    if (out_given) return out_flag;
    if (const char* env = std::getenv("SEQDREAM_OUT")) return env;
    return "seqdream_out";
  }
  IniFile ini() const { return config_path.empty() ? IniFile{} : parse_ini(config_path); }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "INI configuration file");
  cmd->add_option("--out", c.out_flag, "output root directory (env SEQDREAM_OUT)")
      ->each([&c](const std::string&) { c.out_given = true; });
}

Delimiter parse_delimiter(const std::string& text) {
  if (text == "tab") return Delimiter::tab;
  if (text == "comma") return Delimiter::comma;
  fail(ErrorKind::config, "delimiter must be 'tab' or 'comma', got '" + text + "'");
}

// [data] keys: delimiter, normalize (none | per_series | global).
Dataset load_data(const std::string& path, const IniFile& ini) {
  const Delimiter delim = parse_delimiter(ini.get_string("data", "delimiter", "tab"));
  Dataset ds = load_ucr_tsv(path, delim);
  const std::string norm = ini.get_string("data", "normalize", "none");
  if (norm != "none") {
    NormScope scope;
    if (norm == "per_series") {
      scope = NormScope::per_series;
    } else if (norm == "global") {
      scope = NormScope::global;
    } else {
      fail(ErrorKind::config, "[data] normalize must be none, per_series, or global");
    }
    NormalizeResult nr = z_normalize(ds, scope);
    if (!nr.unchanged.empty())
      std::cerr << "note: " << nr.unchanged.size() << " series skipped by normalization (std 0)\n";
    ds = std::move(nr.dataset);
  }
  return ds;
}

// [dream] section; keys mirror the DreamConfig field names.
DreamConfig dream_from_ini(const IniFile& ini) {
  DreamConfig c;
  c.variant = parse_dream_variant(ini.get_string("dream", "variant", str(c.variant)));
  c.mode = parse_dream_mode(ini.get_string("dream", "mode", str(c.mode)));
  c.steps = ini.get_int("dream", "steps", c.steps);
  c.lr = ini.get_double("dream", "lr", c.lr);
  c.alpha = ini.get_double("dream", "alpha", c.alpha);
  c.beta = ini.get_double("dream", "beta", c.beta);
  c.sigma = ini.get_double("dream", "sigma", c.sigma);
  c.lambda_alpha = ini.get_double("dream", "lambda_alpha", c.lambda_alpha);
  c.lambda_beta = ini.get_double("dream", "lambda_beta", c.lambda_beta);
  c.lambda_sm = ini.get_double("dream", "lambda_sm", c.lambda_sm);
  c.target_multiplier = ini.get_double("dream", "target_multiplier", c.target_multiplier);
  c.blur_every = ini.get_int("dream", "blur_every", c.blur_every);
  c.l2_decay_rate = ini.get_double("dream", "l2_decay_rate", c.l2_decay_rate);
  c.scale_jitter = ini.get_double("dream", "scale_jitter", c.scale_jitter);
  c.smooth = parse_smooth_kind(ini.get_string("dream", "smooth", str(c.smooth)));
  c.smooth_single_pass = ini.get_bool("dream", "smooth_single_pass", c.smooth_single_pass);
  c.scale_whole_series = ini.get_bool("dream", "scale_whole_series", c.scale_whole_series);
  c.scalar_distance = ini.get_bool("dream", "scalar_distance", c.scalar_distance);
  c.ma_window = ini.get_int("dream", "ma_window", c.ma_window);
  c.exp_gamma = ini.get_double("dream", "exp_gamma", c.exp_gamma);
  c.plateau_eps = ini.get_double("dream", "plateau_eps", c.plateau_eps);
  c.plateau_window = ini.get_int("dream", "plateau_window", c.plateau_window);
  c.reinit_noise_std = ini.get_double("dream", "reinit_noise_std", c.reinit_noise_std);
  c.overshoot_noise_std = ini.get_double("dream", "overshoot_noise_std", c.overshoot_noise_std);
  c.clamp_lo = ini.get_double("dream", "clamp_lo", c.clamp_lo);
  c.clamp_hi = ini.get_double("dream", "clamp_hi", c.clamp_hi);
  c.seed_strategy = parse_seed_strategy(ini.get_string("dream", "seed_strategy", str(c.seed_strategy)));
  return c;
}

void check_class(int c, const Dataset& data) {
  if (c < 0 || c >= data.num_classes)
    fail(ErrorKind::config, "class " + std::to_string(c) + " out of range [0, " +
                                std::to_string(data.num_classes) + ")");
}

// --- synth ------------------------------------------------------------------

struct SynthOpts {
  Common common;
  uint64_t seed = 0;
  int train_count = 200, test_count = 100, length = 128;
};

void run_synth(const SynthOpts& o, const CLI::App& cmd) {
  const IniFile ini = o.common.ini();
  const int n_train = cmd.count("--train-count") ? o.train_count
                                                 : ini.get_int("data", "train_count", o.train_count);
  const int n_test =
      cmd.count("--test-count") ? o.test_count : ini.get_int("data", "test_count", o.test_count);
  const int length = cmd.count("--length") ? o.length : ini.get_int("data", "length", o.length);

  const auto [train_ds, test_ds] = synth_binary(n_train, n_test, length, o.seed);
  const fs::path dir = o.common.out_dir() / "data";
  fs::create_directories(dir);
  save_ucr_tsv(train_ds, dir / "synth_train.tsv");
  save_ucr_tsv(test_ds, dir / "synth_test.tsv");
  save_stats(train_ds, dir / "synth_train.stats");
  save_stats(test_ds, dir / "synth_test.stats");
  std::cout << "wrote " << (dir / "synth_train.tsv").string() << " (" << train_ds.size()
            << " series) and " << (dir / "synth_test.tsv").string() << " (" << test_ds.size()
            << " series), length " << length << "\n";
}

// --- train ------------------------------------------------------------------

struct TrainOpts {
  Common common;
  std::string data_path;
  std::string name = "model.w1";
  uint64_t seed = 0;
  int epochs = 0;
  double lr = 0.0;
  int batch_size = 0;
  bool verbose = false;
};

void run_train(const TrainOpts& o, const CLI::App& cmd) {
  const IniFile ini = o.common.ini();
  const Dataset data = load_data(o.data_path, ini);

  ResNetConfig mc;
  mc.channels = ini.get_int_list("model", "channels", {16, 32, 32});
  mc.kernels = ini.get_int_list("model", "kernels", {7, 5, 3});
  mc.convs_per_block = ini.get_int("model", "convs_per_block", static_cast<int>(mc.kernels.size()));
  mc.blocks = static_cast<int>(mc.channels.size());
  mc.num_classes = data.num_classes;
  mc.input_length = data.length;
  mc.validate();

  TrainConfig tc;
  tc.epochs = cmd.count("--epochs") ? o.epochs : ini.get_int("train", "epochs", tc.epochs);
  tc.lr = cmd.count("--lr") ? o.lr : ini.get_double("train", "lr", tc.lr);
  tc.batch_size =
      cmd.count("--batch-size") ? o.batch_size : ini.get_int("train", "batch_size", tc.batch_size);
  // Independent streams for weight init and batch shuffling.
  tc.seed = mix_seed(o.seed, 2);

  ModelWeights model = build_resnet(mc, mix_seed(o.seed, 1));
  const std::vector<EpochStats> history = train(model, data, tc);
  if (o.verbose)
    for (size_t e = 0; e < history.size(); ++e)
      std::cout << "epoch " << (e + 1) << " loss=" << fmt_double(history[e].loss)
                << " acc=" << fmt_double(history[e].accuracy) << "\n";

  const fs::path dir = o.common.out_dir() / "weights";
  fs::create_directories(dir);
  const fs::path path = dir / o.name;
  save_weights(model, path);
  std::cout << "trained " << tc.epochs << " epochs on " << data.size() << " series: final loss "
            << fmt_double(history.back().loss) << ", accuracy "
            << fmt_double(history.back().accuracy) << "\nwrote " << path.string() << "\n";
}

// --- dream ------------------------------------------------------------------

struct DreamOpts {
  Common common;
  std::string weights_path, data_path;
  std::string name = "dream";
  int target_class = 0;
  uint64_t seed = 0;
  std::string variant, mode, seed_strategy;
  int steps = 0, blur_every = 0, seed_index = -1;
  double lr = 0.0, alpha = 0.0, beta = 0.0, sigma = 0.0;
  double lambda_alpha = 0.0, lambda_beta = 0.0, lambda_sm = 0.0, k = 0.0;
  bool scalar_distance = false;
};

void run_dream(const DreamOpts& o, const CLI::App& cmd) {
  const IniFile ini = o.common.ini();
  const ModelWeights model = load_weights(o.weights_path);
  const Dataset data = load_data(o.data_path, ini);
  check_class(o.target_class, data);

  DreamConfig cfg = dream_from_ini(ini);
  if (cmd.count("--variant")) cfg.variant = parse_dream_variant(o.variant);
  if (cmd.count("--mode")) cfg.mode = parse_dream_mode(o.mode);
  if (cmd.count("--seed-strategy")) cfg.seed_strategy = parse_seed_strategy(o.seed_strategy);
  if (cmd.count("--steps")) cfg.steps = o.steps;
  if (cmd.count("--blur-every")) cfg.blur_every = o.blur_every;
  if (cmd.count("--lr")) cfg.lr = o.lr;
  if (cmd.count("--alpha")) cfg.alpha = o.alpha;
  if (cmd.count("--beta")) cfg.beta = o.beta;
  if (cmd.count("--sigma")) cfg.sigma = o.sigma;
  if (cmd.count("--lambda-alpha")) cfg.lambda_alpha = o.lambda_alpha;
  if (cmd.count("--lambda-beta")) cfg.lambda_beta = o.lambda_beta;
  if (cmd.count("--lambda-sm")) cfg.lambda_sm = o.lambda_sm;
  if (cmd.count("--k")) cfg.target_multiplier = o.k;
  if (cmd.count("--scalar-distance")) cfg.scalar_distance = o.scalar_distance;
  cfg.seed = o.seed;
  cfg = resolve_dream_defaults(cfg, data.stats);
  cfg.validate();

  const std::vector<double>* given = nullptr;
  if (cfg.seed_strategy == SeedStrategy::given_series) {
    if (o.seed_index < 0 || o.seed_index >= data.size())
      fail(ErrorKind::config, "seed strategy 'given' needs --seed-index in [0, " +
                                  std::to_string(data.size()) + ")");
    given = &data.series[o.seed_index].values;
  }

  DreamResult result;
  if (cfg.variant == DreamVariant::sd) {
    result = sequence_dream(model, data, o.target_class, cfg, given);
  } else {
    const TargetSpec target =
        target_logits(model, data, o.target_class, cfg.mode, cfg.target_multiplier);
    const SeedSelection sel =
        select_seed_input(model, data, target, cfg.seed_strategy, cfg.seed, given);
    result = cfg.variant == DreamVariant::target ? dream_target(model, sel.values, target, cfg)
                                                 : dream_ascent(model, sel.values, o.target_class, cfg);
    result.seed_strategy = cfg.seed_strategy;
    result.seed_source_index = sel.source_index;
  }

  const fs::path dir = o.common.out_dir() / "dreams";
  fs::create_directories(dir);
  const fs::path path = dir / (o.name + ".dream");
  save_dream_result(result, cfg, path);
  std::cout << str(cfg.variant) << " dream for class " << o.target_class << ": prediction "
            << result.prediction << ", confidence " << fmt_double(result.confidence) << ", "
            << result.steps_used << " steps, " << result.reinit_count << " reinits\nwrote "
            << path.string() << "\n";
}

// --- grid -------------------------------------------------------------------

struct GridOpts {
  Common common;
  std::string weights_path, data_path;
  std::string mode = "max";
  int target_class = 0;
  uint64_t seed = 0;
  std::vector<uint64_t> seeds;
  int parallelism = 0;
  bool quiet = false;
};

int resolve_parallelism(const GridOpts& o, const CLI::App& cmd, const IniFile& ini) {
  if (cmd.count("--parallelism")) return o.parallelism;
  if (const char* env = std::getenv("SEQDREAM_PARALLELISM")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      fail(ErrorKind::config, std::string("SEQDREAM_PARALLELISM must be a positive integer, got '") +
                                  env + "'");
    return static_cast<int>(v);
  }
  return ini.get_int("grid", "parallelism", 1);
}

void run_grid_cmd(const GridOpts& o, const CLI::App& cmd) {
  const IniFile ini = o.common.ini();
  const ModelWeights model = load_weights(o.weights_path);
  const Dataset data = load_data(o.data_path, ini);
  check_class(o.target_class, data);

  GridSpec spec = GridSpec::table_defaults();
  spec.steps = ini.get_int_list("grid", "steps", spec.steps);
  spec.lr = ini.get_double_list("grid", "lr", spec.lr);
  spec.alpha = ini.get_double_list("grid", "alpha", spec.alpha);
  spec.beta = ini.get_double_list("grid", "beta", spec.beta);
  spec.sigma = ini.get_double_list("grid", "sigma", spec.sigma);
  spec.lambda_alpha = ini.get_double_list("grid", "lambda_alpha", spec.lambda_alpha);
  spec.lambda_beta = ini.get_double_list("grid", "lambda_beta", spec.lambda_beta);
  spec.lambda_sm = ini.get_double_list("grid", "lambda_sm", spec.lambda_sm);
  spec.mode = parse_dream_mode(cmd.count("--mode") ? o.mode : ini.get_string("grid", "mode", o.mode));
  spec.target_class = o.target_class;
  spec.seeds = cmd.count("--seeds") ? o.seeds : std::vector<uint64_t>{o.seed};
  spec.base = dream_from_ini(ini);
  const int parallelism = resolve_parallelism(o, cmd, ini);

  const fs::path out = o.common.out_dir();
  const size_t n_runs = expand_grid(spec).size();
  append_manifest(out, {"grid\tstarted\tweights=" + o.weights_path + " data=" + o.data_path +
                        " class=" + std::to_string(spec.target_class) + " mode=" + str(spec.mode) +
                        " runs=" + std::to_string(n_runs) +
                        " parallelism=" + std::to_string(parallelism)});

  size_t done = 0;
  const auto progress = [&](const GridOutcome& run) {
    ++done;
    if (!o.quiet)
      std::cerr << "[" << done << "/" << n_runs << "] " << run.run.id << " "
                << (run.ok ? (run.cached ? "cached" : "done") : "failed") << "\n";
  };
  const GridReport report = run_grid(model, data, spec, parallelism, out, progress);
  write_ranking(report, out);

  size_t failed = 0;
  for (const GridOutcome& r : report.outcomes)
    if (!r.ok) ++failed;
  append_manifest(out, {"grid\tfinished\tfeasible=" + std::to_string(report.ranking.size()) +
                        " failed=" + std::to_string(failed) + " of=" + std::to_string(n_runs)});

  if (const GridOutcome* best = report.best()) {
    std::cout << "best run " << best->run.id << ": loss " << fmt_double(best->loss)
              << ", prediction " << best->dream.prediction << ", confidence "
              << fmt_double(best->dream.confidence) << ", activation distance "
              << fmt_double(best->eval.activation_distance) << " (band max "
              << fmt_double(best->eval.activation_band.second) << ")\n"
              << report.ranking.size() << " feasible of " << n_runs << " runs (" << failed
              << " failed)\nwrote " << (out / "eval" / "ranking.tsv").string() << "\n";
  } else {
    std::cout << "no feasible runs (" << n_runs << " total, " << failed
              << " failed); see " << (out / "manifest.tsv").string() << "\n";
  }
}

// --- eval -------------------------------------------------------------------

struct EvalOpts {
  Common common;
  std::string weights_path, data_path, dream_path;
  std::string layer = "logits";
};

void run_eval(const EvalOpts& o, const CLI::App& cmd) {
  const IniFile ini = o.common.ini();
  const ModelWeights model = load_weights(o.weights_path);
  const Dataset data = load_data(o.data_path, ini);
  const LoadedDream dream = load_dream_result(o.dream_path);
  const LayerSelector layer = LayerSelector::parse(
      cmd.count("--layer") ? o.layer : ini.get_string("eval", "layer", o.layer));

  const EvalReport rep = evaluate_dream(model, data, dream.result, layer);
  const fs::path dir = o.common.out_dir() / "eval";
  fs::create_directories(dir);
  const fs::path path = dir / (fs::path(o.dream_path).stem().string() + ".eval");
  save_eval_report(rep, path);

  const auto verdict = [](bool in) { return in ? "inside" : "outside"; };
  std::cout << "layer " << rep.layer << ": activation distance "
            << fmt_double(rep.activation_distance) << " (" << verdict(rep.activation_in_band)
            << " band [" << fmt_double(rep.activation_band.first) << ", "
            << fmt_double(rep.activation_band.second) << "]), raw distance "
            << fmt_double(rep.raw_distance) << " (" << verdict(rep.raw_in_band) << " band ["
            << fmt_double(rep.raw_band.first) << ", " << fmt_double(rep.raw_band.second)
            << "])\nprediction " << rep.prediction << ", confidence "
            << fmt_double(rep.confidence) << "\nwrote " << path.string() << "\n";
}

// --- project ----------------------------------------------------------------

struct ProjectOpts {
  Common common;
  std::string weights_path, data_path;
  std::vector<std::string> dream_paths;
  std::string layer = "logits";
  std::string out_file;
};

void run_project(const ProjectOpts& o, const CLI::App& cmd) {
  const IniFile ini = o.common.ini();
  const ModelWeights model = load_weights(o.weights_path);
  const Dataset data = load_data(o.data_path, ini);
  const LayerSelector layer = LayerSelector::parse(
      cmd.count("--layer") ? o.layer : ini.get_string("eval", "layer", o.layer));

  std::vector<DreamResult> generated;
  for (const std::string& p : o.dream_paths) generated.push_back(load_dream_result(p).result);

  fs::path path;
  if (o.out_file.empty()) {
    const fs::path dir = o.common.out_dir() / "eval";
    fs::create_directories(dir);
    path = dir / "distribution.tsv";
  } else {
    path = o.out_file;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
  }
  export_distribution_data(model, data, generated, layer, path);
  std::cout << "wrote " << path.string() << " (" << data.size() << " train + " << generated.size()
            << " dream rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence dreaming toolkit: train a 1D-ResNet classifier and synthesize "
               "class-representative series"};
  app.require_subcommand(1);

  SynthOpts synth_opts;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "generate the deterministic synthetic binary dataset");
  add_common(synth_cmd, synth_opts.common);
  synth_cmd->add_option("--seed", synth_opts.seed, "RNG seed")->required();
  synth_cmd->add_option("--train-count", synth_opts.train_count, "training series count");
  synth_cmd->add_option("--test-count", synth_opts.test_count, "test series count");
  synth_cmd->add_option("--length", synth_opts.length, "series length");

  TrainOpts train_opts;
  CLI::App* train_cmd = app.add_subcommand("train", "train the classifier on a UCR-style TSV");
  add_common(train_cmd, train_opts.common);
  train_cmd->add_option("--data", train_opts.data_path, "training TSV path")->required();
  train_cmd->add_option("--seed", train_opts.seed, "RNG seed (init + shuffling)")->required();
  train_cmd->add_option("--epochs", train_opts.epochs, "training epochs");
  train_cmd->add_option("--lr", train_opts.lr, "Adam learning rate");
  train_cmd->add_option("--batch-size", train_opts.batch_size, "minibatch size");
  train_cmd->add_option("--name", train_opts.name, "weight file name under <out>/weights/");
  train_cmd->add_flag("--verbose", train_opts.verbose, "print per-epoch stats");

  DreamOpts dream_opts;
  CLI::App* dream_cmd = app.add_subcommand("dream", "generate one dreamed series");
  add_common(dream_cmd, dream_opts.common);
  dream_cmd->add_option("--weights", dream_opts.weights_path, "trained weight file")->required();
  dream_cmd->add_option("--data", dream_opts.data_path, "training TSV (stats, targets, seeds)")
      ->required();
  dream_cmd->add_option("--class", dream_opts.target_class, "target class index")->required();
  dream_cmd->add_option("--seed", dream_opts.seed, "RNG seed")->required();
  dream_cmd->add_option("--variant", dream_opts.variant, "ascent | target | sd");
  dream_cmd->add_option("--mode", dream_opts.mode, "center | max");
  dream_cmd->add_option("--seed-strategy", dream_opts.seed_strategy,
                        "mean-activation-nearest | random-noise | given-series");
  dream_cmd->add_option("--seed-index", dream_opts.seed_index,
                        "train index for the given-series seed strategy");
  dream_cmd->add_option("--steps", dream_opts.steps, "optimization steps");
  dream_cmd->add_option("--lr", dream_opts.lr, "step size");
  dream_cmd->add_option("--alpha", dream_opts.alpha, "alpha-norm exponent");
  dream_cmd->add_option("--beta", dream_opts.beta, "total-variation exponent");
  dream_cmd->add_option("--sigma", dream_opts.sigma, "Gaussian blur std");
  dream_cmd->add_option("--lambda-alpha", dream_opts.lambda_alpha, "alpha-norm weight");
  dream_cmd->add_option("--lambda-beta", dream_opts.lambda_beta, "total-variation weight");
  dream_cmd->add_option("--lambda-sm", dream_opts.lambda_sm, "sequence-smoothing weight");
  dream_cmd->add_option("--k", dream_opts.k, "max-mode target multiplier");
  dream_cmd->add_option("--blur-every", dream_opts.blur_every, "blur period in steps (0 = off)");
  dream_cmd->add_flag("--scalar-distance", dream_opts.scalar_distance,
                      "match the class logit alone instead of the full vector");
  dream_cmd->add_option("--name", dream_opts.name, "dream file stem under <out>/dreams/");

  GridOpts grid_opts;
  CLI::App* grid_cmd =
      app.add_subcommand("grid", "hyperparameter grid search over sequence_dream");
  add_common(grid_cmd, grid_opts.common);
  grid_cmd->add_option("--weights", grid_opts.weights_path, "trained weight file")->required();
  grid_cmd->add_option("--data", grid_opts.data_path, "training TSV")->required();
  grid_cmd->add_option("--class", grid_opts.target_class, "target class index")->required();
  grid_cmd->add_option("--seed", grid_opts.seed, "base RNG seed")->required();
  grid_cmd->add_option("--seeds", grid_opts.seeds, "comma-separated seed list (one run each)")
      ->delimiter(',');
  grid_cmd->add_option("--mode", grid_opts.mode, "center | max");
  grid_cmd->add_option("--parallelism", grid_opts.parallelism,
                       "worker threads (env SEQDREAM_PARALLELISM)");
  grid_cmd->add_flag("--quiet", grid_opts.quiet, "suppress per-run progress");

  EvalOpts eval_opts;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a dream result against the training distribution");
  add_common(eval_cmd, eval_opts.common);
  eval_cmd->add_option("--weights", eval_opts.weights_path, "trained weight file")->required();
  eval_cmd->add_option("--data", eval_opts.data_path, "training TSV")->required();
  eval_cmd->add_option("--dream", eval_opts.dream_path, "dream result file")->required();
  eval_cmd->add_option("--layer", eval_opts.layer, "logits | penultimate | blockN");

  ProjectOpts project_opts;
  CLI::App* project_cmd =
      app.add_subcommand("project", "export violin/PCA distribution data as TSV");
  add_common(project_cmd, project_opts.common);
  project_cmd->add_option("--weights", project_opts.weights_path, "trained weight file")
      ->required();
  project_cmd->add_option("--data", project_opts.data_path, "training TSV")->required();
  project_cmd->add_option("--dream", project_opts.dream_paths, "dream result file (repeatable)");
  project_cmd->add_option("--layer", project_opts.layer, "logits | penultimate | blockN");
  project_cmd->add_option("--out-file", project_opts.out_file,
                          "explicit output path (default <out>/eval/distribution.tsv)");

  synth_cmd->callback([&] { run_synth(synth_opts, *synth_cmd); });
  train_cmd->callback([&] { run_train(train_opts, *train_cmd); });
  dream_cmd->callback([&] { run_dream(dream_opts, *dream_cmd); });
  grid_cmd->callback([&] { run_grid_cmd(grid_opts, *grid_cmd); });
  eval_cmd->callback([&] { run_eval(eval_opts, *eval_cmd); });
  project_cmd->callback([&] { run_project(project_opts, *project_cmd); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error (" << kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error (internal): " << e.what() << "\n";
    return 9;
  }
  return 0;
}
