#include "seqdream/grid.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "seqdream/common.hpp"

namespace seqdream {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Everything that determines a run's output, in fixed order; spec changes
// therefore change the id, so stale result files are never misattributed.
std::string canonical_run_text(const GridSpec& spec, const DreamConfig& cfg, uint64_t seed_entry) {
  std::ostringstream os;
  os << str(cfg.variant) << '|' << str(spec.mode) << '|' << spec.target_class << '|' << cfg.steps
     << '|' << fmt_double(cfg.lr) << '|' << fmt_double(cfg.alpha) << '|' << fmt_double(cfg.beta)
     << '|' << fmt_double(cfg.sigma) << '|' << fmt_double(cfg.lambda_alpha) << '|'
     << fmt_double(cfg.lambda_beta) << '|' << fmt_double(cfg.lambda_sm) << '|'
     << fmt_double(cfg.target_multiplier) << '|' << cfg.blur_every << '|' << cfg.scalar_distance
     << '|' << fmt_double(cfg.plateau_eps) << '|' << cfg.plateau_window << '|'
     << fmt_double(cfg.reinit_noise_std) << '|' << fmt_double(cfg.overshoot_noise_std) << '|'
     << fmt_double(cfg.clamp_lo) << '|' << fmt_double(cfg.clamp_hi) << '|'
     << str(cfg.seed_strategy) << '|' << seed_entry;
  return os.str();
}

std::string run_id(size_t index, const std::string& canonical) {
  const uint64_t h = fnv1a(canonical);
  const auto folded = static_cast<uint32_t>(h ^ (h >> 32));
  char buf[32];
  std::snprintf(buf, sizeof buf, "run%04zu-%08x", index, folded);
  return buf;
}

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void require_nonempty(const char* name, size_t n) {
  if (n == 0) fail(ErrorKind::config, std::string("grid axis '") + name + "' is empty");
}

}  // namespace

bool rank_distance_before(const GridOutcome& a, const GridOutcome& b, DreamMode mode) {
  const double da = a.eval.activation_distance, db = b.eval.activation_distance;
  if (mode == DreamMode::center) return da < db;
  const bool ea = da > a.eval.activation_band.second, eb = db > b.eval.activation_band.second;
  if (ea != eb) return ea;
  return ea ? da < db : da > db;
}

GridSpec GridSpec::table_defaults() {
  GridSpec s;
  s.steps = {5, 100};
  s.lr = {1e-2, 1e1};
  s.alpha = {4.0, 6.0};
  s.beta = {1.0, 2.0};
  s.sigma = {3.0, 6.0};
  s.lambda_alpha = {1e-5, 1e-1};
  s.lambda_beta = {1e-5, 1e-1};
  s.lambda_sm = {1e-1, 5e-1};
  return s;
}

void GridSpec::validate() const {
  require_nonempty("steps", steps.size());
  require_nonempty("lr", lr.size());
  require_nonempty("alpha", alpha.size());
  require_nonempty("beta", beta.size());
  require_nonempty("sigma", sigma.size());
  require_nonempty("lambda_alpha", lambda_alpha.size());
  require_nonempty("lambda_beta", lambda_beta.size());
  require_nonempty("lambda_sm", lambda_sm.size());
  require_nonempty("seeds", seeds.size());
  if (variant != DreamVariant::sd)
    fail(ErrorKind::config, "grid runs sequence_dream; variant must be sd");
  for (const int v : steps)
    if (v < 1) fail(ErrorKind::config, "grid steps must be >= 1");
  for (const double v : lr)
    if (!(v > 0.0)) fail(ErrorKind::config, "grid lr must be > 0");
  for (const double v : alpha)
    if (!(v > 2.0)) fail(ErrorKind::config, "grid alpha must be > 2");
  for (const double v : beta)
    if (!(v >= 1.0)) fail(ErrorKind::config, "grid beta must be >= 1");
  for (const double v : sigma)
    if (!(v > 0.0)) fail(ErrorKind::config, "grid sigma must be > 0");
  for (const double v : lambda_alpha)
    if (!(v >= 0.0)) fail(ErrorKind::config, "grid lambda_alpha must be >= 0");
  for (const double v : lambda_beta)
    if (!(v >= 0.0)) fail(ErrorKind::config, "grid lambda_beta must be >= 0");
  for (const double v : lambda_sm)
    if (!(v >= 0.0)) fail(ErrorKind::config, "grid lambda_sm must be >= 0");
  if (target_class < 0) fail(ErrorKind::config, "grid target class must be >= 0");
}

std::vector<GridRun> expand_grid(const GridSpec& spec) {
  spec.validate();
  std::vector<GridRun> runs;
  runs.reserve(spec.steps.size() * spec.lr.size() * spec.alpha.size() * spec.beta.size() *
               spec.sigma.size() * spec.lambda_alpha.size() * spec.lambda_beta.size() *
               spec.lambda_sm.size() * spec.seeds.size());
  size_t index = 0;
  for (const int steps : spec.steps)
    for (const double lr : spec.lr)
      for (const double alpha : spec.alpha)
        for (const double beta : spec.beta)
          for (const double sigma : spec.sigma)
            for (const double la : spec.lambda_alpha)
              for (const double lb : spec.lambda_beta)
                for (const double lsm : spec.lambda_sm)
                  for (const uint64_t seed_entry : spec.seeds) {
                    GridRun run;
                    run.index = index;
                    run.cfg = spec.base;
                    run.cfg.variant = spec.variant;
                    run.cfg.mode = spec.mode;
                    run.cfg.steps = steps;
                    run.cfg.lr = lr;
                    run.cfg.alpha = alpha;
                    run.cfg.beta = beta;
                    run.cfg.sigma = sigma;
                    run.cfg.lambda_alpha = la;
                    run.cfg.lambda_beta = lb;
                    run.cfg.lambda_sm = lsm;
                    run.seed = mix_seed(seed_entry, index);
                    run.cfg.seed = run.seed;
                    run.id = run_id(index, canonical_run_text(spec, run.cfg, seed_entry));
                    runs.push_back(std::move(run));
                    ++index;
                  }
  return runs;
}

void append_manifest(const std::filesystem::path& out_dir, const std::vector<std::string>& lines) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path path = out_dir / "manifest.tsv";
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) fail(ErrorKind::io, "cannot append to manifest: " + path.string());
  if (fresh) out << "timestamp\tevent\tdetail\n";
  const std::string ts = timestamp_utc();
  for (const std::string& line : lines) out << ts << '\t' << line << '\n';
}

void write_ranking(const GridReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "eval");
  const std::filesystem::path path = out_dir / "eval" / "ranking.tsv";
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write ranking: " + path.string());
  out << "rank\trun_id\tloss\tactivation_distance\tband_max\traw_distance\tprediction\t"
         "confidence\tseed\n";
  for (size_t r = 0; r < report.ranking.size(); ++r) {
    const GridOutcome& o = report.outcomes[report.ranking[r]];
    out << (r + 1) << '\t' << o.run.id << '\t' << fmt_double(o.loss) << '\t'
        << fmt_double(o.eval.activation_distance) << '\t'
        << fmt_double(o.eval.activation_band.second) << '\t' << fmt_double(o.eval.raw_distance)
        << '\t' << o.dream.prediction << '\t' << fmt_double(o.dream.confidence) << '\t'
        << o.run.seed << '\n';
  }
}

GridReport run_grid(const ModelWeights& model, const Dataset& train, const GridSpec& spec,
                    int parallelism, const std::filesystem::path& out_dir,
                    const std::function<void(const GridOutcome&)>& on_done) {
  if (parallelism < 1) fail(ErrorKind::config, "parallelism must be >= 1");
  const std::vector<GridRun> runs = expand_grid(spec);
  std::filesystem::create_directories(out_dir / "dreams");
  std::filesystem::create_directories(out_dir / "eval");

  // Shared read-only context; each worker owns its tape/RNG per run.
  const LayerSelector layer;  // logits
  const EvalContext ctx = make_eval_context(model, train, layer);

  GridReport report;
  report.outcomes.resize(runs.size());

  std::atomic<size_t> next{0};
  std::mutex log_mutex;

  const auto record = [&](const GridOutcome& o, const std::string& status,
                          const std::string& detail) {
    const std::lock_guard<std::mutex> lock(log_mutex);
    append_manifest(out_dir, {o.run.id + "\t" + status + (detail.empty() ? "" : "\t" + detail)});
    if (on_done) on_done(o);
  };

  const auto execute = [&](size_t i) {
    GridOutcome& o = report.outcomes[i];
    o.run = runs[i];
    const std::filesystem::path dream_path = out_dir / "dreams" / (o.run.id + ".dream");
    const std::filesystem::path eval_path = out_dir / "eval" / (o.run.id + ".eval");
    try {
      DreamConfig cfg = resolve_dream_defaults(o.run.cfg, train.stats);
      bool loaded = false;
      if (std::filesystem::exists(dream_path) && std::filesystem::exists(eval_path)) {
        try {
          o.dream = load_dream_result(dream_path).result;
          o.eval = load_eval_report(eval_path);
          loaded = true;
        } catch (const Error&) {
          loaded = false;  // corrupt leftovers: recompute below
        }
      }
      if (!loaded) {
        o.dream = sequence_dream(model, train, spec.target_class, cfg);
        o.eval = evaluate_dream(ctx, model, o.dream);
        save_dream_result(o.dream, cfg, dream_path);
        save_eval_report(o.eval, eval_path);
      }
      const TargetSpec target = target_logits(model, train, spec.target_class, spec.mode,
                                              cfg.target_multiplier);
      o.loss = dream_loss_value(model, o.dream.series, target, cfg);
      o.cached = loaded;
      o.ok = true;
      o.feasible = o.dream.prediction == spec.target_class && o.dream.confidence >= 0.99;
      record(o, loaded ? "cached" : "done",
             "loss=" + fmt_double(o.loss) + " prediction=" + std::to_string(o.dream.prediction) +
                 " confidence=" + fmt_double(o.dream.confidence) +
                 " feasible=" + (o.feasible ? "1" : "0"));
    } catch (const Error& e) {
      o.ok = false;
      o.error = e.what();
      record(o, "failed", e.what());
    }
  };

  const int workers = std::min<int>(parallelism, static_cast<int>(runs.size()));
  if (workers <= 1) {
    for (size_t i = 0; i < runs.size(); ++i) execute(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < runs.size(); i = next.fetch_add(1)) execute(i);
      });
    for (std::thread& t : pool) t.join();
  }

  for (size_t i = 0; i < report.outcomes.size(); ++i)
    if (report.outcomes[i].ok && report.outcomes[i].feasible) report.ranking.push_back(i);
  std::sort(report.ranking.begin(), report.ranking.end(), [&](size_t ia, size_t ib) {
    const GridOutcome& a = report.outcomes[ia];
    const GridOutcome& b = report.outcomes[ib];
    if (a.loss != b.loss) return a.loss < b.loss;
    if (rank_distance_before(a, b, spec.mode)) return true;
    if (rank_distance_before(b, a, spec.mode)) return false;
    return a.run.id < b.run.id;
  });
  return report;
}

}  // namespace seqdream
