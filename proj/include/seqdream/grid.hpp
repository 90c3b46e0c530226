#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "seqdream/dream.hpp"
#include "seqdream/eval.hpp"
#include "seqdream/resnet.hpp"

namespace seqdream {

// Cartesian search space over the eight dreamed hyperparameters, plus fixed
// run context. `base` supplies every DreamConfig field the grid does not
// sweep. One run per (config, seed) pair.
struct GridSpec {
  std::vector<int> steps;
  std::vector<double> lr;
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> sigma;
  std::vector<double> lambda_alpha;
  std::vector<double> lambda_beta;
  std::vector<double> lambda_sm;

  DreamVariant variant = DreamVariant::sd;  // run_grid drives sequence_dream
  DreamMode mode = DreamMode::max;
  int target_class = 0;
  std::vector<uint64_t> seeds = {0};
  DreamConfig base;

  // Min/Max endpoints per axis: steps {5,100}, lr {1e-2,1e1}, alpha {4,6},
  // beta {1,2}, sigma {3,6}, lambda_alpha/lambda_beta {1e-5,1e-1},
  // lambda_sm {1e-1,5e-1}; 2^8 = 256 configs.
  static GridSpec table_defaults();
  void validate() const;  // nonempty lists, sanity bounds, variant == sd
};

struct GridRun {
  std::string id;     // run<index padded to 4>-<8 hex config hash>
  size_t index = 0;   // position in expansion order
  uint64_t seed = 0;  // effective seed: mix_seed(seed list entry, index)
  DreamConfig cfg;    // grid axes applied onto spec.base
};

// Full Cartesian product, lexicographic in axis declaration order with the
// seed list innermost.
std::vector<GridRun> expand_grid(const GridSpec& spec);

struct GridOutcome {
  GridRun run;
  bool ok = false;        // dream + eval completed (or loaded)
  bool cached = false;    // restored from existing result files
  bool feasible = false;  // prediction == target class and confidence >= 0.99
  double loss = 0.0;      // descent loss of the returned series
  DreamResult dream;
  EvalReport eval;
  std::string error;  // failure detail when !ok
};

struct GridReport {
  std::vector<GridOutcome> outcomes;  // expansion order
  std::vector<size_t> ranking;        // indices into outcomes, best first
  const GridOutcome* best() const {
    return ranking.empty() ? nullptr : &outcomes[ranking.front()];
  }
};

// Distance tie-break applied between equal-loss feasible runs; exposed for
// direct testing. center: smaller activation distance first. max: band-max
// exceeders first (smallest first among them), then non-exceeders largest
// first.
bool rank_distance_before(const GridOutcome& a, const GridOutcome& b, DreamMode mode);

// Runs sequence_dream + evaluate_dream per grid point on `parallelism` worker
// threads sharing the frozen model. Feasible runs are ranked by ascending
// loss, then mode-dependent activation distance (center: smallest; max:
// smallest among runs beyond the band max, those before all others, else
// largest), then run id. Writes dreams/<id>.dream and eval/<id>.eval under
// out_dir and appends per-run records to out_dir/manifest.tsv; runs whose
// files already load cleanly are not recomputed. Per-run failures are
// recorded, not fatal. `on_done` (optional) fires serialized, per finished run.
GridReport run_grid(const ModelWeights& model, const Dataset& train, const GridSpec& spec,
                    int parallelism, const std::filesystem::path& out_dir,
                    const std::function<void(const GridOutcome&)>& on_done = {});

// Appends timestamped lines to out_dir/manifest.tsv, creating it on first use.
// Timestamps live only here; every other output file is byte-reproducible.
void append_manifest(const std::filesystem::path& out_dir, const std::vector<std::string>& lines);

// Deterministic ranking table (feasible runs only, best first) written to
// eval/ranking.tsv under out_dir.
void write_ranking(const GridReport& report, const std::filesystem::path& out_dir);

}  // namespace seqdream
