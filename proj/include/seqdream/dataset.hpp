#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace seqdream {

struct LabeledSeries {
  std::vector<double> values;
  int label = 0;
};

struct DatasetStats {
  double min = 0.0, max = 0.0, mean = 0.0, std = 0.0;  // population std
};

struct Dataset {
  std::vector<LabeledSeries> series;
  int num_classes = 0;
  int length = 0;
  DatasetStats stats;
  std::vector<int> class_counts;

  int size() const { return static_cast<int>(series.size()); }
  // Revalidates labels/lengths/finiteness and refreshes stats + class counts.
  // Call after any mutation of `series`.
  void recompute_stats();
};

enum class Delimiter { tab, comma };

// UCR format: one series per line, label first, values after, tab (or comma)
// separated. Raw labels are remapped to 0,1,... by ascending sort unless an
// explicit label_map is given.
Dataset load_ucr_tsv(const std::filesystem::path& path, Delimiter delim = Delimiter::tab,
                     const std::optional<std::map<double, int>>& label_map = std::nullopt);

// Writes class indices as labels; doubles in shortest exact form, so a
// load/save/load round trip is bit-identical.
void save_ucr_tsv(const Dataset& ds, const std::filesystem::path& path,
                  Delimiter delim = Delimiter::tab);

enum class NormScope { per_series, global };

struct NormalizeResult {
  Dataset dataset;
  std::vector<int> unchanged;  // indices skipped because their scope std was 0
};

NormalizeResult z_normalize(const Dataset& ds, NormScope scope);

// Deterministic synthetic binary dataset: class 0 is moving-average-smoothed
// Gaussian noise, class 1 adds a Gaussian bump (amplitude 2, std m/16,
// center uniform in [m/4, 3m/4]) to the same base noise; every series is then
// per-series z-normalized. Series are ordered as adjacent (class 0, class 1)
// pairs sharing base noise.
std::pair<Dataset, Dataset> synth_binary(int n_train, int n_test, int m, uint64_t seed);

// Key-value text export of size, class counts, and global stats.
void save_stats(const Dataset& ds, const std::filesystem::path& path);

}  // namespace seqdream
