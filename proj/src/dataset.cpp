#include "seqdream/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "seqdream/common.hpp"

namespace seqdream {

namespace {

double parse_field(const std::string& field, const std::filesystem::path& path, int line_no) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) +
                               ": non-numeric field '" + field + "'");
  if (!std::isfinite(v))
    fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) +
                               ": non-finite value '" + field + "'");
  return v;
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t at = line.find(delim, start);
    if (at == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, at - start));
    start = at + 1;
  }
  return fields;
}

}  // namespace

void Dataset::recompute_stats() {
  if (series.empty()) {
    stats = DatasetStats{};
    class_counts.assign(std::max(num_classes, 0), 0);
    return;
  }
  length = static_cast<int>(series.front().values.size());
  class_counts.assign(num_classes, 0);
  double mn = series[0].values[0], mx = mn, sum = 0.0;
  int64_t count = 0;
  for (const LabeledSeries& s : series) {
    if (static_cast<int>(s.values.size()) != length)
      fail(ErrorKind::shape, "dataset series length " + std::to_string(s.values.size()) +
                                 " differs from declared length " + std::to_string(length));
    if (s.label < 0 || s.label >= num_classes)
      fail(ErrorKind::shape, "dataset label " + std::to_string(s.label) + " out of range [0, " +
                                 std::to_string(num_classes) + ")");
    ++class_counts[s.label];
    for (double v : s.values) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "dataset contains a non-finite value");
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      sum += v;
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const LabeledSeries& s : series)
    for (double v : s.values) sq += (v - mean) * (v - mean);
  stats = DatasetStats{mn, mx, mean, std::sqrt(sq / static_cast<double>(count))};
}

Dataset load_ucr_tsv(const std::filesystem::path& path, Delimiter delim,
                     const std::optional<std::map<double, int>>& label_map) {
  std::ifstream fin(path);
  if (!fin) fail(ErrorKind::io, "cannot open dataset file: " + path.string());
  const char sep = delim == Delimiter::tab ? '\t' : ',';

  struct RawRow {
    double label;
    std::vector<double> values;
  };
  std::vector<RawRow> rows;
  std::string line;
  int line_no = 0;
  int width = -1;
  while (std::getline(fin, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line, sep);
    if (fields.size() < 2)
      fail(ErrorKind::parse,
           path.string() + ":" + std::to_string(line_no) + ": row has no value fields");
    if (width == -1) width = static_cast<int>(fields.size());
    if (static_cast<int>(fields.size()) != width)
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) + ": row has " +
                                 std::to_string(fields.size()) + " fields, expected " +
                                 std::to_string(width));
    RawRow row;
    row.label = parse_field(fields[0], path, line_no);
    row.values.reserve(fields.size() - 1);
    for (size_t i = 1; i < fields.size(); ++i)
      row.values.push_back(parse_field(fields[i], path, line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::parse, "dataset file is empty: " + path.string());

  std::map<double, int> mapping;
  if (label_map) {
    mapping = *label_map;
  } else {
    for (const RawRow& r : rows) mapping.emplace(r.label, 0);
    int next = 0;
    for (auto& [raw, idx] : mapping) idx = next++;  // std::map iterates ascending
  }

  Dataset ds;
  ds.num_classes = 0;
  for (const auto& [raw, idx] : mapping) ds.num_classes = std::max(ds.num_classes, idx + 1);
  if (ds.num_classes < 2)
    fail(ErrorKind::parse, "dataset declares fewer than 2 classes: " + path.string());
  ds.series.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto it = mapping.find(rows[i].label);
    if (it == mapping.end())
      fail(ErrorKind::parse, path.string() + ": raw label " + fmt_double(rows[i].label) +
                                 " not present in the supplied label map");
    ds.series.push_back(LabeledSeries{std::move(rows[i].values), it->second});
  }
  ds.recompute_stats();
  return ds;
}

void save_ucr_tsv(const Dataset& ds, const std::filesystem::path& path, Delimiter delim) {
  std::ofstream fout(path);
  if (!fout) fail(ErrorKind::io, "cannot write dataset file: " + path.string());
  const char sep = delim == Delimiter::tab ? '\t' : ',';
  for (const LabeledSeries& s : ds.series) {
    fout << s.label;
    for (double v : s.values) fout << sep << fmt_double(v);
    fout << '\n';
  }
  if (!fout) fail(ErrorKind::io, "write failed: " + path.string());
}

NormalizeResult z_normalize(const Dataset& ds, NormScope scope) {
  NormalizeResult result;
  result.dataset = ds;
  if (scope == NormScope::global) {
    const double mean = ds.stats.mean, sd = ds.stats.std;
    if (sd == 0.0) {
      for (int i = 0; i < ds.size(); ++i) result.unchanged.push_back(i);
      return result;
    }
    for (LabeledSeries& s : result.dataset.series)
      for (double& v : s.values) v = (v - mean) / sd;
    result.dataset.recompute_stats();
    return result;
  }
  for (int i = 0; i < ds.size(); ++i) {
    LabeledSeries& s = result.dataset.series[i];
    const double m = static_cast<double>(s.values.size());
    double mean = 0.0;
    for (double v : s.values) mean += v;
    mean /= m;
    double sq = 0.0;
    for (double v : s.values) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / m);
    if (sd == 0.0) {
      result.unchanged.push_back(i);
      continue;
    }
    for (double& v : s.values) v = (v - mean) / sd;
  }
  result.dataset.recompute_stats();
  return result;
}

std::pair<Dataset, Dataset> synth_binary(int n_train, int n_test, int m, uint64_t seed) {
  if (m < 32) fail(ErrorKind::shape, "synth_binary requires m >= 32, got " + std::to_string(m));
  if (n_train < 1 || n_test < 1)
    fail(ErrorKind::shape, "synth_binary requires positive dataset sizes");

  auto z_norm_inplace = [](std::vector<double>& v) {
    const double m_ = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= m_;
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    const double sd = std::sqrt(sq / m_);
    if (sd == 0.0) return;
    for (double& x : v) x = (x - mean) / sd;
  };

  auto generate = [&](int n, uint64_t stream_seed) {
    std::mt19937_64 rng(stream_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> center_dist(m / 4.0, 3.0 * m / 4.0);
    const double width = m / 16.0;
    const int window = 9, half = window / 2;

    Dataset ds;
    ds.num_classes = 2;
    const int pairs = (n + 1) / 2;
    for (int p = 0; p < pairs; ++p) {
      std::vector<double> raw(m);
      for (double& x : raw) x = noise(rng);
      std::vector<double> base(m);
      for (int i = 0; i < m; ++i) {
        const int lo = std::max(0, i - half), hi = std::min(m - 1, i + half);
        double s = 0.0;
        for (int j = lo; j <= hi; ++j) s += raw[j];
        base[i] = s / (hi - lo + 1);
      }
      const double center = center_dist(rng);

      std::vector<double> c0 = base;
      z_norm_inplace(c0);
      ds.series.push_back(LabeledSeries{std::move(c0), 0});
      if (static_cast<int>(ds.series.size()) == n) break;

      std::vector<double> c1 = base;
      for (int i = 0; i < m; ++i) {
        const double d = (i - center) / width;
        c1[i] += 2.0 * std::exp(-0.5 * d * d);
      }
      z_norm_inplace(c1);
      ds.series.push_back(LabeledSeries{std::move(c1), 1});
    }
    ds.recompute_stats();
    return ds;
  };

  return {generate(n_train, mix_seed(seed, 0)), generate(n_test, mix_seed(seed, 1))};
}

void save_stats(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream fout(path);
  if (!fout) fail(ErrorKind::io, "cannot write stats file: " + path.string());
  fout << "series " << ds.size() << '\n';
  fout << "length " << ds.length << '\n';
  fout << "num_classes " << ds.num_classes << '\n';
  for (int c = 0; c < ds.num_classes; ++c)
    fout << "class_count " << c << ' ' << ds.class_counts[c] << '\n';
  fout << "min " << fmt_double(ds.stats.min) << '\n';
  fout << "max " << fmt_double(ds.stats.max) << '\n';
  fout << "mean " << fmt_double(ds.stats.mean) << '\n';
  fout << "std " << fmt_double(ds.stats.std) << '\n';
  if (!fout) fail(ErrorKind::io, "write failed: " + path.string());
}

}  // namespace seqdream
