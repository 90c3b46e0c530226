#include "seqdream/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "seqdream/common.hpp"

namespace seqdream {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

void check_points(const std::vector<std::vector<double>>& points, size_t min_count,
                  const char* what) {
  if (points.size() < min_count)
    fail(ErrorKind::shape, std::string(what) + ": needs at least " + std::to_string(min_count) +
                               " points, got " + std::to_string(points.size()));
  const size_t d = points[0].size();
  if (d == 0) fail(ErrorKind::shape, std::string(what) + ": zero-dimensional points");
  for (const std::vector<double>& p : points)
    if (p.size() != d)
      fail(ErrorKind::shape, std::string(what) + ": mixed point dimensions " +
                                 std::to_string(d) + " and " + std::to_string(p.size()));
}

// Mean and unbiased covariance as Eigen objects.
void fit_moments(const std::vector<std::vector<double>>& points, Vector& mean, Matrix& cov) {
  const int n = static_cast<int>(points.size());
  const int d = static_cast<int>(points[0].size());
  mean = Vector::Zero(d);
  for (const std::vector<double>& p : points)
    for (int j = 0; j < d; ++j) mean[j] += p[j];
  mean /= static_cast<double>(n);
  cov = Matrix::Zero(d, d);
  Vector centered(d);
  for (const std::vector<double>& p : points) {
    for (int j = 0; j < d; ++j) centered[j] = p[j] - mean[j];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
  }
  cov = Matrix(cov.selfadjointView<Eigen::Lower>());
  cov /= static_cast<double>(n - 1);
}

}  // namespace

GaussianStats fit_gaussian_stats(const std::vector<std::vector<double>>& points,
                                 double eps_scale) {
  check_points(points, 2, "fit_gaussian_stats");
  if (eps_scale <= 0.0) fail(ErrorKind::config, "fit_gaussian_stats: eps_scale must be > 0");
  const int d = static_cast<int>(points[0].size());
  Vector mean;
  Matrix cov;
  fit_moments(points, mean, cov);

  const double trace = cov.trace();
  const double eps = trace > 0.0 ? eps_scale * trace / d : eps_scale;
  const Matrix reg = cov + eps * Matrix::Identity(d, d);

  Matrix inv;
  Eigen::LLT<Matrix> llt(reg);
  if (llt.info() == Eigen::Success) {
    inv = llt.solve(Matrix::Identity(d, d));
  } else {
    // Eigenvalue-floored pseudo-inverse for pathologically conditioned input.
    Eigen::SelfAdjointEigenSolver<Matrix> es(reg);
    if (es.info() != Eigen::Success)
      fail(ErrorKind::numeric, "fit_gaussian_stats: eigendecomposition failed");
    const double floor = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Vector lam = es.eigenvalues();
    for (int i = 0; i < d; ++i) lam[i] = 1.0 / std::max(lam[i], floor);
    inv = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  }

  GaussianStats stats;
  stats.dim = d;
  stats.count = static_cast<int64_t>(points.size());
  stats.eps = eps;
  stats.mean.assign(mean.data(), mean.data() + d);
  stats.cov.resize(static_cast<size_t>(d) * d);
  stats.inv.resize(static_cast<size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      stats.cov[static_cast<size_t>(i) * d + j] = cov(i, j);
      stats.inv[static_cast<size_t>(i) * d + j] = inv(i, j);
    }
  return stats;
}

double mahalanobis(const GaussianStats& stats, const std::vector<double>& point) {
  if (static_cast<int>(point.size()) != stats.dim)
    fail(ErrorKind::shape, "mahalanobis: point has dimension " + std::to_string(point.size()) +
                               ", stats expect " + std::to_string(stats.dim));
  const int d = stats.dim;
  std::vector<double> diff(d);
  for (int j = 0; j < d; ++j) {
    if (!std::isfinite(point[j])) fail(ErrorKind::numeric, "mahalanobis: non-finite input");
    diff[j] = point[j] - stats.mean[j];
  }
  // Fixed-order dense quadratic form; no Eigen here so queries are trivially
  // bit-reproducible.
  double q = 0.0;
  for (int i = 0; i < d; ++i) {
    double row = 0.0;
    for (int j = 0; j < d; ++j) row += stats.inv[static_cast<size_t>(i) * d + j] * diff[j];
    q += diff[i] * row;
  }
  return std::sqrt(std::max(q, 0.0));
}

std::pair<double, double> distance_band(const GaussianStats& stats,
                                        const std::vector<std::vector<double>>& points) {
  if (points.empty()) fail(ErrorKind::shape, "distance_band: no points");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const std::vector<double>& p : points) {
    const double m = mahalanobis(stats, p);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  return {lo, hi};
}

PCAModel fit_pca(const std::vector<std::vector<double>>& points, int k) {
  check_points(points, 2, "fit_pca");
  const int d = static_cast<int>(points[0].size());
  if (k < 1) fail(ErrorKind::config, "fit_pca: k must be >= 1");
  if (k > d)
    fail(ErrorKind::shape, "fit_pca: k = " + std::to_string(k) + " exceeds dimension " +
                               std::to_string(d));
  if (static_cast<int>(points.size()) < k)
    fail(ErrorKind::shape, "fit_pca: needs at least k = " + std::to_string(k) + " points");

  Vector mean;
  Matrix cov;
  fit_moments(points, mean, cov);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) fail(ErrorKind::numeric, "fit_pca: eigendecomposition failed");

  PCAModel pca;
  pca.mean.assign(mean.data(), mean.data() + d);
  pca.components.resize(k);
  pca.explained.resize(k);
  for (int i = 0; i < k; ++i) {
    const int src = d - 1 - i;  // Eigen sorts eigenvalues ascending
    Vector v = es.eigenvectors().col(src);
    int arg = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0.0) v = -v;
    pca.components[i].assign(v.data(), v.data() + d);
    pca.explained[i] = std::max(es.eigenvalues()[src], 0.0);
  }
  return pca;
}

std::vector<double> project(const PCAModel& pca, const std::vector<double>& point) {
  if (point.size() != pca.mean.size())
    fail(ErrorKind::shape, "project: point has dimension " + std::to_string(point.size()) +
                               ", PCA expects " + std::to_string(pca.mean.size()));
  std::vector<double> out(pca.components.size(), 0.0);
  for (size_t i = 0; i < pca.components.size(); ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < point.size(); ++j)
      acc += pca.components[i][j] * (point[j] - pca.mean[j]);
    out[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dream evaluation
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> train_series_values(const Dataset& train) {
  std::vector<std::vector<double>> out;
  out.reserve(train.series.size());
  for (const LabeledSeries& s : train.series) out.push_back(s.values);
  return out;
}

}  // namespace

EvalContext make_eval_context(const ModelWeights& model, const Dataset& train,
                              const LayerSelector& layer) {
  if (train.size() < 2) fail(ErrorKind::shape, "make_eval_context: needs at least 2 train series");
  EvalContext ctx;
  ctx.layer = layer;
  const std::vector<std::vector<double>> raw = train_series_values(train);
  const std::vector<std::vector<double>> acts = activations_batch(model, raw, layer);
  ctx.activation_stats = fit_gaussian_stats(acts);
  ctx.raw_stats = fit_gaussian_stats(raw);
  ctx.activation_band = distance_band(ctx.activation_stats, acts);
  ctx.raw_band = distance_band(ctx.raw_stats, raw);
  ctx.pca = fit_pca(acts, 2);
  return ctx;
}

EvalReport evaluate_dream(const EvalContext& ctx, const ModelWeights& model,
                          const DreamResult& result) {
  EvalReport rep;
  rep.layer = ctx.layer.str();
  const std::vector<double> act = activations(model, result.series, ctx.layer);
  rep.activation_distance = mahalanobis(ctx.activation_stats, act);
  rep.raw_distance = mahalanobis(ctx.raw_stats, result.series);
  rep.activation_band = ctx.activation_band;
  rep.raw_band = ctx.raw_band;
  rep.prediction = result.prediction;
  rep.confidence = result.confidence;
  rep.projection = project(ctx.pca, act);
  rep.activation_in_band = rep.activation_distance >= ctx.activation_band.first &&
                           rep.activation_distance <= ctx.activation_band.second;
  rep.raw_in_band =
      rep.raw_distance >= ctx.raw_band.first && rep.raw_distance <= ctx.raw_band.second;
  rep.activation_eps = ctx.activation_stats.eps;
  rep.raw_eps = ctx.raw_stats.eps;
  return rep;
}

EvalReport evaluate_dream(const ModelWeights& model, const Dataset& train,
                          const DreamResult& result, const LayerSelector& layer) {
  return evaluate_dream(make_eval_context(model, train, layer), model, result);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << "SEQDREAM-E1\n";
  out << "layer " << report.layer << '\n';
  out << "activation_distance " << fmt_double(report.activation_distance) << '\n';
  out << "raw_distance " << fmt_double(report.raw_distance) << '\n';
  out << "activation_band_min " << fmt_double(report.activation_band.first) << '\n';
  out << "activation_band_max " << fmt_double(report.activation_band.second) << '\n';
  out << "raw_band_min " << fmt_double(report.raw_band.first) << '\n';
  out << "raw_band_max " << fmt_double(report.raw_band.second) << '\n';
  out << "prediction " << report.prediction << '\n';
  out << "confidence " << fmt_double(report.confidence) << '\n';
  out << "activation_eps " << fmt_double(report.activation_eps) << '\n';
  out << "raw_eps " << fmt_double(report.raw_eps) << '\n';
  out << "projection " << report.projection.size();
  for (double v : report.projection) out << ' ' << fmt_double(v);
  out << '\n';
  out << "activation_in_band " << (report.activation_in_band ? 1 : 0) << '\n';
  out << "raw_in_band " << (report.raw_in_band ? 1 : 0) << '\n';
  out << "end\n";
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

namespace {

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) fail(ErrorKind::io, "cannot open " + path.string());
  }

  std::string expect(const std::string& key) {
    std::string line;
    if (!std::getline(in_, line))
      fail(ErrorKind::parse, path_.string() + ": unexpected end of file, wanted '" + key + "'");
    const size_t sp = line.find(' ');
    if (line.substr(0, sp) != key)
      fail(ErrorKind::parse,
           path_.string() + ": expected key '" + key + "', got '" + line.substr(0, sp) + "'");
    return sp == std::string::npos ? std::string() : line.substr(sp + 1);
  }

  double num(const std::string& key) {
    const std::string text = expect(key);
    try {
      size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::parse, path_.string() + ": bad number for '" + key + "': " + text);
    }
  }

  const std::filesystem::path& path() const { return path_; }
  std::ifstream& stream() { return in_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

EvalReport load_eval_report(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "no such file: " + path.string());
  LineReader rd(path);
  {
    std::string line;
    if (!std::getline(rd.stream(), line) || line != "SEQDREAM-E1")
      fail(ErrorKind::parse, path.string() + ": not an eval report file");
  }
  EvalReport rep;
  rep.layer = rd.expect("layer");
  rep.activation_distance = rd.num("activation_distance");
  rep.raw_distance = rd.num("raw_distance");
  rep.activation_band.first = rd.num("activation_band_min");
  rep.activation_band.second = rd.num("activation_band_max");
  rep.raw_band.first = rd.num("raw_band_min");
  rep.raw_band.second = rd.num("raw_band_max");
  rep.prediction = static_cast<int>(rd.num("prediction"));
  rep.confidence = rd.num("confidence");
  rep.activation_eps = rd.num("activation_eps");
  rep.raw_eps = rd.num("raw_eps");
  {
    std::istringstream ss(rd.expect("projection"));
    size_t n = 0;
    if (!(ss >> n)) fail(ErrorKind::parse, path.string() + ": bad projection count");
    rep.projection.resize(n);
    for (size_t i = 0; i < n; ++i)
      if (!(ss >> rep.projection[i]))
        fail(ErrorKind::parse, path.string() + ": short projection vector");
  }
  rep.activation_in_band = static_cast<int>(rd.num("activation_in_band")) != 0;
  rep.raw_in_band = static_cast<int>(rd.num("raw_in_band")) != 0;
  {
    std::string line;
    if (!std::getline(rd.stream(), line) || line != "end")
      fail(ErrorKind::parse, path.string() + ": missing end marker");
  }
  return rep;
}

void export_distribution_data(const ModelWeights& model, const Dataset& train,
                              const std::vector<DreamResult>& generated,
                              const LayerSelector& layer, const std::filesystem::path& path) {
  if (train.size() < 2)
    fail(ErrorKind::shape, "export_distribution_data: needs at least 2 train series");
  const std::vector<std::vector<double>> raw = train_series_values(train);
  const std::vector<std::vector<double>> acts = activations_batch(model, raw, layer);
  const std::vector<std::vector<double>> train_logits = logits_batch(model, raw);
  const PCAModel pca = fit_pca(acts, 2);

  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << "# layer " << layer.str() << '\n';
  out << "source\tindex\tclass\tviolin_logit\tpc1\tpc2\tactivation\n";

  const auto write_row = [&](const std::string& source, int index, int klass, double violin,
                             const std::vector<double>& act) {
    const std::vector<double> pc = project(pca, act);
    out << source << '\t' << index << '\t' << klass << '\t' << fmt_double(violin) << '\t'
        << fmt_double(pc[0]) << '\t' << fmt_double(pc[1]) << '\t';
    for (size_t j = 0; j < act.size(); ++j) {
      if (j) out << ',';
      out << fmt_double(act[j]);
    }
    out << '\n';
  };

  for (int i = 0; i < train.size(); ++i) {
    const int klass = train.series[i].label;
    write_row("train", i, klass, train_logits[i][klass], acts[i]);
  }
  for (size_t g = 0; g < generated.size(); ++g) {
    const DreamResult& r = generated[g];
    const std::vector<double> act = activations(model, r.series, layer);
    const std::vector<double> lg = logits(model, r.series);
    const int klass = r.target_class;
    write_row("dream", static_cast<int>(g), klass, lg[klass], act);
  }
  if (!out) fail(ErrorKind::io, "short write to " + path.string());
}

}  // namespace seqdream
