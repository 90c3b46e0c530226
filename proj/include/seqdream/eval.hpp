#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "seqdream/dataset.hpp"
#include "seqdream/dream.hpp"
#include "seqdream/resnet.hpp"

namespace seqdream {

// Immutable after fitting; mahalanobis queries are pure and shareable.
struct GaussianStats {
  int dim = 0;
  int64_t count = 0;
  std::vector<double> mean;
  std::vector<double> cov;  // row-major d x d, unbiased
  double eps = 0.0;         // ridge added to the diagonal before inversion
  std::vector<double> inv;  // (cov + eps I)^-1, row-major
};

// eps = eps_scale x trace(cov)/d, or eps_scale outright when the trace is not
// positive (identical points). Inversion via Cholesky with an
// eigenvalue-floored pseudo-inverse fallback.
GaussianStats fit_gaussian_stats(const std::vector<std::vector<double>>& points,
                                 double eps_scale = 1e-6);

double mahalanobis(const GaussianStats& stats, const std::vector<double>& point);

// Min and max mahalanobis over `points` (normally the fitting set).
std::pair<double, double> distance_band(const GaussianStats& stats,
                                        const std::vector<std::vector<double>>& points);

struct PCAModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // k orthonormal rows
  std::vector<double> explained;                // variances, non-increasing
};

// Top-k eigenvectors of the unbiased covariance; each component's
// largest-magnitude entry is made positive. k must not exceed the dimension.
PCAModel fit_pca(const std::vector<std::vector<double>>& points, int k = 2);
std::vector<double> project(const PCAModel& pca, const std::vector<double>& point);

// Train-side distributions fitted once and reused across many dream results.
struct EvalContext {
  LayerSelector layer;
  GaussianStats activation_stats;
  GaussianStats raw_stats;
  std::pair<double, double> activation_band{0.0, 0.0};
  std::pair<double, double> raw_band{0.0, 0.0};
  PCAModel pca;  // over train activations at `layer`
};

EvalContext make_eval_context(const ModelWeights& model, const Dataset& train,
                              const LayerSelector& layer);

struct EvalReport {
  std::string layer;
  double activation_distance = 0.0;
  double raw_distance = 0.0;
  std::pair<double, double> activation_band{0.0, 0.0};
  std::pair<double, double> raw_band{0.0, 0.0};
  int prediction = 0;
  double confidence = 0.0;
  std::vector<double> projection;
  bool activation_in_band = false;  // band-min <= distance <= band-max
  bool raw_in_band = false;
  double activation_eps = 0.0;  // regularization used, reported for audit
  double raw_eps = 0.0;
};

EvalReport evaluate_dream(const EvalContext& ctx, const ModelWeights& model,
                          const DreamResult& result);
// Convenience form that fits the context on the fly.
EvalReport evaluate_dream(const ModelWeights& model, const Dataset& train,
                          const DreamResult& result, const LayerSelector& layer);

// Text format, magic SEQDREAM-E1. Bit-stable round trip.
void save_eval_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

// Tab-separated table, one row per train sample and per generated series:
// source tag, index, class, class-c logit (the violin scalar), the two PCA
// coordinates, then the full activation vector as comma-joined values.
void export_distribution_data(const ModelWeights& model, const Dataset& train,
                              const std::vector<DreamResult>& generated,
                              const LayerSelector& layer, const std::filesystem::path& path);

}  // namespace seqdream
