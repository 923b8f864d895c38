#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "convflow/embedding.hpp"
#include "convflow/error.hpp"

namespace convflow::umap {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Point2 = std::array<double, 2>;

enum class LayoutMode {
  exact,  // single worker, bit-reproducible
  fast    // parallel lock-free updates, reproducible only in distribution
};

struct UmapConfig {
  std::size_t n_neighbors = 15;  // counts the point itself, as the reference implementation does
  double min_dist = 0.2;
  std::size_t n_epochs = 200;
  std::uint64_t seed = 0;
  std::size_t negative_sample_rate = 5;
  LayoutMode mode = LayoutMode::exact;
  std::size_t workers = 1;

  /// Throws ConfigError when the config cannot be used on `n_points` points.
  void validate(std::size_t n_points) const;
};

/// Rows of `vectors` as unit-length rows.
PointMatrix unit_rows(std::span<const EmbeddingVector> vectors);
PointMatrix unit_rows(const PointMatrix& points);

/// Exact k nearest neighbours (self excluded) under cosine distance, sorted
/// by (distance, index).
struct KnnGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // n * k
  std::vector<double> distances;       // n * k

  std::span<const std::uint32_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
  std::span<const double> dists(std::size_t i) const { return {distances.data() + i * k, k}; }
};

KnnGraph knn_graph(const PointMatrix& points, std::size_t k, std::size_t workers = 1);

/// Per-point bandwidth: rho is the nearest distance and sigma solves
/// sum_j exp(-max(0, d_j - rho) / sigma) = target by bisection.
struct Bandwidth {
  double rho = 0.0;
  double sigma = 1.0;
  bool converged = true;
};

Bandwidth smooth_knn(std::span<const double> distances, double target, double mean_distance_floor);

struct Edge {
  std::uint32_t head;
  std::uint32_t tail;
  double weight;
};

/// Symmetric fuzzy membership graph. Every undirected edge is stored in
/// both directions, sorted by (head, tail).
struct FuzzyGraph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  std::vector<Bandwidth> bandwidths;
  std::size_t unconverged = 0;

  double weight(std::uint32_t i, std::uint32_t j) const;
};

/// Symmetrized with w = w1 + w2 - w1 * w2. The bandwidth target is
/// log2(knn.k + 1): the point itself counts as one of its neighbours.
FuzzyGraph fuzzy_graph(const KnnGraph& knn);

/// Probabilistic union w1 + w2 - w1 * w2, arranged so that the result is
/// symmetric bit for bit and exactly 1 when either weight is 1.
constexpr double symmetrize(double w1, double w2) noexcept {
  const double hi = w1 > w2 ? w1 : w2, lo = w1 > w2 ? w2 : w1;
  return hi + lo * (1.0 - hi);
}

struct CurveParams {
  double a = 0.0;
  double b = 0.0;
};

/// Target membership curve in the low-dimensional space (spread 1).
double target_curve(double x, double min_dist) noexcept;

/// Least-squares fit of 1 / (1 + a x^(2b)) to target_curve on 300 points in [0, 3].
CurveParams fit_curve_params(double min_dist);

/// Root-mean-square error of the fitted curve on the same grid.
double curve_rmse(const CurveParams& p, double min_dist);

struct Layout {
  std::vector<Point2> coords;
  std::vector<std::size_t> isolated;  // vertices without edges, left at their random start
};

Layout optimize_layout(const FuzzyGraph& graph, const CurveParams& curve, const UmapConfig& config);

struct ProjectionModel {
  UmapConfig config;
  CurveParams curve;
  PointMatrix fit_points;  // unit rows
  std::vector<Point2> fit_layout;
  std::vector<Diagnostic> diagnostics;
};

ProjectionModel fit(std::span<const EmbeddingVector> vectors, const UmapConfig& config);
ProjectionModel fit(const PointMatrix& points, const UmapConfig& config);

/// Places an unseen vector at the membership-weighted mean of its nearest fit
/// points, then refines it with 30 attraction steps toward those points. A
/// vector coinciding with fit points returns their fitted position.
Point2 project(const ProjectionModel& model, std::span<const double> vector);
inline Point2 project(const ProjectionModel& model, const EmbeddingVector& v) { return project(model, v.values()); }
std::vector<Point2> project_batch(const ProjectionModel& model, std::span<const EmbeddingVector> vectors,
                                  std::size_t workers = 1);

struct FitSampleItem {
  std::string conversation_id;
  std::size_t turn_index = 0;
  EmbeddingVector vector;
};

struct FitSample {
  std::vector<FitSampleItem> items;  // conversation order, turn order within
  std::vector<Diagnostic> diagnostics;
};

/// Draws `per_conversation` turns from each conversation without replacement.
/// Each conversation has its own stream seeded from (seed, conversation_id),
/// so the draw for one conversation does not depend on the others. Shorter
/// conversations contribute every turn and a diagnostic. Throws InputError
/// on an empty input.
FitSample sample_fit_set(std::span<const EmbeddedConversation> conversations, std::size_t per_conversation,
                         std::uint64_t seed);

inline constexpr int kProjectionSchemaVersion = 1;
void save_model(const ProjectionModel& model, const std::filesystem::path& path);
ProjectionModel load_model(const std::filesystem::path& path);

}  // namespace convflow::umap
