#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace convflow::gmm {

using Point2 = std::array<double, 2>;

enum class Family { spherical, diagonal, full };

std::string_view to_string(Family f);
Family parse_family(std::string_view s);
inline constexpr std::array<Family, 3> kAllFamilies{Family::spherical, Family::diagonal, Family::full};

/// Added to every covariance diagonal.
inline constexpr double kCovarianceFloor = 1e-6;
inline constexpr double kMinWeight = 1e-10;

struct GmmModel {
  std::size_t n_components = 0;
  Family family = Family::full;
  std::vector<double> weights;
  std::vector<Point2> means;
  std::vector<Eigen::Matrix2d> covariances;
  double log_likelihood = 0.0;
  std::size_t n_params = 0;
  double bic = 0.0;
  std::size_t n_points = 0;

  // Fit provenance.
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
  int held_covariance_steps = 0;  // M-steps where a collapsed component kept its covariance
};

/// Free parameters: (k - 1) weights, 2k means and k, 2k or 3k covariance terms.
std::size_t parameter_count(std::size_t k, Family family);

/// n_params * ln(n) - 2 * log-likelihood.
double bic(std::size_t n_params, double log_likelihood, std::size_t n);
inline double bic(const GmmModel& m, std::size_t n) { return bic(m.n_params, m.log_likelihood, n); }

struct EmOptions {
  double tol = 1e-6;  // relative log-likelihood change
  int max_iter = 500;
};

/// Expectation-maximisation from k-means++ seeding plus 10 Lloyd steps.
/// A component with fewer than two effective points keeps its previous
/// covariance. Throws InputError when k > n and NumericalError when a
/// component stays collapsed for 5 consecutive M-steps.
GmmModel em_fit(std::span<const Point2> points, std::size_t k, Family family, std::uint64_t seed,
                EmOptions options = {});

/// Per-point log-likelihood contributions under the model.
double log_likelihood(const GmmModel& model, std::span<const Point2> points);

/// Posterior responsibilities for one point; they sum to 1.
std::vector<double> responsibilities(const GmmModel& model, const Point2& point);

struct ClusterAssignment {
  std::size_t cluster = 0;
  double posterior = 1.0;
};

/// Argmax responsibility; ties go to the lower index.
ClusterAssignment assign(const GmmModel& model, const Point2& point);

struct SelectionOptions {
  std::size_t k_min = 1;
  std::size_t k_max = 12;
  std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};
  std::size_t restarts = 5;
  std::uint64_t seed = 0;
  EmOptions em{};
  std::size_t workers = 1;
};

struct BicRow {
  std::size_t k = 0;
  Family family = Family::full;
  std::size_t restarts_used = 0;  // restarts that produced a model
  double log_likelihood = 0.0;
  double bic = 0.0;
  double max_ll_decrease = 0.0;  // largest drop between EM iterations over the cell's restarts
};

struct Selection {
  GmmModel model;
  std::vector<BicRow> table;  // (k, family) order; cells with no usable restart are omitted
};

/// Fits every (k, family) cell with seeded restarts, keeps the best
/// log-likelihood per cell and returns the cell with the lowest BIC.
Selection select_model(std::span<const Point2> points, const SelectionOptions& options);

void write_bic_table(std::ostream& out, const std::vector<BicRow>& table);

inline constexpr int kModelSchemaVersion = 1;
void save_model(const GmmModel& model, const std::filesystem::path& path);
GmmModel load_model(const std::filesystem::path& path);

}  // namespace convflow::gmm
