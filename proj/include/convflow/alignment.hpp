#pragma once

#include <array>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "convflow/embedding.hpp"

namespace convflow {

/// Cosine of the angle between two vectors of equal length.
/// Throws NumericalError on a zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.values(), b.values());
}

struct AlignmentPoint {
  double turn_time = 0.0;   // in [0, 1]
  double similarity = 0.0;  // in [-1, 1]
  std::array<Speaker, 2> speakers{};
  // Last original turn index of each side of the pair.
  std::size_t left_turn = 0;
  std::size_t right_turn = 0;
};

struct AlignmentSeries {
  std::string conversation_id;
  std::vector<AlignmentPoint> points;
};

/// Merges same-speaker runs (normalized mean embedding), then emits one
/// similarity per adjacent cross-speaker pair on a [0, 1] time axis.
AlignmentSeries alignment_series(const EmbeddedConversation& conv);

struct AlignmentFit {
  double intercept = 0.0;
  double linear = 0.0;
  double quadratic = 0.0;
  double residual_variance = 0.0;
  std::size_t n_points = 0;

  double evaluate(double t) const noexcept { return intercept + linear * t + quadratic * t * t; }
};

/// Least-squares fit of similarity = b0 + b1 t + b2 t^2 via Householder QR.
/// Throws NumericalError when fewer than three distinct times are present.
AlignmentFit fit_quadratic(const AlignmentSeries& series);

/// `turn_time,similarity` rows.
void write_series_csv(std::ostream& out, const AlignmentSeries& series);

}  // namespace convflow
