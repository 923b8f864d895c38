#include "convflow/alignment.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "convflow/csv.hpp"
#include "convflow/error.hpp"

namespace convflow {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw NumericalError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericalError("cosine_similarity: zero-norm vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

AlignmentSeries alignment_series(const EmbeddedConversation& conv) {
  if (conv.speakers.size() != conv.vectors.size())
    throw InputError("conversation " + conv.conversation_id + ": speakers and vectors differ in length");

  struct Merged {
    Speaker speaker;
    std::vector<double> sum;
    std::size_t last_turn;
  };
  std::vector<Merged> merged;
  for (std::size_t i = 0; i < conv.vectors.size(); ++i) {
    const auto v = conv.vectors[i].values();
    if (merged.empty() || merged.back().speaker != conv.speakers[i]) {
      merged.push_back({conv.speakers[i], std::vector<double>(v.begin(), v.end()), i});
    } else {
      auto& m = merged.back();
      for (std::size_t d = 0; d < v.size(); ++d) m.sum[d] += v[d];
      m.last_turn = i;
    }
  }
  if (merged.size() < 2)
    throw InputError("conversation " + conv.conversation_id + " has fewer than 2 cross-speaker turns");

  // Normalizing the sum is the same as normalizing the mean; cosine ignores scale.
  AlignmentSeries series{conv.conversation_id, {}};
  const std::size_t pairs = merged.size() - 1;
  for (std::size_t p = 0; p < pairs; ++p) {
    AlignmentPoint pt;
    pt.turn_time = pairs == 1 ? 0.0 : static_cast<double>(p) / static_cast<double>(pairs - 1);
    pt.similarity = cosine_similarity(merged[p].sum, merged[p + 1].sum);
    pt.speakers = {merged[p].speaker, merged[p + 1].speaker};
    pt.left_turn = merged[p].last_turn;
    pt.right_turn = merged[p + 1].last_turn;
    series.points.push_back(pt);
  }
  return series;
}

AlignmentFit fit_quadratic(const AlignmentSeries& series) {
  const auto n = series.points.size();
  std::set<double> distinct;
  for (const auto& p : series.points) distinct.insert(p.turn_time);
  if (n < 3 || distinct.size() < 3)
    throw NumericalError("quadratic fit needs at least 3 distinct times (conversation " +
                         series.conversation_id + ")");

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = series.points[i].turn_time;
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    X(r, 1) = t;
    X(r, 2) = t * t;
    y(r) = series.points[i].similarity;
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::VectorXd beta = qr.solve(y);
  AlignmentFit fit;
  fit.intercept = beta(0);
  fit.linear = beta(1);
  fit.quadratic = beta(2);
  fit.n_points = n;
  const double rss = (y - X * beta).squaredNorm();
  // Three points interpolate exactly: no residual degrees of freedom.
  fit.residual_variance = n > 3 ? rss / static_cast<double>(n - 3) : 0.0;
  return fit;
}

void write_series_csv(std::ostream& out, const AlignmentSeries& series) {
  out << "turn_time,similarity\n";
  for (const auto& p : series.points)
    out << csv::format_double(p.turn_time) << ',' << csv::format_double(p.similarity) << '\n';
}

}  // namespace convflow
