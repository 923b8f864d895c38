#pragma once

// Independent reference computations shared by unit and acceptance tests.
// Written directly from textbook definitions; no library code is reused.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace convflow::oracle {

using Row = std::vector<double>;

inline double cosine_distance(const Row& a, const Row& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(1.0L - dot / (std::sqrt(na) * std::sqrt(nb)));
}

inline double euclid(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

/// All-pairs distance matrix.
template <class P, class F>
std::vector<std::vector<double>> distance_matrix(const std::vector<P>& pts, F dist) {
  const auto n = pts.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = dist(pts[i], pts[j]);
  return d;
}

/// Indices of all other points sorted by (distance, index).
inline std::vector<std::size_t> ranked(const std::vector<std::vector<double>>& d, std::size_t i) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < d.size(); ++j)
    if (j != i) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[i][a] < d[i][b]; });
  return idx;
}

/// Trustworthiness of a low-dimensional embedding: penalizes points that are
/// among the k nearest in the layout but not in the original space.
inline double trustworthiness(const std::vector<std::vector<double>>& high, const std::vector<std::vector<double>>& low,
                              std::size_t k) {
  const std::size_t n = high.size();
  double penalty = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto hr = ranked(high, i);
    std::vector<std::size_t> rank(n, 0);
    for (std::size_t r = 0; r < hr.size(); ++r) rank[hr[r]] = r + 1;
    const auto lr = ranked(low, i);
    for (std::size_t m = 0; m < k; ++m) {
      const std::size_t j = lr[m];
      if (rank[j] > k) penalty += static_cast<double>(rank[j] - k);
    }
  }
  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

/// Mean silhouette coefficient under Euclidean distance.
inline double silhouette(const std::vector<std::array<double, 2>>& pts, const std::vector<int>& labels) {
  const std::size_t n = pts.size();
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[static_cast<std::size_t>(labels[j])] += euclid(pts[i], pts[j]);
      ++cnt[static_cast<std::size_t>(labels[j])];
    }
    const auto own = static_cast<std::size_t>(labels[i]);
    if (cnt[own] == 0) continue;
    const double a = sum[own] / static_cast<double>(cnt[own]);
    double b = INFINITY;
    for (std::size_t c = 0; c < sum.size(); ++c)
      if (c != own && cnt[c]) b = std::min(b, sum[c] / static_cast<double>(cnt[c]));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

/// Isotropic Gaussian blobs in `dim` dimensions around random centers of
/// norm `center_norm`; unit noise per coordinate.
struct Blobs {
  std::vector<Row> points;
  std::vector<int> labels;
};

inline Blobs gaussian_blobs(std::size_t blobs, std::size_t per_blob, std::size_t dim, double center_norm,
                            std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Blobs out;
  for (std::size_t b = 0; b < blobs; ++b) {
    Row c(dim);
    double ss = 0;
    for (auto& x : c) {
      x = n01(gen);
      ss += x * x;
    }
    for (auto& x : c) x *= center_norm / std::sqrt(ss);
    for (std::size_t p = 0; p < per_blob; ++p) {
      Row r(dim);
      for (std::size_t d = 0; d < dim; ++d) r[d] = c[d] + n01(gen);
      out.points.push_back(std::move(r));
      out.labels.push_back(static_cast<int>(b));
    }
  }
  return out;
}

/// A seeded random linear map to two dimensions.
inline std::vector<std::array<double, 2>> random_projection(const std::vector<Row>& pts, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::size_t dim = pts.at(0).size();
  std::vector<double> w0(dim), w1(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    w0[d] = n01(gen);
    w1[d] = n01(gen);
  }
  std::vector<std::array<double, 2>> out;
  for (const auto& p : pts)
    out.push_back({std::inner_product(p.begin(), p.end(), w0.begin(), 0.0),
                   std::inner_product(p.begin(), p.end(), w1.begin(), 0.0)});
  return out;
}

/// Points around 2-D centers with isotropic noise of standard deviation
/// `sigma`, assigned to blobs round-robin.
inline Blobs blobs_2d(const std::vector<std::array<double, 2>>& centers, std::size_t n, double sigma,
                      std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Blobs out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = i % centers.size();
    out.points.push_back({centers[b][0] + noise(gen), centers[b][1] + noise(gen)});
    out.labels.push_back(static_cast<int>(b));
  }
  return out;
}

/// Three blobs on an equilateral triangle whose side is `separation` sigmas.
inline Blobs three_blobs(std::size_t n, double separation, std::uint64_t seed) {
  const double s = separation;
  return blobs_2d({{0.0, 0.0}, {s, 0.0}, {s / 2.0, s * std::sqrt(3.0) / 2.0}}, n, 1.0, seed);
}

/// Shannon entropy in bits from raw counts.
inline double entropy_bits(const std::vector<double>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  double h = 0;
  for (double c : counts)
    if (c > 0) h -= c / total * std::log2(c / total);
  return h;
}

/// A random well-conditioned regression with an intercept column: 2-6
/// coefficients, a few to about 40 residual degrees of freedom.
struct OlsProblem {
  std::vector<Row> x;
  Row y;
};

inline OlsProblem random_ols_problem(std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> mag(0.5, 3.0), scale(0.2, 5.0);
  const std::size_t p = 2 + rng() % 5;
  const std::size_t n = p + 3 + rng() % 40;
  std::vector<double> beta(p), col_scale(p, 1.0), col_shift(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    beta[j] = mag(rng) * (rng() % 2 ? 1.0 : -1.0);
    if (j > 0) {
      col_scale[j] = scale(rng);
      col_shift[j] = z(rng) * 3.0;
    }
  }
  const double noise = scale(rng) * 0.2;
  OlsProblem pr;
  for (std::size_t i = 0; i < n; ++i) {
    Row row(p, 1.0);
    double y = 0;
    for (std::size_t j = 1; j < p; ++j) row[j] = col_shift[j] + col_scale[j] * z(rng);
    for (std::size_t j = 0; j < p; ++j) y += beta[j] * row[j];
    pr.x.push_back(row);
    pr.y.push_back(y + noise * z(rng));
  }
  return pr;
}

struct OlsOracle {
  std::vector<long double> beta, se;
};

/// Normal equations X'X b = X'y solved in long double by Gauss-Jordan
/// elimination with partial pivoting; SEs from s^2 (X'X)^-1.
inline OlsOracle ols_normal_equations(const std::vector<Row>& x, const Row& y) {
  const std::size_t n = x.size(), p = x[0].size();
  std::vector<std::vector<long double>> a(p, std::vector<long double>(2 * p + 1, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) a[j][k] += static_cast<long double>(x[i][j]) * x[i][k];
      a[j][2 * p] += static_cast<long double>(x[i][j]) * y[i];
    }
  for (std::size_t j = 0; j < p; ++j) a[j][p + j] = 1.0L;
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    const long double d = a[c][c];
    for (auto& v : a[c]) v /= d;
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const long double f = a[r][c];
      for (std::size_t k = 0; k < 2 * p + 1; ++k) a[r][k] -= f * a[c][k];
    }
  }
  OlsOracle out;
  for (std::size_t j = 0; j < p; ++j) out.beta.push_back(a[j][2 * p]);
  long double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double fit = 0;
    for (std::size_t j = 0; j < p; ++j) fit += out.beta[j] * x[i][j];
    rss += (y[i] - fit) * (y[i] - fit);
  }
  const long double s2 = rss / static_cast<long double>(n - p);
  for (std::size_t j = 0; j < p; ++j) out.se.push_back(std::sqrt(s2 * a[j][p + j]));
  return out;
}

/// Two-sided Student t p-value: 1 - 2 * integral of the density over [0, |t|],
/// composite Simpson with `steps` intervals.
inline double t_p_simpson(double t, double df, int steps = 20000) {
  const long double nu = df;
  const long double c = std::exp(std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2)) / std::sqrt(nu * 3.14159265358979323846264338327950288L);
  auto f = [&](long double x) { return c * std::pow(1 + x * x / nu, -(nu + 1) / 2); };
  const long double b = std::fabs(t), h = b / steps;
  long double s = f(0) + f(b);
  for (int i = 1; i < steps; ++i) s += f(i * h) * (i % 2 ? 4 : 2);
  return static_cast<double>(1 - 2 * s * h / 3);
}

}  // namespace convflow::oracle
