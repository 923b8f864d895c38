#include "convflow/umap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <json.hpp>
#include <numeric>

#include "convflow/hash.hpp"
#include "convflow/parallel.hpp"
#include "convflow/random.hpp"

namespace convflow::umap {

void UmapConfig::validate(std::size_t n_points) const {
  if (n_neighbors < 2) throw ConfigError("n_neighbors must be at least 2");
  if (n_neighbors >= n_points)
    throw ConfigError("n_neighbors (" + std::to_string(n_neighbors) + ") must be below the number of points (" +
                      std::to_string(n_points) + ")");
  if (!(min_dist > 0.0 && min_dist < 1.0)) throw ConfigError("min_dist must lie in (0, 1)");
  if (n_epochs == 0) throw ConfigError("n_epochs must be positive");
  if (workers == 0) throw ConfigError("workers must be positive");
}

PointMatrix unit_rows(const PointMatrix& points) {
  PointMatrix out = points;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("point " + std::to_string(i) + " has zero or non-finite norm");
    out.row(i) /= n;
  }
  return out;
}

PointMatrix unit_rows(std::span<const EmbeddingVector> vectors) {
  const auto dim = vectors.empty() ? kEmbeddingDim : vectors.front().size();
  PointMatrix m(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto v = vectors[i].values();
    for (std::size_t d = 0; d < dim; ++d) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[d];
  }
  return unit_rows(m);
}

// ---- nearest neighbours ----

KnnGraph knn_graph(const PointMatrix& points, std::size_t k, std::size_t workers) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0 || k >= n)
    throw ConfigError("knn_graph: k=" + std::to_string(k) + " must satisfy 0 < k < n=" + std::to_string(n));
  const PointMatrix unit = unit_rows(points);
  KnnGraph g;
  g.n = n;
  g.k = k;
  g.indices.resize(n * k);
  g.distances.resize(n * k);

  // Fixed-size row blocks keep every similarity bit-identical whatever the
  // worker count.
  constexpr std::size_t kBlock = 128;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, workers, [&](std::size_t b0, std::size_t b1) {
    std::vector<std::uint32_t> order(n);
    std::vector<double> dist(n);
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t r0 = b * kBlock, rows = std::min(kBlock, n - r0);
      const Eigen::MatrixXd sim =
          unit.middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(rows)) * unit.transpose();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = r0 + r;
        for (std::size_t j = 0; j < n; ++j)
          dist[j] = std::max(0.0, 1.0 - sim(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
        order.resize(n);
        std::iota(order.begin(), order.end(), 0u);
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::uint32_t x, std::uint32_t y) {
                            return dist[x] < dist[y] || (dist[x] == dist[y] && x < y);
                          });
        for (std::size_t m = 0; m < k; ++m) {
          g.indices[i * k + m] = order[m];
          g.distances[i * k + m] = dist[order[m]];
        }
      }
    }
  });
  return g;
}

// ---- fuzzy simplicial set ----

Bandwidth smooth_knn(std::span<const double> distances, double target, double mean_distance_floor) {
  constexpr int kIterations = 64;
  constexpr double kTolerance = 1e-5;
  constexpr double kMinScale = 1e-3;

  Bandwidth bw;
  bw.rho = *std::min_element(distances.begin(), distances.end());
  double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
  bw.converged = false;
  for (int it = 0; it < kIterations; ++it) {
    double psum = 0.0;
    for (double d : distances) psum += std::exp(-std::max(0.0, d - bw.rho) / mid);
    if (std::fabs(psum - target) < kTolerance) {
      bw.converged = true;
      break;
    }
    if (psum > target) {
      hi = mid;
      mid = 0.5 * (lo + hi);
    } else {
      lo = mid;
      mid = std::isinf(hi) ? mid * 2.0 : 0.5 * (lo + hi);
    }
  }
  bw.sigma = mid;
  const double mean = std::accumulate(distances.begin(), distances.end(), 0.0) / static_cast<double>(distances.size());
  const double floor = kMinScale * (bw.rho > 0.0 ? mean : mean_distance_floor);
  if (bw.sigma < floor) bw.sigma = floor;
  return bw;
}

double FuzzyGraph::weight(std::uint32_t i, std::uint32_t j) const {
  auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{i, j}, [](const Edge& e, const auto& key) {
    return e.head < key.first || (e.head == key.first && e.tail < key.second);
  });
  if (it != edges.end() && it->head == i && it->tail == j) return it->weight;
  return 0.0;
}

FuzzyGraph fuzzy_graph(const KnnGraph& knn) {
  FuzzyGraph g;
  g.n = knn.n;
  g.bandwidths.resize(knn.n);
  const double target = std::log2(static_cast<double>(knn.k + 1));
  const double global_mean =
      std::accumulate(knn.distances.begin(), knn.distances.end(), 0.0) / static_cast<double>(knn.distances.size());

  // (low, high) -> (weight low->high, weight high->low)
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < knn.n; ++i) {
    const auto bw = smooth_knn(knn.dists(i), target, global_mean);
    g.bandwidths[i] = bw;
    if (!bw.converged) ++g.unconverged;
    const auto nb = knn.neighbors(i);
    const auto ds = knn.dists(i);
    for (std::size_t m = 0; m < knn.k; ++m) {
      const double w = std::exp(-std::max(0.0, ds[m] - bw.rho) / bw.sigma);
      if (!(w > 0.0)) continue;
      const auto a = static_cast<std::uint32_t>(i), b = nb[m];
      if (a < b)
        pairs[{a, b}].first = w;
      else
        pairs[{b, a}].second = w;
    }
  }
  g.edges.reserve(pairs.size() * 2);
  for (const auto& [key, w] : pairs) {
    const double s = symmetrize(w.first, w.second);
    g.edges.push_back({key.first, key.second, s});
    g.edges.push_back({key.second, key.first, s});
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const Edge& x, const Edge& y) { return x.head < y.head || (x.head == y.head && x.tail < y.tail); });
  return g;
}

// ---- membership curve ----

namespace {
constexpr std::size_t kCurvePoints = 300;
constexpr double kCurveRange = 3.0;

double curve_x(std::size_t i) { return kCurveRange * static_cast<double>(i) / static_cast<double>(kCurvePoints - 1); }

double fitted(double x, double a, double b) { return 1.0 / (1.0 + a * std::pow(x, 2.0 * b)); }

double curve_sse(double a, double b, double min_dist) {
  double s = 0.0;
  for (std::size_t i = 0; i < kCurvePoints; ++i) {
    const double x = curve_x(i);
    const double r = fitted(x, a, b) - target_curve(x, min_dist);
    s += r * r;
  }
  return s;
}
}  // namespace

double target_curve(double x, double min_dist) noexcept { return x < min_dist ? 1.0 : std::exp(-(x - min_dist)); }

double curve_rmse(const CurveParams& p, double min_dist) {
  return std::sqrt(curve_sse(p.a, p.b, min_dist) / static_cast<double>(kCurvePoints));
}

CurveParams fit_curve_params(double min_dist) {
  if (!(min_dist > 0.0 && min_dist < 1.0)) throw ConfigError("min_dist must lie in (0, 1)");
  // Levenberg-Marquardt from (1, 1).
  double a = 1.0, b = 1.0, lambda = 1e-3;
  double sse = curve_sse(a, b, min_dist);
  for (int it = 0; it < 1000; ++it) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < kCurvePoints; ++i) {
      const double x = curve_x(i);
      const double p = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
      const double den = 1.0 + a * p;
      const double r = 1.0 / den - target_curve(x, min_dist);
      const double da = -p / (den * den);
      const double db = x > 0.0 ? -a * p * 2.0 * std::log(x) / (den * den) : 0.0;
      const Eigen::Vector2d g(da, db);
      jtj += g * g.transpose();
      jtr += g * r;
    }
    bool accepted = false;
    for (int tries = 0; tries < 50 && !accepted; ++tries) {
      Eigen::Matrix2d damped = jtj;
      damped.diagonal() *= 1.0 + lambda;
      const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
      const double na = a + step(0), nb = b + step(1);
      const double nsse = (na > 0 && nb > 0) ? curve_sse(na, nb, min_dist) : std::numeric_limits<double>::infinity();
      if (std::isfinite(nsse) && nsse <= sse) {
        const double rel = std::fabs(sse - nsse) / std::max(sse, 1e-300);
        a = na;
        b = nb;
        sse = nsse;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        if (rel < 1e-15 && step.norm() < 1e-12) return {a, b};
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;  // no further descent possible: at the minimum
  }
  if (!(a > 0 && b > 0) || !std::isfinite(a) || !std::isfinite(b))
    throw NumericalError("membership curve fit diverged");
  return {a, b};
}

// ---- layout optimisation ----

namespace {

constexpr double kClip = 4.0;
double clip(double v) { return std::clamp(v, -kClip, kClip); }

struct Schedule {
  std::vector<Edge> edges;
  std::vector<double> epochs_per_sample;
  std::vector<double> next_sample;
  std::vector<double> epochs_per_negative;
  std::vector<double> next_negative;
};

Schedule make_schedule(const FuzzyGraph& graph, const UmapConfig& config) {
  Schedule s;
  double max_w = 0.0;
  for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
  const double epochs = static_cast<double>(config.n_epochs);
  for (const auto& e : graph.edges) {
    // Edges too weak to be sampled even once are dropped.
    if (e.weight < max_w / epochs) continue;
    s.edges.push_back(e);
    const double eps = max_w / e.weight;
    s.epochs_per_sample.push_back(eps);
    s.epochs_per_negative.push_back(eps / static_cast<double>(config.negative_sample_rate));
  }
  s.next_sample = s.epochs_per_sample;
  s.next_negative = s.epochs_per_negative;
  return s;
}

// Coordinate access: plain in exact mode, relaxed atomics when workers race.
struct PlainAccess {
  static double load(double& x) { return x; }
  static void add(double& x, double v) { x += v; }
};
struct RacyAccess {
  static double load(double& x) { return std::atomic_ref<double>(x).load(std::memory_order_relaxed); }
  static void add(double& x, double v) {
    std::atomic_ref<double> r(x);
    r.store(r.load(std::memory_order_relaxed) + v, std::memory_order_relaxed);
  }
};

template <class Access>
void run_edges(Schedule& s, std::size_t begin, std::size_t end, std::vector<Point2>& y, const CurveParams& c,
               double alpha, double epoch, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(y.size());
  for (std::size_t i = begin; i < end; ++i) {
    if (s.next_sample[i] > epoch) continue;
    const auto j = s.edges[i].head;
    const auto k = s.edges[i].tail;
    double cur[2] = {Access::load(y[j][0]), Access::load(y[j][1])};
    double oth[2] = {Access::load(y[k][0]), Access::load(y[k][1])};
    double d2 = (cur[0] - oth[0]) * (cur[0] - oth[0]) + (cur[1] - oth[1]) * (cur[1] - oth[1]);
    double coeff = 0.0;
    if (d2 > 0.0) coeff = -2.0 * c.a * c.b * std::pow(d2, c.b - 1.0) / (c.a * std::pow(d2, c.b) + 1.0);
    for (int d = 0; d < 2; ++d) {
      const double g = clip(coeff * (cur[d] - oth[d])) * alpha;
      Access::add(y[j][d], g);
      Access::add(y[k][d], -g);
      cur[d] += g;
    }
    s.next_sample[i] += s.epochs_per_sample[i];

    const auto n_neg = static_cast<std::size_t>((epoch - s.next_negative[i]) / s.epochs_per_negative[i]);
    for (std::size_t p = 0; p < n_neg; ++p) {
      const auto m = static_cast<std::uint32_t>(rng.below(n));
      const double o0 = Access::load(y[m][0]), o1 = Access::load(y[m][1]);
      d2 = (cur[0] - o0) * (cur[0] - o0) + (cur[1] - o1) * (cur[1] - o1);
      if (d2 > 0.0) {
        coeff = 2.0 * c.b / ((0.001 + d2) * (c.a * std::pow(d2, c.b) + 1.0));
      } else if (m == j) {
        continue;
      } else {
        coeff = 0.0;
      }
      const double oth_d[2] = {o0, o1};
      for (int d = 0; d < 2; ++d) {
        const double g = (coeff > 0.0 ? clip(coeff * (cur[d] - oth_d[d])) : kClip) * alpha;
        Access::add(y[j][d], g);
        cur[d] += g;
      }
    }
    s.next_negative[i] += static_cast<double>(n_neg) * s.epochs_per_negative[i];
  }
}

}  // namespace

Layout optimize_layout(const FuzzyGraph& graph, const CurveParams& curve, const UmapConfig& config) {
  Layout out;
  out.coords.resize(graph.n);
  Rng rng(derive_seed(config.seed, "umap-init"));
  for (auto& p : out.coords) {
    p[0] = rng.uniform(-10.0, 10.0);
    p[1] = rng.uniform(-10.0, 10.0);
  }
  Schedule s = make_schedule(graph, config);
  std::vector<bool> has_edge(graph.n, false);
  for (const auto& e : s.edges) has_edge[e.head] = true;
  for (std::size_t i = 0; i < graph.n; ++i)
    if (!has_edge[i]) out.isolated.push_back(i);

  const bool racy = config.mode == LayoutMode::fast && config.workers > 1;
  std::vector<Rng> rngs;
  const std::size_t workers = racy ? config.workers : 1;
  for (std::size_t w = 0; w < workers; ++w) rngs.emplace_back(derive_seed(config.seed, w + 1));

  for (std::size_t epoch = 0; epoch < config.n_epochs; ++epoch) {
    const double alpha = 1.0 - static_cast<double>(epoch) / static_cast<double>(config.n_epochs);
    const double e = static_cast<double>(epoch);
    if (!racy) {
      run_edges<PlainAccess>(s, 0, s.edges.size(), out.coords, curve, alpha, e, rngs[0]);
    } else {
      const std::size_t chunk = (s.edges.size() + workers - 1) / workers;
      parallel_for(workers, workers, [&](std::size_t w0, std::size_t w1) {
        for (std::size_t w = w0; w < w1; ++w) {
          const std::size_t b = std::min(s.edges.size(), w * chunk), en = std::min(s.edges.size(), b + chunk);
          run_edges<RacyAccess>(s, b, en, out.coords, curve, alpha, e, rngs[w]);
        }
      });
    }
    for (std::size_t i = 0; i < out.coords.size(); ++i)
      if (!std::isfinite(out.coords[i][0]) || !std::isfinite(out.coords[i][1]))
        throw NumericalError("layout coordinate of point " + std::to_string(i) + " became non-finite in epoch " +
                             std::to_string(epoch));
  }
  return out;
}

// ---- model ----

ProjectionModel fit(const PointMatrix& points, const UmapConfig& config) {
  config.validate(static_cast<std::size_t>(points.rows()));
  ProjectionModel m;
  m.config = config;
  m.fit_points = unit_rows(points);
  const auto knn = knn_graph(m.fit_points, config.n_neighbors - 1, config.workers);
  const auto graph = fuzzy_graph(knn);
  if (graph.unconverged)
    m.diagnostics.push_back({"umap", std::to_string(graph.unconverged) +
                                         " points hit the bandwidth iteration limit (tied neighbour distances)"});
  m.curve = fit_curve_params(config.min_dist);
  auto layout = optimize_layout(graph, m.curve, config);
  if (!layout.isolated.empty())
    m.diagnostics.push_back(
        {"umap", std::to_string(layout.isolated.size()) + " isolated points kept at random positions"});
  m.fit_layout = std::move(layout.coords);
  return m;
}

ProjectionModel fit(std::span<const EmbeddingVector> vectors, const UmapConfig& config) {
  return fit(unit_rows(vectors), config);
}

Point2 project(const ProjectionModel& model, std::span<const double> vector) {
  const auto n = static_cast<std::size_t>(model.fit_points.rows());
  const auto dim = static_cast<std::size_t>(model.fit_points.cols());
  if (vector.size() != dim) throw InputError("projection: vector has wrong dimension");
  Eigen::Map<const Eigen::VectorXd> raw(vector.data(), static_cast<Eigen::Index>(dim));
  const double norm = raw.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("projection: zero or non-finite vector");
  const Eigen::VectorXd sim = model.fit_points * (raw / norm);

  const std::size_t k = std::min(model.config.n_neighbors, n);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  auto dist = [&](std::uint32_t j) { return std::max(0.0, 1.0 - sim(static_cast<Eigen::Index>(j))); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::uint32_t x, std::uint32_t y) {
                      const double dx = dist(x), dy = dist(y);
                      return dx < dy || (dx == dy && x < y);
                    });
  std::vector<double> ds(k);
  for (std::size_t m = 0; m < k; ++m) ds[m] = dist(order[m]);

  // A query coinciding with fit points takes their fitted position, so the
  // extension agrees with the layout on the sample itself.
  constexpr double kCoincident = 1e-12;
  if (ds[0] <= kCoincident) {
    Point2 y{0.0, 0.0};
    std::size_t c = 0;
    for (; c < k && ds[c] <= kCoincident; ++c) {
      y[0] += model.fit_layout[order[c]][0];
      y[1] += model.fit_layout[order[c]][1];
    }
    return {y[0] / static_cast<double>(c), y[1] / static_cast<double>(c)};
  }
  const double mean = std::accumulate(ds.begin(), ds.end(), 0.0) / static_cast<double>(k);
  const auto bw = smooth_knn(ds, std::log2(static_cast<double>(k)), mean);

  std::vector<double> w(k);
  Point2 y{0.0, 0.0};
  double wsum = 0.0;
  for (std::size_t m = 0; m < k; ++m) {
    w[m] = std::exp(-std::max(0.0, ds[m] - bw.rho) / bw.sigma);
    const auto& p = model.fit_layout[order[m]];
    y[0] += w[m] * p[0];
    y[1] += w[m] * p[1];
    wsum += w[m];
  }
  y[0] /= wsum;
  y[1] /= wsum;

  // Each step moves a fraction in [0, 1] of the way toward one neighbour, so
  // the point never leaves the neighbours' convex hull.
  constexpr int kSteps = 30;
  const auto& c = model.curve;
  for (int s = 0; s < kSteps; ++s) {
    const double alpha = 1.0 - static_cast<double>(s) / kSteps;
    for (std::size_t m = 0; m < k; ++m) {
      const auto& p = model.fit_layout[order[m]];
      const double dx = p[0] - y[0], dy = p[1] - y[1];
      const double d2 = dx * dx + dy * dy;
      if (d2 <= 0.0) continue;
      const double coeff = 2.0 * c.a * c.b * std::pow(d2, c.b - 1.0) / (c.a * std::pow(d2, c.b) + 1.0);
      const double frac = std::min(1.0, alpha * w[m] * coeff);
      y[0] += frac * dx;
      y[1] += frac * dy;
    }
  }
  return y;
}

std::vector<Point2> project_batch(const ProjectionModel& model, std::span<const EmbeddingVector> vectors,
                                  std::size_t workers) {
  std::vector<Point2> out(vectors.size());
  parallel_for(vectors.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = project(model, vectors[i]);
  });
  return out;
}

// ---- persistence: one JSON header line, then raw little-endian doubles ----

FitSample sample_fit_set(std::span<const EmbeddedConversation> conversations, std::size_t per_conversation,
                         std::uint64_t seed) {
  if (conversations.empty()) throw InputError("cannot sample from an empty dataset");
  if (per_conversation == 0) throw ConfigError("per-conversation sample size must be positive");
  FitSample out;
  for (const auto& c : conversations) {
    const std::size_t n = c.vectors.size();
    if (n < per_conversation)
      out.diagnostics.push_back({c.conversation_id, "only " + std::to_string(n) + " turns; all taken"});
    Rng rng(derive_seed(seed, c.conversation_id));
    auto picked = rng.sample_without_replacement(n, per_conversation);
    std::sort(picked.begin(), picked.end());
    for (auto i : picked) out.items.push_back({c.conversation_id, i, c.vectors[i]});
  }
  return out;
}

void save_model(const ProjectionModel& model, const std::filesystem::path& path) {
  nlohmann::json h;
  h["schema"] = "convflow.projection";
  h["version"] = kProjectionSchemaVersion;
  h["config"] = {{"n_neighbors", model.config.n_neighbors},
                 {"min_dist", model.config.min_dist},
                 {"n_epochs", model.config.n_epochs},
                 {"seed", model.config.seed},
                 {"negative_sample_rate", model.config.negative_sample_rate}};
  h["curve"] = {{"a", model.curve.a}, {"b", model.curve.b}};
  h["rows"] = model.fit_points.rows();
  h["dim"] = model.fit_points.cols();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << h.dump() << '\n';
    out.write(reinterpret_cast<const char*>(model.fit_points.data()),
              static_cast<std::streamsize>(model.fit_points.size() * sizeof(double)));
    for (const auto& p : model.fit_layout) out.write(reinterpret_cast<const char*>(p.data()), sizeof(double) * 2);
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ProjectionModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw InputError(path.string() + " is not a projection model");
  }
  if (h.value("schema", "") != "convflow.projection") throw InputError(path.string() + " is not a projection model");
  if (h.value("version", 0) != kProjectionSchemaVersion) throw InputError("unsupported projection model version");
  ProjectionModel m;
  const auto& c = h["config"];
  m.config.n_neighbors = c["n_neighbors"].get<std::size_t>();
  m.config.min_dist = c["min_dist"].get<double>();
  m.config.n_epochs = c["n_epochs"].get<std::size_t>();
  m.config.seed = c["seed"].get<std::uint64_t>();
  m.config.negative_sample_rate = c["negative_sample_rate"].get<std::size_t>();
  m.curve = {h["curve"]["a"].get<double>(), h["curve"]["b"].get<double>()};
  const auto rows = h["rows"].get<Eigen::Index>(), dim = h["dim"].get<Eigen::Index>();
  m.fit_points.resize(rows, dim);
  in.read(reinterpret_cast<char*>(m.fit_points.data()), static_cast<std::streamsize>(rows * dim * sizeof(double)));
  m.fit_layout.resize(static_cast<std::size_t>(rows));
  for (auto& p : m.fit_layout) in.read(reinterpret_cast<char*>(p.data()), sizeof(double) * 2);
  if (!in) throw InputError("truncated projection model " + path.string());
  return m;
}

}  // namespace convflow::umap
