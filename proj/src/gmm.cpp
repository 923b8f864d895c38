#include "convflow/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <json.hpp>
#include <numbers>
#include <optional>

#include "convflow/csv.hpp"
#include "convflow/error.hpp"
#include "convflow/hash.hpp"
#include "convflow/io.hpp"
#include "convflow/parallel.hpp"
#include "convflow/random.hpp"
#include "convflow/text.hpp"

namespace convflow::gmm {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::spherical: return "spherical";
    case Family::diagonal: return "diagonal";
    case Family::full: return "full";
  }
  return "?";
}

Family parse_family(std::string_view s) {
  const auto l = text::to_lower_ascii(s);
  if (l == "spherical") return Family::spherical;
  if (l == "diagonal") return Family::diagonal;
  if (l == "full") return Family::full;
  throw ConfigError("unknown covariance family '" + std::string(s) + "'");
}

std::size_t parameter_count(std::size_t k, Family family) {
  const std::size_t cov = family == Family::spherical ? 1 : family == Family::diagonal ? 2 : 3;
  return (k - 1) + 2 * k + cov * k;
}

double bic(std::size_t n_params, double log_likelihood, std::size_t n) {
  return static_cast<double>(n_params) * std::log(static_cast<double>(n)) - 2.0 * log_likelihood;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2 pi)
constexpr int kCollapseLimit = 5;

// Cached inverse and log normaliser of one 2-D Gaussian.
struct Density {
  double mx, my, i00, i01, i11, log_norm;

  static Density make(const Point2& mean, const Eigen::Matrix2d& cov, double log_weight) {
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (!(det > 0.0) || !std::isfinite(det)) throw NumericalError("covariance is not positive definite");
    return {mean[0],
            mean[1],
            cov(1, 1) / det,
            -cov(0, 1) / det,
            cov(0, 0) / det,
            log_weight - kLog2Pi - 0.5 * std::log(det)};
  }

  double log_pdf(const Point2& p) const {
    const double dx = p[0] - mx, dy = p[1] - my;
    return log_norm - 0.5 * (dx * dx * i00 + 2.0 * dx * dy * i01 + dy * dy * i11);
  }
};

std::vector<Density> densities(const GmmModel& m) {
  std::vector<Density> d;
  d.reserve(m.n_components);
  for (std::size_t c = 0; c < m.n_components; ++c)
    d.push_back(Density::make(m.means[c], m.covariances[c], std::log(m.weights[c])));
  return d;
}

// Log-sum-exp over components; fills normalised responsibilities into `r`.
double point_responsibilities(const std::vector<Density>& dens, const Point2& p, double* r) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < dens.size(); ++c) {
    r[c] = dens[c].log_pdf(p);
    mx = std::max(mx, r[c]);
  }
  double s = 0.0;
  for (std::size_t c = 0; c < dens.size(); ++c) {
    r[c] = std::exp(r[c] - mx);
    s += r[c];
  }
  for (std::size_t c = 0; c < dens.size(); ++c) r[c] /= s;
  return mx + std::log(s);
}

Eigen::Matrix2d constrain(const Eigen::Matrix2d& cov, Family family) {
  Eigen::Matrix2d out = Eigen::Matrix2d::Zero();
  switch (family) {
    case Family::full:
      out = cov;
      out(0, 1) = out(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
      break;
    case Family::diagonal:
      out(0, 0) = cov(0, 0);
      out(1, 1) = cov(1, 1);
      break;
    case Family::spherical:
      out(0, 0) = out(1, 1) = 0.5 * cov.trace();
      break;
  }
  out(0, 0) += kCovarianceFloor;
  out(1, 1) += kCovarianceFloor;
  return out;
}

Eigen::Matrix2d sample_covariance(std::span<const Point2> pts) {
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p[0];
    my += p[1];
  }
  const double n = static_cast<double>(pts.size());
  mx /= n;
  my /= n;
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const double dx = p[0] - mx, dy = p[1] - my;
    c(0, 0) += dx * dx;
    c(0, 1) += dx * dy;
    c(1, 1) += dy * dy;
  }
  c(1, 0) = c(0, 1);
  return c / n;
}

// Responsibility-weighted sums about a component's mean at E-step time.
// Taking moments about that origin keeps the variance subtraction well
// conditioned.
struct Moments {
  double w = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;

  void add(double r, double dx, double dy) {
    const double rx = r * dx, ry = r * dy;
    w += r;
    sx += rx;
    sy += ry;
    sxx += rx * dx;
    sxy += rx * dy;
    syy += ry * dy;
  }
};

// E-step fused with M-step accumulation: one pass over the points computes
// each point's responsibilities and adds them to the component moments.
// Terms below e^-40 of a point's largest term cannot change its sum in double
// precision, so their exp() is skipped and their responsibility taken as 0.
double expectation(const GmmModel& m, std::span<const Point2> pts, std::vector<Moments>& mom) {
  constexpr double kNegligible = -40.0;
  const auto dens = densities(m);
  const std::size_t k = dens.size();
  mom.assign(k, Moments{});
  std::vector<double> z(k), dx(k), dy(k);
  double ll = 0.0;
  for (const auto& p : pts) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const auto& d = dens[c];
      dx[c] = p[0] - d.mx;
      dy[c] = p[1] - d.my;
      z[c] = d.log_norm - 0.5 * (dx[c] * dx[c] * d.i00 + 2.0 * dx[c] * dy[c] * d.i01 + dy[c] * dy[c] * d.i11);
      mx = std::max(mx, z[c]);
    }
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double t = z[c] - mx;
      z[c] = t < kNegligible ? 0.0 : std::exp(t);
      s += z[c];
    }
    ll += mx + std::log(s);
    for (std::size_t c = 0; c < k; ++c)
      if (z[c] > 0.0) mom[c].add(z[c] / s, dx[c], dy[c]);
  }
  return ll;
}

// M-step from accumulated moments. A component with an effective count below
// two points keeps its previous covariance, so the step still cannot lower
// the likelihood: its mean and weight remain the exact maximizers for that
// covariance.
std::vector<bool> maximize(GmmModel& m, const std::vector<Moments>& mom) {
  const std::size_t k = m.n_components;
  const auto n = static_cast<double>(m.n_points);
  std::vector<bool> collapsed(k, false);
  double wsum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& a = mom[c];
    collapsed[c] = a.w < 2.0;
    if (a.w > 0.0) {
      const double sx = a.sx / a.w, sy = a.sy / a.w;
      m.means[c] = {m.means[c][0] + sx, m.means[c][1] + sy};
      if (!collapsed[c]) {
        const double cxy = a.sxy / a.w - sx * sy;
        Eigen::Matrix2d cov;
        cov << std::max(0.0, a.sxx / a.w - sx * sx), cxy, cxy, std::max(0.0, a.syy / a.w - sy * sy);
        m.covariances[c] = constrain(cov, m.family);
      }
    }
    m.weights[c] = std::max(a.w / n, kMinWeight);
    wsum += m.weights[c];
  }
  for (auto& w : m.weights) w /= wsum;
  return collapsed;
}

std::vector<Point2> kmeans_init(std::span<const Point2> pts, std::size_t k, Rng& rng, std::vector<std::size_t>& label) {
  const std::size_t n = pts.size();
  auto d2 = [](const Point2& a, const Point2& b) {
    return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
  };
  std::vector<Point2> centers;
  centers.push_back(pts[rng.below(n)]);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], d2(pts[i], centers.back()));
      total += best[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= best[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    centers.push_back(pts[pick]);
  }
  label.assign(n, 0);
  for (int step = 0; step < 10; ++step) {
    for (std::size_t i = 0; i < n; ++i) {
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = d2(pts[i], centers[c]);
        if (d < bd) {
          bd = d;
          label[i] = c;
        }
      }
    }
    std::vector<Point2> sum(k, Point2{0.0, 0.0});
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[label[i]][0] += pts[i][0];
      sum[label[i]][1] += pts[i][1];
      ++cnt[label[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (cnt[c]) centers[c] = {sum[c][0] / static_cast<double>(cnt[c]), sum[c][1] / static_cast<double>(cnt[c])};
  }
  return centers;
}

}  // namespace

GmmModel em_fit(std::span<const Point2> pts, std::size_t k, Family family, std::uint64_t seed, EmOptions options) {
  const std::size_t n = pts.size();
  if (k == 0) throw InputError("em_fit: k must be positive");
  if (k > n) throw InputError("em_fit: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  for (const auto& p : pts)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw InputError("em_fit: non-finite point");

  Rng rng(seed);
  std::vector<std::size_t> label;
  auto centers = kmeans_init(pts, k, rng, label);

  GmmModel m;
  m.n_components = k;
  m.family = family;
  m.n_points = n;
  m.weights.assign(k, 1.0 / static_cast<double>(k));
  m.means = centers;
  // A k-means cluster too small to estimate a covariance starts from the
  // regularized data covariance.
  m.covariances.assign(k, constrain(sample_covariance(pts), family));

  std::vector<Moments> mom(k);
  for (std::size_t i = 0; i < n; ++i)
    mom[label[i]].add(1.0, pts[i][0] - centers[label[i]][0], pts[i][1] - centers[label[i]][1]);
  std::vector<int> collapse_run(k, 0);
  auto m_step = [&] {
    const auto collapsed = maximize(m, mom);
    if (std::find(collapsed.begin(), collapsed.end(), true) != collapsed.end()) ++m.held_covariance_steps;
    for (std::size_t c = 0; c < k; ++c) {
      collapse_run[c] = collapsed[c] ? collapse_run[c] + 1 : 0;
      if (collapse_run[c] >= kCollapseLimit)
        throw NumericalError("component " + std::to_string(c) + " collapsed onto fewer than 2 points");
    }
  };
  m_step();

  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iter; ++it) {
    const double ll = expectation(m, pts, mom);
    if (!std::isfinite(ll)) throw NumericalError("em_fit: non-finite log-likelihood");
    m.log_likelihood_trace.push_back(ll);
    m.log_likelihood = ll;
    m.iterations = it + 1;
    if (it > 0 && std::fabs(ll - prev) <= options.tol * std::fabs(ll)) {
      m.converged = true;
      break;
    }
    prev = ll;
    if (it + 1 < options.max_iter) m_step();
  }
  m.n_params = parameter_count(k, family);
  m.bic = bic(m.n_params, m.log_likelihood, n);
  return m;
}

double log_likelihood(const GmmModel& model, std::span<const Point2> points) {
  const auto dens = densities(model);
  std::vector<double> r(model.n_components);
  double ll = 0.0;
  for (const auto& p : points) ll += point_responsibilities(dens, p, r.data());
  return ll;
}

std::vector<double> responsibilities(const GmmModel& model, const Point2& point) {
  const auto dens = densities(model);
  std::vector<double> r(model.n_components);
  point_responsibilities(dens, point, r.data());
  return r;
}

ClusterAssignment assign(const GmmModel& model, const Point2& point) {
  const auto r = responsibilities(model, point);
  ClusterAssignment a{0, r[0]};
  for (std::size_t c = 1; c < r.size(); ++c)
    if (r[c] > a.posterior) a = {c, r[c]};
  return a;
}

Selection select_model(std::span<const Point2> points, const SelectionOptions& o) {
  if (o.k_min == 0 || o.k_max < o.k_min) throw ConfigError("invalid k range");
  if (o.families.empty()) throw ConfigError("no covariance families selected");
  if (o.restarts == 0) throw ConfigError("restarts must be positive");
  if (points.size() <= o.k_max)
    throw InputError("select_model needs more points (" + std::to_string(points.size()) + ") than k_max (" +
                     std::to_string(o.k_max) + ")");

  struct Cell {
    std::size_t k;
    Family family;
  };
  std::vector<Cell> cells;
  for (std::size_t k = o.k_min; k <= o.k_max; ++k)
    for (auto f : o.families) cells.push_back({k, f});

  const std::size_t tasks = cells.size() * o.restarts;
  std::vector<std::optional<GmmModel>> fits(tasks);
  const std::uint64_t stream = derive_seed(o.seed, "gmm");
  parallel_for(tasks, o.workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      const auto& cell = cells[t / o.restarts];
      try {
        fits[t] = em_fit(points, cell.k, cell.family, derive_seed(stream, t), o.em);
      } catch (const NumericalError&) {
        // this restart failed; others in the cell may succeed
      }
    }
  });

  Selection sel;
  std::optional<std::size_t> winner;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::optional<std::size_t> best;
    std::size_t used = 0;
    double drop = 0.0;
    for (std::size_t r = 0; r < o.restarts; ++r) {
      const auto t = c * o.restarts + r;
      if (!fits[t]) continue;
      ++used;
      const auto& trace = fits[t]->log_likelihood_trace;
      for (std::size_t i = 1; i < trace.size(); ++i) drop = std::max(drop, trace[i - 1] - trace[i]);
      if (!best || fits[t]->log_likelihood > fits[*best]->log_likelihood) best = t;
    }
    if (!best) continue;
    const auto& m = *fits[*best];
    sel.table.push_back({cells[c].k, cells[c].family, used, m.log_likelihood, m.bic, drop});
    if (!winner || m.bic < fits[*winner]->bic) winner = best;
  }
  if (!winner) throw NumericalError("every mixture fit failed (degenerate data)");
  sel.model = std::move(*fits[*winner]);
  return sel;
}

void write_bic_table(std::ostream& out, const std::vector<BicRow>& table) {
  out << "k,family,restarts_used,log_likelihood,bic\n";
  for (const auto& r : table)
    out << r.k << ',' << to_string(r.family) << ',' << r.restarts_used << ',' << csv::format_double(r.log_likelihood)
        << ',' << csv::format_double(r.bic) << '\n';
}

void save_model(const GmmModel& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema"] = "convflow.gmm";
  j["version"] = kModelSchemaVersion;
  j["n_components"] = m.n_components;
  j["family"] = std::string(to_string(m.family));
  j["weights"] = m.weights;
  j["means"] = m.means;
  auto covs = nlohmann::json::array();
  for (const auto& c : m.covariances) covs.push_back({c(0, 0), c(0, 1), c(1, 1)});
  j["covariances"] = covs;
  j["log_likelihood"] = m.log_likelihood;
  j["n_params"] = m.n_params;
  j["bic"] = m.bic;
  j["n_points"] = m.n_points;
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  j["held_covariance_steps"] = m.held_covariance_steps;
  io::write_file_atomic(path, j.dump(1) + "\n");
}

GmmModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception&) {
    throw InputError(path.string() + " is not a mixture model");
  }
  if (j.value("schema", "") != "convflow.gmm") throw InputError(path.string() + " is not a mixture model");
  if (j.value("version", 0) != kModelSchemaVersion) throw InputError("unsupported mixture model version");
  GmmModel m;
  m.n_components = j["n_components"].get<std::size_t>();
  m.family = parse_family(j["family"].get<std::string>());
  m.weights = j["weights"].get<std::vector<double>>();
  m.means = j["means"].get<std::vector<Point2>>();
  for (const auto& c : j["covariances"]) {
    Eigen::Matrix2d cov;
    cov << c[0].get<double>(), c[1].get<double>(), c[1].get<double>(), c[2].get<double>();
    m.covariances.push_back(cov);
  }
  m.log_likelihood = j["log_likelihood"].get<double>();
  m.n_params = j["n_params"].get<std::size_t>();
  m.bic = j["bic"].get<double>();
  m.n_points = j["n_points"].get<std::size_t>();
  m.iterations = j["iterations"].get<int>();
  m.converged = j["converged"].get<bool>();
  m.held_covariance_steps = j.value("held_covariance_steps", 0);
  return m;
}

}  // namespace convflow::gmm
