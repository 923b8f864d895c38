#include "convflow/dyad.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <map>
#include <yaml-cpp/yaml.h>

#include "convflow/csv.hpp"
#include "convflow/io.hpp"
#include "convflow/parallel.hpp"

namespace convflow::dyad {

namespace {

constexpr std::array<std::string_view, kTraitCount> kShort{"extra", "agree", "consc", "neuro", "open"};
constexpr std::array<std::string_view, kTraitCount> kLong{"extraversion", "agreeableness", "conscientiousness",
                                                          "neuroticism", "openness"};

std::size_t item_index(std::string_view name) {
  for (std::size_t i = 0; i < kSurveyItems; ++i)
    if (kSurveyItemNames[i] == name) return i;
  throw ConfigError("unknown survey item '" + std::string(name) + "'");
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string_view trait_short_name(Trait t) { return kShort[static_cast<std::size_t>(t)]; }

Trait parse_trait(std::string_view name) {
  for (std::size_t i = 0; i < kTraitCount; ++i)
    if (kShort[i] == name || kLong[i] == name) return kTraits[i];
  throw ConfigError("unknown trait '" + std::string(name) + "'");
}

ScoringConfig ScoringConfig::defaults() {
  ScoringConfig c;
  const std::array<char, kTraitCount> prefix{'e', 'a', 'c', 'n', 'o'};
  for (std::size_t t = 0; t < kTraitCount; ++t)
    for (std::size_t i = 0; i < kSurveyItems; ++i)
      if (kSurveyItemNames[i][0] == prefix[t]) c.items[t].push_back(i);
  return c;
}

ScoringConfig ScoringConfig::load(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot read scoring config " + path.string() + ": " + e.what());
  }
  ScoringConfig c;
  try {
    if (!root["traits"] || !root["traits"].IsMap()) throw ConfigError("scoring config needs a 'traits' map");
    for (const auto& kv : root["traits"]) {
      const auto t = static_cast<std::size_t>(parse_trait(kv.first.as<std::string>()));
      for (const auto& item : kv.second) c.items[t].push_back(item_index(item.as<std::string>()));
    }
    if (root["reverse"])
      for (const auto& item : root["reverse"]) c.reversed.insert(item_index(item.as<std::string>()));
    if (root["scale_max"]) c.scale_max = root["scale_max"].as<int>();
  } catch (const YAML::Exception& e) {
    throw ConfigError("bad scoring config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void ScoringConfig::validate() const {
  if (scale_max < 2) throw ConfigError("scale_max must be at least 2");
  for (std::size_t t = 0; t < kTraitCount; ++t) {
    if (items[t].empty()) throw ConfigError("trait " + std::string(kLong[t]) + " has no items");
    for (auto i : items[t])
      if (i >= kSurveyItems) throw ConfigError("item index out of range");
  }
  for (auto i : reversed)
    if (i >= kSurveyItems) throw ConfigError("reverse item index out of range");
}

std::array<double, kTraitCount> trait_scores(const SurveyRecord& record, const ScoringConfig& scoring) {
  std::array<double, kTraitCount> out{};
  for (std::size_t t = 0; t < kTraitCount; ++t) {
    double sum = 0.0;
    for (auto i : scoring.items[t]) {
      const int x = record.personality_items[i];
      if (x < 1 || x > scoring.scale_max)
        throw InputError("item " + std::string(kSurveyItemNames[i]) + " missing or out of range for " +
                         record.conversation_id + "/" + std::string(1, speaker_char(record.speaker)));
      sum += scoring.reversed.contains(i) ? scoring.scale_max + 1 - x : x;
    }
    out[t] = sum / static_cast<double>(scoring.items[t].size());
  }
  return out;
}

const std::vector<std::string>& variable_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v{"topic_entropy", "LA_intercept_term", "LA_linear_term", "LA_quad_term"};
    for (auto s : kShort) v.push_back(std::string(s) + "_mean");
    for (auto s : kShort) v.push_back(std::string(s) + "_diff");
    for (auto s : {"pre_aff_mean", "post_aff_mean", "aff_chg_mean", "aff_chg_diff"}) v.emplace_back(s);
    return v;
  }();
  return names;
}

double& variable(DyadFeatures& f, std::string_view name) {
  if (name == "topic_entropy") return f.topic_entropy;
  if (name == "LA_intercept_term") return f.la_intercept;
  if (name == "LA_linear_term") return f.la_linear;
  if (name == "LA_quad_term") return f.la_quadratic;
  if (name == "pre_aff_mean") return f.pre_affect_mean;
  if (name == "post_aff_mean") return f.post_affect_mean;
  if (name == "aff_chg_mean") return f.affect_change_mean;
  if (name == "aff_chg_diff") return f.affect_change_diff;
  for (std::size_t t = 0; t < kTraitCount; ++t) {
    if (name.starts_with(kShort[t]) && name.size() == kShort[t].size() + 5) {
      const auto suffix = name.substr(kShort[t].size());
      if (suffix == "_mean") return f.trait_mean[t];
      if (suffix == "_diff") return f.trait_diff[t];
    }
  }
  throw InputError("unknown variable '" + std::string(name) + "'");
}

double variable(const DyadFeatures& f, std::string_view name) {
  return variable(const_cast<DyadFeatures&>(f), name);
}

FeatureBuild build_dyad_features(std::span<const SurveyRecord> surveys, std::span<const ConversationMetrics> metrics,
                                 const ScoringConfig& scoring) {
  scoring.validate();
  std::map<std::string, std::array<const SurveyRecord*, 2>> by_conv;
  for (const auto& r : surveys) by_conv[r.conversation_id][static_cast<std::size_t>(r.speaker)] = &r;
  std::map<std::string, const ConversationMetrics*> metric_of;
  for (const auto& m : metrics) metric_of[m.conversation_id] = &m;

  FeatureBuild out;
  for (const auto& [id, m] : metric_of) {
    auto it = by_conv.find(id);
    if (it == by_conv.end() || !it->second[0] || !it->second[1]) {
      out.diagnostics.push_back({id, "missing speaker survey; conversation dropped"});
      continue;
    }
    const SurveyRecord& a = *it->second[0];
    const SurveyRecord& b = *it->second[1];
    DyadFeatures f;
    f.conversation_id = id;
    try {
      const auto ta = trait_scores(a, scoring), tb = trait_scores(b, scoring);
      for (std::size_t t = 0; t < kTraitCount; ++t) {
        f.trait_mean[t] = (ta[t] + tb[t]) / 2.0;
        f.trait_diff[t] = std::fabs(ta[t] - tb[t]);
      }
    } catch (const InputError& e) {
      out.diagnostics.push_back({id, std::string(e.what()) + "; conversation dropped"});
      continue;
    }
    const double da = a.affect_post - a.affect_pre, db = b.affect_post - b.affect_pre;
    f.pre_affect_mean = (a.affect_pre + b.affect_pre) / 2.0;
    f.post_affect_mean = (a.affect_post + b.affect_post) / 2.0;
    f.affect_change_mean = (da + db) / 2.0;
    f.affect_change_diff = std::fabs(da - db);
    f.topic_entropy = m->topic_entropy;
    f.la_intercept = m->alignment.intercept;
    f.la_linear = m->alignment.linear;
    f.la_quadratic = m->alignment.quadratic;
    bool finite = true;
    for (const auto& name : variable_names()) finite = finite && std::isfinite(variable(f, name));
    if (!finite) {
      out.diagnostics.push_back({id, "non-finite feature; conversation dropped"});
      continue;
    }
    out.rows.push_back(std::move(f));
  }
  for (const auto& [id, pair] : by_conv)
    if (!metric_of.contains(id)) out.diagnostics.push_back({id, "survey without conversation metrics; ignored"});
  return out;
}

Descriptives descriptives(std::span<const DyadFeatures> features) {
  if (features.empty()) throw InputError("descriptives of an empty feature table");
  Descriptives d;
  const double n = static_cast<double>(features.size());
  for (const auto& name : variable_names()) {
    DescriptiveRow row{name, 0.0, 0.0, std::numeric_limits<double>::infinity(),
                       -std::numeric_limits<double>::infinity()};
    for (const auto& f : features) {
      const double v = variable(f, name);
      row.mean += v;
      row.min = std::min(row.min, v);
      row.max = std::max(row.max, v);
    }
    row.mean /= n;
    if (features.size() > 1) {
      double ss = 0.0;
      for (const auto& f : features) ss += (variable(f, name) - row.mean) * (variable(f, name) - row.mean);
      row.sd = std::sqrt(ss / (n - 1.0));
    }
    d.rows.push_back(std::move(row));
  }
  if (features.size() == 1) d.diagnostics.push_back({"descriptives", "single row; SD reported as 0"});
  return d;
}

double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw NumericalError("t distribution needs positive degrees of freedom");
  if (std::isnan(t)) throw NumericalError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  if (x >= 1.0) return 1.0;
  return std::clamp(boost::math::ibeta(df / 2.0, 0.5, x), 0.0, 1.0);
}

std::string_view signif_code(double p) {
  if (p <= 0.001) return "***";
  if (p <= 0.01) return "**";
  if (p <= 0.05) return "*";
  if (p <= 0.1) return ".";
  return "";
}

std::string format_p(double p) {
  if (p < 1e-300) return "< 1e-300";
  if (p >= 0.01) return fixed2(p);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", p);
  return buf;
}

RegressionReport ols_inference(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome,
                               const std::vector<std::string>& names, std::string model, std::string outcome_name) {
  const auto n = design.rows(), p = design.cols();
  if (outcome.size() != n) throw InputError("design and outcome row counts differ");
  if (static_cast<Eigen::Index>(names.size()) != p) throw InputError("one name per design column required");
  if (n <= p) throw NumericalError("ols needs more observations than predictors");
  if (!design.allFinite() || !outcome.allFinite()) throw NumericalError("non-finite value in regression data");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p) throw NumericalError("rank-deficient design in " + model);
  const Eigen::VectorXd beta = qr.solve(outcome);
  const Eigen::VectorXd resid = outcome - design * beta;
  const double rss = resid.squaredNorm();
  const double tss = (outcome.array() - outcome.mean()).matrix().squaredNorm();
  const auto df = static_cast<double>(n - p);
  // A fit exact to working precision gets zero residual variance.
  const bool exact = std::sqrt(rss) <= 1e-12 * std::max(outcome.norm(), std::numeric_limits<double>::min());
  const double sigma2 = exact ? 0.0 : rss / df;

  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * (r_inv * r_inv.transpose()) * perm.transpose();

  RegressionReport rep;
  rep.model = std::move(model);
  rep.outcome = std::move(outcome_name);
  rep.n = static_cast<std::size_t>(n);
  rep.residual_df = static_cast<std::size_t>(n - p);
  rep.residual_se = std::sqrt(sigma2);
  rep.r_squared = tss > 0.0 ? 1.0 - (exact ? 0.0 : rss) / tss : 1.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.predictor = names[static_cast<std::size_t>(j)];
    c.estimate = beta(j);
    c.std_error = std::sqrt(sigma2 * std::max(0.0, xtx_inv(j, j)));
    if (c.std_error > 0.0) {
      c.t_stat = c.estimate / c.std_error;
    } else {
      c.t_stat = c.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
    }
    c.p_value = t_two_sided_p(c.t_stat, df);
    c.signif = std::string(signif_code(c.p_value));
    rep.rows.push_back(std::move(c));
  }
  return rep;
}

const std::vector<ModelSpec>& model_specs() {
  static const std::vector<ModelSpec> specs = [] {
    std::vector<std::string> personality;
    for (auto s : kShort) personality.push_back(std::string(s) + "_mean");
    for (auto s : kShort) personality.push_back(std::string(s) + "_diff");
    auto with = [&](std::vector<std::string> head) {
      head.insert(head.end(), personality.begin(), personality.end());
      return head;
    };
    return std::vector<ModelSpec>{
        {"model1", "topic_entropy", personality},
        {"model2", "LA_linear_term", personality},
        {"model2b", "LA_quad_term", personality},
        {"model3", "aff_chg_diff", with({"aff_chg_mean"})},
        {"model4", "aff_chg_mean", with({"topic_entropy", "LA_intercept_term", "LA_linear_term", "LA_quad_term"})},
    };
  }();
  return specs;
}

RegressionReport fit_model(std::span<const DyadFeatures> features, const ModelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(features.size());
  const auto p = static_cast<Eigen::Index>(spec.predictors.size() + 1);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = features[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) x(i, j) = variable(f, spec.predictors[static_cast<std::size_t>(j - 1)]);
    y(i) = variable(f, spec.outcome);
  }
  std::vector<std::string> names{"(Intercept)"};
  names.insert(names.end(), spec.predictors.begin(), spec.predictors.end());
  return ols_inference(x, y, names, spec.name, spec.outcome);
}

std::vector<RegressionReport> run_models(std::span<const DyadFeatures> features, std::size_t workers) {
  const auto& specs = model_specs();
  std::vector<RegressionReport> out(specs.size());
  parallel_for(specs.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = fit_model(features, specs[i]);
  });
  return out;
}

void write_features_csv(std::ostream& out, std::span<const DyadFeatures> features) {
  out << "conversation_id";
  for (const auto& name : variable_names()) out << ',' << name;
  out << '\n';
  for (const auto& f : features) {
    out << csv::escape(f.conversation_id);
    for (const auto& name : variable_names()) out << ',' << csv::format_double(variable(f, name));
    out << '\n';
  }
}

std::vector<DyadFeatures> read_features_csv(std::istream& in) {
  csv::Reader reader(in);
  auto head = reader.next();
  if (!head) throw InputError("features CSV has no header");
  const csv::Header header(*head);
  const auto c_id = header.require("conversation_id");
  std::vector<std::pair<std::string, std::size_t>> cols;
  for (const auto& name : variable_names()) cols.emplace_back(name, header.require(name));
  std::vector<DyadFeatures> out;
  while (auto row = reader.next()) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() != head->size()) throw InputError("features CSV line " + std::to_string(reader.line()) + ": wrong field count");
    DyadFeatures f;
    f.conversation_id = (*row)[c_id];
    for (const auto& [name, col] : cols)
      if (!io::parse_double((*row)[col], variable(f, name)))
        throw InputError("features CSV line " + std::to_string(reader.line()) + ": bad number in " + name);
    out.push_back(std::move(f));
  }
  return out;
}

void write_descriptives_csv(std::ostream& out, const Descriptives& d) {
  out << "variable,mean,sd,min,max\n";
  for (const auto& r : d.rows)
    out << r.variable << ',' << csv::format_double(r.mean) << ',' << csv::format_double(r.sd) << ','
        << csv::format_double(r.min) << ',' << csv::format_double(r.max) << '\n';
}

Descriptives read_descriptives_csv(std::istream& in) {
  csv::Reader reader(in);
  auto head = reader.next();
  if (!head) throw InputError("descriptives CSV has no header");
  const csv::Header header(*head);
  const auto cv = header.require("variable"), cm = header.require("mean"), cs = header.require("sd"),
             cmin = header.require("min"), cmax = header.require("max");
  Descriptives d;
  while (auto row = reader.next()) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() != head->size()) throw InputError("descriptives CSV: wrong field count");
    DescriptiveRow r;
    r.variable = (*row)[cv];
    if (!io::parse_double((*row)[cm], r.mean) || !io::parse_double((*row)[cs], r.sd) ||
        !io::parse_double((*row)[cmin], r.min) || !io::parse_double((*row)[cmax], r.max))
      throw InputError("descriptives CSV: bad number for " + r.variable);
    d.rows.push_back(std::move(r));
  }
  return d;
}

namespace {

void pad(std::ostream& out, const std::string& s, std::size_t width, bool right) {
  if (right) out << std::string(width > s.size() ? width - s.size() : 0, ' ') << s;
  else out << s << std::string(width > s.size() ? width - s.size() : 0, ' ');
}

}  // namespace

void write_descriptives_text(std::ostream& out, const Descriptives& d) {
  std::size_t w = 8;
  for (const auto& r : d.rows) w = std::max(w, r.variable.size());
  pad(out, "Variable", w + 2, false);
  for (auto h : {"Mean", "SD", "Min.", "Max."}) pad(out, h, 9, true);
  out << '\n';
  for (const auto& r : d.rows) {
    pad(out, r.variable, w + 2, false);
    for (double v : {r.mean, r.sd, r.min, r.max}) pad(out, fixed2(v), 9, true);
    out << '\n';
  }
}

void write_report_text(std::ostream& out, const RegressionReport& report) {
  out << report.model << ": " << report.outcome << " (n = " << report.n << ", residual df = " << report.residual_df
      << ", R^2 = " << fixed2(report.r_squared) << ")\n";
  std::size_t w = 8;
  for (const auto& c : report.rows) w = std::max(w, c.predictor.size());
  pad(out, "Variable", w + 2, false);
  pad(out, "Est.", 9, true);
  pad(out, "SE", 9, true);
  out << "  Pr(>|t|)\n";
  for (const auto& c : report.rows) {
    pad(out, c.predictor, w + 2, false);
    pad(out, fixed2(c.estimate), 9, true);
    pad(out, fixed2(c.std_error), 9, true);
    out << "  " << format_p(c.p_value);
    if (!c.signif.empty()) out << ' ' << c.signif;
    out << '\n';
  }
  out << "Significance codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n";
}

std::string reports_json(std::span<const RegressionReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : r.rows)
      rows.push_back({{"predictor", c.predictor},
                      {"estimate", c.estimate},
                      {"std_error", c.std_error},
                      {"t_stat", finite_or_null(c.t_stat)},
                      {"p_value", c.p_value},
                      {"signif", c.signif},
                      {"display", {{"estimate", fixed2(c.estimate)},
                                   {"std_error", fixed2(c.std_error)},
                                   {"p_value", format_p(c.p_value)}}}});
    arr.push_back({{"model", r.model},
                   {"outcome", r.outcome},
                   {"n", r.n},
                   {"residual_df", r.residual_df},
                   {"residual_se", r.residual_se},
                   {"r_squared", r.r_squared},
                   {"coefficients", std::move(rows)}});
  }
  return arr.dump(2) + "\n";
}

std::vector<RegressionReport> reports_from_json(std::string_view text) {
  std::vector<RegressionReport> out;
  try {
    const auto arr = nlohmann::json::parse(text);
    for (const auto& j : arr) {
      RegressionReport r;
      r.model = j.at("model").get<std::string>();
      r.outcome = j.at("outcome").get<std::string>();
      r.n = j.at("n").get<std::size_t>();
      r.residual_df = j.at("residual_df").get<std::size_t>();
      r.residual_se = j.at("residual_se").get<double>();
      r.r_squared = j.at("r_squared").get<double>();
      for (const auto& c : j.at("coefficients")) {
        Coefficient k;
        k.predictor = c.at("predictor").get<std::string>();
        k.estimate = c.at("estimate").get<double>();
        k.std_error = c.at("std_error").get<double>();
        const auto& t = c.at("t_stat");
        k.t_stat = t.is_null() ? std::copysign(std::numeric_limits<double>::infinity(), k.estimate) : t.get<double>();
        k.p_value = c.at("p_value").get<double>();
        k.signif = c.at("signif").get<std::string>();
        r.rows.push_back(std::move(k));
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model report: ") + e.what());
  }
  return out;
}

}  // namespace convflow::dyad
