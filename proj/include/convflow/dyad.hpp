#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "convflow/alignment.hpp"
#include "convflow/corpus.hpp"
#include "convflow/error.hpp"

namespace convflow::dyad {

enum class Trait { extraversion, agreeableness, conscientiousness, neuroticism, openness };
inline constexpr std::size_t kTraitCount = 5;
inline constexpr std::array<Trait, kTraitCount> kTraits{Trait::extraversion, Trait::agreeableness,
                                                        Trait::conscientiousness, Trait::neuroticism,
                                                        Trait::openness};

/// "extra", "agree", "consc", "neuro", "open".
std::string_view trait_short_name(Trait t);
Trait parse_trait(std::string_view name);

/// Item indices (into kSurveyItemNames) per trait, plus the reverse-coded set.
/// Reverse coding maps x to (scale_max + 1 - x).
struct ScoringConfig {
  std::array<std::vector<std::size_t>, kTraitCount> items;
  std::set<std::size_t> reversed;
  int scale_max = 5;

  /// Three items per trait taken from the column prefixes, no reversal.
  static ScoringConfig defaults();
  /// YAML: `traits: {openness: [o1, o2, o3], ...}`, `reverse: [o2]`, `scale_max: 5`.
  static ScoringConfig load(const std::filesystem::path& path);
  void validate() const;
};

/// Trait means in kTraits order. Throws InputError when an item is outside
/// 1..scale_max (0 marks a missing answer).
std::array<double, kTraitCount> trait_scores(const SurveyRecord& record, const ScoringConfig& scoring);

struct ConversationMetrics {
  std::string conversation_id;
  double topic_entropy = 0.0;
  AlignmentFit alignment;
};

struct DyadFeatures {
  std::string conversation_id;
  std::array<double, kTraitCount> trait_mean{};
  std::array<double, kTraitCount> trait_diff{};
  double pre_affect_mean = 0.0;
  double post_affect_mean = 0.0;
  double affect_change_mean = 0.0;
  double affect_change_diff = 0.0;
  double topic_entropy = 0.0;
  double la_intercept = 0.0;
  double la_linear = 0.0;
  double la_quadratic = 0.0;

  bool operator==(const DyadFeatures&) const = default;
};

/// Variable names in descriptive-table order.
const std::vector<std::string>& variable_names();
/// Named variable access; throws InputError for unknown names.
double variable(const DyadFeatures& f, std::string_view name);
double& variable(DyadFeatures& f, std::string_view name);

struct FeatureBuild {
  std::vector<DyadFeatures> rows;  // sorted by conversation_id
  std::vector<Diagnostic> diagnostics;
};

/// Pairs both speakers' surveys with the conversation metrics. Conversations
/// lacking either survey or metrics are dropped with a diagnostic.
FeatureBuild build_dyad_features(std::span<const SurveyRecord> surveys, std::span<const ConversationMetrics> metrics,
                                 const ScoringConfig& scoring = ScoringConfig::defaults());

struct DescriptiveRow {
  std::string variable;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct Descriptives {
  std::vector<DescriptiveRow> rows;
  std::vector<Diagnostic> diagnostics;
};

/// Throws InputError on an empty table.
Descriptives descriptives(std::span<const DyadFeatures> features);

struct Coefficient {
  std::string predictor;
  double estimate = 0.0;
  double std_error = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  std::string signif;
};

struct RegressionReport {
  std::string model;
  std::string outcome;
  std::vector<Coefficient> rows;  // intercept first
  std::size_t n = 0;
  double r_squared = 0.0;
  std::size_t residual_df = 0;
  double residual_se = 0.0;
};

/// Two-sided p-value of a t statistic via the regularized incomplete beta.
double t_two_sided_p(double t, double df);

/// "***" for p <= 0.001, "**" <= 0.01, "*" <= 0.05, "." <= 0.1, else "".
std::string_view signif_code(double p);

/// Display form of a p-value: two decimals when >= 0.01, scientific below,
/// "< 1e-300" when it underflows.
std::string format_p(double p);

/// `design` must already carry the intercept column; `names` labels its
/// columns. Throws NumericalError on rank deficiency or n <= p.
RegressionReport ols_inference(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome,
                               const std::vector<std::string>& names, std::string model = "ols",
                               std::string outcome_name = "y");

struct ModelSpec {
  std::string name;
  std::string outcome;
  std::vector<std::string> predictors;
};

/// Models 1, 2, 2b, 3 and 4.
const std::vector<ModelSpec>& model_specs();

RegressionReport fit_model(std::span<const DyadFeatures> features, const ModelSpec& spec);
std::vector<RegressionReport> run_models(std::span<const DyadFeatures> features, std::size_t workers = 1);

void write_features_csv(std::ostream& out, std::span<const DyadFeatures> features);
std::vector<DyadFeatures> read_features_csv(std::istream& in);
void write_descriptives_csv(std::ostream& out, const Descriptives& d);
void write_descriptives_text(std::ostream& out, const Descriptives& d);
void write_report_text(std::ostream& out, const RegressionReport& report);
std::string reports_json(std::span<const RegressionReport> reports);
std::vector<RegressionReport> reports_from_json(std::string_view json);
Descriptives read_descriptives_csv(std::istream& in);

}  // namespace convflow::dyad
