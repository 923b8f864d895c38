#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace convflow::topics {

struct TopicDistribution {
  std::string conversation_id;
  std::vector<std::size_t> counts;  // turns per cluster id

  std::size_t total() const;
};

TopicDistribution make_distribution(std::string conversation_id, const std::vector<std::size_t>& cluster_ids,
                                    std::size_t n_clusters);

/// Shannon entropy in bits of the normalised counts. Empty clusters add 0.
/// Throws InputError when the total count is 0.
double topic_entropy(const TopicDistribution& dist);

using StopwordSet = std::set<std::string, std::less<>>;

/// The bundled English list (175 words).
const StopwordSet& default_stopwords();
StopwordSet load_stopwords(const std::filesystem::path& path);

enum class KeynessMeasure { chi2, g2 };

struct KeynessOptions {
  double min_doc_frac = 0.001;
  double max_doc_frac = 0.5;
  std::size_t top_n = 10;
  KeynessMeasure measure = KeynessMeasure::chi2;
};

struct KeynessRow {
  std::string stem;
  double keyness = 0.0;
  std::size_t count_in = 0;
  std::size_t count_out = 0;
};

struct KeynessTable {
  std::size_t cluster = 0;
  std::vector<KeynessRow> rows;  // keyness descending
};

/// Signed 2x2 statistic for a stem: `a` occurrences among `in_total` target
/// tokens and `c` among `out_total` reference tokens.
double chi2_keyness(double a, double in_total, double c, double out_total);
double g2_keyness(double a, double in_total, double c, double out_total);

/// texts_by_cluster[c] holds the turn texts assigned to cluster c; each text
/// is one document for the frequency filter. Returns one table per cluster
/// with up to top_n positively associated stems.
std::vector<KeynessTable> keyness_keywords(const std::vector<std::vector<std::string>>& texts_by_cluster,
                                           const StopwordSet& stopwords, const KeynessOptions& options = {});

void write_keyness_csv(std::ostream& out, const std::vector<KeynessTable>& tables);

}  // namespace convflow::topics
