#include "convflow/topics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "convflow/csv.hpp"
#include "convflow/error.hpp"
#include "convflow/stemmer.hpp"
#include "convflow/text.hpp"

namespace convflow::topics {

std::size_t TopicDistribution::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

TopicDistribution make_distribution(std::string conversation_id, const std::vector<std::size_t>& cluster_ids,
                                    std::size_t n_clusters) {
  TopicDistribution d{std::move(conversation_id), std::vector<std::size_t>(n_clusters, 0)};
  for (auto c : cluster_ids) {
    if (c >= n_clusters) throw InputError("cluster id " + std::to_string(c) + " out of range");
    ++d.counts[c];
  }
  return d;
}

double topic_entropy(const TopicDistribution& dist) {
  const auto total = static_cast<double>(dist.total());
  if (total == 0.0) throw InputError("topic distribution of " + dist.conversation_id + " is empty");
  double h = 0.0;
  for (auto c : dist.counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet words{
      "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours", "yourself",
      "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself",
      "they", "them", "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "these",
      "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do",
      "does", "did", "doing", "would", "should", "could", "ought", "i'm", "you're", "he's", "she's", "it's",
      "we're", "they're", "i've", "you've", "we've", "they've", "i'd", "you'd", "he'd", "she'd", "we'd",
      "they'd", "i'll", "you'll", "he'll", "she'll", "we'll", "they'll", "isn't", "aren't", "wasn't", "weren't",
      "hasn't", "haven't", "hadn't", "doesn't", "don't", "didn't", "won't", "wouldn't", "shan't", "shouldn't",
      "can't", "cannot", "couldn't", "mustn't", "let's", "that's", "who's", "what's", "here's", "there's",
      "when's", "where's", "why's", "how's", "a", "an", "the", "and", "but", "if", "or", "because", "as",
      "until", "while", "of", "at", "by", "for", "with", "about", "against", "between", "into", "through",
      "during", "before", "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off",
      "over", "under", "again", "further", "then", "once", "here", "there", "when", "where", "why", "how",
      "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not", "only",
      "own", "same", "so", "than", "too", "very", "will"};
  return words;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read stopwords " + path.string());
  StopwordSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (auto& t : text::tokenize(line)) out.insert(t);
  }
  return out;
}

double chi2_keyness(double a, double in_total, double c, double out_total) {
  const double b = in_total - a, d = out_total - c;
  const double n = a + b + c + d;
  const double denom = (a + b) * (c + d) * (a + c) * (b + d);
  if (n <= 0.0 || denom <= 0.0) return 0.0;
  // Yates continuity correction, never past zero.
  const double diff = std::fabs(a * d - b * c);
  const double corrected = diff - std::min(diff, n / 2.0);
  const double chi2 = n * corrected * corrected / denom;
  const double expected = (a + b) * (a + c) / n;
  return a > expected ? chi2 : -chi2;
}

double g2_keyness(double a, double in_total, double c, double out_total) {
  const double b = in_total - a, d = out_total - c;
  const double n = a + b + c + d;
  if (n <= 0.0) return 0.0;
  const double obs[4] = {a, b, c, d};
  const double exp[4] = {(a + b) * (a + c) / n, (a + b) * (b + d) / n, (c + d) * (a + c) / n,
                         (c + d) * (b + d) / n};
  double g2 = 0.0;
  for (int i = 0; i < 4; ++i)
    if (obs[i] > 0.0 && exp[i] > 0.0) g2 += obs[i] * std::log(obs[i] / exp[i]);
  g2 *= 2.0;
  return a > exp[0] ? g2 : -g2;
}

std::vector<KeynessTable> keyness_keywords(const std::vector<std::vector<std::string>>& texts_by_cluster,
                                           const StopwordSet& stopwords, const KeynessOptions& options) {
  std::size_t nonempty = 0;
  for (const auto& texts : texts_by_cluster)
    if (!texts.empty()) ++nonempty;
  if (nonempty < 2) throw InputError("keyness needs at least two clusters with text");

  // Stemmed, stopword-free tokens per document.
  std::vector<std::vector<std::vector<std::string>>> docs(texts_by_cluster.size());
  std::unordered_map<std::string, std::size_t> doc_freq;
  std::size_t n_docs = 0;
  for (std::size_t c = 0; c < texts_by_cluster.size(); ++c) {
    for (const auto& t : texts_by_cluster[c]) {
      std::vector<std::string> stems;
      for (auto& tok : text::tokenize(t))
        if (!stopwords.contains(tok)) stems.push_back(text::porter_stem(tok));
      std::unordered_set<std::string> uniq(stems.begin(), stems.end());
      for (const auto& s : uniq) ++doc_freq[s];
      docs[c].push_back(std::move(stems));
      ++n_docs;
    }
  }
  std::unordered_set<std::string> vocab;
  for (const auto& [stem, df] : doc_freq) {
    const double frac = static_cast<double>(df) / static_cast<double>(n_docs);
    if (frac >= options.min_doc_frac && frac <= options.max_doc_frac) vocab.insert(stem);
  }
  if (vocab.empty()) throw InputError("keyness vocabulary is empty after filtering");

  std::vector<std::unordered_map<std::string, std::size_t>> freq(texts_by_cluster.size());
  std::vector<double> cluster_tokens(texts_by_cluster.size(), 0.0);
  std::unordered_map<std::string, std::size_t> total_freq;
  double all_tokens = 0.0;
  for (std::size_t c = 0; c < docs.size(); ++c)
    for (const auto& d : docs[c])
      for (const auto& s : d) {
        if (!vocab.contains(s)) continue;
        ++freq[c][s];
        ++total_freq[s];
        cluster_tokens[c] += 1.0;
        all_tokens += 1.0;
      }

  std::vector<KeynessTable> out;
  for (std::size_t c = 0; c < docs.size(); ++c) {
    KeynessTable table{c, {}};
    const double in_total = cluster_tokens[c], out_total = all_tokens - in_total;
    for (const auto& [stem, a] : freq[c]) {
      const auto cnt_out = total_freq[stem] - a;
      const double k = options.measure == KeynessMeasure::chi2
                           ? chi2_keyness(static_cast<double>(a), in_total, static_cast<double>(cnt_out), out_total)
                           : g2_keyness(static_cast<double>(a), in_total, static_cast<double>(cnt_out), out_total);
      if (k > 0.0) table.rows.push_back({stem, k, a, cnt_out});
    }
    std::sort(table.rows.begin(), table.rows.end(), [](const KeynessRow& x, const KeynessRow& y) {
      return x.keyness > y.keyness || (x.keyness == y.keyness && x.stem < y.stem);
    });
    if (table.rows.size() > options.top_n) table.rows.resize(options.top_n);
    out.push_back(std::move(table));
  }
  return out;
}

void write_keyness_csv(std::ostream& out, const std::vector<KeynessTable>& tables) {
  out << "cluster,rank,stem,keyness,count_in,count_out\n";
  for (const auto& t : tables)
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      out << t.cluster << ',' << (r + 1) << ',' << csv::escape(row.stem) << ',' << csv::format_double(row.keyness)
          << ',' << row.count_in << ',' << row.count_out << '\n';
    }
}

}  // namespace convflow::topics
