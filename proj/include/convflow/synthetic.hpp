#pragma once

#include <cstdint>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "convflow/corpus.hpp"
#include "convflow/dyad.hpp"

namespace convflow::synthetic {

/// Number of built-in topic vocabularies.
std::size_t topic_count();
const std::vector<std::string>& topic_words(std::size_t topic);

struct CorpusOptions {
  std::size_t single_topic = 20;
  std::size_t mixed_topic = 20;
  std::size_t topics_per_mixed = 4;
  std::size_t switch_every = 3;  // turns between topic changes in a mixed conversation
  std::size_t min_turns = 24;
  std::size_t max_turns = 40;
  std::uint64_t seed = 1;
};

struct Corpus {
  Dataset dataset;
  std::set<std::string> mixed_ids;
};

/// Two-speaker conversations whose utterances draw on one topic vocabulary
/// (single) or rotate through several (mixed), plus one survey per speaker.
Corpus generate_corpus(const CorpusOptions& options);

void write_transcripts_jsonl(std::ostream& out, std::span<const ConversationEvents> conversations);
void write_surveys_csv(std::ostream& out, std::span<const SurveyRecord> surveys);

struct FeatureOptions {
  std::size_t n = 1655;
  double entropy_effect = 0.4;  // on affect_change_mean; 0 gives pure-noise outcomes
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
};

/// Dyad rows with independent predictors. Every model outcome is noise except
/// affect_change_mean, which carries `entropy_effect` * topic_entropy.
std::vector<dyad::DyadFeatures> planted_features(const FeatureOptions& options);

}  // namespace convflow::synthetic
