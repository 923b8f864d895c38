#include "convflow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "convflow/csv.hpp"
#include "convflow/error.hpp"
#include "convflow/hash.hpp"
#include "convflow/random.hpp"

namespace convflow::synthetic {

namespace {

const std::vector<std::vector<std::string>> kTopics{
    {"recipe", "garlic", "oven", "pasta", "kitchen", "spices", "baking", "dinner", "sauce", "flour", "grill", "soup"},
    {"airport", "passport", "hotel", "beach", "flight", "luggage", "mountains", "tourists", "train", "island",
     "vacation", "museum"},
    {"basketball", "coach", "season", "playoffs", "soccer", "stadium", "team", "referee", "tournament", "league",
     "football", "score"},
    {"guitar", "concert", "album", "drummer", "band", "lyrics", "piano", "festival", "melody", "singer", "vinyl",
     "chorus"},
    {"laptop", "software", "programming", "startup", "server", "algorithm", "phone", "code", "robots", "internet",
     "gadget", "database"},
    {"puppy", "kitten", "dog", "cat", "leash", "veterinarian", "treats", "aquarium", "hamster", "parrot", "fur",
     "litter"},
    {"professor", "homework", "semester", "exams", "lecture", "campus", "tuition", "essay", "classroom", "degree",
     "library", "grades"},
    {"hiking", "camping", "trail", "tent", "river", "forest", "kayak", "sunrise", "backpack", "fishing", "canyon",
     "campfire"},
};

const std::vector<std::string> kFiller{"really", "like",  "just",   "think", "pretty", "actually", "probably",
                                       "always", "kind",  "stuff",  "things", "lot",   "good",     "great",
                                       "time",   "people", "little", "much",  "guess", "mean"};

const std::vector<std::string> kOpeners{"So", "Well", "And", "Honestly", "Oh", "But"};

std::string utterance(Rng& rng, std::size_t topic) {
  const auto& words = kTopics[topic];
  std::string s = kOpeners[rng.below(kOpeners.size())];
  const auto n = 5 + rng.below(4);
  for (std::uint64_t i = 0; i < n; ++i) {
    s += ' ';
    s += rng.uniform() < 0.75 ? words[rng.below(words.size())] : kFiller[rng.below(kFiller.size())];
  }
  s += rng.uniform() < 0.2 ? '?' : '.';
  return s;
}

std::string conv_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "conv-%03zu", i + 1);
  return buf;
}

}  // namespace

std::size_t topic_count() { return kTopics.size(); }

const std::vector<std::string>& topic_words(std::size_t topic) {
  if (topic >= kTopics.size()) throw InputError("topic index out of range");
  return kTopics[topic];
}

Corpus generate_corpus(const CorpusOptions& o) {
  if (o.topics_per_mixed < 2 || o.topics_per_mixed > kTopics.size())
    throw ConfigError("topics_per_mixed must be in [2, " + std::to_string(kTopics.size()) + "]");
  if (o.min_turns < 2 || o.max_turns < o.min_turns) throw ConfigError("bad turn range");
  if (o.switch_every == 0) throw ConfigError("switch_every must be positive");

  Rng rng(derive_seed(o.seed, "synthetic-corpus"));
  const std::size_t total = o.single_topic + o.mixed_topic;
  std::vector<bool> mixed(total, false);
  for (auto i : rng.sample_without_replacement(total, o.mixed_topic)) mixed[i] = true;

  Corpus out;
  for (std::size_t c = 0; c < total; ++c) {
    const std::string id = conv_id(c);
    std::vector<std::size_t> topics =
        rng.sample_without_replacement(kTopics.size(), mixed[c] ? o.topics_per_mixed : 1);
    if (mixed[c]) out.mixed_ids.insert(id);
    ConversationEvents conv{id, {}};
    const auto turns = o.min_turns + rng.below(o.max_turns - o.min_turns + 1);
    double t = 0.0;
    for (std::uint64_t i = 0; i < turns; ++i) {
      const auto topic = topics[(i / o.switch_every) % topics.size()];
      UtteranceEvent e;
      e.conversation_id = id;
      e.speaker = i % 2 == 0 ? Speaker::A : Speaker::B;
      e.speaker_label = std::string(1, speaker_char(e.speaker));
      e.text = utterance(rng, topic);
      e.start = t;
      e.stop = t + 0.35 * static_cast<double>(std::count(e.text.begin(), e.text.end(), ' ') + 1);
      t = std::round((e.stop + 0.2) * 1000.0) / 1000.0;
      e.stop = std::round(e.stop * 1000.0) / 1000.0;
      conv.events.push_back(std::move(e));
    }
    out.dataset.transcripts.push_back(std::move(conv));
    for (Speaker s : {Speaker::A, Speaker::B}) {
      SurveyRecord r;
      r.conversation_id = id;
      r.speaker = s;
      r.speaker_label = std::string(1, speaker_char(s));
      for (auto& item : r.personality_items) item = 1 + static_cast<int>(rng.below(5));
      r.affect_pre = 3 + static_cast<int>(rng.below(6));
      r.affect_post = std::clamp(r.affect_pre - 1 + static_cast<int>(rng.below(5)), 1, 9);
      out.dataset.surveys.push_back(std::move(r));
    }
  }
  return out;
}

void write_transcripts_jsonl(std::ostream& out, std::span<const ConversationEvents> conversations) {
  for (const auto& c : conversations)
    for (const auto& e : c.events) {
      const nlohmann::ordered_json j{{"conversation_id", e.conversation_id},
                                     {"speaker", e.speaker_label},
                                     {"start", e.start},
                                     {"stop", e.stop},
                                     {"utterance", e.text}};
      out << j.dump() << '\n';
    }
}

void write_surveys_csv(std::ostream& out, std::span<const SurveyRecord> surveys) {
  out << "conversation_id,speaker";
  for (auto name : kSurveyItemNames) out << ',' << name;
  out << ",affect_pre,affect_post\n";
  for (const auto& r : surveys) {
    out << csv::escape(r.conversation_id) << ',' << csv::escape(r.speaker_label);
    for (int v : r.personality_items) out << ',' << v;
    out << ',' << r.affect_pre << ',' << r.affect_post << '\n';
  }
}

std::vector<dyad::DyadFeatures> planted_features(const FeatureOptions& o) {
  if (o.noise_sd <= 0.0) throw ConfigError("noise_sd must be positive");
  Rng rng(derive_seed(o.seed, "planted-features"));
  auto trait = [&] {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += 1.0 + static_cast<double>(rng.below(5));
    return s / 3.0;
  };
  std::vector<dyad::DyadFeatures> rows;
  rows.reserve(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    dyad::DyadFeatures f;
    f.conversation_id = conv_id(i);
    for (std::size_t t = 0; t < dyad::kTraitCount; ++t) {
      const double a = trait(), b = trait();
      f.trait_mean[t] = (a + b) / 2.0;
      f.trait_diff[t] = std::fabs(a - b);
    }
    f.topic_entropy = rng.uniform(0.0, std::log2(9.0));
    f.la_intercept = rng.normal(0.18, 0.02);
    f.la_linear = rng.normal(-0.09, 0.2);
    f.la_quadratic = rng.normal(0.25, 0.19);
    f.affect_change_mean = 1.2 + o.entropy_effect * (f.topic_entropy - 1.5) + rng.normal(0.0, o.noise_sd);
    const double split = rng.normal(0.0, 1.5);
    f.affect_change_diff = std::fabs(split);
    const double change = f.affect_change_mean;
    const double lo = std::max(1.0, 1.0 - change), hi = std::min(9.0, 9.0 - change);
    f.pre_affect_mean = lo < hi ? rng.uniform(lo, hi) : 5.0;
    f.post_affect_mean = f.pre_affect_mean + change;
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace convflow::synthetic
