#include "convflow/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>

#include "convflow/csv.hpp"
#include "convflow/io.hpp"
#include "convflow/text.hpp"

namespace convflow {

using nlohmann::json;

const std::array<std::string_view, kSurveyItems> kSurveyItemNames{
    "o1", "o2", "o3", "c1", "c2", "c3", "e1", "e2", "e3", "a1", "a2", "a3", "n1", "n2", "n3"};

std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "A" || s == "a") return Speaker::A;
  if (s == "B" || s == "b") return Speaker::B;
  return std::nullopt;
}

std::string_view to_string(Segmentation s) {
  switch (s) {
    case Segmentation::audiophile: return "audiophile";
    case Segmentation::cliffhanger: return "cliffhanger";
    case Segmentation::backbiter_main: return "backbiter-main";
    case Segmentation::backbiter_backchannel: return "backbiter-backchannel";
  }
  return "?";
}

Segmentation parse_segmentation(std::string_view s) {
  const auto l = text::to_lower_ascii(s);
  if (l == "audiophile") return Segmentation::audiophile;
  if (l == "cliffhanger") return Segmentation::cliffhanger;
  if (l == "backbiter" || l == "backbiter-main") return Segmentation::backbiter_main;
  if (l == "backbiter-backchannel") return Segmentation::backbiter_backchannel;
  throw ConfigError("unknown segmentation '" + std::string(s) + "'");
}

std::optional<std::string> admission_problem(const Conversation& c, std::size_t min_turns) {
  if (c.turns.size() < std::max<std::size_t>(min_turns, 2))
    return "only " + std::to_string(c.turns.size()) + " turns (minimum " +
           std::to_string(std::max<std::size_t>(min_turns, 2)) + ")";
  bool seen[2] = {false, false};
  for (const auto& t : c.turns) seen[static_cast<int>(t.speaker)] = true;
  if (!seen[0] || !seen[1]) return "only one speaker present";
  return std::nullopt;
}

namespace {

// Assigns A/B per conversation. Literal A/B labels are kept; any other labels
// are numbered by first appearance. A third distinct label is rejected.
class SpeakerResolver {
 public:
  std::optional<Speaker> resolve(const std::string& conversation, const std::string& label) {
    auto& labels = seen_[conversation];
    if (auto lit = parse_speaker(label)) {
      if (literal_.contains(conversation) || labels.empty()) {
        literal_.insert(conversation);
        return lit;
      }
    }
    if (literal_.contains(conversation)) return std::nullopt;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return static_cast<Speaker>(i);
    if (labels.size() >= 2) return std::nullopt;
    labels.push_back(label);
    return static_cast<Speaker>(labels.size() - 1);
  }

 private:
  std::map<std::string, std::vector<std::string>> seen_;
  std::set<std::string> literal_;
};

struct RawEvent {
  UtteranceEvent event;
  std::size_t order;
};

std::string json_scalar_to_string(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number_unsigned()) return std::to_string(j.get<unsigned long long>());
  throw InputError("expected string or integer");
}

bool json_to_double(const json& j, double& out) {
  if (j.is_number()) {
    out = j.get<double>();
    return true;
  }
  if (j.is_string()) return io::parse_double(j.get<std::string>(), out);
  return false;
}

// Validates the scalar fields shared by both formats. Returns an error message
// or an empty string.
std::string validate_event(const UtteranceEvent& e) {
  if (e.conversation_id.empty()) return "empty conversation_id";
  if (e.speaker_label.empty()) return "empty speaker label";
  if (!std::isfinite(e.start) || !std::isfinite(e.stop)) return "non-finite timestamp";
  if (e.start < 0) return "negative start time";
  if (e.stop < e.start) return "stop precedes start";
  if (text::trim(e.text).empty()) return "empty utterance";
  return {};
}

TranscriptIngest group_events(std::vector<RawEvent> raw, std::vector<Diagnostic> diagnostics) {
  std::stable_sort(raw.begin(), raw.end(), [](const RawEvent& a, const RawEvent& b) {
    if (a.event.conversation_id != b.event.conversation_id)
      return a.event.conversation_id < b.event.conversation_id;
    return a.event.start < b.event.start;
  });
  TranscriptIngest out;
  out.diagnostics = std::move(diagnostics);
  SpeakerResolver resolver;
  for (auto& r : raw) {
    auto speaker = resolver.resolve(r.event.conversation_id, r.event.speaker_label);
    if (!speaker) {
      out.diagnostics.push_back({"record " + std::to_string(r.order),
                                 "unknown speaker label '" + r.event.speaker_label +
                                     "' in conversation " + r.event.conversation_id});
      continue;
    }
    r.event.speaker = *speaker;
    if (out.conversations.empty() ||
        out.conversations.back().conversation_id != r.event.conversation_id) {
      out.conversations.push_back({r.event.conversation_id, {}});
    }
    out.conversations.back().events.push_back(std::move(r.event));
  }
  return out;
}

TranscriptIngest ingest_jsonl(std::istream& in) {
  std::vector<RawEvent> raw;
  std::vector<Diagnostic> diags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      diags.push_back({where, std::string("malformed JSON: ") + e.what()});
      continue;
    }
    if (!j.is_object()) {
      diags.push_back({where, "record is not an object"});
      continue;
    }
    std::string missing;
    for (const char* key : {"conversation_id", "speaker", "start", "stop", "utterance"})
      if (!j.contains(key)) missing = key;
    if (!missing.empty()) {
      diags.push_back({where, "missing field '" + missing + "'"});
      continue;
    }
    UtteranceEvent e;
    try {
      e.conversation_id = json_scalar_to_string(j["conversation_id"]);
      e.speaker_label = json_scalar_to_string(j["speaker"]);
    } catch (const InputError& err) {
      diags.push_back({where, err.what()});
      continue;
    }
    if (!json_to_double(j["start"], e.start) || !json_to_double(j["stop"], e.stop)) {
      diags.push_back({where, "non-numeric timestamp"});
      continue;
    }
    if (!j["utterance"].is_string()) {
      diags.push_back({where, "utterance is not a string"});
      continue;
    }
    e.text = j["utterance"].get<std::string>();
    if (auto msg = validate_event(e); !msg.empty()) {
      diags.push_back({where, msg});
      continue;
    }
    raw.push_back({std::move(e), lineno});
  }
  return group_events(std::move(raw), std::move(diags));
}

TranscriptIngest ingest_csv(std::istream& in) {
  csv::Reader reader(in);
  auto header_row = reader.next();
  if (!header_row) throw InputError("transcript CSV has no header");
  const csv::Header header(*header_row);
  const auto c_id = header.require("conversation_id");
  const auto c_speaker = header.require("speaker");
  const auto c_start = header.require("start");
  const auto c_stop = header.require("stop");
  const auto c_text = header.require("utterance");
  const auto width = std::max({c_id, c_speaker, c_start, c_stop, c_text}) + 1;

  std::vector<RawEvent> raw;
  std::vector<Diagnostic> diags;
  while (auto row = reader.next()) {
    const std::string where = "line " + std::to_string(reader.line());
    if (row->size() == 1 && text::trim((*row)[0]).empty()) continue;
    if (row->size() < width) {
      diags.push_back({where, "too few fields"});
      continue;
    }
    UtteranceEvent e;
    e.conversation_id = text::trim((*row)[c_id]);
    e.speaker_label = text::trim((*row)[c_speaker]);
    if (!io::parse_double((*row)[c_start], e.start) || !io::parse_double((*row)[c_stop], e.stop)) {
      diags.push_back({where, "non-numeric timestamp"});
      continue;
    }
    e.text = (*row)[c_text];
    if (auto msg = validate_event(e); !msg.empty()) {
      diags.push_back({where, msg});
      continue;
    }
    raw.push_back({std::move(e), reader.line()});
  }
  return group_events(std::move(raw), std::move(diags));
}

}  // namespace

TranscriptIngest ingest_transcripts(const std::filesystem::path& path, TranscriptFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read transcripts " + path.string());
  return format == TranscriptFormat::jsonl ? ingest_jsonl(in) : ingest_csv(in);
}

SurveyIngest ingest_surveys(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read surveys " + path.string());
  csv::Reader reader(in);
  auto header_row = reader.next();
  if (!header_row) throw InputError("survey CSV has no header");
  const csv::Header header(*header_row);
  const auto c_id = header.require("conversation_id");
  const auto c_speaker = header.require("speaker");
  std::array<std::size_t, kSurveyItems> c_items{};
  for (std::size_t i = 0; i < kSurveyItems; ++i) c_items[i] = header.require(kSurveyItemNames[i]);
  const auto c_pre = header.require("affect_pre");
  const auto c_post = header.require("affect_post");
  const auto width =
      std::max({c_id, c_speaker, c_pre, c_post, *std::max_element(c_items.begin(), c_items.end())}) + 1;

  SurveyIngest out;
  SpeakerResolver resolver;
  std::set<std::pair<std::string, Speaker>> seen;
  while (auto row = reader.next()) {
    const std::string where = "line " + std::to_string(reader.line());
    if (row->size() == 1 && text::trim((*row)[0]).empty()) continue;
    if (row->size() < width) {
      out.diagnostics.push_back({where, "too few fields"});
      continue;
    }
    SurveyRecord r;
    r.conversation_id = text::trim((*row)[c_id]);
    r.speaker_label = text::trim((*row)[c_speaker]);
    if (r.conversation_id.empty() || r.speaker_label.empty()) {
      out.diagnostics.push_back({where, "empty conversation_id or speaker"});
      continue;
    }
    std::string problem;
    for (std::size_t i = 0; i < kSurveyItems && problem.empty(); ++i) {
      int v = 0;
      if (!io::parse_int((*row)[c_items[i]], v))
        problem = "non-integer rating in " + std::string(kSurveyItemNames[i]);
      else if (v < 1 || v > 5)
        problem = "rating out of scale 1-5 in " + std::string(kSurveyItemNames[i]) + ": " +
                  std::to_string(v);
      r.personality_items[i] = v;
    }
    for (auto [col, dst, name] : {std::tuple{c_pre, &r.affect_pre, "affect_pre"},
                                  std::tuple{c_post, &r.affect_post, "affect_post"}}) {
      if (!problem.empty()) break;
      if (!io::parse_int((*row)[col], *dst))
        problem = std::string("non-integer rating in ") + name;
      else if (*dst < 1 || *dst > 9)
        problem = std::string("rating out of scale 1-9 in ") + name + ": " + std::to_string(*dst);
    }
    if (!problem.empty()) {
      out.diagnostics.push_back({where, problem});
      continue;
    }
    auto speaker = resolver.resolve(r.conversation_id, r.speaker_label);
    if (!speaker) {
      out.diagnostics.push_back({where, "unknown speaker label '" + r.speaker_label + "'"});
      continue;
    }
    r.speaker = *speaker;
    if (!seen.emplace(r.conversation_id, r.speaker).second) {
      out.diagnostics.push_back({where, "duplicate survey for conversation " + r.conversation_id +
                                            " speaker " + r.speaker_label});
      continue;
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

void link_survey_speakers(Dataset& dataset) {
  std::map<std::pair<std::string, std::string>, Speaker> labels;
  for (const auto& c : dataset.transcripts)
    for (const auto& e : c.events) labels.emplace(std::pair{c.conversation_id, e.speaker_label}, e.speaker);
  for (auto& s : dataset.surveys) {
    auto it = labels.find({s.conversation_id, s.speaker_label});
    if (it != labels.end()) s.speaker = it->second;
  }
}

// ---- persistence ----

namespace {

json event_to_json(const UtteranceEvent& e) {
  return json{{"speaker", std::string(1, speaker_char(e.speaker))},
              {"label", e.speaker_label},
              {"start", e.start},
              {"stop", e.stop},
              {"text", e.text}};
}

}  // namespace

void persist_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  json root;
  root["schema"] = "convflow.dataset";
  root["version"] = kDatasetSchemaVersion;
  json convs = json::array();
  for (const auto& c : dataset.transcripts) {
    json events = json::array();
    for (const auto& e : c.events) events.push_back(event_to_json(e));
    convs.push_back({{"conversation_id", c.conversation_id}, {"events", std::move(events)}});
  }
  root["transcripts"] = std::move(convs);
  json surveys = json::array();
  for (const auto& s : dataset.surveys) {
    surveys.push_back({{"conversation_id", s.conversation_id},
                       {"speaker", std::string(1, speaker_char(s.speaker))},
                       {"label", s.speaker_label},
                       {"items", s.personality_items},
                       {"affect_pre", s.affect_pre},
                       {"affect_post", s.affect_post}});
  }
  root["surveys"] = std::move(surveys);
  io::write_file_atomic(path, root.dump(1) + "\n");
}

Dataset load_dataset(const std::filesystem::path& path) {
  json root;
  try {
    root = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError("dataset " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!root.contains("version") || root.value("schema", "") != "convflow.dataset")
    throw InputError("dataset " + path.string() + " lacks a schema header");
  if (root["version"].get<int>() != kDatasetSchemaVersion)
    throw InputError("dataset schema version " + root["version"].dump() + " is not supported (expected " +
                     std::to_string(kDatasetSchemaVersion) + ")");
  Dataset d;
  try {
    for (const auto& c : root.at("transcripts")) {
      ConversationEvents ce;
      ce.conversation_id = c.at("conversation_id").get<std::string>();
      for (const auto& e : c.at("events")) {
        UtteranceEvent ev;
        ev.conversation_id = ce.conversation_id;
        ev.speaker = *parse_speaker(e.at("speaker").get<std::string>());
        ev.speaker_label = e.at("label").get<std::string>();
        ev.start = e.at("start").get<double>();
        ev.stop = e.at("stop").get<double>();
        ev.text = e.at("text").get<std::string>();
        ce.events.push_back(std::move(ev));
      }
      d.transcripts.push_back(std::move(ce));
    }
    for (const auto& s : root.at("surveys")) {
      SurveyRecord r;
      r.conversation_id = s.at("conversation_id").get<std::string>();
      r.speaker = *parse_speaker(s.at("speaker").get<std::string>());
      r.speaker_label = s.at("label").get<std::string>();
      r.personality_items = s.at("items").get<std::array<int, kSurveyItems>>();
      r.affect_pre = s.at("affect_pre").get<int>();
      r.affect_post = s.at("affect_post").get<int>();
      d.surveys.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InputError("dataset " + path.string() + " is malformed: " + e.what());
  }
  return d;
}

}  // namespace convflow
