#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convflow/error.hpp"

namespace convflow {

enum class Speaker : std::uint8_t { A = 0, B = 1 };

constexpr Speaker other(Speaker s) noexcept { return s == Speaker::A ? Speaker::B : Speaker::A; }
constexpr char speaker_char(Speaker s) noexcept { return s == Speaker::A ? 'A' : 'B'; }
std::optional<Speaker> parse_speaker(std::string_view s);

/// One transcribed utterance as delivered by the transcription system.
struct UtteranceEvent {
  std::string conversation_id;
  Speaker speaker = Speaker::A;
  std::string speaker_label;  // label as it appeared in the source file
  double start = 0.0;
  double stop = 0.0;
  std::string text;

  bool operator==(const UtteranceEvent&) const = default;
};

struct ConversationEvents {
  std::string conversation_id;
  std::vector<UtteranceEvent> events;  // sorted by start

  bool operator==(const ConversationEvents&) const = default;
};

struct Turn {
  std::size_t index = 0;
  Speaker speaker = Speaker::A;
  std::string text;
  bool is_backchannel = false;
  std::vector<std::size_t> source_event_indices;

  bool operator==(const Turn&) const = default;
};

enum class Segmentation { audiophile, cliffhanger, backbiter_main, backbiter_backchannel };

std::string_view to_string(Segmentation s);
Segmentation parse_segmentation(std::string_view s);

struct Conversation {
  std::string conversation_id;
  std::vector<Turn> turns;
  Segmentation segmentation = Segmentation::cliffhanger;

  bool operator==(const Conversation&) const = default;
};

/// Checks the downstream admission rule: at least `min_turns` turns and both
/// speakers present. Returns the reason for rejection, if any.
std::optional<std::string> admission_problem(const Conversation& c, std::size_t min_turns);

/// Survey items in file column order: o1..o3, c1..c3, e1..e3, a1..a3, n1..n3.
inline constexpr std::size_t kSurveyItems = 15;
extern const std::array<std::string_view, kSurveyItems> kSurveyItemNames;

struct SurveyRecord {
  std::string conversation_id;
  Speaker speaker = Speaker::A;
  std::string speaker_label;
  std::array<int, kSurveyItems> personality_items{};  // each 1..5
  int affect_pre = 5;                                  // 1..9
  int affect_post = 5;                                 // 1..9

  bool operator==(const SurveyRecord&) const = default;
};

enum class TranscriptFormat { jsonl, csv };

struct TranscriptIngest {
  std::vector<ConversationEvents> conversations;  // sorted by conversation_id
  std::vector<Diagnostic> diagnostics;
};

/// Reads transcripts. Rows failing validation land in `diagnostics`; a missing
/// file or a missing CSV column throws.
TranscriptIngest ingest_transcripts(const std::filesystem::path& path, TranscriptFormat format);

struct SurveyIngest {
  std::vector<SurveyRecord> records;  // file order
  std::vector<Diagnostic> diagnostics;
};

SurveyIngest ingest_surveys(const std::filesystem::path& path);

struct Dataset {
  std::vector<ConversationEvents> transcripts;
  std::vector<SurveyRecord> surveys;

  bool operator==(const Dataset&) const = default;
};

/// Re-keys survey speakers through each conversation's transcript labels so
/// that a raw label maps to the same A/B on both sides.
void link_survey_speakers(Dataset& dataset);

inline constexpr int kDatasetSchemaVersion = 1;

void persist_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace convflow
