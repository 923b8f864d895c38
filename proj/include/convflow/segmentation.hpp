#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convflow/corpus.hpp"

namespace convflow {

/// Short listener acknowledgements. Entries are lowercase token sequences
/// with punctuation removed (e.g. "mm-hmm", "thank you").
class BackchannelLexicon {
 public:
  BackchannelLexicon(std::vector<std::string> entries, std::size_t max_backchannel_words);

  static BackchannelLexicon defaults();
  /// One entry per line; '#' starts a comment.
  static BackchannelLexicon load(const std::filesystem::path& path, std::size_t max_backchannel_words = 3);

  std::size_t max_backchannel_words() const noexcept { return max_words_; }
  const std::vector<std::vector<std::string>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::vector<std::string>> entries_;
  std::size_t max_words_;
};

struct SegmentationResult {
  Conversation main;
  std::optional<Conversation> backchannel;  // Backbiter only
};

SegmentationResult segment_audiophile(std::string_view conversation_id,
                                      std::span<const UtteranceEvent> events);
SegmentationResult segment_cliffhanger(std::string_view conversation_id,
                                       std::span<const UtteranceEvent> events);
SegmentationResult segment_backbiter(std::string_view conversation_id,
                                     std::span<const UtteranceEvent> events,
                                     const BackchannelLexicon& lexicon);

/// Text-only test: at most max_backchannel_words tokens, all covered by a
/// concatenation of lexicon entries. Case and punctuation are ignored.
bool is_backchannel(std::string_view text, const BackchannelLexicon& lexicon);

/// Dispatches on `which`; Backbiter variants return the requested track.
Conversation segment(const ConversationEvents& conv, Segmentation which,
                     const BackchannelLexicon& lexicon);

}  // namespace convflow
