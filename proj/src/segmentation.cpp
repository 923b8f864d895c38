#include "convflow/segmentation.hpp"

#include <algorithm>
#include <fstream>

#include "convflow/error.hpp"
#include "convflow/text.hpp"

namespace convflow {

namespace {

constexpr std::string_view kEllipsis = "\xE2\x80\xA6";

// A turn under construction: the indices of its source events.
struct Pending {
  Speaker speaker;
  std::vector<std::size_t> events;
};

Turn finish(const Pending& p, std::span<const UtteranceEvent> events, std::size_t index,
            bool backchannel) {
  std::vector<std::string> parts;
  parts.reserve(p.events.size());
  for (auto i : p.events) parts.push_back(events[i].text);
  Turn t;
  t.index = index;
  t.speaker = p.speaker;
  t.text = text::join_fragments(parts);
  // A turn cut off mid-clause is closed with an ellipsis.
  if (!text::ends_with_terminal(t.text) && !text::ends_with_ellipsis(t.text)) t.text += kEllipsis;
  t.is_backchannel = backchannel;
  t.source_event_indices = p.events;
  return t;
}

void require_events(std::span<const UtteranceEvent> events) {
  if (events.empty()) throw InputError("cannot segment an empty event list");
}

// Same-speaker runs over the selected events become turns.
Conversation merge_runs(std::string_view id, std::span<const UtteranceEvent> events,
                        const std::vector<std::size_t>& selected, Segmentation kind) {
  Conversation c{std::string(id), {}, kind};
  std::optional<Pending> cur;
  for (auto i : selected) {
    if (cur && cur->speaker == events[i].speaker) {
      cur->events.push_back(i);
      continue;
    }
    if (cur) c.turns.push_back(finish(*cur, events, c.turns.size(), false));
    cur = Pending{events[i].speaker, {i}};
  }
  if (cur) c.turns.push_back(finish(*cur, events, c.turns.size(), false));
  return c;
}

std::vector<std::string> split_tokens(std::string_view entry) { return text::tokenize(entry); }

}  // namespace

BackchannelLexicon::BackchannelLexicon(std::vector<std::string> entries, std::size_t max_backchannel_words)
    : max_words_(max_backchannel_words) {
  for (const auto& e : entries) {
    auto toks = split_tokens(e);
    if (!toks.empty()) entries_.push_back(std::move(toks));
  }
  if (entries_.empty()) throw ConfigError("backchannel lexicon is empty");
  if (max_words_ == 0) throw ConfigError("max_backchannel_words must be positive");
  std::sort(entries_.begin(), entries_.end());
  entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
}

BackchannelLexicon BackchannelLexicon::defaults() {
  return BackchannelLexicon({"yeah", "yes", "mm-hmm", "mmhmm", "uh-huh", "okay", "ok", "right", "sure",
                             "wow", "oh", "really", "gotcha", "exactly", "totally", "true", "cool", "huh"},
                            3);
}

BackchannelLexicon BackchannelLexicon::load(const std::filesystem::path& path,
                                            std::size_t max_backchannel_words) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = text::trim(line);
    if (!line.empty()) entries.push_back(line);
  }
  return BackchannelLexicon(std::move(entries), max_backchannel_words);
}

bool is_backchannel(std::string_view raw, const BackchannelLexicon& lexicon) {
  const auto tokens = text::tokenize(raw);
  if (tokens.empty() || tokens.size() > lexicon.max_backchannel_words()) return false;
  // covered[i]: tokens[0, i) split exactly into lexicon entries
  std::vector<bool> covered(tokens.size() + 1, false);
  covered[0] = true;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!covered[i]) continue;
    for (const auto& entry : lexicon.entries()) {
      if (i + entry.size() > tokens.size()) continue;
      if (std::equal(entry.begin(), entry.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i)))
        covered[i + entry.size()] = true;
    }
  }
  return covered.back();
}

SegmentationResult segment_audiophile(std::string_view conversation_id,
                                      std::span<const UtteranceEvent> events) {
  require_events(events);
  std::vector<std::size_t> all(events.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return {merge_runs(conversation_id, events, all, Segmentation::audiophile), std::nullopt};
}

SegmentationResult segment_cliffhanger(std::string_view conversation_id,
                                       std::span<const UtteranceEvent> events) {
  require_events(events);
  Conversation c{std::string(conversation_id), {}, Segmentation::cliffhanger};

  // The floor holder accumulates until its text ends a sentence at the moment
  // the other speaker comes in. Interjections made before that point are held
  // back and open the other speaker's next turn.
  std::optional<Pending> holder;
  std::vector<std::size_t> deferred;
  auto holder_text_terminal = [&] {
    const auto& last = events[holder->events.back()];
    return text::ends_with_terminal(last.text);
  };

  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!holder) {
      holder = Pending{e.speaker, {i}};
    } else if (e.speaker == holder->speaker) {
      holder->events.push_back(i);
    } else if (holder_text_terminal()) {
      c.turns.push_back(finish(*holder, events, c.turns.size(), false));
      Pending next{e.speaker, std::move(deferred)};
      next.events.push_back(i);
      deferred.clear();
      holder = std::move(next);
    } else {
      deferred.push_back(i);
    }
  }
  c.turns.push_back(finish(*holder, events, c.turns.size(), false));
  if (!deferred.empty())
    c.turns.push_back(finish(Pending{other(holder->speaker), deferred}, events, c.turns.size(), false));
  return {std::move(c), std::nullopt};
}

SegmentationResult segment_backbiter(std::string_view conversation_id,
                                     std::span<const UtteranceEvent> events,
                                     const BackchannelLexicon& lexicon) {
  require_events(events);
  std::vector<std::size_t> main_events;
  Conversation back{std::string(conversation_id), {}, Segmentation::backbiter_backchannel};
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto s = events[i].speaker;
    const bool flanked = i > 0 && i + 1 < events.size() && events[i - 1].speaker != s &&
                         events[i + 1].speaker != s;
    if (flanked && is_backchannel(events[i].text, lexicon)) {
      back.turns.push_back(finish(Pending{s, {i}}, events, back.turns.size(), true));
    } else {
      main_events.push_back(i);
    }
  }
  return {merge_runs(conversation_id, events, main_events, Segmentation::backbiter_main), std::move(back)};
}

Conversation segment(const ConversationEvents& conv, Segmentation which, const BackchannelLexicon& lexicon) {
  switch (which) {
    case Segmentation::audiophile:
      return segment_audiophile(conv.conversation_id, conv.events).main;
    case Segmentation::cliffhanger:
      return segment_cliffhanger(conv.conversation_id, conv.events).main;
    case Segmentation::backbiter_main:
      return segment_backbiter(conv.conversation_id, conv.events, lexicon).main;
    case Segmentation::backbiter_backchannel:
      return *segment_backbiter(conv.conversation_id, conv.events, lexicon).backchannel;
  }
  throw ConfigError("unknown segmentation");
}

}  // namespace convflow
