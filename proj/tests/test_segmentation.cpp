#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "convflow/segmentation.hpp"
#include "convflow/text.hpp"
#include "golden_excerpt.hpp"

using namespace convflow;

namespace {

using excerpt::stream;
using excerpt::Expected;

void expect_turns(const Conversation& c, const std::vector<Expected>& want) {
  ASSERT_EQ(c.turns.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(c.turns[i].index, i);
    EXPECT_EQ(c.turns[i].speaker, want[i].speaker) << "turn " << i;
    EXPECT_EQ(text::collapse_whitespace(c.turns[i].text), want[i].text) << "turn " << i;
  }
}

}  // namespace

TEST(SegmentationGolden, Audiophile) {
  const auto r = segment_audiophile("c", excerpt::events());
  EXPECT_FALSE(r.backchannel.has_value());
  expect_turns(r.main, excerpt::audiophile());
}

TEST(SegmentationGolden, Cliffhanger) {
  const auto r = segment_cliffhanger("c", excerpt::events());
  EXPECT_FALSE(r.backchannel.has_value());
  expect_turns(r.main, excerpt::cliffhanger());
}

TEST(SegmentationGolden, Backbiter) {
  const auto r = segment_backbiter("c", excerpt::events(), BackchannelLexicon::defaults());
  expect_turns(r.main, excerpt::backbiter_main());
  ASSERT_TRUE(r.backchannel.has_value());
  expect_turns(*r.backchannel, excerpt::backbiter_backchannel());
  for (const auto& t : r.backchannel->turns) EXPECT_TRUE(t.is_backchannel);
  for (const auto& t : r.main.turns) EXPECT_FALSE(t.is_backchannel);
  EXPECT_EQ(r.main.segmentation, Segmentation::backbiter_main);
  EXPECT_EQ(r.backchannel->segmentation, Segmentation::backbiter_backchannel);
}

TEST(Audiophile, SplitsOnSpeakerChange) {
  using enum Speaker;
  EXPECT_EQ(segment_audiophile("c", stream({{A, "Hi."}, {B, "Hey."}, {A, "Bye."}})).main.turns.size(), 3u);
  const auto r = segment_audiophile("c", stream({{A, "Hi."}, {A, "There."}, {B, "Hey."}}));
  ASSERT_EQ(r.main.turns.size(), 2u);
  EXPECT_EQ(r.main.turns[0].text, "Hi. There.");
  EXPECT_EQ(r.main.turns[0].source_event_indices, (std::vector<std::size_t>{0, 1}));
}

TEST(Segmenters, RejectEmptyInput) {
  EXPECT_THROW(segment_audiophile("c", {}), InputError);
  EXPECT_THROW(segment_cliffhanger("c", {}), InputError);
  EXPECT_THROW(segment_backbiter("c", {}, BackchannelLexicon::defaults()), InputError);
}

TEST(Cliffhanger, SingleSentenceIsOneTurn) {
  const auto r = segment_cliffhanger("c", stream({{Speaker::A, "Just one sentence."}}));
  ASSERT_EQ(r.main.turns.size(), 1u);
  EXPECT_EQ(r.main.turns[0].text, "Just one sentence.");
}

TEST(Cliffhanger, InterjectionIsDeferredUntilTerminalPunctuation) {
  // Hand trace: A holds the floor with an open clause, B's "Yeah." lands
  // inside it and is held back until A's sentence closes.
  using enum Speaker;
  auto ev = stream({{A, "I went to the store and"}, {B, "Yeah."}, {A, "bought milk. It was cheap."}});
  ev[1].start = 0.5;  // overlaps A's unfinished clause
  const auto r = segment_cliffhanger("c", ev);
  expect_turns(r.main, {{A, "I went to the store and bought milk. It was cheap."}, {B, "Yeah."}});
  EXPECT_EQ(r.main.turns[0].source_event_indices, (std::vector<std::size_t>{0, 2}));
}

TEST(Backbiter, AlternatingMmHmmAgainstOneSpeaker) {
  using enum Speaker;
  const auto r = segment_backbiter("c",
                                   stream({{A, "So the first thing"},
                                           {B, "Mm-hmm."},
                                           {A, "was the long drive"},
                                           {B, "mm-hmm"},
                                           {A, "up to the lake"},
                                           {B, "Mm-hmm!"},
                                           {A, "and then we"},
                                           {B, "MM-HMM."},
                                           {A, "finally arrived."}}),
                                   BackchannelLexicon::defaults());
  ASSERT_EQ(r.main.turns.size(), 1u);
  EXPECT_EQ(r.main.turns[0].text, "So the first thing was the long drive up to the lake and then we finally arrived.");
  ASSERT_TRUE(r.backchannel.has_value());
  EXPECT_EQ(r.backchannel->turns.size(), 4u);
}

TEST(Backbiter, NoLexiconMatchesEqualsAudiophileMerge) {
  using enum Speaker;
  const auto ev = stream({{A, "Where to?"}, {B, "The coast."}, {B, "Maybe north."}, {A, "Sounds good."}});
  const auto bb = segment_backbiter("c", ev, BackchannelLexicon::defaults());
  const auto au = segment_audiophile("c", ev);
  ASSERT_EQ(bb.main.turns.size(), au.main.turns.size());
  for (std::size_t i = 0; i < au.main.turns.size(); ++i) {
    EXPECT_EQ(bb.main.turns[i].text, au.main.turns[i].text);
    EXPECT_EQ(bb.main.turns[i].speaker, au.main.turns[i].speaker);
  }
  EXPECT_TRUE(bb.backchannel->turns.empty());
}

TEST(Backbiter, EdgeEventIsNeverBackchannel) {
  using enum Speaker;
  const auto r = segment_backbiter("c", stream({{A, "Okay."}, {B, "So anyway."}}), BackchannelLexicon::defaults());
  EXPECT_EQ(r.main.turns.size(), 2u);
  EXPECT_TRUE(r.backchannel->turns.empty());
}

TEST(IsBackchannel, Cases) {
  const auto lex = BackchannelLexicon::defaults();
  EXPECT_TRUE(is_backchannel("Mm-hmm.", lex));
  EXPECT_TRUE(is_backchannel("Yeah. Sure.", lex));
  EXPECT_TRUE(is_backchannel("OKAY!", lex));
  EXPECT_FALSE(is_backchannel("", lex));
  EXPECT_FALSE(is_backchannel("Yeah I went there once", lex));
  EXPECT_FALSE(is_backchannel("Yeah yeah yeah yeah", lex));  // four words, over the limit
  EXPECT_FALSE(is_backchannel("That's cool.", lex));
}

TEST(IsBackchannel, MultiWordEntriesAndCustomLimit) {
  const BackchannelLexicon lex({"thank you", "right"}, 2);
  EXPECT_TRUE(is_backchannel("Thank you.", lex));
  EXPECT_FALSE(is_backchannel("thank", lex));
  EXPECT_FALSE(is_backchannel("right right right", lex));
  EXPECT_THROW(BackchannelLexicon({}, 3), ConfigError);
  EXPECT_THROW(BackchannelLexicon({"yeah"}, 0), ConfigError);
}

TEST(Segment, DispatchesToRequestedTrack) {
  const ConversationEvents ce{"c", excerpt::events()};
  const auto lex = BackchannelLexicon::defaults();
  EXPECT_EQ(segment(ce, Segmentation::audiophile, lex).turns.size(), 10u);
  EXPECT_EQ(segment(ce, Segmentation::cliffhanger, lex).turns.size(), 4u);
  EXPECT_EQ(segment(ce, Segmentation::backbiter_main, lex).turns.size(), 4u);
  EXPECT_EQ(segment(ce, Segmentation::backbiter_backchannel, lex).turns.size(), 3u);
  EXPECT_EQ(segment(ce, Segmentation::cliffhanger, lex).conversation_id, "c");
}

// ---- properties over random event streams ----

namespace {

std::vector<UtteranceEvent> random_stream(std::mt19937_64& gen) {
  static const std::vector<std::string> pieces{
      "yeah", "okay", "mm-hmm", "sure", "right", "we drove", "to the coast", "it was", "really nice",
      "my sister", "works there", "I think", "so", "anyway", "the food"};
  static const std::vector<std::string> endings{".", "?", "!", "", "\xE2\x80\xA6", "...", ","};
  std::uniform_int_distribution<std::size_t> n_events(1, 25), n_words(1, 5);
  std::vector<UtteranceEvent> out;
  const std::size_t n = n_events(gen);
  double t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const std::size_t w = n_words(gen);
    for (std::size_t k = 0; k < w; ++k) {
      if (k) s += ' ';
      s += pieces[gen() % pieces.size()];
    }
    s += endings[gen() % endings.size()];
    if (gen() % 3 == 0) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    const auto spk = gen() % 2 ? Speaker::A : Speaker::B;
    out.push_back({"c", spk, std::string(1, speaker_char(spk)), t, t + 1, s});
    t += 0.5 + static_cast<double>(gen() % 100) / 50.0;
  }
  return out;
}

std::vector<const Turn*> all_turns(const SegmentationResult& r) {
  std::vector<const Turn*> out;
  for (const auto& t : r.main.turns) out.push_back(&t);
  if (r.backchannel)
    for (const auto& t : r.backchannel->turns) out.push_back(&t);
  return out;
}

void check_conservation_and_fidelity(const SegmentationResult& r, const std::vector<UtteranceEvent>& ev) {
  std::vector<int> covered(ev.size(), 0);
  for (const Turn* t : all_turns(r)) {
    ASSERT_FALSE(t->source_event_indices.empty());
    std::size_t pos = 0;
    const auto norm = text::collapse_whitespace(t->text);
    for (auto i : t->source_event_indices) {
      ASSERT_LT(i, ev.size());
      ++covered[i];
      EXPECT_EQ(t->speaker, ev[i].speaker);
      const auto piece = text::collapse_whitespace(ev[i].text);
      const auto at = norm.find(piece, pos);
      EXPECT_NE(at, std::string::npos) << "event " << i << " text missing from turn";
      if (at != std::string::npos) pos = at + piece.size();
    }
  }
  for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_EQ(covered[i], 1) << "event " << i;
}

}  // namespace

TEST(SegmentationProperties, ConservationFidelityCountsDeterminism) {
  std::mt19937_64 gen(2024);
  const auto lex = BackchannelLexicon::defaults();
  for (int rep = 0; rep < 400; ++rep) {
    const auto ev = random_stream(gen);
    const auto au = segment_audiophile("c", ev);
    const auto cl = segment_cliffhanger("c", ev);
    const auto bb = segment_backbiter("c", ev, lex);
    check_conservation_and_fidelity(au, ev);
    check_conservation_and_fidelity(cl, ev);
    check_conservation_and_fidelity(bb, ev);
    EXPECT_GE(au.main.turns.size(), cl.main.turns.size());
    EXPECT_LE(bb.main.turns.size(), au.main.turns.size());
    EXPECT_EQ(segment_audiophile("c", ev).main, au.main);
    EXPECT_EQ(segment_cliffhanger("c", ev).main, cl.main);
    const auto bb2 = segment_backbiter("c", ev, lex);
    EXPECT_EQ(bb2.main, bb.main);
    EXPECT_EQ(bb2.backchannel, bb.backchannel);
    for (std::size_t i = 0; i < au.main.turns.size(); ++i) {
      EXPECT_EQ(au.main.turns[i].index, i);
      if (i) EXPECT_NE(au.main.turns[i].speaker, au.main.turns[i - 1].speaker);
    }
    if (HasFailure()) break;
  }
}
