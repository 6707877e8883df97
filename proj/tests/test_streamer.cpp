#include <algorithm>
#include <optional>
#include <set>
#include <vector>

#include "doctest.h"
#include "samt/common.hpp"
#include "samt/model.hpp"
#include "samt/rng.hpp"
#include "samt/streamer.hpp"
#include "support/mocks.hpp"

using namespace samt;
using samt::testing::FrameScript;
using samt::testing::ScriptedDecoder;

namespace {

// small geometry so history caps and slot chunking trigger with few tokens
StreamerConfig small_config() {
  StreamerConfig cfg;
  cfg.future_frames = 1;
  cfg.window_m = 5;  // past_frames() == 3
  cfg.n_bins = 4;
  cfg.n_seq = 8;  // history cap == 8 - 2 - min(n_slots + 1, 6) == 3
  cfg.n_slots = 2;
  cfg.history_frames = 4;
  cfg.dedupe_frames = 2;
  return cfg;
}

FeatureSequence ramp_features(int frames, int n_bins) {
  FeatureSequence f;
  f.n_bins = n_bins;
  f.data.resize(static_cast<size_t>(frames) * n_bins);
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < n_bins; ++j) {
      f.data[static_cast<size_t>(t) * n_bins + j] = static_cast<float>(t * 10 + j);
    }
  }
  return f;
}

FeatureSequence random_features(int frames, int n_bins, uint64_t seed) {
  Rng rng(seed);
  FeatureSequence f;
  f.n_bins = n_bins;
  f.data.resize(static_cast<size_t>(frames) * n_bins);
  for (auto& v : f.data) v = static_cast<float>(rng.uniform(-80.0, 0.0));
  return f;
}

std::vector<int> seq_of(std::initializer_list<int> ids) { return ids; }

}  // namespace

TEST_CASE("streamer config reports latency and rejects bad geometry") {
  StreamerConfig cfg;
  CHECK(cfg.future_frames == 19);
  CHECK(cfg.window_m == 39);
  CHECK(cfg.past_frames() == 19);
  CHECK(cfg.latency() == doctest::Approx(0.380).epsilon(1e-12));
  cfg.validate();

  ModelConfig m = ModelConfig::tiny();
  m.pedal_enabled = false;
  m.single_decoder = true;
  StreamerConfig from = StreamerConfig::from_model(m, 2);
  CHECK(from.future_frames == 2);
  CHECK(from.window_m == m.window_m);
  CHECK(from.n_bins == m.n_bins);
  CHECK(from.n_seq == m.n_seq);
  CHECK(from.n_slots == m.n_slots);
  CHECK(from.pedal_enabled == false);
  CHECK(from.single_decoder == true);
  CHECK(StreamerConfig::from_model(m).future_frames == 19);

  auto reject = [](auto mutate) {
    StreamerConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), Error);
  };
  reject([](StreamerConfig& c) { c.window_m = 0; });
  reject([](StreamerConfig& c) { c.future_frames = -1; });
  reject([](StreamerConfig& c) { c.future_frames = c.window_m; });
  reject([](StreamerConfig& c) { c.n_bins = 0; });
  reject([](StreamerConfig& c) { c.n_seq = 2; });
  reject([](StreamerConfig& c) { c.n_slots = 0; });
  reject([](StreamerConfig& c) { c.history_frames = -1; });
  reject([](StreamerConfig& c) { c.dedupe_frames = -1; });
  reject([](StreamerConfig& c) { c.frame_period = 0.0; });
}

TEST_CASE("history flattening keeps whole recent sequences within the cap") {
  // n_seq 64, n_slots 16: reserve min(17, 62) == 17, cap 64 - 2 - 17 == 45
  auto flat = [](const std::vector<std::vector<int>>& seqs, int n_seq,
                 int n_slots) {
    return flatten_capped_history(seqs, n_seq, n_slots);
  };
  auto filled = [](size_t n, int value) { return std::vector<int>(n, value); };

  CHECK(flat({}, 64, 16).empty());

  std::vector<std::vector<int>> fits = {filled(10, 100), filled(20, 101),
                                        filled(15, 102)};
  std::vector<int> kept = flat(fits, 64, 16);
  REQUIRE(kept.size() == 45);
  CHECK(kept.front() == 100);
  CHECK(kept[10] == 101);
  CHECK(kept.back() == 102);

  // one token over: the whole oldest sequence goes, not just one token
  std::vector<std::vector<int>> over = {filled(10, 100), filled(20, 101),
                                        filled(16, 102)};
  kept = flat(over, 64, 16);
  REQUIRE(kept.size() == 36);
  CHECK(kept.front() == 101);

  CHECK(flat({filled(45, 7)}, 64, 16).size() == 45);
  CHECK(flat({filled(46, 7)}, 64, 16).empty());
  kept = flat({filled(45, 7), filled(1, 8)}, 64, 16);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == 8);

  // tiny budgets leave no room for history at all
  CHECK(flat({filled(1, 9)}, 5, 16).empty());   // reserve 3, cap 0
  CHECK(flat({filled(1, 9)}, 3, 16).empty());   // reserve 1, cap 0
  CHECK(flat({filled(2, 9), filled(1, 10)}, 8, 2).size() == 3);  // cap 3
}

TEST_CASE("feature windows replicate the first frame and zero-pad the end") {
  StreamerConfig cfg = small_config();  // window 5, past 3, future 1
  FeatureSequence f = ramp_features(6, cfg.n_bins);
  std::vector<float> w(static_cast<size_t>(cfg.window_m) * cfg.n_bins);

  auto row_starts_with = [&](int r, float v) {
    return w[static_cast<size_t>(r) * cfg.n_bins] == v &&
           w[static_cast<size_t>(r) * cfg.n_bins + 3] == v + 3.0f;
  };

  build_feature_window(f, 0, cfg, w.data());
  CHECK(row_starts_with(0, 0.0f));  // src -3 clamps to frame 0
  CHECK(row_starts_with(2, 0.0f));
  CHECK(row_starts_with(3, 0.0f));  // row past_frames() holds frame t
  CHECK(row_starts_with(4, 10.0f));

  build_feature_window(f, 3, cfg, w.data());
  for (int r = 0; r < 5; ++r) CHECK(row_starts_with(r, static_cast<float>(10 * r)));

  build_feature_window(f, 5, cfg, w.data());
  CHECK(row_starts_with(3, 50.0f));
  CHECK(w[4 * 4 + 0] == 0.0f);  // src 6 is past the end
  CHECK(w[4 * 4 + 3] == 0.0f);

  CHECK_THROWS_AS(build_feature_window(f, 6, cfg, w.data()), Error);
  CHECK_THROWS_AS(build_feature_window(f, -1, cfg, w.data()), Error);
  StreamerConfig wrong = cfg;
  wrong.n_bins = 5;
  CHECK_THROWS_AS(build_feature_window(f, 0, wrong, w.data()), Error);
}

TEST_CASE("scripted walkthrough: events, dedupe, history capping, pedal state") {
  const int on60 = Token::onset(60).id;
  const int on64 = Token::onset(64).id;
  const int off60 = Token::offset(60).id;

  std::vector<FrameScript> frames(6);
  frames[0] = {.seq = {on60}, .slot_response = {}, .pedal_token = kPedalOnId};
  frames[1] = {.seq = {}, .slot_response = {}, .pedal_token = kPedalOnId};
  frames[2] = {.seq = {}, .slot_response = {{60, off60}}, .pedal_token = kPedalOnId};
  frames[3] = {.seq = {on60}, .slot_response = {}, .pedal_token = kPedalOffId};
  frames[4] = {.seq = {on60}, .slot_response = {{60, off60}},
               .pedal_token = kPedalOffId};
  frames[5] = {.seq = {on60, on64}, .slot_response = {{60, off60}},
               .pedal_token = kBlankId};
  ScriptedDecoder dec(frames);

  StreamerConfig cfg = small_config();
  FeatureSequence f = ramp_features(6, cfg.n_bins);
  StreamSession session(dec, cfg);
  std::vector<float> w(static_cast<size_t>(cfg.window_m) * cfg.n_bins, 0.0f);
  std::vector<FrameEvents> ev;
  for (int t = 0; t < 6; ++t) {
    build_feature_window(f, t, cfg, w.data());
    ev.push_back(session.decode_at(t, w.data()));
  }

  REQUIRE(ev.size() == 6);
  CHECK(ev[0] == FrameEvents{0, {60}, {}, true, false});
  CHECK(ev[1] == FrameEvents{1, {}, {}, true, false});
  CHECK(ev[2] == FrameEvents{2, {}, {60}, true, false});
  CHECK(ev[3] == FrameEvents{3, {60}, {}, false, false});
  // frame 4: both the repeat onset and the repeat offset are deduplicated
  CHECK(ev[4] == FrameEvents{4, {}, {}, false, false});
  // frame 5: onset 60 deduped again, onset 64 lands, offset 60 now far enough
  CHECK(ev[5] == FrameEvents{5, {64}, {60}, false, false});

  // autoregressive inputs are raw history + BOS, oldest sequences dropped whole
  const auto& in = dec.first_inputs();
  REQUIRE(in.size() == 6);
  CHECK(in[0] == seq_of({kBosId}));
  CHECK(in[1] == seq_of({on60, kEosId, kBosId}));
  CHECK(in[2] == seq_of({on60, kEosId, kEosId, kBosId}));
  CHECK(in[3] == seq_of({kEosId, kEosId, kBosId}));
  CHECK(in[4] == seq_of({kEosId, on60, kEosId, kBosId}));
  // deduplicated tokens still enter the history verbatim
  CHECK(in[5] == seq_of({on60, kEosId, kBosId}));

  // one pedal-led slot query per frame while at most n_slots notes are active
  const auto& q = dec.slot_queries();
  REQUIRE(q.size() == 6);
  for (int t = 0; t < 5; ++t) {
    REQUIRE(q[t].size() == 1);
    CHECK(q[t][0] == seq_of({kBosId, on60}));
  }
  REQUIRE(q[5].size() == 1);
  CHECK(q[5][0] == seq_of({kBosId, on60, on64}));

  CHECK(session.counters().deduped_onsets == 2);
  CHECK(session.counters().deduped_offsets == 1);
  CHECK(session.counters().pedal_anomalies == 1);
  CHECK(session.counters().forced_offsets == 0);
  CHECK(session.counters().seq_anomalies == 0);
  CHECK(session.counters().slot_anomalies == 0);
  REQUIRE(session.active().size() == 1);
  CHECK(session.active().entries()[0].pitch == 64);
  CHECK(session.active().entries()[0].onset_frame == 5);
}

TEST_CASE("re-onset of an active pitch forces a close and budget stops decode") {
  const int on70 = Token::onset(70).id;

  std::vector<FrameScript> frames(5);
  frames[0] = {.seq = {on70}};
  frames[3] = {.seq = {on70}};
  frames[4] = {.seq = {Token::onset(10).id, Token::onset(11).id,
                       Token::onset(12).id, Token::onset(13).id,
                       Token::onset(14).id, Token::onset(15).id,
                       Token::onset(16).id, Token::onset(17).id}};
  ScriptedDecoder dec(frames);

  StreamerConfig cfg = small_config();
  FeatureSequence f = ramp_features(5, cfg.n_bins);
  StreamSession session(dec, cfg);
  std::vector<float> w(static_cast<size_t>(cfg.window_m) * cfg.n_bins, 0.0f);
  std::vector<FrameEvents> ev;
  for (int t = 0; t < 5; ++t) {
    build_feature_window(f, t, cfg, w.data());
    ev.push_back(session.decode_at(t, w.data()));
  }

  CHECK(ev[0] == FrameEvents{0, {70}, {}, false, false});
  CHECK(ev[3] == FrameEvents{3, {70}, {70}, false, false});
  // ids are history(3) + BOS, so a budget of 8 admits exactly 4 new tokens
  CHECK(ev[4] == FrameEvents{4, {10, 11, 12, 13}, {}, false, false});

  CHECK(session.counters().forced_offsets == 1);
  CHECK(session.counters().budget_stops == 1);
  CHECK(session.counters().deduped_onsets == 0);
  CHECK(session.active().size() == 5);
  CHECK(session.active().entries()[0].pitch == 70);
  CHECK(session.active().entries()[0].onset_frame == 3);

  // snapshot is ordered by onset frame then pitch and chunked by n_slots,
  // with the pedal row only in the first chunk
  const auto& q = dec.slot_queries();
  REQUIRE(q[4].size() == 3);
  CHECK(q[4][0] == seq_of({kBosId, on70, Token::onset(10).id}));
  CHECK(q[4][1] == seq_of({Token::onset(11).id, Token::onset(12).id}));
  CHECK(q[4][2] == seq_of({Token::onset(13).id}));
}

TEST_CASE("anomalous tokens stop the pass or are ignored without state damage") {
  const int on50 = Token::onset(50).id;

  std::vector<FrameScript> frames(4);
  frames[0] = {.seq = {on50, Token::offset(50).id, Token::onset(55).id}};
  frames[1] = {.seq = {}, .slot_response = {{50, Token::onset(50).id}}};
  frames[2] = {.seq = {}, .slot_response = {{50, Token::offset(51).id}}};
  frames[3] = {.seq = {}, .slot_response = {{50, kEosId}}};
  ScriptedDecoder dec(frames);

  StreamerConfig cfg = small_config();
  FeatureSequence f = ramp_features(4, cfg.n_bins);

  StreamSession session(dec, cfg);
  std::vector<float> w(static_cast<size_t>(cfg.window_m) * cfg.n_bins, 0.0f);
  std::vector<FrameEvents> ev;
  for (int t = 0; t < 4; ++t) {
    build_feature_window(f, t, cfg, w.data());
    ev.push_back(session.decode_at(t, w.data()));
  }

  // the offset token aborted the onset pass; onset 55 was never requested
  CHECK(ev[0] == FrameEvents{0, {50}, {}, false, false});
  for (int t = 1; t < 4; ++t) {
    CHECK(ev[t].onsets.empty());
    CHECK(ev[t].offsets.empty());
  }
  CHECK(session.counters().seq_anomalies == 1);
  CHECK(session.counters().slot_anomalies == 3);
  CHECK(session.counters().deduped_onsets == 0);
  REQUIRE(session.active().size() == 1);
  CHECK(session.active().entries()[0].pitch == 50);
  CHECK(session.active().entries()[0].onset_frame == 0);
  // the anomalous token never entered the history
  CHECK(dec.first_inputs()[1] == seq_of({on50, kEosId, kBosId}));
}

TEST_CASE("disabling the pedal drops the BOS row and idle slot queries") {
  const int on60 = Token::onset(60).id;

  std::vector<FrameScript> frames(3);
  frames[0] = {.seq = {on60}};
  frames[1] = {.seq = {}, .slot_response = {{60, Token::offset(60).id}}};
  frames[2] = {.seq = {}};
  ScriptedDecoder dec(frames);

  StreamerConfig cfg = small_config();
  cfg.pedal_enabled = false;
  FeatureSequence f = ramp_features(3, cfg.n_bins);
  std::vector<FrameEvents> ev = run_offline(f, dec, cfg);

  CHECK(ev[0] == FrameEvents{0, {60}, {}, false, false});
  CHECK(ev[1] == FrameEvents{1, {}, {60}, false, false});
  CHECK(ev[2] == FrameEvents{2, {}, {}, false, true});

  const auto& q = dec.slot_queries();
  REQUIRE(q[0].size() == 1);
  CHECK(q[0][0] == seq_of({on60}));  // no BOS row
  REQUIRE(q[1].size() == 1);
  CHECK(q[1][0] == seq_of({on60}));
  CHECK(q[2].empty());  // nothing active and no pedal: no query at all
}

TEST_CASE("pushed frames decode after the lookahead and match offline decode") {
  StreamerConfig cfg;
  cfg.future_frames = 3;
  cfg.window_m = 7;
  cfg.n_bins = 4;
  cfg.n_seq = 8;
  cfg.n_slots = 2;
  cfg.history_frames = 4;
  cfg.dedupe_frames = 2;

  const int on60 = Token::onset(60).id;
  const int on64 = Token::onset(64).id;
  std::vector<FrameScript> frames(9);
  frames[0] = {.seq = {on60}, .slot_response = {}, .pedal_token = kPedalOnId};
  frames[1] = {.seq = {on64}, .slot_response = {{60, Token::offset(60).id}},
               .pedal_token = kPedalOnId};
  frames[3] = {.seq = {on60}, .slot_response = {{64, Token::offset(64).id}}};
  frames[4] = {.seq = {on60}};  // deduplicated repeat
  frames[5] = {.seq = {Token::onset(72).id, Token::onset(75).id}};
  frames[6] = {.seq = {}, .slot_response = {{72, Token::onset(5).id}}};
  frames[7] = {.seq = {Token::onset(20).id, Token::onset(21).id,
                       Token::onset(22).id, Token::onset(23).id,
                       Token::onset(24).id, Token::onset(25).id,
                       Token::onset(26).id, Token::onset(27).id}};
  frames[8] = {.seq = {}, .slot_response = {{75, Token::offset(75).id}}};

  FeatureSequence f = random_features(9, cfg.n_bins, 4242);
  const int window_floats = cfg.window_m * cfg.n_bins;

  ScriptedDecoder offline_dec(frames);
  offline_dec.store_windows = true;
  offline_dec.window_floats = window_floats;
  std::vector<FrameEvents> offline = run_offline(f, offline_dec, cfg);

  ScriptedDecoder push_dec(frames);
  push_dec.store_windows = true;
  push_dec.window_floats = window_floats;
  StreamSession session(push_dec, cfg);
  CHECK_THROWS_AS(session.push_frame(std::vector<float>(3, 0.0f)), Error);

  std::vector<FrameEvents> streamed;
  for (size_t t = 0; t < f.frames(); ++t) {
    std::optional<FrameEvents> out = session.push_frame(f.row(t));
    if (t < 3) {
      CHECK(!out.has_value());  // lookahead not yet satisfied
    } else {
      REQUIRE(out.has_value());
      streamed.push_back(*out);
    }
  }
  CHECK(session.frames_in() == 9);
  CHECK(session.frames_out() == 6);
  std::vector<FrameEvents> tail = session.flush();
  REQUIRE(tail.size() == 3);
  streamed.insert(streamed.end(), tail.begin(), tail.end());
  CHECK(session.frames_out() == 9);
  CHECK(session.flush().empty());

  REQUIRE(streamed.size() == offline.size());
  for (size_t t = 0; t < streamed.size(); ++t) {
    CAPTURE(t);
    CHECK(streamed[t] == offline[t]);
    CHECK(streamed[t].is_final == (t == streamed.size() - 1));
  }
  // both paths assembled identical feature windows, edge padding included
  REQUIRE(push_dec.windows().size() == offline_dec.windows().size());
  for (size_t t = 0; t < push_dec.windows().size(); ++t) {
    CAPTURE(t);
    CHECK(push_dec.windows()[t] == offline_dec.windows()[t]);
  }
}

TEST_CASE("adversarial decode keeps onset-offset correspondence invariants") {
  StreamerConfig cfg;
  cfg.future_frames = 2;
  cfg.window_m = 7;
  cfg.n_bins = 8;
  cfg.n_seq = 24;
  cfg.n_slots = 4;
  cfg.history_frames = 4;
  cfg.dedupe_frames = 2;

  auto run = [&](StreamerConfig config, uint64_t seed, int n_frames) {
    samt::testing::AdversarialDecoder dec(seed);
    StreamSession session(dec, config);
    std::vector<float> window(
        static_cast<size_t>(config.window_m) * config.n_bins, 0.0f);
    int64_t total_onsets = 0;
    int64_t total_offsets = 0;
    for (int t = 0; t < n_frames; ++t) {
      std::set<int> before;
      for (const ActiveNote& a : session.active().entries()) before.insert(a.pitch);

      FrameEvents ev = session.decode_at(t, window.data());
      CHECK(ev.t == t);
      CHECK(std::is_sorted(ev.onsets.begin(), ev.onsets.end()));
      CHECK(std::adjacent_find(ev.onsets.begin(), ev.onsets.end()) ==
            ev.onsets.end());
      std::set<int> offsets(ev.offsets.begin(), ev.offsets.end());
      CHECK(offsets.size() == ev.offsets.size());

      std::set<int> after;
      for (const ActiveNote& a : session.active().entries()) after.insert(a.pitch);
      std::set<int> onsets(ev.onsets.begin(), ev.onsets.end());
      for (int p : ev.offsets) {
        CHECK(p >= 0);
        CHECK(p < kNumPitches);
        CHECK((before.count(p) > 0 || onsets.count(p) > 0));
      }
      for (int p : ev.onsets) {
        CHECK((after.count(p) > 0 || offsets.count(p) > 0));
      }
      total_onsets += static_cast<int64_t>(ev.onsets.size());
      total_offsets += static_cast<int64_t>(ev.offsets.size());
      CHECK(static_cast<int64_t>(session.active().size()) ==
            total_onsets - total_offsets);
      CHECK(ev.pedal_down == session.pedal_down());

      if (t % 97 == 0) {
        auto entries = session.active().entries();
        for (size_t i = 1; i < entries.size(); ++i) {
          bool ordered =
              entries[i - 1].onset_frame < entries[i].onset_frame ||
              (entries[i - 1].onset_frame == entries[i].onset_frame &&
               entries[i - 1].pitch < entries[i].pitch);
          CHECK(ordered);
        }
      }
    }
    return session.counters();
  };

  DecodeCounters dual = run(cfg, 1234, 2000);
  CHECK(dual.total() > 0);
  CHECK(dual.seq_anomalies > 0);
  CHECK(dual.slot_anomalies > 0);
  CHECK(dual.pedal_anomalies > 0);
  CHECK(dual.deduped_onsets > 0);
  CHECK(dual.correspondence_drops == 0);  // slot queries only cover active notes

  StreamerConfig mixed = cfg;
  mixed.single_decoder = true;
  DecodeCounters single = run(mixed, 5678, 1500);
  CHECK(single.total() > 0);
  CHECK(single.seq_anomalies > 0);
  CHECK(single.correspondence_drops > 0);
  CHECK(single.slot_anomalies == 0);  // the slot path is never used
}

TEST_CASE("single decoder streams interleave offsets and pedal tokens inline") {
  const int on60 = Token::onset(60).id;
  const int on64 = Token::onset(64).id;
  const int off60 = Token::offset(60).id;
  const int off64 = Token::offset(64).id;

  std::vector<FrameScript> frames(6);
  frames[0] = {.seq = {on60, kPedalOnId, on64}};
  frames[1] = {.seq = {off60}};
  frames[2] = {.seq = {off60}};  // pitch no longer active: dropped
  frames[3] = {.seq = {off64}};
  frames[4] = {.seq = {kBlankId, Token::onset(70).id}};
  frames[5] = {.seq = {kPedalOffId}};
  ScriptedDecoder dec(frames);

  StreamerConfig cfg = small_config();
  cfg.single_decoder = true;
  cfg.n_seq = 16;
  FeatureSequence f = ramp_features(6, cfg.n_bins);

  StreamSession session(dec, cfg);
  std::vector<float> w(static_cast<size_t>(cfg.window_m) * cfg.n_bins, 0.0f);
  std::vector<FrameEvents> ev;
  for (int t = 0; t < 6; ++t) {
    build_feature_window(f, t, cfg, w.data());
    ev.push_back(session.decode_at(t, w.data()));
  }

  CHECK(ev[0] == FrameEvents{0, {60, 64}, {}, true, false});
  CHECK(ev[1] == FrameEvents{1, {}, {60}, true, false});
  CHECK(ev[2] == FrameEvents{2, {}, {}, true, false});
  CHECK(ev[3] == FrameEvents{3, {}, {64}, true, false});
  CHECK(ev[4] == FrameEvents{4, {}, {}, true, false});  // blank aborts the pass
  CHECK(ev[5] == FrameEvents{5, {}, {}, false, false});

  CHECK(session.counters().correspondence_drops == 1);
  CHECK(session.counters().seq_anomalies == 1);
  CHECK(session.active().empty());

  // mixed histories carry offset and pedal tokens; dropped tokens stay too
  const auto& in = dec.first_inputs();
  CHECK(in[1] == seq_of({on60, kPedalOnId, on64, kEosId, kBosId}));
  CHECK(in[2] == seq_of({on60, kPedalOnId, on64, kEosId, off60, kEosId, kBosId}));
  CHECK(in[3] == seq_of({on60, kPedalOnId, on64, kEosId, off60, kEosId, off60,
                         kEosId, kBosId}));

  // the slot path never runs with a single decoder
  for (const auto& queries : dec.slot_queries()) CHECK(queries.empty());
}

TEST_CASE("model-backed streaming matches offline decode on random features") {
  ModelConfig mc = ModelConfig::tiny();
  Transcriber<float> model(mc, 11);
  StreamerConfig cfg = StreamerConfig::from_model(mc, 2);
  FeatureSequence f = random_features(8, cfg.n_bins, 99);

  ModelDecoder offline_dec(model);
  std::vector<FrameEvents> offline = run_offline(f, offline_dec, cfg);
  REQUIRE(offline.size() == 8);

  ModelDecoder push_dec(model);
  StreamSession session(push_dec, cfg);
  std::vector<FrameEvents> streamed;
  for (size_t t = 0; t < f.frames(); ++t) {
    if (auto out = session.push_frame(f.row(t))) streamed.push_back(*out);
  }
  std::vector<FrameEvents> tail = session.flush();
  streamed.insert(streamed.end(), tail.begin(), tail.end());

  REQUIRE(streamed.size() == offline.size());
  for (size_t t = 0; t < streamed.size(); ++t) {
    CAPTURE(t);
    CHECK(streamed[t] == offline[t]);
  }
}
