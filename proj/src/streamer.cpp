#include "samt/streamer.hpp"

#include <algorithm>
#include <cstring>

#include "samt/common.hpp"

namespace samt {

void StreamerConfig::validate() const {
  check(window_m >= 1, "window_m must be positive");
  check(future_frames >= 0 && future_frames <= window_m - 1,
        "future_frames must lie inside the window");
  check(n_bins > 0, "n_bins must be positive");
  check(n_seq >= 3, "n_seq must allow BOS + token + EOS");
  check(n_slots >= 1, "n_slots must be positive");
  check(history_frames >= 0, "history_frames must be non-negative");
  check(dedupe_frames >= 0, "dedupe_frames must be non-negative");
  check(frame_period > 0.0, "frame_period must be positive");
}

StreamerConfig StreamerConfig::from_model(const ModelConfig& m, int future_frames) {
  StreamerConfig cfg;
  cfg.future_frames = future_frames;
  cfg.window_m = m.window_m;
  cfg.n_bins = m.n_bins;
  cfg.n_seq = m.n_seq;
  cfg.n_slots = m.n_slots;
  cfg.pedal_enabled = m.pedal_enabled;
  cfg.single_decoder = m.single_decoder;
  cfg.validate();
  return cfg;
}

StreamSession::StreamSession(FrameDecoder& dec, const StreamerConfig& cfg)
    : dec_(dec), cfg_(cfg) {
  cfg_.validate();
  last_onset_frame_.fill(-1000000);
  last_offset_frame_.fill(-1000000);
}

void StreamSession::build_window(int t, std::vector<float>& out) const {
  out.assign(static_cast<size_t>(cfg_.window_m) * cfg_.n_bins, 0.0f);
  for (int r = 0; r < cfg_.window_m; ++r) {
    int64_t src = static_cast<int64_t>(t) - cfg_.past_frames() + r;
    const float* row = nullptr;
    if (src < 0) {
      row = first_frame_.data();
    } else if (src < arrivals_) {
      row = frames_[static_cast<size_t>(src - base_)].data();
    }
    if (row != nullptr) {
      std::memcpy(out.data() + static_cast<size_t>(r) * cfg_.n_bins, row,
                  sizeof(float) * cfg_.n_bins);
    }
  }
}

std::optional<FrameEvents> StreamSession::push_frame(std::span<const float> frame) {
  check(static_cast<int>(frame.size()) == cfg_.n_bins, "frame width mismatch");
  if (arrivals_ == 0) first_frame_.assign(frame.begin(), frame.end());
  frames_.emplace_back(frame.begin(), frame.end());
  ++arrivals_;

  int64_t t = arrivals_ - 1 - cfg_.future_frames;
  if (t < 0) return std::nullopt;
  std::vector<float> window;
  build_window(static_cast<int>(t), window);
  FrameEvents ev = decode_at(static_cast<int>(t), window.data());
  ++emitted_;

  int64_t keep_from = std::max<int64_t>(0, t + 1 - cfg_.past_frames());
  while (base_ < keep_from) {
    frames_.pop_front();
    ++base_;
  }
  return ev;
}

std::vector<FrameEvents> StreamSession::flush() {
  std::vector<FrameEvents> out;
  std::vector<float> window;
  while (emitted_ < arrivals_) {
    int t = static_cast<int>(emitted_);
    build_window(t, window);
    FrameEvents ev = decode_at(t, window.data());
    ++emitted_;
    ev.is_final = (emitted_ == arrivals_);
    out.push_back(std::move(ev));
  }
  return out;
}

FrameEvents StreamSession::decode_at(int t, const float* window) {
  dec_.begin_frame(window);
  FrameEvents ev;
  ev.t = t;
  if (cfg_.single_decoder) {
    decode_mixed(t, ev);
  } else {
    decode_onsets(t, ev);
    decode_offsets(t, ev);
  }
  std::sort(ev.onsets.begin(), ev.onsets.end());
  ev.pedal_down = pedal_down_;
  return ev;
}

std::vector<int> flatten_capped_history(std::span<const std::vector<int>> seqs,
                                        int n_seq, int n_slots) {
  int reserve = std::min(n_slots + 1, n_seq - 2);
  size_t cap = static_cast<size_t>(std::max(0, n_seq - 2 - reserve));
  size_t total = 0;
  for (const auto& s : seqs) total += s.size();
  size_t start = 0;
  while (start < seqs.size() && total > cap) {
    total -= seqs[start].size();
    ++start;
  }
  std::vector<int> ids;
  ids.reserve(total);
  for (size_t i = start; i < seqs.size(); ++i) {
    ids.insert(ids.end(), seqs[i].begin(), seqs[i].end());
  }
  return ids;
}

std::vector<int> StreamSession::history_ids() const {
  std::vector<std::vector<int>> seqs(history_.begin(), history_.end());
  return flatten_capped_history(seqs, cfg_.n_seq, cfg_.n_slots);
}

void StreamSession::note_history(std::vector<int> seq) {
  history_.push_back(std::move(seq));
  while (static_cast<int>(history_.size()) > cfg_.history_frames) {
    history_.pop_front();
  }
}

void StreamSession::apply_onset(int t, int pitch, FrameEvents& ev) {
  if (t - last_onset_frame_[pitch] <= cfg_.dedupe_frames) {
    ++counters_.deduped_onsets;
    return;
  }
  if (active_.contains(pitch)) {
    // the model restarted a sounding pitch; close the old note first
    ev.offsets.push_back(pitch);
    active_.erase(pitch);
    last_offset_frame_[pitch] = t;
    ++counters_.forced_offsets;
  }
  active_.insert(pitch, t);
  ev.onsets.push_back(pitch);
  last_onset_frame_[pitch] = t;
}

bool StreamSession::apply_offset(int t, int pitch, FrameEvents& ev) {
  if (t - last_offset_frame_[pitch] <= cfg_.dedupe_frames) {
    ++counters_.deduped_offsets;  // note stays active
    return false;
  }
  ev.offsets.push_back(pitch);
  active_.erase(pitch);
  last_offset_frame_[pitch] = t;
  return true;
}

void StreamSession::apply_pedal_token(int token) {
  if (token == kPedalOnId) {
    pedal_down_ = true;
  } else if (token == kPedalOffId) {
    pedal_down_ = false;
  } else {
    ++counters_.pedal_anomalies;  // keep the current state
  }
}

void StreamSession::decode_onsets(int t, FrameEvents& ev) {
  std::vector<int> ids = history_ids();
  ids.push_back(kBosId);
  std::vector<int> emitted;
  for (;;) {
    if (static_cast<int>(ids.size()) >= cfg_.n_seq) {
      ++counters_.budget_stops;
      break;
    }
    int tok = dec_.next_token(ids);
    if (tok == kEosId) break;
    if (!Token(tok).is_onset()) {
      ++counters_.seq_anomalies;  // treated as EOS
      break;
    }
    ids.push_back(tok);
    emitted.push_back(tok);
    apply_onset(t, Token(tok).pitch(), ev);
  }
  emitted.push_back(kEosId);
  note_history(std::move(emitted));
}

void StreamSession::decode_offsets(int t, FrameEvents& ev) {
  std::vector<ActiveNote> snapshot(active_.entries().begin(), active_.entries().end());
  size_t n = snapshot.size();
  if (n == 0 && !cfg_.pedal_enabled) return;

  for (size_t start = 0; start == 0 || start < n; start += cfg_.n_slots) {
    bool with_pedal = cfg_.pedal_enabled && start == 0;
    size_t count = std::min<size_t>(cfg_.n_slots, n > start ? n - start : 0);
    if (count == 0 && !with_pedal) break;

    std::vector<int> ids;
    if (with_pedal) ids.push_back(kBosId);
    for (size_t i = 0; i < count; ++i) {
      ids.push_back(Token::onset(snapshot[start + i].pitch).id);
    }
    std::vector<int> out = dec_.read_slots(ids);
    check(out.size() == ids.size(), "slot decoder returned wrong row count");

    size_t at = 0;
    if (with_pedal) apply_pedal_token(out[at++]);
    for (size_t i = 0; i < count; ++i, ++at) {
      int pitch = snapshot[start + i].pitch;
      int tok = out[at];
      if (tok == kBlankId) continue;
      if (tok == Token::offset(pitch).id) {
        apply_offset(t, pitch, ev);
      } else {
        ++counters_.slot_anomalies;  // treated as BLANK
      }
    }
  }
}

void StreamSession::decode_mixed(int t, FrameEvents& ev) {
  std::vector<int> ids = history_ids();
  ids.push_back(kBosId);
  std::vector<int> emitted;
  for (;;) {
    if (static_cast<int>(ids.size()) >= cfg_.n_seq) {
      ++counters_.budget_stops;
      break;
    }
    int tok = dec_.next_token(ids);
    if (tok == kEosId) break;
    Token token(tok);
    if (token.is_onset()) {
      ids.push_back(tok);
      emitted.push_back(tok);
      apply_onset(t, token.pitch(), ev);
    } else if (token.is_offset()) {
      ids.push_back(tok);
      emitted.push_back(tok);
      if (!active_.contains(token.pitch())) {
        ++counters_.correspondence_drops;
      } else {
        apply_offset(t, token.pitch(), ev);
      }
    } else if (tok == kPedalOnId || tok == kPedalOffId) {
      ids.push_back(tok);
      emitted.push_back(tok);
      apply_pedal_token(tok);
    } else {
      ++counters_.seq_anomalies;  // treated as EOS
      break;
    }
  }
  emitted.push_back(kEosId);
  note_history(std::move(emitted));
}

void build_feature_window(const FeatureSequence& features, int t,
                          const StreamerConfig& cfg, float* out) {
  check(features.n_bins == cfg.n_bins, "feature width does not match window");
  int frames = static_cast<int>(features.frames());
  check(t >= 0 && t < frames, "window centre out of range");
  for (int r = 0; r < cfg.window_m; ++r) {
    int src = t - cfg.past_frames() + r;
    float* dst = out + static_cast<size_t>(r) * cfg.n_bins;
    if (src < 0) src = 0;
    if (src < frames) {
      std::memcpy(dst, features.row(src).data(), sizeof(float) * cfg.n_bins);
    } else {
      std::memset(dst, 0, sizeof(float) * cfg.n_bins);
    }
  }
}

std::vector<FrameEvents> run_offline(const FeatureSequence& features,
                                     FrameDecoder& dec, const StreamerConfig& cfg) {
  check(features.n_bins == cfg.n_bins, "feature width does not match decoder");
  int frames = static_cast<int>(features.frames());
  StreamSession session(dec, cfg);
  std::vector<FrameEvents> out;
  out.reserve(frames);
  std::vector<float> window(static_cast<size_t>(cfg.window_m) * cfg.n_bins);
  for (int t = 0; t < frames; ++t) {
    build_feature_window(features, t, cfg, window.data());
    FrameEvents ev = session.decode_at(t, window.data());
    ev.is_final = (t == frames - 1);
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace samt
