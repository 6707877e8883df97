#include "samt/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>

#include "json.hpp"
#include "samt/common.hpp"
#include "samt/midi.hpp"

namespace samt {

TokenKind Token::kind() const {
  if (id == kBlankId) return TokenKind::blank;
  if (id == kBosId) return TokenKind::bos;
  if (id == kEosId) return TokenKind::eos;
  if (id == kPedalOnId) return TokenKind::pedal_on;
  if (id == kPedalOffId) return TokenKind::pedal_off;
  if (is_onset()) return TokenKind::onset;
  if (is_offset()) return TokenKind::offset;
  fail("token id out of range: " + std::to_string(id));
}

int Token::pitch() const {
  if (is_onset()) return id - kOnsetBase;
  if (is_offset()) return id - kOffsetBase;
  return -1;
}

std::string token_name(Token t) {
  switch (t.kind()) {
    case TokenKind::blank: return "BLANK";
    case TokenKind::bos: return "BOS";
    case TokenKind::eos: return "EOS";
    case TokenKind::pedal_on: return "PEDAL_ON";
    case TokenKind::pedal_off: return "PEDAL_OFF";
    case TokenKind::onset: return "ON(" + std::to_string(t.pitch()) + ")";
    case TokenKind::offset: return "OFF(" + std::to_string(t.pitch()) + ")";
  }
  return "?";
}

Annotation parse_annotation_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  check(j.is_object(), "annotation must be a JSON object");
  check(j.contains("notes") && j["notes"].is_array(),
        "annotation missing \"notes\" array");
  Annotation ann;
  for (const auto& n : j["notes"]) {
    check(n.is_array() && n.size() == 3, "note entries must be [pitch, onset, offset]");
    Annotation::Note note;
    note.pitch = n[0].get<int>();
    note.onset = n[1].get<double>();
    note.offset = n[2].get<double>();
    ann.notes.push_back(note);
  }
  if (j.contains("pedal")) {
    check(j["pedal"].is_array(), "\"pedal\" must be an array");
    for (const auto& p : j["pedal"]) {
      check(p.is_array() && p.size() == 2, "pedal entries must be [down, up]");
      ann.pedal.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
  }
  return ann;
}

std::string annotation_to_json(const Annotation& ann) {
  nlohmann::json notes = nlohmann::json::array();
  for (const auto& n : ann.notes) {
    notes.push_back({n.pitch, n.onset, n.offset});
  }
  nlohmann::json pedal = nlohmann::json::array();
  for (const auto& p : ann.pedal) {
    pedal.push_back({p.first, p.second});
  }
  nlohmann::json j{{"notes", notes}, {"pedal", pedal}};
  return j.dump();
}

Annotation read_annotation(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == ".json") return parse_annotation_json(read_file_text(path));
  if (ext == ".mid" || ext == ".midi") return read_midi(path);
  fail("unsupported annotation format: " + path.string());
}

void write_annotation_json(const std::filesystem::path& path, const Annotation& ann) {
  write_file_text(path, annotation_to_json(ann));
}

TargetEncoder::TargetEncoder(const Annotation& ann, const TargetConfig& cfg)
    : cfg_(cfg) {
  check(cfg.n_seq >= 3, "n_seq must allow BOS + token + EOS");
  check(cfg.n_slots >= 1, "n_slots must be positive");
  check(cfg.frame_period > 0.0, "frame_period must be positive");
  const double h = cfg.frame_period;

  for (const auto& n : ann.notes) {
    if (n.pitch < 0 || n.pitch >= kNumPitches) {
      ingest_error_ = "pitch out of range: " + std::to_string(n.pitch);
      continue;
    }
    if (!(std::isfinite(n.onset) && std::isfinite(n.offset)) || n.onset < 0.0 ||
        n.offset < n.onset) {
      ingest_error_ = "bad note interval";
      continue;
    }
    QuantNote q;
    q.pitch = n.pitch;
    q.on = time_to_frame(n.onset, h);
    q.off = std::max(time_to_frame(n.offset, h), q.on);
    q.on_last = q.on;   // spreads resolved below
    q.off_first = q.off;
    notes_.push_back(q);
  }
  std::sort(notes_.begin(), notes_.end(), [](const QuantNote& a, const QuantNote& b) {
    return a.on != b.on ? a.on < b.on : a.pitch < b.pitch;
  });

  // same-pitch collisions: a re-onset force-closes the previous note one
  // frame earlier; same-frame duplicates keep only the later note
  std::map<int, size_t> last_of_pitch;
  std::vector<bool> dropped(notes_.size(), false);
  for (size_t i = 0; i < notes_.size(); ++i) {
    auto it = last_of_pitch.find(notes_[i].pitch);
    if (it != last_of_pitch.end()) {
      QuantNote& prev = notes_[it->second];
      if (prev.on == notes_[i].on) {
        dropped[it->second] = true;
      } else if (prev.off >= notes_[i].on) {
        prev.off = notes_[i].on - 1;
        if (prev.off < prev.on) prev.off = prev.on;
        prev.off_first = prev.off;
      }
    }
    last_of_pitch[notes_[i].pitch] = i;
  }
  size_t w = 0;
  for (size_t i = 0; i < notes_.size(); ++i) {
    if (!dropped[i]) notes_[w++] = notes_[i];
  }
  notes_.resize(w);

  // two-frame spreads, clipped so a spread never reaches the next same-pitch
  // onset (the active set holds at most one entry per pitch)
  std::map<int, int> next_on;  // pitch -> onset frame of the following note
  for (size_t i = notes_.size(); i-- > 0;) {
    QuantNote& q = notes_[i];
    auto it = next_on.find(q.pitch);
    int limit = it != next_on.end() ? it->second : std::numeric_limits<int>::max();
    q.on_last = (q.on + 1 < limit) ? q.on + 1 : q.on;
    q.off_first = q.off;
    q.off = (q.off + 1 < limit) ? q.off + 1 : q.off;
    next_on[q.pitch] = q.on;
  }

  for (const auto& p : ann.pedal) {
    if (!(std::isfinite(p.first) && std::isfinite(p.second)) || p.second < p.first) {
      ingest_error_ = "bad pedal interval";
      continue;
    }
    pedal_.emplace_back(time_to_frame(p.first, h), time_to_frame(p.second, h));
  }

  int last = -1;
  for (const auto& q : notes_) last = std::max({last, q.on_last, q.off});
  for (const auto& p : pedal_) last = std::max(last, p.second);
  min_frames_ = last + 1;

  // ingestion limits: onset tokens per frame and active notes per frame
  if (!ingest_error_) {
    std::map<int, int> onset_count, active_delta;
    for (const auto& q : notes_) {
      for (int t = q.on; t <= q.on_last; ++t) ++onset_count[t];
      ++active_delta[q.on];
      --active_delta[q.off + 1];
    }
    for (const auto& [t, c] : onset_count) {
      if (c > cfg_.n_seq - 1) {
        ingest_error_ = "frame " + std::to_string(t) + " has " + std::to_string(c) +
                        " onsets, limit " + std::to_string(cfg_.n_seq - 1);
        break;
      }
    }
    int active = 0;
    for (const auto& [t, d] : active_delta) {
      active += d;
      if (active > cfg_.n_slots) {
        ingest_error_ = "frame " + std::to_string(t) + " has " + std::to_string(active) +
                        " active notes, limit " + std::to_string(cfg_.n_slots);
        break;
      }
    }
  }
}

FrameTargets TargetEncoder::frame(int t) const {
  FrameTargets ft;
  std::vector<int> onsets;
  std::vector<const QuantNote*> active;
  for (const auto& q : notes_) {
    if (q.on <= t && t <= q.on_last) onsets.push_back(q.pitch);
    if (q.on <= t && t <= q.off) active.push_back(&q);
  }
  std::sort(onsets.begin(), onsets.end());
  onsets.erase(std::unique(onsets.begin(), onsets.end()), onsets.end());
  for (int p : onsets) ft.onset_seq.push_back(Token::onset(p));
  ft.onset_seq.push_back(Token::eos());

  std::sort(active.begin(), active.end(),
            [](const QuantNote* a, const QuantNote* b) {
              return a->on != b->on ? a->on < b->on : a->pitch < b->pitch;
            });
  if (static_cast<int>(active.size()) > cfg_.n_slots) {
    active.resize(cfg_.n_slots);
  }
  ft.slot_inputs.assign(cfg_.n_slots, Token::blank());
  ft.slot_targets.assign(cfg_.n_slots, Token::blank());
  ft.slot_mask.assign(cfg_.n_slots, 0);
  for (size_t i = 0; i < active.size(); ++i) {
    const QuantNote* q = active[i];
    ft.slot_inputs[i] = Token::onset(q->pitch);
    ft.slot_targets[i] = (q->off_first <= t && t <= q->off) ? Token::offset(q->pitch)
                                                            : Token::blank();
    ft.slot_mask[i] = 1;
  }

  bool down = false;
  for (const auto& p : pedal_) {
    if (p.first <= t && t < p.second) down = true;
  }
  ft.pedal_target = Token::pedal(down);
  return ft;
}

std::vector<std::vector<Token>> TargetEncoder::history(int t, int history_frames) const {
  std::vector<std::vector<Token>> out;
  for (int s = t - history_frames; s < t; ++s) {
    if (s < 0) continue;
    out.push_back(frame(s).onset_seq);
  }
  return out;
}

}  // namespace samt
