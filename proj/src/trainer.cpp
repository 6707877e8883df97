#include "samt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "samt/assembler.hpp"
#include "samt/audio.hpp"
#include "samt/common.hpp"
#include "samt/metrics.hpp"

namespace samt {

using nlohmann::json;

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  json j = json::parse(read_file_text(path));
  check(j.is_object() && j.contains("clips") && j["clips"].is_array(),
        "manifest must be an object with a clips array");
  std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  std::vector<ManifestEntry> out;
  for (const auto& c : j["clips"]) {
    check(c.is_object() && c.contains("audio") && c.contains("annotation"),
          "manifest clip needs audio and annotation");
    ManifestEntry e;
    e.audio = resolve(c["audio"].get<std::string>());
    e.annotation = resolve(c["annotation"].get<std::string>());
    if (c.contains("split")) e.split = c["split"].get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

void TrainConfig::validate() const {
  check(lr > 0.0, "lr must be positive");
  check(batch >= 1, "batch must be positive");
  check(max_steps >= 1, "max_steps must be positive");
  check(clip_seconds > 0.0, "clip_seconds must be positive");
  check(weight_decay >= 0.0, "weight_decay must be non-negative");
  check(grad_clip >= 0.0, "grad_clip must be non-negative");
  check(w_onset >= 0.0 && w_offset >= 0.0 && w_pedal >= 0.0,
        "loss weights must be non-negative");
  check(validate_every >= 1, "validate_every must be positive");
  check(patience >= 0, "patience must be non-negative");
  check(val_clips >= 1, "val_clips must be positive");
  check(log_every >= 1, "log_every must be positive");
}

namespace {

json train_config_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"batch", c.batch},
              {"max_steps", c.max_steps},
              {"clip_seconds", c.clip_seconds},
              {"weight_decay", c.weight_decay},
              {"grad_clip", c.grad_clip},
              {"seed", c.seed},
              {"w_onset", c.w_onset},
              {"w_offset", c.w_offset},
              {"w_pedal", c.w_pedal},
              {"validate_every", c.validate_every},
              {"patience", c.patience},
              {"val_clips", c.val_clips},
              {"stop_onset_f1", c.stop_onset_f1},
              {"stop_onset_offset_f1", c.stop_onset_offset_f1},
              {"log_every", c.log_every}};
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  return train_config_json(cfg).dump(2);
}

TrainConfig train_config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  check(j.is_object(), "train config must be a JSON object");
  TrainConfig cfg;
  json defaults = train_config_json(cfg);
  for (const auto& [key, value] : j.items()) {
    check(defaults.contains(key), "unknown train config field: " + key);
    defaults[key] = value;
  }
  cfg.lr = defaults["lr"].get<double>();
  cfg.batch = defaults["batch"].get<int>();
  cfg.max_steps = defaults["max_steps"].get<int>();
  cfg.clip_seconds = defaults["clip_seconds"].get<double>();
  cfg.weight_decay = defaults["weight_decay"].get<double>();
  cfg.grad_clip = defaults["grad_clip"].get<double>();
  cfg.seed = defaults["seed"].get<std::uint64_t>();
  cfg.w_onset = defaults["w_onset"].get<double>();
  cfg.w_offset = defaults["w_offset"].get<double>();
  cfg.w_pedal = defaults["w_pedal"].get<double>();
  cfg.validate_every = defaults["validate_every"].get<int>();
  cfg.patience = defaults["patience"].get<int>();
  cfg.val_clips = defaults["val_clips"].get<int>();
  cfg.stop_onset_f1 = defaults["stop_onset_f1"].get<double>();
  cfg.stop_onset_offset_f1 = defaults["stop_onset_offset_f1"].get<double>();
  cfg.log_every = defaults["log_every"].get<int>();
  cfg.validate();
  return cfg;
}

LoadedClip load_clip(const std::filesystem::path& audio,
                     const std::filesystem::path& annotation,
                     const CqtConfig& cqt_cfg, const TargetConfig& target_cfg) {
  LoadedClip clip;
  clip.name = audio.stem().string();
  AudioClip wav = ingest_wav(audio, cqt_cfg.sample_rate);
  CqtConfig causal = cqt_cfg;
  causal.db_ref = CqtConfig::DbRef::full_scale;  // features must match the stream path
  CqtKernelBank bank = CqtKernelBank::build(causal);
  clip.features = compute_cqt(wav, bank);
  clip.annotation = read_annotation(annotation);
  clip.targets = std::make_shared<TargetEncoder>(clip.annotation, target_cfg);
  if (auto err = clip.targets->ingest_error()) {
    fail("clip " + clip.name + ": " + *err);
  }
  check(clip.features.frames() > 0, "clip " + clip.name + " produced no frames");
  return clip;
}

std::vector<LoadedClip> load_split(std::span<const ManifestEntry> entries,
                                   const std::string& split,
                                   const CqtConfig& cqt_cfg,
                                   const TargetConfig& target_cfg) {
  std::vector<LoadedClip> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    out.push_back(load_clip(e.audio, e.annotation, cqt_cfg, target_cfg));
  }
  return out;
}

namespace {

std::vector<int> onset_target_ids(const FrameTargets& ft) {
  std::vector<int> ids;
  ids.reserve(ft.onset_seq.size());
  for (Token t : ft.onset_seq) ids.push_back(t.id);
  return ids;
}

// onsets, then offsets in slot order, then the pedal state, then EOS;
// the single-decoder stream is supervised in this order
std::vector<int> mixed_target_ids(const FrameTargets& ft, bool pedal_enabled) {
  std::vector<int> ids;
  for (size_t i = 0; i + 1 < ft.onset_seq.size(); ++i) ids.push_back(ft.onset_seq[i].id);
  for (size_t i = 0; i < ft.slot_targets.size(); ++i) {
    if (ft.slot_mask[i] && ft.slot_targets[i].id != kBlankId) {
      ids.push_back(ft.slot_targets[i].id);
    }
  }
  if (pedal_enabled) ids.push_back(ft.pedal_target.id);
  ids.push_back(kEosId);
  return ids;
}

std::vector<int> teacher_history(const TargetEncoder& targets, int t,
                                 const StreamerConfig& scfg) {
  std::vector<std::vector<int>> seqs;
  for (int s = t - scfg.history_frames; s < t; ++s) {
    if (s < 0) continue;
    FrameTargets ft = targets.frame(s);
    seqs.push_back(scfg.single_decoder
                       ? mixed_target_ids(ft, scfg.pedal_enabled)
                       : onset_target_ids(ft));
  }
  return flatten_capped_history(seqs, scfg.n_seq, scfg.n_slots);
}

}  // namespace

template <class S>
FrameLoss<S> frame_loss(const Transcriber<S>& model, const TargetEncoder& targets,
                        const FeatureSequence& features, int t,
                        const StreamerConfig& scfg, const TrainConfig& tcfg,
                        double dropout, Rng* rng) {
  const ModelConfig& mc = model.config();
  std::vector<float> window(static_cast<size_t>(scfg.window_m) * scfg.n_bins);
  build_feature_window(features, t, scfg, window.data());
  auto enc = model.encode_window(window.data(), dropout, rng);

  FrameTargets ft = targets.frame(t);
  std::vector<int> hist = teacher_history(targets, t, scfg);
  std::vector<int> gen = scfg.single_decoder
                             ? mixed_target_ids(ft, scfg.pedal_enabled)
                             : onset_target_ids(ft);

  // keep [history.., BOS, gen-but-last] within the token budget
  size_t keep = hist.size();
  while (keep > 0 && keep + gen.size() > static_cast<size_t>(mc.n_seq)) --keep;
  std::vector<int> ids(hist.end() - keep, hist.end());
  check(keep + gen.size() <= static_cast<size_t>(mc.n_seq),
        "frame targets exceed the token budget");
  size_t h = ids.size();
  ids.push_back(kBosId);
  ids.insert(ids.end(), gen.begin(), gen.end() - 1);

  std::vector<int> row_targets(ids.size(), 0);
  std::vector<S> row_weights(ids.size(), S(0));
  for (size_t i = 0; i < gen.size(); ++i) {
    row_targets[h + i] = gen[i];
    row_weights[h + i] = S(1);
  }

  FrameLoss<S> loss;
  auto logits = model.decoder_logits(false, enc, ids, dropout, rng);
  auto l_onset = ag::cross_entropy_rows(logits, row_targets, row_weights);
  loss.onset = static_cast<double>(l_onset->value[0]);
  loss.total = ag::scale(l_onset, S(tcfg.w_onset));

  if (!scfg.single_decoder) {
    std::vector<int> slot_ids;
    std::vector<int> slot_targets;
    if (scfg.pedal_enabled) {
      slot_ids.push_back(kBosId);
      slot_targets.push_back(ft.pedal_target.id);
    }
    for (size_t i = 0; i < ft.slot_inputs.size(); ++i) {
      if (!ft.slot_mask[i]) continue;
      slot_ids.push_back(ft.slot_inputs[i].id);
      slot_targets.push_back(ft.slot_targets[i].id);
    }
    if (!slot_ids.empty()) {
      auto slot_logits = model.decoder_logits(true, enc, slot_ids, dropout, rng);
      size_t base = scfg.pedal_enabled ? 1 : 0;
      if (slot_ids.size() > base) {
        std::vector<S> w(slot_ids.size(), S(0));
        for (size_t i = base; i < w.size(); ++i) w[i] = S(1);
        auto l_off = ag::cross_entropy_rows(slot_logits, slot_targets, w);
        loss.offset = static_cast<double>(l_off->value[0]);
        loss.total = ag::add(loss.total, ag::scale(l_off, S(tcfg.w_offset)));
      }
      if (scfg.pedal_enabled) {
        std::vector<S> w(slot_ids.size(), S(0));
        w[0] = S(1);
        auto l_ped = ag::cross_entropy_rows(slot_logits, slot_targets, w);
        loss.pedal = static_cast<double>(l_ped->value[0]);
        loss.total = ag::add(loss.total, ag::scale(l_ped, S(tcfg.w_pedal)));
      }
    }
  }
  return loss;
}

template FrameLoss<float> frame_loss(const Transcriber<float>&, const TargetEncoder&,
                                     const FeatureSequence&, int,
                                     const StreamerConfig&, const TrainConfig&,
                                     double, Rng*);
template FrameLoss<double> frame_loss(const Transcriber<double>&, const TargetEncoder&,
                                      const FeatureSequence&, int,
                                      const StreamerConfig&, const TrainConfig&,
                                      double, Rng*);

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

bool AdamW::decays(const std::string& name) {
  size_t dot = name.rfind('.');
  std::string last = dot == std::string::npos ? name : name.substr(dot + 1);
  return !last.empty() && (last[0] == 'w' || last == "emb");
}

void AdamW::zero_grad(std::map<std::string, ag::NodePtr<float>>& params) {
  for (auto& [name, p] : params) {
    if (!p->grad.empty()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
  }
}

void AdamW::step(std::map<std::string, ag::NodePtr<float>>& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (p->grad.empty()) continue;
    Slot& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(p->value.size(), 0.0f);
      slot.v.assign(p->value.size(), 0.0f);
    }
    bool wd = weight_decay_ > 0.0 && decays(name);
    for (size_t i = 0; i < p->value.size(); ++i) {
      double g = p->grad[i];
      double m = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
      double v = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
      slot.m[i] = static_cast<float>(m);
      slot.v[i] = static_cast<float>(v);
      double update = (m / bc1) / (std::sqrt(v / bc2) + eps_);
      if (wd) update += weight_decay_ * p->value[i];
      p->value[i] = static_cast<float>(p->value[i] - lr_ * update);
    }
  }
}

ValScores evaluate_clips(const Transcriber<float>& model,
                         std::span<const LoadedClip> clips,
                         const StreamerConfig& scfg, int limit,
                         DecodeCounters* counters) {
  size_t n = clips.size();
  if (limit > 0) n = std::min(n, static_cast<size_t>(limit));
  check(n > 0, "no validation clips");
  std::vector<MatchScore> onset_scores, both_scores, frame_scores;
  DecodeCounters total{};
  for (size_t i = 0; i < n; ++i) {
    const LoadedClip& clip = clips[i];
    ModelDecoder dec(model);
    StreamSession session(dec, scfg);
    std::vector<FrameEvents> events;
    int frames = static_cast<int>(clip.features.frames());
    std::vector<float> window(static_cast<size_t>(scfg.window_m) * scfg.n_bins);
    for (int t = 0; t < frames; ++t) {
      build_feature_window(clip.features, t, scfg, window.data());
      FrameEvents ev = session.decode_at(t, window.data());
      ev.is_final = (t == frames - 1);
      events.push_back(std::move(ev));
    }
    const DecodeCounters& c = session.counters();
    total.deduped_onsets += c.deduped_onsets;
    total.deduped_offsets += c.deduped_offsets;
    total.forced_offsets += c.forced_offsets;
    total.seq_anomalies += c.seq_anomalies;
    total.slot_anomalies += c.slot_anomalies;
    total.correspondence_drops += c.correspondence_drops;
    total.budget_stops += c.budget_stops;
    total.pedal_anomalies += c.pedal_anomalies;

    std::vector<NoteEvent> notes = assemble_notes(events, clip.features.frame_period);
    Annotation est = notes_to_annotation(notes, {});
    onset_scores.push_back(note_score_onset(clip.annotation.notes, est.notes));
    both_scores.push_back(note_score_onset_offset(clip.annotation.notes, est.notes));
    PianoRoll ref_roll = notes_to_roll(clip.annotation.notes, frames,
                                       clip.features.frame_period);
    PianoRoll est_roll = notes_to_roll(est.notes, frames, clip.features.frame_period);
    frame_scores.push_back(frame_score(ref_roll, est_roll));
  }
  if (counters) *counters = total;
  ValScores out;
  out.onset_f1 = macro_average(onset_scores).f1;
  out.onset_offset_f1 = macro_average(both_scores).f1;
  out.frame_f1 = macro_average(frame_scores).f1;
  return out;
}

Trainer::Trainer(Transcriber<float>& model, const TrainConfig& cfg,
                 std::vector<LoadedClip> train_clips,
                 std::vector<LoadedClip> val_clips, std::filesystem::path out_dir)
    : model_(model),
      cfg_(cfg),
      scfg_(StreamerConfig::from_model(model.config())),
      train_(std::move(train_clips)),
      val_(std::move(val_clips)),
      out_dir_(std::move(out_dir)),
      opt_(cfg.lr, cfg.weight_decay),
      rng_(cfg.seed ^ 0x7261696e65727331ULL) {
  cfg_.validate();
  check(!train_.empty(), "no training clips");
  if (val_.empty()) val_ = train_;  // overfitting runs validate on train data
  std::filesystem::create_directories(out_dir_);
}

void Trainer::log_line(const std::string& line) {
  std::ofstream out(out_dir_ / "train_log.jsonl", std::ios::app);
  out << line << "\n";
}

void Trainer::save(const std::filesystem::path& path) {
  write_checkpoint(path, model_.to_checkpoint());
}

double Trainer::train_step() {
  AdamW::zero_grad(model_.params());
  double batch_loss = 0.0;
  for (int b = 0; b < cfg_.batch; ++b) {
    const LoadedClip& clip = train_[static_cast<size_t>(
        rng_.randint(0, static_cast<int64_t>(train_.size()) - 1))];
    int frames = static_cast<int>(clip.features.frames());
    int crop_frames = std::max(
        1, static_cast<int>(std::llround(cfg_.clip_seconds /
                                         clip.features.frame_period)));
    int t0 = frames > crop_frames
                 ? static_cast<int>(rng_.randint(0, frames - crop_frames))
                 : 0;
    int span = std::min(frames - t0, crop_frames);
    int t = t0 + static_cast<int>(rng_.randint(0, span - 1));

    Rng drop_rng = rng_.fork(0x64726f70);
    FrameLoss<float> loss =
        frame_loss(model_, *clip.targets, clip.features, t, scfg_, cfg_,
                   model_.config().dropout, &drop_rng);
    double v = static_cast<double>(loss.total->value[0]);
    check(std::isfinite(v), "non-finite loss at step sample");
    batch_loss += v;
    auto scaled = ag::scale(loss.total, 1.0f / static_cast<float>(cfg_.batch));
    ag::backward(scaled);
  }
  if (cfg_.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto& [name, p] : model_.params()) {
      for (float g : p->grad) sq += static_cast<double>(g) * g;
    }
    double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) {
      float s = static_cast<float>(cfg_.grad_clip / norm);
      for (auto& [name, p] : model_.params()) {
        for (float& g : p->grad) g *= s;
      }
    }
  }
  opt_.step(model_.params());
  model_.set_step(model_.step() + 1);
  return batch_loss / cfg_.batch;
}

ValScores Trainer::validate() {
  return evaluate_clips(model_, val_, scfg_, cfg_.val_clips, &val_counters_);
}

TrainResult Trainer::run() {
  TrainResult result;
  double best_key = -1.0;
  int bad_validations = 0;
  double last_loss = 0.0;
  for (int step = 0; step < cfg_.max_steps; ++step) {
    last_loss = train_step();
    result.steps = model_.step();
    if ((step + 1) % cfg_.log_every == 0 || step == 0) {
      log_line(json{{"step", model_.step()}, {"loss", last_loss}, {"lr", cfg_.lr}}
                   .dump());
    }
    if ((step + 1) % cfg_.validate_every == 0 || step + 1 == cfg_.max_steps) {
      ValScores val = validate();
      log_line(json{{"step", model_.step()},
                    {"val_onset_f1", val.onset_f1},
                    {"val_onset_offset_f1", val.onset_offset_f1},
                    {"val_frame_f1", val.frame_f1}}
                   .dump());
      double key = val.onset_f1 + val.onset_offset_f1;
      if (key > best_key) {
        best_key = key;
        result.best = val;
        result.best_step = model_.step();
        result.best_checkpoint = out_dir_ / "best.ckpt";
        save(result.best_checkpoint);
        bad_validations = 0;
      } else {
        ++bad_validations;
      }
      bool thresholds_set = cfg_.stop_onset_f1 > 0.0 || cfg_.stop_onset_offset_f1 > 0.0;
      if (thresholds_set && val.onset_f1 >= cfg_.stop_onset_f1 &&
          val.onset_offset_f1 >= cfg_.stop_onset_offset_f1) {
        result.reached_thresholds = true;
        break;
      }
      if (cfg_.patience > 0 && bad_validations >= cfg_.patience) break;
    }
  }
  result.final_loss = last_loss;
  result.last_checkpoint = out_dir_ / "last.ckpt";
  save(result.last_checkpoint);
  if (result.best_checkpoint.empty()) {
    result.best_checkpoint = result.last_checkpoint;
  }
  return result;
}

}  // namespace samt
