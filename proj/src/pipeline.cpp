#include "samt/pipeline.hpp"

#include "samt/common.hpp"

namespace samt {

TranscribeResult transcribe_features(const FeatureSequence& features,
                                     const Transcriber<float>& model,
                                     const StreamerConfig& cfg) {
  cfg.validate();
  check(features.n_bins == model.config().n_bins,
        "feature width does not match model");
  ModelDecoder dec(model);
  StreamSession session(dec, cfg);
  TranscribeResult result;
  result.frame_period = features.frame_period;
  int frames = static_cast<int>(features.frames());
  std::vector<float> window(static_cast<size_t>(cfg.window_m) * cfg.n_bins);
  for (int t = 0; t < frames; ++t) {
    build_feature_window(features, t, cfg, window.data());
    FrameEvents ev = session.decode_at(t, window.data());
    ev.is_final = (t == frames - 1);
    result.events.push_back(std::move(ev));
  }
  result.counters = session.counters();
  result.notes =
      assemble_notes(result.events, features.frame_period, &result.assembler);
  result.pedal = pedal_intervals(result.events, features.frame_period);
  return result;
}

TranscribeResult transcribe_clip(const AudioClip& clip,
                                 const Transcriber<float>& model,
                                 const CqtConfig& cqt_cfg,
                                 const StreamerConfig& cfg) {
  CqtConfig causal = cqt_cfg;
  causal.db_ref = CqtConfig::DbRef::full_scale;
  CqtKernelBank bank = CqtKernelBank::build(causal);
  FeatureSequence features = compute_cqt(clip, bank);
  return transcribe_features(features, model, cfg);
}

Annotation transcription_to_annotation(const TranscribeResult& result) {
  return notes_to_annotation(result.notes, result.pedal);
}

}  // namespace samt
