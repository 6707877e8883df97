#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "samt/autograd.hpp"
#include "samt/cqt.hpp"
#include "samt/model.hpp"
#include "samt/rng.hpp"
#include "samt/streamer.hpp"
#include "samt/vocab.hpp"

namespace samt {

struct ManifestEntry {
  std::filesystem::path audio;
  std::filesystem::path annotation;
  std::string split = "train";
};

// JSON schema: {"clips": [{"audio", "annotation", "split"?}, ...]};
// relative paths resolve against the manifest directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct TrainConfig {
  double lr = 6e-4;
  int batch = 16;
  int max_steps = 1000;
  double clip_seconds = 10.0;  // frame sampling range per batch item
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global-norm clip; 0 disables
  std::uint64_t seed = 1;
  double w_onset = 1.0;
  double w_offset = 1.0;
  double w_pedal = 1.0;
  int validate_every = 250;
  int patience = 0;  // validations without improvement before stop; 0 disables
  int val_clips = 8;
  double stop_onset_f1 = 0.0;         // stop once both thresholds are met;
  double stop_onset_offset_f1 = 0.0;  // 0 disables
  int log_every = 25;

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json_text(const std::string& text);

// One training clip with features matching the inference path and frame
// targets matching the model's token budget.
struct LoadedClip {
  std::string name;
  FeatureSequence features;
  Annotation annotation;
  std::shared_ptr<TargetEncoder> targets;
};

LoadedClip load_clip(const std::filesystem::path& audio,
                     const std::filesystem::path& annotation,
                     const CqtConfig& cqt_cfg, const TargetConfig& target_cfg);

std::vector<LoadedClip> load_split(std::span<const ManifestEntry> entries,
                                   const std::string& split,
                                   const CqtConfig& cqt_cfg,
                                   const TargetConfig& target_cfg);

template <class S>
struct FrameLoss {
  ag::NodePtr<S> total;
  double onset = 0.0;
  double offset = 0.0;
  double pedal = 0.0;
};

// Loss for decoding frame t of a clip, built exactly like inference: the
// same feature window, teacher-forced history with the shared cap rule, and
// unpadded slot queries. Instantiated for float (training) and double
// (gradient checks).
template <class S>
FrameLoss<S> frame_loss(const Transcriber<S>& model, const TargetEncoder& targets,
                        const FeatureSequence& features, int t,
                        const StreamerConfig& scfg, const TrainConfig& tcfg,
                        double dropout, Rng* rng);

// Decoupled weight decay on matrix-shaped parameters only (weights and
// embeddings; never biases or layer-norm terms).
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  void step(std::map<std::string, ag::NodePtr<float>>& params);
  static void zero_grad(std::map<std::string, ag::NodePtr<float>>& params);
  static bool decays(const std::string& name);
  void set_lr(double lr) { lr_ = lr; }

 private:
  struct Slot {
    std::vector<float> m, v;
  };
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

struct ValScores {
  double onset_f1 = 0.0;
  double onset_offset_f1 = 0.0;
  double frame_f1 = 0.0;
};

// Runs the streaming decode over each clip and scores notes against the
// clip annotations.
ValScores evaluate_clips(const Transcriber<float>& model,
                         std::span<const LoadedClip> clips,
                         const StreamerConfig& scfg, int limit = 0,
                         DecodeCounters* counters = nullptr);

struct TrainResult {
  std::int64_t steps = 0;
  double final_loss = 0.0;
  ValScores best;
  std::int64_t best_step = 0;
  bool reached_thresholds = false;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

// Step loop: every step samples `batch` (clip, frame) pairs, accumulates
// per-sample gradients, and applies one AdamW update. Validation decodes
// val clips with the streaming protocol; best/last checkpoints and a JSONL
// log are written under out_dir.
class Trainer {
 public:
  Trainer(Transcriber<float>& model, const TrainConfig& cfg,
          std::vector<LoadedClip> train_clips, std::vector<LoadedClip> val_clips,
          std::filesystem::path out_dir);

  TrainResult run();
  // one optimizer step; returns the batch loss
  double train_step();
  ValScores validate();

  const DecodeCounters& last_val_counters() const { return val_counters_; }

 private:
  void log_line(const std::string& json);
  void save(const std::filesystem::path& path);

  Transcriber<float>& model_;
  TrainConfig cfg_;
  StreamerConfig scfg_;
  std::vector<LoadedClip> train_;
  std::vector<LoadedClip> val_;
  std::filesystem::path out_dir_;
  AdamW opt_;
  Rng rng_;
  DecodeCounters val_counters_;
};

}  // namespace samt
