#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "samt/assembler.hpp"
#include "samt/audio.hpp"
#include "samt/common.hpp"
#include "samt/cqt.hpp"
#include "samt/metrics.hpp"
#include "samt/midi.hpp"
#include "samt/model.hpp"
#include "samt/pipeline.hpp"
#include "samt/streamer.hpp"
#include "samt/toydata.hpp"
#include "samt/trainer.hpp"
#include "samt/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

samt::CqtConfig cqt_config_from_json(const json& j) {
  samt::CqtConfig cfg;
  json defaults = {{"sample_rate", cfg.sample_rate},
                   {"hop", cfg.hop},
                   {"n_bins", cfg.n_bins},
                   {"bins_per_octave", cfg.bins_per_octave},
                   {"f_min", cfg.f_min}};
  for (const auto& [key, value] : j.items()) {
    samt::check(defaults.contains(key), "unknown cqt config field: " + key);
    defaults[key] = value;
  }
  cfg.sample_rate = defaults["sample_rate"].get<int>();
  cfg.hop = defaults["hop"].get<int>();
  cfg.n_bins = defaults["n_bins"].get<int>();
  cfg.bins_per_octave = defaults["bins_per_octave"].get<int>();
  cfg.f_min = defaults["f_min"].get<double>();
  cfg.validate();
  return cfg;
}

// ---- transcribe ----------------------------------------------------------

struct TranscribeArgs {
  std::string checkpoint;
  std::string input;  // wav path; empty with --stream
  bool stream = false;
  int latency_frames = 19;
  bool print_latency = false;
  std::string out_prefix;
  std::string dump_features;
  bool quiet = false;
};

void write_transcription_outputs(const std::string& prefix,
                                 const samt::TranscribeResult& result) {
  fs::path base(prefix);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  samt::write_file_text(prefix + ".events.jsonl",
                        samt::events_to_jsonl(result.events));
  samt::Annotation ann = samt::transcription_to_annotation(result);
  samt::write_annotation_json(prefix + ".notes.json", ann);
  samt::write_midi(prefix + ".mid", ann);
}

int run_transcribe(const TranscribeArgs& args) {
  samt::CqtConfig cqt_cfg;
  samt::StreamerConfig scfg;
  if (args.print_latency) {
    scfg.future_frames = args.latency_frames;
    scfg.frame_period = cqt_cfg.frame_period();
    std::printf("%.3f\n", scfg.latency());
    return 0;
  }

  auto ckpt = samt::read_checkpoint(args.checkpoint);
  auto model = samt::Transcriber<float>::from_checkpoint(ckpt);
  scfg = samt::StreamerConfig::from_model(model.config(), args.latency_frames);
  scfg.frame_period = cqt_cfg.frame_period();

  samt::ModelDecoder dec(model);
  samt::StreamSession session(dec, scfg);
  samt::CqtStreamer cqt(cqt_cfg);
  std::vector<samt::FrameEvents> all_events;
  std::vector<float> feature_rows;
  bool pedal_state = false;

  auto consume_frames = [&](bool ended) {
    for (const auto& frame : ended ? cqt.finish() : cqt.poll()) {
      feature_rows.insert(feature_rows.end(), frame.begin(), frame.end());
      if (auto ev = session.push_frame(frame)) {
        if (!args.quiet) samt::append_event_lines(*ev, pedal_state, std::cout);
        all_events.push_back(std::move(*ev));
      }
    }
  };

  if (args.stream) {
    std::freopen(nullptr, "rb", stdin);
    std::vector<float> chunk(4096);
    for (;;) {
      size_t got = std::fread(chunk.data(), sizeof(float), chunk.size(), stdin);
      if (got == 0) break;
      cqt.feed(std::span<const float>(chunk.data(), got));
      consume_frames(false);
      std::cout.flush();
    }
  } else {
    samt::AudioClip clip = samt::ingest_wav(args.input, cqt_cfg.sample_rate);
    size_t pos = 0;
    const size_t kChunk = 4096;
    while (pos < clip.samples.size()) {
      size_t n = std::min(kChunk, clip.samples.size() - pos);
      cqt.feed(std::span<const float>(clip.samples.data() + pos, n));
      consume_frames(false);
      pos += n;
    }
  }
  consume_frames(true);
  for (auto& ev : session.flush()) {
    if (!args.quiet) samt::append_event_lines(ev, pedal_state, std::cout);
    all_events.push_back(std::move(ev));
  }
  std::cout.flush();

  samt::TranscribeResult result;
  result.frame_period = cqt_cfg.frame_period();
  result.events = std::move(all_events);
  result.counters = session.counters();
  result.notes = samt::assemble_notes(result.events, result.frame_period,
                                      &result.assembler);
  result.pedal = samt::pedal_intervals(result.events, result.frame_period);

  if (!args.out_prefix.empty()) {
    write_transcription_outputs(args.out_prefix, result);
  }
  if (!args.dump_features.empty()) {
    samt::FeatureSequence features;
    features.n_bins = cqt_cfg.n_bins;
    features.frame_period = cqt_cfg.frame_period();
    features.data = std::move(feature_rows);
    samt::write_feature_dump(args.dump_features, features, cqt_cfg.hop);
  }
  std::cerr << "frames=" << result.events.size()
            << " notes=" << result.notes.size()
            << " anomalies=" << result.counters.total() << "\n";
  return 0;
}

// ---- eval ----------------------------------------------------------------

bool has_annotation_ext(const fs::path& p) {
  std::string e = p.extension().string();
  return e == ".json" || e == ".mid" || e == ".midi";
}

std::string pair_stem(const fs::path& p) {
  std::string stem = p.stem().string();
  // transcription outputs are named <stem>.notes.json
  if (stem.size() > 6 && stem.ends_with(".notes")) {
    stem = stem.substr(0, stem.size() - 6);
  }
  return stem;
}

std::map<std::string, fs::path> annotation_files(const fs::path& dir) {
  samt::check(fs::is_directory(dir), dir.string() + " is not a directory");
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !has_annotation_ext(entry.path())) continue;
    std::string stem = pair_stem(entry.path());
    samt::check(!out.contains(stem), "duplicate annotation stem: " + stem);
    out[stem] = entry.path();
  }
  return out;
}

json score_to_json(const samt::MatchScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
          {"matched", s.matched},     {"n_ref", s.n_ref},   {"n_est", s.n_est}};
}

int run_eval(const std::string& ref_dir, const std::string& est_dir,
             const std::string& report_path, double onset_tol) {
  auto refs = annotation_files(ref_dir);
  auto ests = annotation_files(est_dir);
  std::vector<std::string> missing, extra;
  for (const auto& [stem, path] : refs) {
    if (!ests.contains(stem)) missing.push_back(stem);
  }
  for (const auto& [stem, path] : ests) {
    if (!refs.contains(stem)) extra.push_back(stem);
  }
  if (!missing.empty() || !extra.empty()) {
    for (const auto& s : missing) std::cerr << "missing estimate for: " << s << "\n";
    for (const auto& s : extra) std::cerr << "estimate without reference: " << s << "\n";
    return 2;
  }
  samt::check(!refs.empty(), "no annotation pairs found");

  struct Row {
    std::string name;
    samt::MatchScore onset, both, frame;
  };
  std::vector<std::pair<std::string, fs::path>> items(refs.begin(), refs.end());
  std::vector<Row> rows(items.size());
  std::atomic<size_t> cursor{0};
  int n_threads = std::min<int>(samt::env_thread_cap(),
                                static_cast<int>(items.size()));
  auto worker = [&]() {
    for (;;) {
      size_t i = cursor.fetch_add(1);
      if (i >= items.size()) break;
      const auto& [stem, ref_path] = items[i];
      samt::Annotation ref = samt::read_annotation(ref_path);
      samt::Annotation est = samt::read_annotation(ests.at(stem));
      Row row;
      row.name = stem;
      row.onset = samt::note_score_onset(ref.notes, est.notes, onset_tol);
      row.both = samt::note_score_onset_offset(ref.notes, est.notes, onset_tol);
      double end = 0.0;
      for (const auto& n : ref.notes) end = std::max(end, n.offset);
      for (const auto& n : est.notes) end = std::max(end, n.offset);
      int frames = samt::time_to_frame(end, samt::kDefaultFramePeriod) + 1;
      row.frame = samt::frame_score(
          samt::notes_to_roll(ref.notes, frames, samt::kDefaultFramePeriod),
          samt::notes_to_roll(est.notes, frames, samt::kDefaultFramePeriod));
      rows[i] = std::move(row);
    }
  };
  std::vector<std::thread> threads;
  for (int i = 1; i < n_threads; ++i) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::vector<samt::MatchScore> onset_scores, both_scores, frame_scores;
  json clips = json::array();
  for (const auto& row : rows) {
    onset_scores.push_back(row.onset);
    both_scores.push_back(row.both);
    frame_scores.push_back(row.frame);
    clips.push_back({{"name", row.name},
                     {"onset", score_to_json(row.onset)},
                     {"onset_offset", score_to_json(row.both)},
                     {"frame", score_to_json(row.frame)}});
  }
  json report = {{"clips", clips},
                 {"macro",
                  {{"onset", score_to_json(samt::macro_average(onset_scores))},
                   {"onset_offset", score_to_json(samt::macro_average(both_scores))},
                   {"frame", score_to_json(samt::macro_average(frame_scores))}}},
                 {"n_clips", rows.size()},
                 {"onset_tol", onset_tol}};
  if (!report_path.empty()) {
    samt::write_file_text(report_path, report.dump(2) + "\n");
  }
  std::cout << "clips=" << rows.size()
            << " onset_f1=" << samt::macro_average(onset_scores).f1
            << " onset_offset_f1=" << samt::macro_average(both_scores).f1
            << " frame_f1=" << samt::macro_average(frame_scores).f1 << "\n";
  return 0;
}

// ---- train ---------------------------------------------------------------

int run_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override, bool no_pedal,
              bool single_decoder, const std::string& resume) {
  json j = json::parse(samt::read_file_text(config_path));
  samt::check(j.is_object(), "train config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    samt::check(key == "model" || key == "train" || key == "cqt" || key == "data",
                "unknown config section: " + key);
  }
  samt::check(j.contains("data") && j["data"].is_object(),
              "config needs a data section");
  json jd = j["data"];
  for (const auto& [key, value] : jd.items()) {
    samt::check(key == "manifest" || key == "train_split" || key == "val_split",
                "unknown data field: " + key);
  }
  samt::check(jd.contains("manifest"), "data section needs a manifest path");
  fs::path manifest = jd["manifest"].get<std::string>();
  if (manifest.is_relative()) {
    manifest = fs::path(config_path).parent_path() / manifest;
  }
  std::string train_split = jd.value("train_split", "train");
  std::string val_split = jd.value("val_split", "val");

  samt::ModelConfig mc = j.contains("model")
                             ? samt::model_config_from_json_text(j["model"].dump())
                             : samt::ModelConfig::toy();
  samt::TrainConfig tc = j.contains("train")
                             ? samt::train_config_from_json_text(j["train"].dump())
                             : samt::TrainConfig{};
  samt::CqtConfig qc =
      j.contains("cqt") ? cqt_config_from_json(j["cqt"]) : samt::CqtConfig{};
  if (no_pedal) mc.pedal_enabled = false;
  if (single_decoder) mc.single_decoder = true;
  if (seed_override) tc.seed = *seed_override;
  mc.validate();
  tc.validate();
  samt::check(mc.n_bins == qc.n_bins, "model n_bins must match cqt n_bins");

  json effective = {{"model", json::parse(samt::model_config_to_json(mc))},
                    {"train", json::parse(samt::train_config_to_json(tc))},
                    {"data",
                     {{"manifest", manifest.string()},
                      {"train_split", train_split},
                      {"val_split", val_split}}}};
  std::cout << effective.dump(2) << "\n";

  samt::TargetConfig target_cfg;
  target_cfg.n_seq = mc.n_seq;
  target_cfg.n_slots = mc.n_slots;
  target_cfg.pedal_enabled = mc.pedal_enabled;
  target_cfg.frame_period = qc.frame_period();

  auto entries = samt::read_manifest(manifest);
  auto train_clips = samt::load_split(entries, train_split, qc, target_cfg);
  auto val_clips = samt::load_split(entries, val_split, qc, target_cfg);
  std::cout << "loaded " << train_clips.size() << " train / " << val_clips.size()
            << " val clips\n";

  samt::Transcriber<float> model(mc, tc.seed);
  if (!resume.empty()) {
    auto ckpt = samt::read_checkpoint(resume);
    if (auto diff = samt::config_mismatch(ckpt.config, mc)) {
      samt::fail("resume checkpoint config differs: " + *diff);
    }
    model = samt::Transcriber<float>::from_checkpoint(ckpt);
  }

  fs::path out = out_dir.empty() ? fs::path("train_out") : fs::path(out_dir);
  samt::Trainer trainer(model, tc, std::move(train_clips), std::move(val_clips), out);
  samt::TrainResult result = trainer.run();
  std::cout << "steps=" << result.steps << " loss=" << result.final_loss
            << " best_onset_f1=" << result.best.onset_f1
            << " best_onset_offset_f1=" << result.best.onset_offset_f1
            << " best_step=" << result.best_step
            << (result.reached_thresholds ? " thresholds_met" : "") << "\n"
            << "best=" << result.best_checkpoint.string()
            << " last=" << result.last_checkpoint.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming piano transcription"};
  app.require_subcommand(1);

  // transcribe
  TranscribeArgs targs;
  auto* t = app.add_subcommand("transcribe",
                               "audio in, events/notes/midi out (streaming)");
  t->add_option("--checkpoint", targs.checkpoint, "model checkpoint");
  t->add_option("input", targs.input, "input wav");
  t->add_flag("--stream", targs.stream, "read float32 samples from stdin");
  t->add_option("--latency-frames", targs.latency_frames,
                "lookahead frames before a frame is decoded");
  t->add_flag("--print-latency", targs.print_latency,
              "print decode latency in seconds and exit");
  t->add_option("--out", targs.out_prefix,
                "output prefix for .mid/.notes.json/.events.jsonl");
  t->add_option("--dump-features", targs.dump_features,
                "also write the computed features to this file");
  t->add_flag("--quiet", targs.quiet, "do not print event lines to stdout");

  // eval
  std::string ref_dir, est_dir, report_path = "report.json";
  double onset_tol = 0.05;
  auto* e = app.add_subcommand("eval", "score estimate files against references");
  e->add_option("--ref", ref_dir, "reference directory (.mid/.midi/.json)")
      ->required();
  e->add_option("--est", est_dir, "estimate directory, paired by stem")
      ->required();
  e->add_option("--report", report_path, "write per-clip scores here");
  e->add_option("--onset-tol", onset_tol, "onset tolerance in seconds");

  // train
  std::string config_path, train_out, resume;
  std::optional<std::uint64_t> seed_override;
  std::uint64_t seed_value = 0;
  bool no_pedal = false, single_decoder = false;
  auto* tr = app.add_subcommand("train", "train a model from a manifest");
  tr->add_option("--config", config_path, "JSON config with model/train/cqt/data")
      ->required();
  tr->add_option("--out", train_out, "output directory (default train_out)");
  auto* seed_opt = tr->add_option("--seed", seed_value, "override train seed");
  tr->add_flag("--no-pedal", no_pedal, "disable the pedal head");
  tr->add_flag("--single-decoder", single_decoder,
               "one mixed decoder instead of onset+offset decoders");
  tr->add_option("--resume", resume, "checkpoint to continue from");

  // toydata
  samt::ToyDataConfig toy_cfg;
  std::string toy_out;
  auto* td = app.add_subcommand("toydata", "write a synthetic dataset");
  td->add_option("--out", toy_out, "output directory")->required();
  td->add_option("--seed", toy_cfg.seed, "dataset seed");
  td->add_option("--n", toy_cfg.n_clips, "number of clips");
  td->add_option("--min-seconds", toy_cfg.min_seconds, "shortest clip");
  td->add_option("--max-seconds", toy_cfg.max_seconds, "longest clip");
  td->add_option("--max-polyphony", toy_cfg.max_polyphony, "simultaneous notes");
  td->add_option("--pedal-prob", toy_cfg.pedal_prob, "chance a clip uses pedal");

  // init
  std::string init_config, init_out;
  std::uint64_t init_seed = 1;
  std::string init_preset = "toy";
  auto* in = app.add_subcommand("init", "write a freshly initialized checkpoint");
  in->add_option("--out", init_out, "checkpoint path")->required();
  in->add_option("--config", init_config, "model config JSON file");
  in->add_option("--preset", init_preset, "toy, tiny, or full")
      ->check(CLI::IsMember({"toy", "tiny", "full"}));
  in->add_option("--seed", init_seed, "init seed");

  // features
  std::string feat_in, feat_out, feat_ref = "clip-max";
  auto* f = app.add_subcommand("features", "compute features for a wav file");
  f->add_option("input", feat_in, "input wav")->required();
  f->add_option("--out", feat_out, "feature dump path")->required();
  f->add_option("--db-ref", feat_ref, "clip-max or full-scale")
      ->check(CLI::IsMember({"clip-max", "full-scale"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) {
      if (!targs.print_latency) {
        samt::check(!targs.checkpoint.empty(), "--checkpoint is required");
        samt::check(targs.stream != !targs.input.empty(),
                    "give a wav path or --stream, not both");
      }
      return run_transcribe(targs);
    }
    if (e->parsed()) {
      return run_eval(ref_dir, est_dir, report_path, onset_tol);
    }
    if (tr->parsed()) {
      if (seed_opt->count() > 0) seed_override = seed_value;
      return run_train(config_path, train_out, seed_override, no_pedal,
                       single_decoder, resume);
    }
    if (td->parsed()) {
      auto manifest = samt::write_toy_dataset(toy_out, toy_cfg);
      std::cout << manifest.string() << "\n";
      return 0;
    }
    if (in->parsed()) {
      samt::ModelConfig mc;
      if (!init_config.empty()) {
        mc = samt::model_config_from_json_text(samt::read_file_text(init_config));
      } else if (init_preset == "toy") {
        mc = samt::ModelConfig::toy();
      } else if (init_preset == "tiny") {
        mc = samt::ModelConfig::tiny();
      } else {
        mc = samt::ModelConfig::full();
      }
      samt::Transcriber<float> model(mc, init_seed);
      samt::write_checkpoint(init_out, model.to_checkpoint());
      std::cout << init_out << "\n";
      return 0;
    }
    if (f->parsed()) {
      samt::CqtConfig cfg;
      cfg.db_ref = feat_ref == "clip-max" ? samt::CqtConfig::DbRef::clip_max
                                          : samt::CqtConfig::DbRef::full_scale;
      samt::AudioClip clip = samt::ingest_wav(feat_in, cfg.sample_rate);
      samt::FeatureSequence features = samt::compute_cqt(clip, cfg);
      samt::write_feature_dump(feat_out, features, cfg.hop);
      std::cout << features.frames() << " frames\n";
      return 0;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
