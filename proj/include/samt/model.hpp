#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "samt/autograd.hpp"
#include "samt/common.hpp"
#include "samt/rng.hpp"
#include "samt/vocab.hpp"

namespace samt {

struct ModelConfig {
  int window_m = 39;           // analysis frames per encoder window
  int n_bins = 352;            // input feature bins
  std::vector<int> enc_channels{16, 16, 16, 64, 64, 64, 64, 64, 64};
  int f_h = 88;                // encoder output rows (one per key)
  int d_enc = 128;
  int d_dec = 256;
  int n_layers = 6;
  int n_heads = 8;
  int d_mlp = 1024;
  int n_seq = 64;              // token budget per frame, BOS included
  int n_slots = 16;            // offset decoder capacity per pass
  double dropout = 0.1;
  bool pedal_enabled = true;
  bool single_decoder = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  // small presets used by tests and the toy pipeline
  static ModelConfig full() { return ModelConfig{}; }
  static ModelConfig toy();
  static ModelConfig tiny();
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json_text(const std::string& text);
// human-readable description of the first differing field, if any
std::optional<std::string> config_mismatch(const ModelConfig& a, const ModelConfig& b);

// sinusoidal position rows: [len, d], sin/cos interleaved per position
template <class S>
std::vector<S> sinusoidal_encoding(int len, int d) {
  std::vector<S> pe(static_cast<size_t>(len) * d);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d / 2; ++i) {
      double rate = std::pow(10000.0, -2.0 * i / d);
      pe[static_cast<size_t>(pos) * d + 2 * i] = static_cast<S>(std::sin(pos * rate));
      pe[static_cast<size_t>(pos) * d + 2 * i + 1] =
          static_cast<S>(std::cos(pos * rate));
    }
  }
  return pe;
}

struct TensorBlob {
  std::vector<int> shape;
  std::vector<float> data;
};

struct CheckpointData {
  ModelConfig config;
  int64_t step = 0;
  std::map<std::string, TensorBlob> tensors;
};

// container: magic "SAMT", u32 version, u32 header length, JSON header
// {config, step, tensors: {name: {shape, offset}}}, float32 LE payload
std::vector<uint8_t> encode_checkpoint(const CheckpointData& data);
CheckpointData parse_checkpoint(std::span<const uint8_t> bytes);
CheckpointData read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);

// Encoder over one feature window plus two token decoders sharing its
// output: an autoregressive one for onsets and a parallel slot reader for
// offsets. With single_decoder set, one autoregressive decoder serves a
// mixed onset/offset/pedal sequence and the slot reader is not built.
template <class S>
class Transcriber {
 public:
  Transcriber(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    build_params();
    Rng rng(seed);
    for (auto& [name, p] : params_) {
      bool is_gain = name.ends_with(".g");
      bool is_bias = name.ends_with(".b") || name.ends_with(".b1") ||
                     name.ends_with(".b2");
      for (auto& v : p->value) {
        if (is_gain) {
          v = S(1);
        } else if (is_bias) {
          v = S(0);
        } else {
          v = static_cast<S>(rng.truncated_normal(0.02));
        }
      }
    }
  }

  static Transcriber from_checkpoint(const CheckpointData& data) {
    Transcriber m(data.config, 0);
    m.step_ = data.step;
    check(data.tensors.size() == m.params_.size(),
          "checkpoint tensor count mismatch");
    for (auto& [name, p] : m.params_) {
      auto it = data.tensors.find(name);
      check(it != data.tensors.end(), "checkpoint missing tensor " + name);
      check(it->second.shape == p->shape, "checkpoint shape mismatch for " + name);
      check(it->second.data.size() == p->size(), "checkpoint size mismatch for " + name);
      for (size_t i = 0; i < p->size(); ++i) {
        p->value[i] = static_cast<S>(it->second.data[i]);
      }
    }
    return m;
  }

  CheckpointData to_checkpoint() const {
    CheckpointData data;
    data.config = cfg_;
    data.step = step_;
    for (const auto& [name, p] : params_) {
      TensorBlob blob;
      blob.shape = p->shape;
      blob.data.resize(p->size());
      for (size_t i = 0; i < p->size(); ++i) {
        blob.data[i] = static_cast<float>(p->value[i]);
      }
      data.tensors.emplace(name, std::move(blob));
    }
    return data;
  }

  const ModelConfig& config() const { return cfg_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }
  std::map<std::string, ag::NodePtr<S>>& params() { return params_; }
  const std::map<std::string, ag::NodePtr<S>>& params() const { return params_; }

  // window: window_m x n_bins features, row-major -> [f_h, d_enc]
  ag::NodePtr<S> encode_window(const float* window, double dropout = 0.0,
                               Rng* rng = nullptr) const {
    using namespace ag;
    std::vector<S> in(static_cast<size_t>(cfg_.window_m) * cfg_.n_bins);
    for (size_t i = 0; i < in.size(); ++i) in[i] = static_cast<S>(window[i]);
    auto x = make_tensor<S>({1, cfg_.window_m, cfg_.n_bins}, std::move(in));

    x = relu(conv_taps(x, param("enc.conv0.w"), param("enc.conv0.b"), square_taps(7, 3)));
    x = relu(conv_taps(x, param("enc.conv1.w"), param("enc.conv1.b"), square_taps(7, 3)));
    x = relu(conv_taps(x, param("enc.conv2.w"), param("enc.conv2.b"), square_taps(7, 3)));

    // harmonic stack: 1x3 branches at octave-ish frequency dilations, summed
    NodePtr<S> acc;
    for (size_t i = 0; i < kHarmonicDilations.size(); ++i) {
      int d = kHarmonicDilations[i];
      std::vector<std::pair<int, int>> taps{{0, -d}, {0, 0}, {0, d}};
      auto name = "enc.hdc" + std::to_string(i);
      auto branch = conv_taps(x, param(name + ".w"),
                              i == 0 ? param(name + ".b") : nullptr, taps);
      acc = acc ? add(acc, branch) : branch;
    }
    x = relu(acc);

    for (int i = 4; i <= 8; ++i) {
      auto name = "enc.conv" + std::to_string(i);
      x = relu(conv_taps(x, param(name + ".w"), param(name + ".b"), square_taps(5, 1)));
    }
    check(x->dim(1) == 1, "encoder convolutions must collapse time to 1");

    auto rows = pool_freq_to_rows(x, cfg_.n_bins / cfg_.f_h);
    auto h = add_bias(matmul(rows, param("enc.proj.w")), param("enc.proj.b"));
    auto pe = make_tensor<S>({cfg_.f_h, cfg_.d_enc},
                             sinusoidal_encoding<S>(cfg_.f_h, cfg_.d_enc));
    h = add(h, pe);
    if (dropout > 0.0) h = ag::dropout(h, dropout, *rng);
    return h;
  }

  // Token logits [n, vocab] for one decoder. `offset_decoder` selects the
  // slot reader (bidirectional); otherwise causal masking applies.
  ag::NodePtr<S> decoder_logits(bool offset_decoder, const ag::NodePtr<S>& enc,
                                const std::vector<int>& ids, double dropout = 0.0,
                                Rng* rng = nullptr) const {
    using namespace ag;
    check(!ids.empty(), "decoder_logits: empty input");
    check(static_cast<int>(ids.size()) <= cfg_.n_seq,
          "decoder_logits: sequence exceeds n_seq");
    const std::string d = decoder_prefix(offset_decoder);
    int n = static_cast<int>(ids.size());

    auto x = embedding(param(d + "emb"), ids);
    auto pe = make_tensor<S>({n, cfg_.d_dec}, sinusoidal_encoding<S>(n, cfg_.d_dec));
    x = add(x, pe);

    std::vector<uint8_t> causal;
    if (!offset_decoder) {
      causal.assign(static_cast<size_t>(n) * n, 0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) causal[static_cast<size_t>(i) * n + j] = 1;
      }
    }

    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string lp = d + "l" + std::to_string(l) + ".";
      auto h = layer_norm(x, param(lp + "ln1.g"), param(lp + "ln1.b"));
      h = attention(h, h, lp + "attn.", causal);
      if (dropout > 0.0) h = ag::dropout(h, dropout, *rng);
      x = add(x, h);

      h = layer_norm(x, param(lp + "ln2.g"), param(lp + "ln2.b"));
      h = attention(h, enc, lp + "cross.", {});
      if (dropout > 0.0) h = ag::dropout(h, dropout, *rng);
      x = add(x, h);

      h = layer_norm(x, param(lp + "ln3.g"), param(lp + "ln3.b"));
      h = add_bias(matmul(h, param(lp + "mlp.w1")), param(lp + "mlp.b1"));
      h = relu(h);
      h = add_bias(matmul(h, param(lp + "mlp.w2")), param(lp + "mlp.b2"));
      if (dropout > 0.0) h = ag::dropout(h, dropout, *rng);
      x = add(x, h);
    }
    x = layer_norm(x, param(d + "final_ln.g"), param(d + "final_ln.b"));
    return add_bias(matmul(x, param(d + "out.w")), param(d + "out.b"));
  }

  // argmax over the last row's logits; ties resolve to the lowest id
  int greedy_next(bool offset_decoder, const ag::NodePtr<S>& enc,
                  const std::vector<int>& ids) const {
    ag::NoGrad ng;
    auto logits = decoder_logits(offset_decoder, enc, ids);
    return argmax_row(logits, logits->dim(0) - 1);
  }

  static int argmax_row(const ag::NodePtr<S>& logits, int row) {
    int m = logits->dim(1);
    const S* r = logits->value.data() + static_cast<size_t>(row) * m;
    int best = 0;
    for (int j = 1; j < m; ++j) {
      if (r[j] > r[best]) best = j;
    }
    return best;
  }

  static const std::array<int, 8> kHarmonicDilations;

 private:
  ag::NodePtr<S> param(const std::string& name) const {
    auto it = params_.find(name);
    check(it != params_.end(), "unknown parameter " + name);
    return it->second;
  }

  std::string decoder_prefix(bool offset_decoder) const {
    if (cfg_.single_decoder) {
      check(!offset_decoder, "single-decoder model has no slot reader");
      return "dec_on.";
    }
    return offset_decoder ? "dec_off." : "dec_on.";
  }

  static std::vector<std::pair<int, int>> square_taps(int t_extent, int f_halfwidth) {
    std::vector<std::pair<int, int>> taps;
    for (int dt = 0; dt < t_extent; ++dt) {
      for (int df = -f_halfwidth; df <= f_halfwidth; ++df) taps.emplace_back(dt, df);
    }
    return taps;
  }

  // x_q [n, d_dec] queries against x_kv rows; multi-head scaled dot product
  ag::NodePtr<S> attention(const ag::NodePtr<S>& x_q, const ag::NodePtr<S>& x_kv,
                           const std::string& prefix,
                           const std::vector<uint8_t>& mask) const {
    using namespace ag;
    auto q = matmul(x_q, param(prefix + "wq"));
    auto k = matmul(x_kv, param(prefix + "wk"));
    auto v = matmul(x_kv, param(prefix + "wv"));
    int dh = cfg_.d_dec / cfg_.n_heads;
    int n = q->dim(0), m = k->dim(0);
    std::vector<uint8_t> head_mask = mask;
    check(head_mask.empty() || head_mask.size() == static_cast<size_t>(n) * m,
          "attention: mask shape");
    S inv_sqrt = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dh)));
    std::vector<NodePtr<S>> heads;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      auto qh = split_cols(q, h * dh, dh);
      auto kh = split_cols(k, h * dh, dh);
      auto vh = split_cols(v, h * dh, dh);
      auto scores = scale(matmul_nt(qh, kh), inv_sqrt);
      auto attn = softmax_rows(scores, head_mask);
      heads.push_back(matmul(attn, vh));
    }
    return matmul(concat_cols(heads), param(prefix + "wo"));
  }

  void build_params() {
    auto add_param = [this](const std::string& name, std::vector<int> shape) {
      params_.emplace(name, ag::make_tensor<S>(std::move(shape), true));
    };
    const auto& ch = cfg_.enc_channels;
    add_param("enc.conv0.w", {ch[0], 1 * 49});
    add_param("enc.conv0.b", {ch[0]});
    add_param("enc.conv1.w", {ch[1], ch[0] * 49});
    add_param("enc.conv1.b", {ch[1]});
    add_param("enc.conv2.w", {ch[2], ch[1] * 49});
    add_param("enc.conv2.b", {ch[2]});
    for (size_t i = 0; i < kHarmonicDilations.size(); ++i) {
      add_param("enc.hdc" + std::to_string(i) + ".w", {ch[3], ch[2] * 3});
      if (i == 0) add_param("enc.hdc0.b", {ch[3]});
    }
    for (int i = 4; i <= 8; ++i) {
      add_param("enc.conv" + std::to_string(i) + ".w", {ch[i], ch[i - 1] * 15});
      add_param("enc.conv" + std::to_string(i) + ".b", {ch[i]});
    }
    add_param("enc.proj.w", {ch[8], cfg_.d_enc});
    add_param("enc.proj.b", {cfg_.d_enc});

    std::vector<std::string> decoders{"dec_on."};
    if (!cfg_.single_decoder) decoders.push_back("dec_off.");
    for (const auto& d : decoders) {
      add_param(d + "emb", {kVocabSize, cfg_.d_dec});
      for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string lp = d + "l" + std::to_string(l) + ".";
        for (const char* ln : {"ln1", "ln2", "ln3"}) {
          add_param(lp + ln + ".g", {cfg_.d_dec});
          add_param(lp + ln + ".b", {cfg_.d_dec});
        }
        for (const char* att : {"attn.", "cross."}) {
          int d_kv = (std::string(att) == "cross.") ? cfg_.d_enc : cfg_.d_dec;
          add_param(lp + att + "wq", {cfg_.d_dec, cfg_.d_dec});
          add_param(lp + att + "wk", {d_kv, cfg_.d_dec});
          add_param(lp + att + "wv", {d_kv, cfg_.d_dec});
          add_param(lp + att + "wo", {cfg_.d_dec, cfg_.d_dec});
        }
        add_param(lp + "mlp.w1", {cfg_.d_dec, cfg_.d_mlp});
        add_param(lp + "mlp.b1", {cfg_.d_mlp});
        add_param(lp + "mlp.w2", {cfg_.d_mlp, cfg_.d_dec});
        add_param(lp + "mlp.b2", {cfg_.d_dec});
      }
      add_param(d + "final_ln.g", {cfg_.d_dec});
      add_param(d + "final_ln.b", {cfg_.d_dec});
      add_param(d + "out.w", {cfg_.d_dec, kVocabSize});
      add_param(d + "out.b", {kVocabSize});
    }
  }

  ModelConfig cfg_;
  int64_t step_ = 0;
  std::map<std::string, ag::NodePtr<S>> params_;
};

template <class S>
const std::array<int, 8> Transcriber<S>::kHarmonicDilations{0,   48,  76,  96,
                                                            111, 124, 134, 144};

}  // namespace samt
