#include "samt/model.hpp"

#include <cstring>

#include "json.hpp"

namespace samt {

namespace {

nlohmann::json config_to_json_obj(const ModelConfig& c) {
  return nlohmann::json{{"window_m", c.window_m},
                        {"n_bins", c.n_bins},
                        {"enc_channels", c.enc_channels},
                        {"f_h", c.f_h},
                        {"d_enc", c.d_enc},
                        {"d_dec", c.d_dec},
                        {"n_layers", c.n_layers},
                        {"n_heads", c.n_heads},
                        {"d_mlp", c.d_mlp},
                        {"n_seq", c.n_seq},
                        {"n_slots", c.n_slots},
                        {"dropout", c.dropout},
                        {"pedal_enabled", c.pedal_enabled},
                        {"single_decoder", c.single_decoder}};
}

ModelConfig config_from_json_obj(const nlohmann::json& j) {
  check(j.is_object(), "model config must be a JSON object");
  ModelConfig c;
  const nlohmann::json defaults = config_to_json_obj(c);
  for (const auto& [key, value] : j.items()) {
    check(defaults.contains(key), "unknown model config key: " + key);
    (void)value;
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("window_m", c.window_m);
  get("n_bins", c.n_bins);
  get("enc_channels", c.enc_channels);
  get("f_h", c.f_h);
  get("d_enc", c.d_enc);
  get("d_dec", c.d_dec);
  get("n_layers", c.n_layers);
  get("n_heads", c.n_heads);
  get("d_mlp", c.d_mlp);
  get("n_seq", c.n_seq);
  get("n_slots", c.n_slots);
  get("dropout", c.dropout);
  get("pedal_enabled", c.pedal_enabled);
  get("single_decoder", c.single_decoder);
  return c;
}

void push_u32le(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void ModelConfig::validate() const {
  check(window_m == 39, "window_m must be 39 for the fixed convolution stack");
  check(n_bins > 0, "n_bins must be positive");
  check(f_h > 0 && n_bins % f_h == 0, "f_h must divide n_bins");
  check(enc_channels.size() == 9, "enc_channels must list 9 stages");
  for (int c : enc_channels) check(c > 0, "encoder channels must be positive");
  check(d_enc > 0 && d_enc % 2 == 0, "d_enc must be positive and even");
  check(d_dec > 0 && d_dec % 2 == 0, "d_dec must be positive and even");
  check(n_layers > 0, "n_layers must be positive");
  check(n_heads > 0 && d_dec % n_heads == 0, "n_heads must divide d_dec");
  check(d_mlp > 0, "d_mlp must be positive");
  check(n_seq >= 3, "n_seq must allow BOS + token + EOS");
  check(n_slots >= 1, "n_slots must be positive");
  check(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.enc_channels = {4, 4, 4, 8, 8, 8, 8, 8, 8};
  c.d_enc = 64;
  c.d_dec = 64;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_mlp = 256;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.enc_channels = {2, 2, 2, 4, 4, 4, 4, 4, 4};
  c.d_enc = 32;
  c.d_dec = 64;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_mlp = 128;
  c.dropout = 0.0;
  return c;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  return config_to_json_obj(cfg).dump();
}

ModelConfig model_config_from_json_text(const std::string& text) {
  return config_from_json_obj(nlohmann::json::parse(text));
}

std::optional<std::string> config_mismatch(const ModelConfig& a, const ModelConfig& b) {
  nlohmann::json ja = config_to_json_obj(a), jb = config_to_json_obj(b);
  for (const auto& [key, va] : ja.items()) {
    if (jb.at(key) != va) {
      return key + ": " + va.dump() + " vs " + jb.at(key).dump();
    }
  }
  return std::nullopt;
}

std::vector<uint8_t> encode_checkpoint(const CheckpointData& data) {
  nlohmann::json tensors = nlohmann::json::object();
  size_t offset = 0;
  for (const auto& [name, blob] : data.tensors) {
    tensors[name] = {{"shape", blob.shape}, {"offset", offset}};
    offset += blob.data.size() * 4;
  }
  nlohmann::json header{{"config", config_to_json_obj(data.config)},
                        {"step", data.step},
                        {"tensors", tensors}};
  std::string header_text = header.dump();

  std::vector<uint8_t> out;
  out.reserve(12 + header_text.size() + offset);
  out.insert(out.end(), {'S', 'A', 'M', 'T'});
  push_u32le(out, 1);
  push_u32le(out, static_cast<uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  for (const auto& [name, blob] : data.tensors) {
    size_t at = out.size();
    out.resize(at + blob.data.size() * 4);
    std::memcpy(out.data() + at, blob.data.data(), blob.data.size() * 4);
  }
  return out;
}

CheckpointData parse_checkpoint(std::span<const uint8_t> bytes) {
  check(bytes.size() >= 12, "checkpoint too short");
  check(std::memcmp(bytes.data(), "SAMT", 4) == 0, "bad checkpoint magic");
  uint32_t version = read_u32le(bytes.data() + 4);
  check(version == 1, "unsupported checkpoint version " + std::to_string(version));
  uint32_t header_len = read_u32le(bytes.data() + 8);
  check(bytes.size() >= 12 + static_cast<size_t>(header_len), "truncated checkpoint header");
  nlohmann::json header = nlohmann::json::parse(
      std::string(bytes.begin() + 12, bytes.begin() + 12 + header_len));

  CheckpointData data;
  data.config = config_from_json_obj(header.at("config"));
  data.step = header.at("step").get<int64_t>();
  const uint8_t* payload = bytes.data() + 12 + header_len;
  size_t payload_len = bytes.size() - 12 - header_len;
  for (const auto& [name, desc] : header.at("tensors").items()) {
    TensorBlob blob;
    blob.shape = desc.at("shape").get<std::vector<int>>();
    size_t offset = desc.at("offset").get<size_t>();
    size_t n = 1;
    for (int d : blob.shape) {
      check(d > 0, "checkpoint tensor with non-positive dimension");
      n *= static_cast<size_t>(d);
    }
    check(offset + n * 4 <= payload_len, "checkpoint tensor outside payload");
    blob.data.resize(n);
    std::memcpy(blob.data.data(), payload + offset, n * 4);
    data.tensors.emplace(name, std::move(blob));
  }
  return data;
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path));
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  write_file_bytes(path, encode_checkpoint(data));
}

}  // namespace samt
