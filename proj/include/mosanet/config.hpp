// Copyright 2026 The mosanet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration: one INI file with sections [stft], [encoder],
// [encoder:NAME] (extra encoders for analysis), [model], [loss], [train],
// [analysis] and [paths]. Lines starting with ';' or '#' are comments.
// Unknown sections and keys are errors. Every field is described by a row
// in a schema table, which drives parsing, serialization and show-config.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "mosanet/analysis.hpp"
#include "mosanet/checkpoint.hpp"
#include "mosanet/encoder.hpp"
#include "mosanet/error.hpp"
#include "mosanet/loss.hpp"
#include "mosanet/model.hpp"
#include "mosanet/stft.hpp"
#include "mosanet/training.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

struct PathsConfig {
  std::string train_manifest;
  std::string valid_manifest;  // empty: split off train.valid_fraction of the training manifest
  std::string cache_dir;       // empty: <output_dir>/cache
  std::string output_dir = "runs/default";
};

struct ModelConfig {
  std::vector<int> cnn_channels = {16, 32, 64, 128};
  int convs_per_block = 3;
  Activation adapter_activation = Activation::kRelu;
  int lstm_hidden = 128;
  int dense_units = 128;
  AttentionType attention = AttentionType::kDot;
  int attention_dim = 128;
  double log_floor = 1e-6;
  double sinc_min_low_hz = 10.0;
  double sinc_min_band_hz = 20.0;
};

struct RunConfig {
  StftConfig stft;
  EncoderSpec encoder;
  std::vector<std::pair<std::string, EncoderSpec>> analysis_encoders;  // [encoder:NAME], file order
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  double valid_fraction = 0.1;
  CorrelationKind correlation = CorrelationKind::kPearson;
  PathsConfig paths;

  ModelTopology topology() const {
    ModelTopology t = ModelTopology::for_features(stft, encoder.dim);
    t.cnn_channels = model.cnn_channels;
    t.convs_per_block = model.convs_per_block;
    t.adapter_activation = model.adapter_activation;
    t.lstm_hidden = model.lstm_hidden;
    t.dense_units = model.dense_units;
    t.attention = model.attention;
    t.attention_dim = model.attention_dim;
    t.log_floor = model.log_floor;
    t.sinc_min_low_hz = model.sinc_min_low_hz;
    t.sinc_min_band_hz = model.sinc_min_band_hz;
    return t;
  }

  // Encoders compared by `analyze`: the [encoder:NAME] sections, or the
  // main encoder when there are none.
  std::vector<EncoderSpec> analysis_specs() const {
    std::vector<EncoderSpec> out;
    for (const auto& [name, spec] : analysis_encoders) out.push_back(spec);
    if (out.empty()) out.push_back(encoder);
    return out;
  }

  // What a checkpoint records about its inputs; predict refuses features
  // produced differently.
  nlohmann::json feature_config() const {
    return {{"stft",
             {{"fft_size", stft.fft_size}, {"window_ms", stft.window_ms}, {"hop_ms", stft.hop_ms},
              {"window", "hamming"}}},
            {"encoder",
             {{"type", encoder.type},
              {"encoder_id", encoder.encoder_id},
              {"layer_tag", encoder.layer_tag},
              {"dim", encoder.dim},
              {"seed", encoder.seed},
              {"scale", encoder.scale},
              {"frame_ms", encoder.frame_ms}}}};
  }

  void validate() const {
    stft.validate(kPipelineSampleRate);
    if (encoder.dim <= 0) throw ConfigError("encoder.dim must be positive");
    for (const auto& [name, spec] : analysis_encoders) {
      if (spec.dim <= 0) throw ConfigError("encoder:" + name + ".dim must be positive");
    }
    topology().validate();
    loss.validate();
    train.validate();
    if (!(valid_fraction > 0 && valid_fraction < 1)) throw ConfigError("train.valid_fraction must be in (0, 1)");
  }
};

namespace config_detail {

struct Field {
  std::string key;
  std::string help;
  std::function<std::string(const void*)> get;
  std::function<void(void*, const std::string&)> set;
};

template <typename T>
struct Table {
  std::vector<Field> fields;

  template <typename Getter, typename Setter>
  void add(std::string key, std::string help, Getter g, Setter s) {
    fields.push_back({std::move(key), std::move(help),
                      [g](const void* p) { return g(*static_cast<const T*>(p)); },
                      [s](void* p, const std::string& v) { s(*static_cast<T*>(p), v); }});
  }
};

inline std::string where(const std::string& section, const std::string& key) { return section + "." + key; }

inline double to_real(const std::string& v, const std::string& name) {
  double d;
  if (!parse_real(v, &d)) throw ConfigError(name + ": '" + v + "' is not a number");
  return d;
}

inline long long to_int(const std::string& v, const std::string& name) {
  long long i;
  if (!parse_int(v, &i)) throw ConfigError(name + ": '" + v + "' is not an integer");
  return i;
}

inline std::string int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& name) {
  std::vector<int> out;
  for (const auto& part : split(v, ',')) out.push_back(static_cast<int>(to_int(std::string(trim(part)), name)));
  return out;
}

#define MOSANET_REAL(table, T, sec, member, help)                                                  \
  table.add(#member, help, [](const T& c) { return format_real(c.member); },                      \
            [](T& c, const std::string& v) { c.member = to_real(v, std::string(sec) + "." #member); })
#define MOSANET_INT(table, T, sec, member, help)                                                          \
  table.add(#member, help, [](const T& c) { return std::to_string(c.member); },                          \
            [](T& c, const std::string& v) {                                                             \
              c.member = static_cast<decltype(c.member)>(to_int(v, std::string(sec) + "." #member));     \
            })
#define MOSANET_STR(table, T, member, help) \
  table.add(#member, help, [](const T& c) { return c.member; }, [](T& c, const std::string& v) { c.member = v; })

inline const Table<StftConfig>& stft_table() {
  static const Table<StftConfig> t = [] {
    Table<StftConfig> t;
    MOSANET_INT(t, StftConfig, "stft", fft_size, "FFT length; bins = fft_size/2 + 1");
    MOSANET_REAL(t, StftConfig, "stft", window_ms, "analysis window length in ms (Hamming)");
    MOSANET_REAL(t, StftConfig, "stft", hop_ms, "frame shift in ms");
    t.add("window", "window shape (hamming)", [](const StftConfig&) { return std::string("hamming"); },
          [](StftConfig&, const std::string& v) {
            if (v != "hamming") throw ConfigError("stft.window: only 'hamming' is supported");
          });
    return t;
  }();
  return t;
}

inline const Table<EncoderSpec>& encoder_table() {
  static const Table<EncoderSpec> t = [] {
    Table<EncoderSpec> t;
    MOSANET_STR(t, EncoderSpec, type, "stub | precomputed");
    MOSANET_STR(t, EncoderSpec, encoder_id, "name recorded in caches, checkpoints and analysis output");
    MOSANET_STR(t, EncoderSpec, layer_tag, "which hidden layer the embeddings come from");
    MOSANET_STR(t, EncoderSpec, weights_path, "precomputed: directory of <audio stem>.npy (frames x dim)");
    MOSANET_INT(t, EncoderSpec, "encoder", dim, "embedding width");
    MOSANET_INT(t, EncoderSpec, "encoder", seed, "stub: projection seed");
    MOSANET_REAL(t, EncoderSpec, "encoder", scale, "stub: projection scale");
    MOSANET_REAL(t, EncoderSpec, "encoder", frame_ms, "stub: frame length in ms");
    return t;
  }();
  return t;
}

inline const Table<ModelConfig>& model_table() {
  static const Table<ModelConfig> t = [] {
    Table<ModelConfig> t;
    t.add("cnn_channels", "channels per CNN block, comma separated",
          [](const ModelConfig& c) { return int_list(c.cnn_channels); },
          [](ModelConfig& c, const std::string& v) { c.cnn_channels = parse_int_list(v, "model.cnn_channels"); });
    MOSANET_INT(t, ModelConfig, "model", convs_per_block, "3x3 conv layers per block");
    t.add("adapter_activation", "none | relu | tanh",
          [](const ModelConfig& c) { return std::string(to_string(c.adapter_activation)); },
          [](ModelConfig& c, const std::string& v) { c.adapter_activation = parse_activation(v); });
    MOSANET_INT(t, ModelConfig, "model", lstm_hidden, "BLSTM units per direction");
    MOSANET_INT(t, ModelConfig, "model", dense_units, "shared dense layer width");
    t.add("attention", "dot | additive",
          [](const ModelConfig& c) { return std::string(to_string(c.attention)); },
          [](ModelConfig& c, const std::string& v) { c.attention = parse_attention(v); });
    MOSANET_INT(t, ModelConfig, "model", attention_dim, "attention projection width");
    MOSANET_REAL(t, ModelConfig, "model", log_floor, "added before the log of PS and LFB");
    MOSANET_REAL(t, ModelConfig, "model", sinc_min_low_hz, "lowest allowed filter edge");
    MOSANET_REAL(t, ModelConfig, "model", sinc_min_band_hz, "narrowest allowed filter");
    return t;
  }();
  return t;
}

inline const Table<LossConfig>& loss_table() {
  static const Table<LossConfig> t = [] {
    Table<LossConfig> t;
    MOSANET_REAL(t, LossConfig, "loss", gamma_quality, "weight of the quality task");
    MOSANET_REAL(t, LossConfig, "loss", gamma_intelligibility, "weight of the intelligibility task");
    MOSANET_REAL(t, LossConfig, "loss", alpha_quality, "weight of the quality frame-level term");
    MOSANET_REAL(t, LossConfig, "loss", alpha_intelligibility, "weight of the intelligibility frame-level term");
    return t;
  }();
  return t;
}

inline const Table<RunConfig>& train_table() {
  static const Table<RunConfig> t = [] {
    Table<RunConfig> t;
    t.add("learning_rate", "Adam step size",
          [](const RunConfig& c) { return format_real(c.train.learning_rate); },
          [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_real(v, "train.learning_rate"); });
    t.add("max_epochs", "0 writes the initial weights and an empty report",
          [](const RunConfig& c) { return std::to_string(c.train.max_epochs); },
          [](RunConfig& c, const std::string& v) {
            c.train.max_epochs = static_cast<int>(to_int(v, "train.max_epochs"));
          });
    t.add("batch_size", "utterances per update",
          [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
          [](RunConfig& c, const std::string& v) {
            c.train.batch_size = static_cast<int>(to_int(v, "train.batch_size"));
          });
    t.add("seed", "initialization, shuffling and split seed",
          [](const RunConfig& c) { return std::to_string(c.train.seed); },
          [](RunConfig& c, const std::string& v) {
            c.train.seed = static_cast<std::uint64_t>(to_int(v, "train.seed"));
          });
    t.add("early_stop_patience", "epochs without validation improvement before stopping; 0 disables",
          [](const RunConfig& c) { return std::to_string(c.train.early_stop_patience); },
          [](RunConfig& c, const std::string& v) {
            c.train.early_stop_patience = static_cast<int>(to_int(v, "train.early_stop_patience"));
          });
    t.add("stop_loss", "stop once an epoch's training loss is below this; 0 disables",
          [](const RunConfig& c) { return format_real(c.train.stop_loss); },
          [](RunConfig& c, const std::string& v) { c.train.stop_loss = to_real(v, "train.stop_loss"); });
    t.add("init_checkpoint", "start from these weights instead of a fresh initialization",
          [](const RunConfig& c) { return c.train.init_checkpoint; },
          [](RunConfig& c, const std::string& v) { c.train.init_checkpoint = v; });
    t.add("init_mode", "full | compatible_subset",
          [](const RunConfig& c) { return std::string(to_string(c.train.init_mode)); },
          [](RunConfig& c, const std::string& v) { c.train.init_mode = parse_init_mode(v); });
    t.add("precision", "float32 | float64",
          [](const RunConfig& c) { return std::string(to_string(c.train.precision)); },
          [](RunConfig& c, const std::string& v) { c.train.precision = parse_precision(v); });
    t.add("valid_fraction", "share of the training manifest held out when paths.valid_manifest is empty",
          [](const RunConfig& c) { return format_real(c.valid_fraction); },
          [](RunConfig& c, const std::string& v) { c.valid_fraction = to_real(v, "train.valid_fraction"); });
    return t;
  }();
  return t;
}

inline const Table<RunConfig>& analysis_table() {
  static const Table<RunConfig> t = [] {
    Table<RunConfig> t;
    t.add("correlation", "pearson | spearman",
          [](const RunConfig& c) { return std::string(to_string(c.correlation)); },
          [](RunConfig& c, const std::string& v) { c.correlation = parse_correlation_kind(v); });
    return t;
  }();
  return t;
}

inline const Table<PathsConfig>& paths_table() {
  static const Table<PathsConfig> t = [] {
    Table<PathsConfig> t;
    MOSANET_STR(t, PathsConfig, train_manifest, "training manifest CSV");
    MOSANET_STR(t, PathsConfig, valid_manifest, "validation manifest CSV; empty splits the training manifest");
    MOSANET_STR(t, PathsConfig, cache_dir, "feature cache; empty means <output_dir>/cache");
    MOSANET_STR(t, PathsConfig, output_dir, "default artifact directory");
    return t;
  }();
  return t;
}

#undef MOSANET_REAL
#undef MOSANET_INT
#undef MOSANET_STR

template <typename T>
void apply(const Table<T>& table, const std::string& section, const boost::property_tree::ptree& node, T* target) {
  for (const auto& [key, value] : node) {
    if (!value.empty()) throw ConfigError("section [" + section + "]: nested key '" + key + "'");
    const Field* field = nullptr;
    for (const auto& f : table.fields) {
      if (f.key == key) field = &f;
    }
    if (!field) throw ConfigError("unknown config key '" + where(section, key) + "'");
    field->set(target, std::string(trim(value.data())));
  }
}

template <typename T>
void emit(const Table<T>& table, const std::string& section, const T& source, bool comments, std::string* out) {
  *out += "[" + section + "]\n";
  for (const auto& f : table.fields) {
    if (comments) *out += "; " + f.help + "\n";
    *out += f.key + " = " + f.get(&source) + "\n";
  }
  *out += "\n";
}

inline void resolve(std::string* p, const std::filesystem::path& base) {
  if (p->empty()) return;
  std::filesystem::path path(*p);
  if (path.is_relative()) path = base / path;
  *p = path.lexically_normal().string();
}

}  // namespace config_detail

// Parses INI text. Relative paths are resolved against base_dir.
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  namespace pt = boost::property_tree;
  using namespace config_detail;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, node] : tree) {
    if (node.empty() && !node.data().empty()) {
      throw ConfigError("config key '" + section + "' is outside any section");
    }
    if (section == "stft") {
      apply(stft_table(), section, node, &cfg.stft);
    } else if (section == "encoder") {
      apply(encoder_table(), section, node, &cfg.encoder);
    } else if (section.rfind("encoder:", 0) == 0) {
      const std::string name = section.substr(8);
      if (name.empty()) throw ConfigError("section [encoder:] needs a name");
      EncoderSpec spec;
      spec.encoder_id = name;
      apply(encoder_table(), section, node, &spec);
      cfg.analysis_encoders.emplace_back(name, spec);
    } else if (section == "model") {
      apply(model_table(), section, node, &cfg.model);
    } else if (section == "loss") {
      apply(loss_table(), section, node, &cfg.loss);
    } else if (section == "train") {
      apply(train_table(), section, node, &cfg);
    } else if (section == "analysis") {
      apply(analysis_table(), section, node, &cfg);
    } else if (section == "paths") {
      apply(paths_table(), section, node, &cfg.paths);
    } else {
      throw ConfigError("unknown config section [" + section + "]");
    }
  }
  if (!base_dir.empty()) {
    resolve(&cfg.paths.train_manifest, base_dir);
    resolve(&cfg.paths.valid_manifest, base_dir);
    resolve(&cfg.paths.cache_dir, base_dir);
    resolve(&cfg.paths.output_dir, base_dir);
    resolve(&cfg.train.init_checkpoint, base_dir);
    resolve(&cfg.encoder.weights_path, base_dir);
    for (auto& [name, spec] : cfg.analysis_encoders) resolve(&spec.weights_path, base_dir);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text, std::filesystem::absolute(path).parent_path());
}

// Every field, in schema order. parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& cfg, bool comments = false) {
  using namespace config_detail;
  std::string out;
  emit(stft_table(), "stft", cfg.stft, comments, &out);
  emit(encoder_table(), "encoder", cfg.encoder, comments, &out);
  for (const auto& [name, spec] : cfg.analysis_encoders) {
    emit(encoder_table(), "encoder:" + name, spec, comments, &out);
  }
  emit(model_table(), "model", cfg.model, comments, &out);
  emit(loss_table(), "loss", cfg.loss, comments, &out);
  emit(train_table(), "train", cfg, comments, &out);
  emit(analysis_table(), "analysis", cfg, comments, &out);
  emit(paths_table(), "paths", cfg.paths, comments, &out);
  out.pop_back();
  return out;
}

inline constexpr const char* kResolvedConfigFile = "resolved_config.ini";

inline void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / kResolvedConfigFile, serialize_config(cfg, true));
}

}  // namespace mosanet
