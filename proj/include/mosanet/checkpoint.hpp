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

// Weight checkpoints: one archive holding every parameter by name, the
// topology and its hash, and the feature/encoder configuration the weights
// were trained with.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "mosanet/archive.hpp"
#include "mosanet/error.hpp"
#include "mosanet/model.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointKind = "mosanet-checkpoint";

struct CheckpointInfo {
  ModelTopology topology;
  std::string topology_hash;
  int format_version = 0;
  std::string tool_version;
  std::string precision;
  nlohmann::json feature_config;
  nlohmann::json extra;
};

template <typename S>
struct LoadedCheckpoint {
  ModelWeights<S> weights;
  CheckpointInfo info;
};

template <typename S>
constexpr const char* precision_name() {
  return std::is_same_v<S, float> ? "float32" : "float64";
}

template <typename S>
Archive checkpoint_archive(const ModelWeights<S>& w, const nlohmann::json& feature_config,
                           const nlohmann::json& extra = nlohmann::json::object()) {
  Archive ar;
  ar.metadata = {{"kind", kCheckpointKind},
                 {"format_version", kCheckpointFormatVersion},
                 {"tool_version", kVersion},
                 {"precision", precision_name<S>()},
                 {"topology", w.topology.to_json()},
                 {"topology_hash", to_hex(w.topology.hash())},
                 {"feature_config", feature_config},
                 {"extra", extra}};
  w.for_each_parameter([&](const std::string& name, const Mat<S>& m) {
    ar.put<S>(name, {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
              std::span<const S>(m.data(), static_cast<std::size_t>(m.size())));
  });
  return ar;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelWeights<S>& w,
                     const nlohmann::json& feature_config, const nlohmann::json& extra = nlohmann::json::object()) {
  checkpoint_archive(w, feature_config, extra).save(path);
}

// Validates the header fields common to every load path.
inline CheckpointInfo checkpoint_info(const Archive& ar, const std::string& origin) {
  const auto& md = ar.metadata;
  CheckpointInfo info;
  try {
    if (md.value("kind", std::string()) != kCheckpointKind) {
      throw CheckpointError(origin + ": not a model checkpoint");
    }
    info.format_version = md.at("format_version").get<int>();
    if (info.format_version != kCheckpointFormatVersion) {
      throw CheckpointError(origin + ": checkpoint format version " + std::to_string(info.format_version) +
                            " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    info.tool_version = md.at("tool_version").get<std::string>();
    info.precision = md.at("precision").get<std::string>();
    info.topology = ModelTopology::from_json(md.at("topology"));
    info.topology_hash = md.at("topology_hash").get<std::string>();
    info.feature_config = md.value("feature_config", nlohmann::json::object());
    info.extra = md.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": checkpoint header malformed: " + e.what());
  }
  if (info.topology_hash != to_hex(info.topology.hash())) {
    throw ParseError(origin + ": stored topology hash does not match the stored topology");
  }
  return info;
}

namespace detail {

inline std::string shape_string(std::size_t rows, std::size_t cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

inline std::string shape_string(const NamedArray& a) {
  std::string s = "[";
  for (std::size_t i = 0; i < a.shape.size(); ++i) s += (i ? "x" : "") + std::to_string(a.shape[i]);
  return s + "]";
}

inline bool shape_matches(const NamedArray& a, Eigen::Index rows, Eigen::Index cols) {
  return a.shape.size() == 2 && a.shape[0] == static_cast<std::size_t>(rows) &&
         a.shape[1] == static_cast<std::size_t>(cols);
}

template <typename S>
void copy_array(const Archive& ar, const std::string& name, Mat<S>* m) {
  const auto v = ar.values<S>(name);
  std::copy(v.begin(), v.end(), m->data());
}

}  // namespace detail

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path& path) {
  const Archive ar = Archive::load(path);
  LoadedCheckpoint<S> out;
  out.info = checkpoint_info(ar, path.string());
  out.weights = init_weights<S>(out.info.topology, 0);
  out.weights.for_each_parameter([&](const std::string& name, Mat<S>& m) {
    const NamedArray* a = ar.contains(name) ? &ar.array(name) : nullptr;
    if (!a) throw ParseError(path.string() + ": checkpoint lacks parameter '" + name + "'");
    if (!detail::shape_matches(*a, m.rows(), m.cols())) {
      throw ParseError(path.string() + ": parameter '" + name + "' has shape " + detail::shape_string(*a) +
                       ", topology implies " + detail::shape_string(m.rows(), m.cols()));
    }
    detail::copy_array(ar, name, &m);
  });
  if (!out.weights.all_finite()) throw NumericError(path.string() + ": checkpoint holds non-finite weights");
  return out;
}

enum class InitMode { kFull, kCompatibleSubset };

inline const char* to_string(InitMode m) { return m == InitMode::kFull ? "full" : "compatible_subset"; }

inline InitMode parse_init_mode(const std::string& s) {
  if (s == "full") return InitMode::kFull;
  if (s == "compatible_subset") return InitMode::kCompatibleSubset;
  throw ConfigError("unknown init mode '" + s + "' (expected full or compatible_subset)");
}

struct InitReport {
  InitMode mode = InitMode::kFull;
  std::vector<std::string> copied;
  std::vector<std::string> untouched;  // kept at their current values
  std::size_t copied_values = 0;
  std::size_t total_values = 0;

  double copied_fraction() const {
    return total_values ? static_cast<double>(copied_values) / static_cast<double>(total_values) : 0.0;
  }
};

// Initializes weights from a checkpoint. Full mode requires an identical
// topology; compatible_subset copies every parameter whose name and shape
// match. On any error the target weights are left unchanged.
template <typename S>
InitReport init_from_checkpoint(ModelWeights<S>* weights, const std::filesystem::path& path, InitMode mode) {
  const Archive ar = Archive::load(path);
  const CheckpointInfo info = checkpoint_info(ar, path.string());
  ModelWeights<S> staged = *weights;
  InitReport rep;
  rep.mode = mode;

  if (mode == InitMode::kFull) {
    const std::string want = to_hex(weights->topology.hash());
    if (info.topology_hash != want) {
      std::string diff;
      weights->for_each_parameter([&](const std::string& name, const Mat<S>& m) {
        if (!ar.contains(name)) {
          diff += "\n  " + name + ": model " + detail::shape_string(m.rows(), m.cols()) + ", checkpoint missing";
        } else if (!detail::shape_matches(ar.array(name), m.rows(), m.cols())) {
          diff += "\n  " + name + ": model " + detail::shape_string(m.rows(), m.cols()) + ", checkpoint " +
                  detail::shape_string(ar.array(name));
        }
      });
      std::map<std::string, bool> known;
      weights->for_each_parameter([&](const std::string& name, const Mat<S>&) { known[name] = true; });
      for (const auto& a : ar.arrays()) {
        if (!known.count(a.name)) diff += "\n  " + a.name + ": model missing, checkpoint " + detail::shape_string(a);
      }
      if (diff.empty()) diff = "\n  (shapes agree; non-shape topology settings differ)";
      throw CheckpointError(path.string() + ": topology hash " + info.topology_hash + " does not match model " +
                            want + "; parameter differences:" + diff);
    }
  }

  staged.for_each_parameter([&](const std::string& name, Mat<S>& m) {
    rep.total_values += static_cast<std::size_t>(m.size());
    const bool usable = ar.contains(name) && detail::shape_matches(ar.array(name), m.rows(), m.cols());
    if (!usable) {
      if (mode == InitMode::kFull) throw ParseError(path.string() + ": parameter '" + name + "' unusable");
      rep.untouched.push_back(name);
      return;
    }
    detail::copy_array(ar, name, &m);
    rep.copied.push_back(name);
    rep.copied_values += static_cast<std::size_t>(m.size());
  });
  if (!staged.all_finite()) throw NumericError(path.string() + ": checkpoint holds non-finite weights");
  *weights = std::move(staged);
  return rep;
}

}  // namespace mosanet
