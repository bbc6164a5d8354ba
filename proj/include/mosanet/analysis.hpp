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

// Embedding-distance study. For each clean/degraded pair and each encoder,
// the distance is the mean squared difference of the two embedding
// matrices; encoders are then compared by correlating their distance
// vectors over the shared utterance set.

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "mosanet/audio.hpp"
#include "mosanet/data.hpp"
#include "mosanet/encoder.hpp"
#include "mosanet/error.hpp"
#include "mosanet/image.hpp"
#include "mosanet/metrics.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

struct DistanceRecord {
  std::string utterance_id;
  std::string encoder_id;
  double distance = 0.0;
};

struct CorrelationMatrix {
  std::vector<std::string> encoder_ids;
  Eigen::MatrixXd values;
};

enum class CorrelationKind { kPearson, kSpearman };

inline const char* to_string(CorrelationKind k) { return k == CorrelationKind::kPearson ? "pearson" : "spearman"; }

inline CorrelationKind parse_correlation_kind(const std::string& s) {
  if (s == "pearson") return CorrelationKind::kPearson;
  if (s == "spearman") return CorrelationKind::kSpearman;
  throw ConfigError("unknown correlation '" + s + "' (expected pearson or spearman)");
}

namespace detail {

inline std::string shape_of(const RowMatrix<float>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace detail

// Mean over all entries of the squared elementwise difference.
inline double embedding_distance(const EncoderEmbedding& clean, const EncoderEmbedding& degraded) {
  if (clean.encoder_id != degraded.encoder_id) {
    throw ArgumentError("embedding_distance: encoders differ ('" + clean.encoder_id + "' vs '" +
                        degraded.encoder_id + "')");
  }
  if (clean.values.rows() != degraded.values.rows() || clean.values.cols() != degraded.values.cols()) {
    throw AlignmentError("embedding_distance: shapes differ, clean " + detail::shape_of(clean.values) +
                         " vs degraded " + detail::shape_of(degraded.values));
  }
  if (clean.values.size() == 0) throw ArgumentError("embedding_distance: empty embeddings");
  double s = 0.0;
  for (Eigen::Index i = 0; i < clean.values.size(); ++i) {
    const double d = static_cast<double>(clean.values.data()[i]) - static_cast<double>(degraded.values.data()[i]);
    s += d * d;
  }
  return s / static_cast<double>(clean.values.size());
}

// Entry (i, j) correlates the distance vectors of encoders i and j over the
// utterances. Encoders keep their order of first appearance.
inline CorrelationMatrix distance_correlations(std::span<const DistanceRecord> records,
                                               CorrelationKind kind = CorrelationKind::kPearson) {
  CorrelationMatrix out;
  std::vector<std::string> utterances;
  std::set<std::string> seen_utt;
  std::map<std::pair<std::string, std::string>, double> table;
  for (const auto& r : records) {
    if (std::find(out.encoder_ids.begin(), out.encoder_ids.end(), r.encoder_id) == out.encoder_ids.end()) {
      out.encoder_ids.push_back(r.encoder_id);
    }
    if (seen_utt.insert(r.utterance_id).second) utterances.push_back(r.utterance_id);
    if (!table.emplace(std::pair{r.encoder_id, r.utterance_id}, r.distance).second) {
      throw ValidationError("duplicate distance for encoder '" + r.encoder_id + "', utterance '" +
                            r.utterance_id + "'");
    }
  }
  if (out.encoder_ids.empty()) throw ArgumentError("distance_correlations: no records");
  std::string gaps;
  std::size_t gap_count = 0;
  for (const auto& e : out.encoder_ids) {
    for (const auto& u : utterances) {
      if (!table.count({e, u})) {
        if (++gap_count <= 20) gaps += " " + e + "/" + u;
      }
    }
  }
  if (gap_count) {
    throw CompletenessError("missing distances for " + std::to_string(gap_count) + " encoder/utterance pair(s):" +
                            gaps + (gap_count > 20 ? " ..." : ""));
  }
  if (utterances.size() < 2) throw ArgumentError("distance_correlations: needs at least 2 utterances");

  const std::size_t m = out.encoder_ids.size();
  std::vector<std::vector<double>> vecs(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& u : utterances) vecs[i].push_back(table.at({out.encoder_ids[i], u}));
    if (detail::is_constant(vecs[i])) {
      throw UndefinedCorrelationError("distances of encoder '" + out.encoder_ids[i] +
                                      "' are constant over all utterances; correlation is undefined");
    }
  }
  out.values = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double c = kind == CorrelationKind::kPearson ? lcc(vecs[i], vecs[j]) : srcc(vecs[i], vecs[j]);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
    }
  }
  return out;
}

struct AnalysisOptions {
  CorrelationKind correlation = CorrelationKind::kPearson;
  int heatmap_cell_pixels = 48;
};

struct SkippedUtterance {
  std::string utterance_id;
  std::string reason;
};

struct AnalysisResult {
  std::vector<DistanceRecord> distances;
  CorrelationMatrix correlations;
  std::vector<SkippedUtterance> skipped;
};

inline constexpr const char* kDistancesFile = "distances.csv";
inline constexpr const char* kCorrelationsFile = "correlations.csv";
inline constexpr const char* kHeatmapFile = "correlations.png";
inline constexpr const char* kSkippedFile = "skipped.csv";

// A row with a pair_id is a degraded utterance; its pair_id names the
// utterance_id of the clean reference in the same manifest.
inline AnalysisResult analyze_pairs(const Manifest& manifest, std::span<const EncoderBackend* const> backends,
                                    const AnalysisOptions& opts = {}) {
  if (backends.empty()) throw ArgumentError("analysis needs at least one encoder backend");
  std::set<std::string> ids;
  for (const auto* b : backends) {
    if (!ids.insert(b->encoder_id()).second) throw ConfigError("duplicate encoder_id '" + b->encoder_id() + "'");
  }
  AnalysisResult res;
  std::vector<std::pair<const UtteranceRecord*, const UtteranceRecord*>> pairs;  // clean, degraded
  for (const auto& r : manifest.records) {
    if (!r.pair_id || r.pair_id->empty()) continue;
    const std::string& ref = *r.pair_id;
    const UtteranceRecord* clean = manifest.find(ref);
    if (!clean) {
      spdlog::warn("utterance '{}': pair_id '{}' does not resolve; skipped", r.utterance_id, ref);
      res.skipped.push_back({r.utterance_id, "pair_id '" + ref + "' not in manifest"});
    } else if (clean == &r) {
      res.skipped.push_back({r.utterance_id, "pair_id refers to itself"});
    } else {
      pairs.emplace_back(clean, &r);
    }
  }
  if (pairs.empty()) throw ValidationError("analysis: no resolvable clean/degraded pairs in the manifest");

  std::map<std::filesystem::path, Waveform> audio;
  auto wave = [&](const UtteranceRecord& r) -> const Waveform& {
    auto it = audio.find(r.audio_path);
    if (it == audio.end()) it = audio.emplace(r.audio_path, load_audio(r.audio_path)).first;
    return it->second;
  };
  for (const auto* b : backends) {
    for (const auto& [clean, degraded] : pairs) {
      EncoderEmbedding x = b->embed(wave(*clean));
      EncoderEmbedding y = b->embed(wave(*degraded));
      const Eigen::Index dt = x.values.rows() - y.values.rows();
      if (dt == 1 || dt == -1) {
        const Eigen::Index t = std::min(x.values.rows(), y.values.rows());
        spdlog::warn("utterance '{}', encoder '{}': frame counts {} and {} differ by one; using the first {}",
                     degraded->utterance_id, b->encoder_id(), x.values.rows(), y.values.rows(), t);
        x.values.conservativeResize(t, Eigen::NoChange);
        y.values.conservativeResize(t, Eigen::NoChange);
      }
      res.distances.push_back({degraded->utterance_id, b->encoder_id(), embedding_distance(x, y)});
    }
  }
  res.correlations = distance_correlations(res.distances, opts.correlation);
  return res;
}

inline std::string serialize_distances(std::span<const DistanceRecord> records) {
  std::string out = "utterance_id,encoder_id,distance\n";
  for (const auto& r : records) {
    out += detail::csv_escape(r.utterance_id) + "," + detail::csv_escape(r.encoder_id) + "," +
           format_real(r.distance) + "\n";
  }
  return out;
}

inline std::string serialize_correlations(const CorrelationMatrix& m) {
  std::string out = "encoder_id";
  for (const auto& e : m.encoder_ids) out += "," + detail::csv_escape(e);
  out += "\n";
  for (std::size_t i = 0; i < m.encoder_ids.size(); ++i) {
    out += detail::csv_escape(m.encoder_ids[i]);
    for (std::size_t j = 0; j < m.encoder_ids.size(); ++j) {
      out += "," + format_real(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out += "\n";
  }
  return out;
}

inline std::string serialize_skipped(std::span<const SkippedUtterance> skipped) {
  std::string out = "utterance_id,reason\n";
  for (const auto& s : skipped) out += detail::csv_escape(s.utterance_id) + "," + detail::csv_escape(s.reason) + "\n";
  return out;
}

// Computes everything first; files are written only when all steps succeed.
inline AnalysisResult run_analysis(const Manifest& manifest, std::span<const EncoderBackend* const> backends,
                                   const std::filesystem::path& out_dir, const AnalysisOptions& opts = {}) {
  AnalysisResult res = analyze_pairs(manifest, backends, opts);
  const RgbImage heatmap = render_heatmap(res.correlations.values, opts.heatmap_cell_pixels);
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / kDistancesFile, serialize_distances(res.distances));
  write_file_atomic(out_dir / kCorrelationsFile, serialize_correlations(res.correlations));
  write_file_atomic(out_dir / kSkippedFile, serialize_skipped(res.skipped));
  const auto tmp = out_dir / (std::string(kHeatmapFile) + ".tmp");
  write_png(tmp, heatmap);
  std::filesystem::rename(tmp, out_dir / kHeatmapFile);
  return res;
}

}  // namespace mosanet
