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

// Dataset manifests: one CSV row per utterance with its subjective labels.
//
//   utterance_id,audio_path,quality,intelligibility,system_id,listener_id,pair_id
//
// quality is a MOS in [1, 5] and intelligibility a fraction in [0, 1], both
// inclusive. listener_id and pair_id may be empty. Relative audio paths are
// resolved against the manifest's directory.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <spdlog/spdlog.h>

#include "mosanet/audio.hpp"
#include "mosanet/error.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

inline constexpr double kQualityMin = 1.0;
inline constexpr double kQualityMax = 5.0;
inline constexpr double kIntelligibilityMin = 0.0;
inline constexpr double kIntelligibilityMax = 1.0;

inline constexpr const char* kManifestHeader =
    "utterance_id,audio_path,quality,intelligibility,system_id,listener_id,pair_id";

struct UtteranceRecord {
  std::string utterance_id;
  std::filesystem::path audio_path;
  double quality = 0.0;
  double intelligibility = 0.0;
  std::string system_id;
  std::optional<std::string> listener_id;
  std::optional<std::string> pair_id;

  bool operator==(const UtteranceRecord&) const = default;
};

// Immutable after construction. All audio is consumed at the pipeline rate.
struct Manifest {
  std::vector<UtteranceRecord> records;
  int sample_rate = kPipelineSampleRate;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  const UtteranceRecord* find(const std::string& utterance_id) const {
    for (const auto& r : records) {
      if (r.utterance_id == utterance_id) return &r;
    }
    return nullptr;
  }

  bool operator==(const Manifest&) const = default;
};

enum class LoadMode { kStrict, kLazy };

namespace detail {

// Splits one CSV line; supports double-quoted fields with "" escapes.
inline bool split_csv_line(std::string_view line, std::vector<std::string>* fields) {
  fields->clear();
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields->push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields->push_back(std::move(cur));
  return !quoted;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline void validate_labels(double quality, double intelligibility, const std::string& where) {
  if (!(quality >= kQualityMin && quality <= kQualityMax)) {
    throw ValidationError("quality out of [1,5] at " + where + " (got " + format_real(quality) + ")");
  }
  if (!(intelligibility >= kIntelligibilityMin && intelligibility <= kIntelligibilityMax)) {
    throw ValidationError("intelligibility out of [0,1] at " + where + " (got " +
                          format_real(intelligibility) + ")");
  }
}

inline Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                               LoadMode mode = LoadMode::kLazy) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("manifest is empty");
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  if (trim(line) != kManifestHeader) {
    throw ParseError(std::string("manifest header must be '") + kManifestHeader + "'");
  }
  Manifest m;
  std::unordered_set<std::string> seen;
  std::vector<std::string> f;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const std::string where = "row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!detail::split_csv_line(line, &f)) throw ParseError("unterminated quote at " + where);
    if (f.size() != 7) {
      throw ParseError("expected 7 fields at " + where + ", got " + std::to_string(f.size()));
    }
    UtteranceRecord r;
    r.utterance_id = std::string(trim(f[0]));
    if (r.utterance_id.empty()) throw ParseError("empty utterance_id at " + where);
    if (trim(f[1]).empty()) throw ParseError("empty audio_path at " + where);
    r.audio_path = std::filesystem::path(std::string(trim(f[1])));
    if (r.audio_path.is_relative()) r.audio_path = base_dir / r.audio_path;
    if (!parse_real(f[2], &r.quality)) throw ParseError("quality is not a number at " + where);
    if (!parse_real(f[3], &r.intelligibility)) {
      throw ParseError("intelligibility is not a number at " + where);
    }
    validate_labels(r.quality, r.intelligibility, where);
    r.system_id = std::string(trim(f[4]));
    if (auto s = trim(f[5]); !s.empty()) r.listener_id = std::string(s);
    if (auto s = trim(f[6]); !s.empty()) r.pair_id = std::string(s);
    if (!seen.insert(r.utterance_id).second) {
      throw ValidationError("duplicate utterance_id '" + r.utterance_id + "' at " + where);
    }
    if (mode == LoadMode::kStrict && !std::filesystem::exists(r.audio_path)) {
      throw IoError("audio file not found at " + where + ": " + r.audio_path.string());
    }
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) throw ValidationError("manifest has no records");
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, LoadMode mode = LoadMode::kStrict) {
  if (!std::filesystem::exists(path)) throw IoError("manifest not found: " + path.string());
  const auto base = std::filesystem::absolute(path).parent_path();
  try {
    return parse_manifest(read_file(path), base, mode);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// Audio paths are written relative to base_dir when they live beneath it.
inline std::string serialize_manifest(const Manifest& m, const std::filesystem::path& base_dir = {}) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.records) {
    std::filesystem::path p = r.audio_path;
    if (!base_dir.empty()) {
      auto rel = p.lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out += detail::csv_escape(r.utterance_id) + "," + detail::csv_escape(p.string()) + "," +
           format_real(r.quality) + "," + format_real(r.intelligibility) + "," +
           detail::csv_escape(r.system_id) + "," + detail::csv_escape(r.listener_id.value_or("")) + "," +
           detail::csv_escape(r.pair_id.value_or("")) + "\n";
  }
  return out;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_manifest(m, std::filesystem::absolute(path).parent_path()));
}

struct ManifestSplit {
  Manifest first;   // floor(n * fraction) records
  Manifest second;  // the remainder
};

// Seeded random partition. Each part keeps the input's relative order.
inline ManifestSplit split_manifest(const Manifest& m, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ArgumentError("split fraction must lie in (0,1), got " + format_real(fraction));
  }
  if (m.empty()) throw ArgumentError("cannot split an empty manifest");
  const std::size_t n = m.size();
  const auto n_first = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_first));
  std::sort(first.begin(), first.end());
  std::vector<bool> in_first(n, false);
  for (auto i : first) in_first[i] = true;

  ManifestSplit out;
  out.first.sample_rate = out.second.sample_rate = m.sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    (in_first[i] ? out.first : out.second).records.push_back(m.records[i]);
  }
  if (out.first.empty() || out.second.empty()) {
    spdlog::warn("split of {} records at fraction {} leaves a part empty ({} / {})", n, fraction,
                 out.first.size(), out.second.size());
  }
  return out;
}

}  // namespace mosanet
