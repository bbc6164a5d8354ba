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

// Agreement metrics between predicted and reference scores, at utterance
// and system level. SRCC uses mid-ranks for ties; KTAU is tau-b.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mosanet/data.hpp"
#include "mosanet/error.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

struct ScorePairs {
  std::vector<double> predicted;
  std::vector<double> truth;
  std::vector<std::string> group_id;  // empty, or one per pair

  std::size_t size() const { return predicted.size(); }

  void validate() const {
    if (predicted.size() != truth.size()) throw ArgumentError("predicted and truth lengths differ");
    if (!group_id.empty() && group_id.size() != predicted.size()) {
      throw ArgumentError("group_id length differs from the score vectors");
    }
  }
};

namespace detail {

inline void require_correlatable(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw ArgumentError(std::string(what) + ": vector lengths differ");
  if (a.size() < 2) throw ArgumentError(std::string(what) + ": needs at least 2 pairs");
}

inline bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace detail

inline double mse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw ArgumentError("mse: vector lengths differ");
  if (predicted.empty()) throw ArgumentError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

// Pearson correlation. Constant inputs have no defined correlation.
inline double lcc(std::span<const double> predicted, std::span<const double> truth) {
  detail::require_correlatable(predicted, truth, "lcc");
  if (detail::is_constant(truth) || detail::is_constant(predicted)) {
    throw UndefinedCorrelationError("lcc: constant input vector, correlation undefined");
  }
  const double n = static_cast<double>(predicted.size());
  const double mp = std::accumulate(predicted.begin(), predicted.end(), 0.0) / n;
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double a = predicted[i] - mp;
    const double b = truth[i] - mt;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("lcc: zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// 1-based ranks; tied values share the mean of their positions.
inline std::vector<double> mid_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = rank;
    i = j + 1;
  }
  return r;
}

inline double srcc(std::span<const double> predicted, std::span<const double> truth) {
  detail::require_correlatable(predicted, truth, "srcc");
  if (detail::is_constant(truth) || detail::is_constant(predicted)) {
    throw UndefinedCorrelationError("srcc: constant input vector, correlation undefined");
  }
  const auto rp = mid_ranks(predicted);
  const auto rt = mid_ranks(truth);
  return lcc(rp, rt);
}

// Kendall tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)), where n1 and n2 count
// pairs tied in the first and second vector respectively.
inline double ktau(std::span<const double> predicted, std::span<const double> truth) {
  detail::require_correlatable(predicted, truth, "ktau");
  if (detail::is_constant(truth) || detail::is_constant(predicted)) {
    throw UndefinedCorrelationError("ktau: constant input vector, correlation undefined");
  }
  const std::size_t n = predicted.size();
  long long concordant_minus_discordant = 0;
  long long tied_p = 0, tied_t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dp = predicted[i] - predicted[j];
      const double dt = truth[i] - truth[j];
      if (dp == 0.0) ++tied_p;
      if (dt == 0.0) ++tied_t;
      if (dp != 0.0 && dt != 0.0) concordant_minus_discordant += ((dp > 0) == (dt > 0)) ? 1 : -1;
    }
  }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double denom = std::sqrt((n0 - static_cast<double>(tied_p)) * (n0 - static_cast<double>(tied_t)));
  return std::clamp(static_cast<double>(concordant_minus_discordant) / denom, -1.0, 1.0);
}

inline double mse(const ScorePairs& p) { return mse(p.predicted, p.truth); }
inline double lcc(const ScorePairs& p) { return lcc(p.predicted, p.truth); }
inline double srcc(const ScorePairs& p) { return srcc(p.predicted, p.truth); }
inline double ktau(const ScorePairs& p) { return ktau(p.predicted, p.truth); }

// Per-group means, groups sorted by id.
inline ScorePairs system_level(const ScorePairs& pairs) {
  pairs.validate();
  if (pairs.group_id.empty()) throw ArgumentError("system_level: pairs carry no group ids");
  struct Acc {
    double p = 0.0, t = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Acc& a = groups[pairs.group_id[i]];
    a.p += pairs.predicted[i];
    a.t += pairs.truth[i];
    ++a.n;
  }
  if (groups.size() < 2) throw ArgumentError("system_level: needs at least 2 distinct groups");
  ScorePairs out;
  for (const auto& [id, a] : groups) {
    out.group_id.push_back(id);
    out.predicted.push_back(a.p / static_cast<double>(a.n));
    out.truth.push_back(a.t / static_cast<double>(a.n));
  }
  return out;
}

struct TaskReport {
  double utt_mse = 0.0, utt_lcc = 0.0, utt_srcc = 0.0, utt_ktau = 0.0;
  std::optional<double> sys_mse, sys_lcc, sys_srcc, sys_ktau;
  std::size_t n_utterances = 0;
  std::size_t n_systems = 0;
};

struct EvalReport {
  TaskReport quality;
  TaskReport intelligibility;
  std::string kendall_variant = "tau-b";

  const TaskReport& task(std::size_t t) const { return t == 0 ? quality : intelligibility; }
};

inline TaskReport score_task(const ScorePairs& pairs) {
  TaskReport r;
  r.n_utterances = pairs.size();
  r.utt_mse = mse(pairs);
  r.utt_lcc = lcc(pairs);
  r.utt_srcc = srcc(pairs);
  r.utt_ktau = ktau(pairs);
  if (!pairs.group_id.empty()) {
    std::vector<std::string> ids = pairs.group_id;
    std::sort(ids.begin(), ids.end());
    r.n_systems = static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
    if (r.n_systems >= 2) {
      const ScorePairs sys = system_level(pairs);
      r.sys_mse = mse(sys);
      // Few systems can still have constant means; leave those fields empty.
      try {
        r.sys_lcc = lcc(sys);
        r.sys_srcc = srcc(sys);
        r.sys_ktau = ktau(sys);
      } catch (const Error&) {
        r.sys_lcc.reset();
        r.sys_srcc.reset();
        r.sys_ktau.reset();
      }
    }
  }
  return r;
}

struct PredictionRow {
  std::string utterance_id;
  double quality = 0.0;
  double intelligibility = 0.0;
};

inline constexpr const char* kPredictionsHeader = "utterance_id,predicted_quality,predicted_intelligibility";

inline std::string serialize_predictions(std::span<const PredictionRow> rows) {
  std::string out = std::string(kPredictionsHeader) + "\n";
  for (const auto& r : rows) {
    out += detail::csv_escape(r.utterance_id) + "," + format_real(r.quality) + "," + format_real(r.intelligibility) + "\n";
  }
  return out;
}

inline std::vector<PredictionRow> parse_predictions(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(origin + ": empty predictions file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (trim(line) != kPredictionsHeader) {
    throw ParseError(origin + ": bad header, expected '" + std::string(kPredictionsHeader) + "'");
  }
  std::vector<PredictionRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    const std::string where = origin + ": line " + std::to_string(line_no);
    if (!detail::split_csv_line(line, &f) || f.size() != 3) throw ParseError(where + " needs 3 fields");
    PredictionRow r;
    r.utterance_id = f[0];
    if (!parse_real(f[1], &r.quality) || !parse_real(f[2], &r.intelligibility)) {
      throw ParseError(where + ": non-numeric score");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<PredictionRow> load_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_file(path), path.string());
}

inline void save_predictions(std::span<const PredictionRow> rows, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_predictions(rows));
}

// Joins predictions to the manifest by utterance_id. Manifest rows that
// share an audio_path are repeated ratings of one utterance; their labels
// are averaged before scoring.
inline EvalReport evaluate(std::span<const PredictionRow> predictions, const Manifest& manifest) {
  std::map<std::string, const PredictionRow*> by_id;
  for (const auto& p : predictions) by_id[p.utterance_id] = &p;
  std::vector<std::string> missing;
  for (const auto& r : manifest.records) {
    if (!by_id.count(r.utterance_id)) missing.push_back(r.utterance_id);
  }
  if (!missing.empty()) {
    std::string msg = "missing predictions for " + std::to_string(missing.size()) + " utterance(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw ValidationError(msg);
  }
  struct Acc {
    double pq = 0, pi = 0, tq = 0, ti = 0;
    std::size_t n = 0;
    std::string system_id;
  };
  std::map<std::string, Acc> groups;
  std::vector<std::string> order;
  for (const auto& r : manifest.records) {
    const std::string key = r.audio_path.lexically_normal().string();
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) {
      order.push_back(key);
      it->second.system_id = r.system_id;
    }
    const PredictionRow& p = *by_id.at(r.utterance_id);
    it->second.pq += p.quality;
    it->second.pi += p.intelligibility;
    it->second.tq += r.quality;
    it->second.ti += r.intelligibility;
    ++it->second.n;
  }
  ScorePairs q, in;
  for (const auto& key : order) {
    const Acc& a = groups.at(key);
    const double n = static_cast<double>(a.n);
    q.predicted.push_back(a.pq / n);
    q.truth.push_back(a.tq / n);
    q.group_id.push_back(a.system_id);
    in.predicted.push_back(a.pi / n);
    in.truth.push_back(a.ti / n);
    in.group_id.push_back(a.system_id);
  }
  EvalReport rep;
  rep.quality = score_task(q);
  rep.intelligibility = score_task(in);
  return rep;
}

inline nlohmann::json to_json(const TaskReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"utt_mse", r.utt_mse},   {"utt_lcc", r.utt_lcc},   {"utt_srcc", r.utt_srcc},
          {"utt_ktau", r.utt_ktau}, {"sys_mse", opt(r.sys_mse)}, {"sys_lcc", opt(r.sys_lcc)},
          {"sys_srcc", opt(r.sys_srcc)}, {"sys_ktau", opt(r.sys_ktau)}, {"n_utterances", r.n_utterances},
          {"n_systems", r.n_systems}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"quality", to_json(r.quality)},
          {"intelligibility", to_json(r.intelligibility)},
          {"kendall_variant", r.kendall_variant}};
}

// Fixed-width table: one row per task, utterance then system columns.
inline std::string format_report(const EvalReport& r) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (v) {
      std::snprintf(buf, sizeof(buf), "%9.3f", *v);
    } else {
      std::snprintf(buf, sizeof(buf), "%9s", "-");
    }
    return std::string(buf);
  };
  std::string out =
      "task              UTT-MSE  UTT-LCC UTT-SRCC UTT-KTAU  SYS-MSE  SYS-LCC SYS-SRCC SYS-KTAU\n";
  for (std::size_t t = 0; t < 2; ++t) {
    const TaskReport& x = r.task(t);
    char name[32];
    std::snprintf(name, sizeof(name), "%-16s", t == 0 ? "quality" : "intelligibility");
    out += name;
    for (double v : {x.utt_mse, x.utt_lcc, x.utt_srcc, x.utt_ktau}) out += cell(v);
    for (const auto& v : {x.sys_mse, x.sys_lcc, x.sys_srcc, x.sys_ktau}) out += cell(v);
    out += "\n";
  }
  out += "utterances: " + std::to_string(r.quality.n_utterances) +
         ", systems: " + std::to_string(r.quality.n_systems) + ", kendall: " + r.kendall_variant + "\n";
  return out;
}

}  // namespace mosanet
