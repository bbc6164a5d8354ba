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

// Single-file container of named numeric arrays plus a JSON metadata record.
// Used for feature cache entries and model checkpoints.
//
// Layout (little-endian):
//   8 bytes   magic "MOSAARC1"
//   8 bytes   header length H (uint64)
//   H bytes   JSON header: {"metadata": {...}, "arrays": [{name, dtype,
//             shape, offset, nbytes}, ...], "payload_fnv1a": "<hex>"}
//   payload   array bytes, concatenated in header order
// The payload checksum lets readers reject truncated or corrupted files.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mosanet/error.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

enum class DType { kF32, kF64 };

inline const char* dtype_name(DType d) { return d == DType::kF32 ? "f32" : "f64"; }
inline std::size_t dtype_size(DType d) { return d == DType::kF32 ? 4 : 8; }

struct NamedArray {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::size_t> shape;
  std::vector<unsigned char> bytes;

  std::size_t element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
};

class Archive {
 public:
  static constexpr char kMagic[9] = "MOSAARC1";

  nlohmann::json metadata = nlohmann::json::object();

  template <typename T>
    requires(std::is_same_v<T, float> || std::is_same_v<T, double>)
  void put(const std::string& name, std::vector<std::size_t> shape, std::span<const T> values) {
    NamedArray a;
    a.name = name;
    a.dtype = std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
    a.shape = std::move(shape);
    if (a.element_count() != values.size()) {
      throw ArgumentError("array '" + name + "': shape does not match element count");
    }
    a.bytes.resize(values.size_bytes());
    if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), values.size_bytes());
    for (auto& existing : arrays_) {
      if (existing.name == name) {
        existing = std::move(a);
        return;
      }
    }
    arrays_.push_back(std::move(a));
  }

  bool contains(const std::string& name) const { return find(name) != nullptr; }

  const NamedArray& array(const std::string& name) const {
    const NamedArray* a = find(name);
    if (!a) throw ParseError("archive has no array named '" + name + "'");
    return *a;
  }

  const std::vector<NamedArray>& arrays() const { return arrays_; }

  // Reads an array converting to T; the stored dtype may differ.
  template <typename T>
  std::vector<T> values(const std::string& name) const {
    const NamedArray& a = array(name);
    std::vector<T> out(a.element_count());
    if (a.dtype == DType::kF32) {
      for (std::size_t i = 0; i < out.size(); ++i) {
        float v;
        std::memcpy(&v, a.bytes.data() + 4 * i, 4);
        out[i] = static_cast<T>(v);
      }
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        double v;
        std::memcpy(&v, a.bytes.data() + 8 * i, 8);
        out[i] = static_cast<T>(v);
      }
    }
    return out;
  }

  std::string serialize() const {
    nlohmann::json header;
    header["metadata"] = metadata;
    header["arrays"] = nlohmann::json::array();
    std::size_t offset = 0;
    Fnv1a fnv;
    for (const auto& a : arrays_) {
      header["arrays"].push_back({{"name", a.name},
                                  {"dtype", dtype_name(a.dtype)},
                                  {"shape", a.shape},
                                  {"offset", offset},
                                  {"nbytes", a.bytes.size()}});
      offset += a.bytes.size();
      fnv.add(a.bytes.data(), a.bytes.size());
    }
    header["payload_fnv1a"] = to_hex(fnv.digest());
    const std::string h = header.dump();
    std::string out(kMagic, 8);
    const std::uint64_t len = h.size();
    out.append(reinterpret_cast<const char*>(&len), 8);
    out += h;
    for (const auto& a : arrays_) out.append(reinterpret_cast<const char*>(a.bytes.data()), a.bytes.size());
    return out;
  }

  static Archive parse(std::string_view bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
      throw ParseError("not an archive (bad magic)");
    }
    std::uint64_t len;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (len > bytes.size() - 16) throw ParseError("archive header truncated");
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("archive header unreadable: ") + e.what());
    }
    const std::string_view payload = bytes.substr(16 + len);
    Archive ar;
    Fnv1a fnv;
    try {
      ar.metadata = header.at("metadata");
      for (const auto& entry : header.at("arrays")) {
        NamedArray a;
        a.name = entry.at("name").get<std::string>();
        const std::string dt = entry.at("dtype").get<std::string>();
        if (dt == "f32") {
          a.dtype = DType::kF32;
        } else if (dt == "f64") {
          a.dtype = DType::kF64;
        } else {
          throw ParseError("unknown dtype '" + dt + "'");
        }
        a.shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto nbytes = entry.at("nbytes").get<std::size_t>();
        if (nbytes != a.element_count() * dtype_size(a.dtype) || offset > payload.size() ||
            nbytes > payload.size() - offset) {
          throw ParseError("array '" + a.name + "' extends past end of file");
        }
        a.bytes.assign(payload.begin() + offset, payload.begin() + offset + nbytes);
        fnv.add(a.bytes.data(), a.bytes.size());
        ar.arrays_.push_back(std::move(a));
      }
      if (header.at("payload_fnv1a").get<std::string>() != to_hex(fnv.digest())) {
        throw ParseError("archive checksum mismatch");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("archive header malformed: ") + e.what());
    }
    return ar;
  }

  void save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

  static Archive load(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
      return parse(bytes);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }

 private:
  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays_) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  std::vector<NamedArray> arrays_;
};

}  // namespace mosanet
