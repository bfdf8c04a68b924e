#pragma once

#include "rlab/core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

namespace rlab {

/// One named array inside a flat parameter vector.
struct ParamSlot {
  std::string name;
  std::vector<Index> shape;
  Index offset = 0;
  Index size = 0;
};

/// Builds a contiguous layout from (name, shape) pairs in declaration order.
class LayoutBuilder {
 public:
  LayoutBuilder& add(std::string name, std::vector<Index> shape) {
    Index size = 1;
    for (Index d : shape) size *= d;
    slots_.push_back({std::move(name), std::move(shape), total_, size});
    total_ += size;
    return *this;
  }
  [[nodiscard]] std::vector<ParamSlot> build() const { return slots_; }
  [[nodiscard]] Index total() const { return total_; }

 private:
  std::vector<ParamSlot> slots_;
  Index total_ = 0;
};

[[nodiscard]] inline const ParamSlot& find_slot(const std::vector<ParamSlot>& layout, const std::string& name) {
  for (const auto& s : layout)
    if (s.name == name) return s;
  throw ArgumentError("no parameter named '" + name + "'");
}

[[nodiscard]] inline Index layout_size(const std::vector<ParamSlot>& layout) {
  return layout.empty() ? 0 : layout.back().offset + layout.back().size;
}

template <typename Scalar>
[[nodiscard]] std::uint64_t checksum(const Vector<Scalar>& v) {
  return fnv1a64(std::as_bytes(std::span(v.data(), static_cast<std::size_t>(v.size()))));
}

/// Column-major view of a 2-D slot (rows = shape[0], cols = product of the rest).
template <typename Scalar>
[[nodiscard]] Eigen::Map<const Matrix<Scalar>> view(const Vector<Scalar>& flat, const ParamSlot& s) {
  const Index rows = s.shape.empty() ? 1 : s.shape[0];
  return {flat.data() + s.offset, rows, s.size / rows};
}

template <typename Scalar>
[[nodiscard]] Eigen::Map<Matrix<Scalar>> view(Vector<Scalar>& flat, const ParamSlot& s) {
  const Index rows = s.shape.empty() ? 1 : s.shape[0];
  return {flat.data() + s.offset, rows, s.size / rows};
}

template <typename Scalar>
[[nodiscard]] constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<Scalar, float>)
    return "float32";
  else
    return "float64";
}

/// Serializes a named parameter set as one CBOR document:
/// {format, version, kind, dtype, seed, frozen, arch, extra, weights: [{name, shape, data}]}.
template <typename Scalar>
void write_param_archive(const std::string& path, const std::string& kind, const nlohmann::json& arch,
                         std::uint64_t seed, bool frozen, const std::vector<ParamSlot>& layout,
                         const Vector<Scalar>& weights, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json doc;
  doc["format"] = "rlab-params";
  doc["version"] = 1;
  doc["kind"] = kind;
  doc["dtype"] = dtype_name<Scalar>();
  doc["seed"] = seed;
  doc["frozen"] = frozen;
  doc["arch"] = arch;
  doc["extra"] = extra;
  auto& arr = doc["weights"] = nlohmann::json::array();
  for (const auto& s : layout) {
    std::vector<Scalar> data(weights.data() + s.offset, weights.data() + s.offset + s.size);
    arr.push_back({{"name", s.name}, {"shape", s.shape}, {"data", data}});
  }
  const auto bytes = nlohmann::json::to_cbor(doc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

[[nodiscard]] inline nlohmann::json read_param_archive(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "' is not a parameter archive: " + e.what());
  }
  if (!doc.is_object()) throw IoError("'" + path + "' is not a parameter archive");
  if (doc.value("format", "") != "rlab-params") throw ConfigError("'" + path + "' has an unknown format tag");
  if (doc.value("version", 0) != 1) throw ConfigError("'" + path + "' has unsupported archive version");
  if (doc.value("kind", "") != kind)
    throw ConfigError("'" + path + "' holds a " + doc.value("kind", "?") + ", expected " + kind);
  return doc;
}

/// Copies archived weights into `layout`, verifying every name, shape and the dtype.
template <typename Scalar>
[[nodiscard]] Vector<Scalar> unpack_weights(const nlohmann::json& doc, const std::vector<ParamSlot>& layout) {
  if (doc.at("dtype").get<std::string>() != dtype_name<Scalar>())
    throw ConfigError("archive dtype " + doc.at("dtype").get<std::string>() + " does not match " +
                      dtype_name<Scalar>());
  const auto& arr = doc.at("weights");
  if (arr.size() != layout.size())
    throw ConfigError("archive has " + std::to_string(arr.size()) + " arrays, architecture expects " +
                      std::to_string(layout.size()));
  Vector<Scalar> out(layout_size(layout));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& s = layout[i];
    const auto& entry = arr[i];
    if (entry.at("name").get<std::string>() != s.name)
      throw ConfigError("archive array " + std::to_string(i) + " is '" + entry.at("name").get<std::string>() +
                        "', expected '" + s.name + "'");
    if (entry.at("shape").get<std::vector<Index>>() != s.shape)
      throw ConfigError("archive array '" + s.name + "' has mismatched shape");
    const auto data = entry.at("data").get<std::vector<Scalar>>();
    if (static_cast<Index>(data.size()) != s.size) throw ConfigError("archive array '" + s.name + "' is truncated");
    for (Index k = 0; k < s.size; ++k) out[s.offset + k] = data[static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace rlab
