#pragma once

#include "rlab/core.hpp"
#include "rlab/trainers.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace rlab {

enum class Task { points2d, tinyimages };

[[nodiscard]] inline std::string to_string(Task t) { return t == Task::points2d ? "points2d" : "tinyimages"; }

[[nodiscard]] inline Task task_from(const std::string& s) {
  if (s == "points2d") return Task::points2d;
  if (s == "tinyimages") return Task::tinyimages;
  throw ConfigError("unknown task '" + s + "'");
}

/// Class k is a ring of `blobs` isotropic Gaussians (std `blob_std`) of radius
/// `ring_radius` around a center placed at angle 2 pi k / classes on a circle of
/// radius `center_radius`. Blob j of class k sits at angle 2 pi j / blobs + k.
///
/// tinyimages: `image_side`^2 pixels in [-1, 1]; class 0 horizontal bar, 1
/// vertical bar, 2 square, 3 diagonal, each at a uniformly random offset, plus
/// pixel noise of std `pixel_noise`, clamped.
struct DataParams {
  Task task = Task::points2d;
  int classes = 4;
  double center_radius = 2.0;
  double ring_radius = 0.6;
  int blobs = 6;
  double blob_std = 0.08;
  int image_side = 8;
  double pixel_noise = 0.05;
  int train_count = 8192;
  int heldout_count = 2048;

  [[nodiscard]] int dim() const { return task == Task::points2d ? 2 : image_side * image_side; }

  void validate() const {
    if (train_count < 1 || heldout_count < 1) throw ConfigError("dataset counts must be positive");
    if (task == Task::points2d) {
      if (classes < 1 || blobs < 1) throw ConfigError("points2d needs classes >= 1 and blobs >= 1");
      if (!(center_radius >= 0.0 && ring_radius >= 0.0 && blob_std > 0.0))
        throw ConfigError("points2d radii must be >= 0 and blob_std > 0");
    } else {
      if (classes < 1 || classes > 4) throw ConfigError("tinyimages supports 1..4 classes");
      if (image_side < 4) throw ConfigError("tinyimages image_side must be >= 4");
      if (!(pixel_noise >= 0.0)) throw ConfigError("pixel_noise must be >= 0");
    }
  }

  bool operator==(const DataParams&) const = default;
};

inline void to_json(nlohmann::json& j, const DataParams& d) {
  j = {{"task", to_string(d.task)},           {"classes", d.classes},         {"center_radius", d.center_radius},
       {"ring_radius", d.ring_radius},        {"blobs", d.blobs},             {"blob_std", d.blob_std},
       {"image_side", d.image_side},          {"pixel_noise", d.pixel_noise}, {"train_count", d.train_count},
       {"heldout_count", d.heldout_count}};
}

inline void from_json(const nlohmann::json& j, DataParams& d) {
  d = DataParams{};
  d.task = task_from(j.at("task").get<std::string>());
  d.classes = j.value("classes", d.classes);
  d.center_radius = j.value("center_radius", d.center_radius);
  d.ring_radius = j.value("ring_radius", d.ring_radius);
  d.blobs = j.value("blobs", d.blobs);
  d.blob_std = j.value("blob_std", d.blob_std);
  d.image_side = j.value("image_side", d.image_side);
  d.pixel_noise = j.value("pixel_noise", d.pixel_noise);
  d.train_count = j.value("train_count", d.train_count);
  d.heldout_count = j.value("heldout_count", d.heldout_count);
}

/// Exact generator moments for points2d.
[[nodiscard]] inline Vector<double> class_center(const DataParams& d, int k) {
  const double a = 2.0 * std::numbers::pi * k / d.classes;
  Vector<double> c(2);
  c << d.center_radius * std::cos(a), d.center_radius * std::sin(a);
  return c;
}

/// Per-class covariance, valid for blobs >= 3 (evenly spaced ring).
[[nodiscard]] inline double class_variance(const DataParams& d) {
  return d.ring_radius * d.ring_radius / 2.0 + d.blob_std * d.blob_std;
}

template <typename Scalar>
struct SplitDataset {
  Dataset<Scalar> train;
  Dataset<Scalar> heldout;
};

namespace detail {

inline void draw_point(const DataParams& d, const CounterRng& rng, Vector<double>& out, int& label) {
  label = rng.uniform_int(0, 0, d.classes - 1);
  const int blob = rng.uniform_int(1, 0, d.blobs - 1);
  const double a = 2.0 * std::numbers::pi * blob / d.blobs + label;
  out = class_center(d, label);
  out[0] += d.ring_radius * std::cos(a) + d.blob_std * rng.normal(2);
  out[1] += d.ring_radius * std::sin(a) + d.blob_std * rng.normal(3);
}

inline void draw_image(const DataParams& d, const CounterRng& rng, Vector<double>& out, int& label) {
  const int side = d.image_side;
  label = rng.uniform_int(0, 0, d.classes - 1);
  out = Vector<double>::Constant(side * side, -1.0);
  auto set = [&](int y, int x) {
    if (y >= 0 && y < side && x >= 0 && x < side) out[y * side + x] = 1.0;
  };
  switch (label) {
    case 0: {
      const int r = rng.uniform_int(1, 0, side - 2);
      for (int x = 0; x < side; ++x) set(r, x), set(r + 1, x);
      break;
    }
    case 1: {
      const int c = rng.uniform_int(1, 0, side - 2);
      for (int y = 0; y < side; ++y) set(y, c), set(y, c + 1);
      break;
    }
    case 2: {
      const int y0 = rng.uniform_int(1, 0, side - 3), x0 = rng.uniform_int(2, 0, side - 3);
      for (int y = y0; y < y0 + 3; ++y)
        for (int x = x0; x < x0 + 3; ++x) set(y, x);
      break;
    }
    default: {
      const int off = rng.uniform_int(1, -side / 2, side / 2);
      for (int y = 0; y < side; ++y) set(y, y + off);
      break;
    }
  }
  for (Index i = 0; i < out.size(); ++i)
    out[i] = std::clamp(out[i] + d.pixel_noise * rng.normal(static_cast<std::uint64_t>(8 + i)), -1.0, 1.0);
}

}  // namespace detail

/// Sample i is drawn from its own stream, so the dataset is a pure function of
/// (params, seed); indices [0, train_count) form the training split and the
/// next heldout_count indices the heldout split.
template <typename Scalar>
[[nodiscard]] SplitDataset<Scalar> synthesize_dataset(const DataParams& d, std::uint64_t seed) {
  d.validate();
  const int dim = d.dim();
  const auto total = static_cast<std::uint64_t>(d.train_count) + static_cast<std::uint64_t>(d.heldout_count);
  SplitDataset<Scalar> out;
  out.train.x.resize(dim, d.train_count);
  out.train.labels.resize(static_cast<std::size_t>(d.train_count));
  out.heldout.x.resize(dim, d.heldout_count);
  out.heldout.labels.resize(static_cast<std::size_t>(d.heldout_count));
  Vector<double> v;
  for (std::uint64_t i = 0; i < total; ++i) {
    const CounterRng rng(seed, stream_id("dataset:" + to_string(d.task), i));
    int label = 0;
    if (d.task == Task::points2d)
      detail::draw_point(d, rng, v, label);
    else
      detail::draw_image(d, rng, v, label);
    const bool is_train = i < static_cast<std::uint64_t>(d.train_count);
    auto& split = is_train ? out.train : out.heldout;
    const auto col = static_cast<Index>(is_train ? i : i - static_cast<std::uint64_t>(d.train_count));
    split.x.col(col) = v.cast<Scalar>();
    split.labels[static_cast<std::size_t>(col)] = label;
  }
  return out;
}

template <typename Scalar>
[[nodiscard]] std::uint64_t dataset_checksum(const Dataset<Scalar>& d) {
  std::uint64_t h = fnv1a64(std::as_bytes(std::span(d.x.data(), static_cast<std::size_t>(d.x.size()))));
  return fnv1a64(std::as_bytes(std::span(d.labels)), h);
}

/// Columns of `d` whose label is `k`.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> class_subset(const Dataset<Scalar>& d, int k) {
  std::vector<Index> idx;
  for (std::size_t i = 0; i < d.labels.size(); ++i)
    if (d.labels[i] == k) idx.push_back(static_cast<Index>(i));
  Matrix<Scalar> out(d.x.rows(), static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Index>(i)) = d.x.col(idx[i]);
  return out;
}

}  // namespace rlab
