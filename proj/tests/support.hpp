#pragma once

#include "rlab/rlab.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rlab::testing {

/// Small MLP denoiser used across tests.
inline Arch small_mlp(int dim = 2, int classes = 3) {
  Arch a;
  a.input_dim = dim;
  a.hidden = {8, 8};
  a.time_embed = 4;
  a.cond_embed = 3;
  a.class_count = classes;
  return a;
}

inline Arch small_conv(int side = 4, int classes = 2) {
  Arch a;
  a.kind = ArchKind::conv;
  a.input_dim = side * side;
  a.image_side = side;
  a.hidden = {3, 2};
  a.time_embed = 4;
  a.cond_embed = 3;
  a.class_count = classes;
  return a;
}

inline Schedules small_schedules(int train = 20, int inference = 10) {
  NoiseSchedule tr = build_schedule(ScheduleKind::linear, train, 1e-2, 0.3);
  return Schedules{tr, respace(tr, inference)};
}

/// Central finite difference of f at w along coordinate i.
template <typename F>
double central_difference(F&& f, Vector<double> w, Index i, double h = 1e-6) {
  const double w0 = w[i];
  w[i] = w0 + h;
  const double up = f(w);
  w[i] = w0 - h;
  const double down = f(w);
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rlab-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace rlab::testing
