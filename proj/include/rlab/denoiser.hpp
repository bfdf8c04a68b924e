#pragma once

#include "rlab/core.hpp"
#include "rlab/layers.hpp"
#include "rlab/params.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace rlab {

/// Class id used for the unconditional (null) condition.
inline constexpr int kNullClass = -1;

enum class ArchKind { mlp, conv };

/// Architecture descriptor. `input_dim` is the flattened sample size; for the
/// convolutional kind it must equal image_side^2 (one channel).
struct Arch {
  ArchKind kind = ArchKind::mlp;
  int input_dim = 2;
  int image_side = 0;
  std::vector<int> hidden{128, 128, 128};
  int time_embed = 32;
  int cond_embed = 16;
  int class_count = 4;

  void validate() const {
    if (input_dim <= 0) throw ConfigError("arch.input_dim must be positive");
    if (hidden.empty()) throw ConfigError("arch.hidden must list at least one width");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("arch.hidden widths must be positive");
    if (time_embed <= 0 || time_embed % 2 != 0) throw ConfigError("arch.time_embed must be positive and even");
    if (cond_embed <= 0) throw ConfigError("arch.cond_embed must be positive");
    if (class_count <= 0) throw ConfigError("arch.class_count must be positive");
    if (kind == ArchKind::conv && (image_side <= 0 || image_side * image_side != input_dim))
      throw ConfigError("conv arch needs input_dim == image_side^2");
  }

  bool operator==(const Arch&) const = default;
};

inline void to_json(nlohmann::json& j, const Arch& a) {
  j = {{"kind", a.kind == ArchKind::mlp ? "mlp" : "conv"},
       {"input_dim", a.input_dim},
       {"image_side", a.image_side},
       {"hidden", a.hidden},
       {"time_embed", a.time_embed},
       {"cond_embed", a.cond_embed},
       {"class_count", a.class_count}};
}

inline void from_json(const nlohmann::json& j, Arch& a) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "mlp" && kind != "conv") throw ConfigError("unknown arch kind '" + kind + "'");
  a.kind = kind == "mlp" ? ArchKind::mlp : ArchKind::conv;
  a.input_dim = j.at("input_dim").get<int>();
  a.image_side = j.value("image_side", 0);
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.time_embed = j.at("time_embed").get<int>();
  a.cond_embed = j.at("cond_embed").get<int>();
  a.class_count = j.at("class_count").get<int>();
}

/// Parameter layout implied by an architecture. The round trip
/// arch -> layout -> validate is what checkpoint loading relies on.
[[nodiscard]] inline std::vector<ParamSlot> denoiser_layout(const Arch& arch) {
  arch.validate();
  LayoutBuilder b;
  b.add("class_embedding", {arch.cond_embed, arch.class_count + 1});
  const int emb = arch.time_embed + arch.cond_embed;
  if (arch.kind == ArchKind::mlp) {
    Index in = arch.input_dim + emb;
    for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
      const Index out = arch.hidden[l];
      b.add("mlp." + std::to_string(l) + ".weight", {out, in});
      b.add("mlp." + std::to_string(l) + ".bias", {out});
      in = out;
    }
    b.add("out.weight", {arch.input_dim, in});
    b.add("out.bias", {arch.input_dim});
  } else {
    Index in = 1;
    for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
      const Index out = arch.hidden[l];
      b.add("conv." + std::to_string(l) + ".weight", {out, in * 9});
      b.add("conv." + std::to_string(l) + ".bias", {out});
      b.add("conv." + std::to_string(l) + ".embed", {out, emb});
      in = out;
    }
    b.add("out.weight", {1, in * 9});
    b.add("out.bias", {1});
  }
  return b.build();
}

/// A named, seeded parameter set for the conditional noise predictor.
template <typename Scalar>
struct DenoiserParams {
  std::string name;
  Arch arch;
  std::uint64_t seed = 0;
  bool frozen = false;
  std::vector<ParamSlot> layout;
  Vector<Scalar> weights;

  [[nodiscard]] std::uint64_t checksum() const { return rlab::checksum(weights); }
  [[nodiscard]] const ParamSlot& slot(const std::string& n) const { return find_slot(layout, n); }
  [[nodiscard]] Index size() const { return weights.size(); }
};

/// Deterministic init: weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero,
/// class embeddings N(0, 1). Each slot draws from its own counter stream.
template <typename Scalar>
[[nodiscard]] DenoiserParams<Scalar> init_denoiser(const Arch& arch, std::uint64_t seed, std::string name = "theta") {
  DenoiserParams<Scalar> p;
  p.name = std::move(name);
  p.arch = arch;
  p.seed = seed;
  p.layout = denoiser_layout(arch);
  p.weights = Vector<Scalar>::Zero(layout_size(p.layout));
  for (const auto& s : p.layout) {
    const CounterRng rng(seed, stream_id(s.name));
    const bool is_bias = s.shape.size() == 1;
    if (is_bias) continue;
    if (s.name == "class_embedding") {
      for (Index k = 0; k < s.size; ++k) p.weights[s.offset + k] = static_cast<Scalar>(rng.normal(k));
      continue;
    }
    const double bound = 1.0 / std::sqrt(double(s.shape[1]));
    for (Index k = 0; k < s.size; ++k)
      p.weights[s.offset + k] = static_cast<Scalar>((2.0 * rng.uniform(k) - 1.0) * bound);
  }
  return p;
}

/// Deep copy under a new name; never frozen.
template <typename Scalar>
[[nodiscard]] DenoiserParams<Scalar> clone_params(const DenoiserParams<Scalar>& p, std::string name) {
  DenoiserParams<Scalar> out = p;
  out.name = std::move(name);
  out.frozen = false;
  return out;
}

template <typename Scalar>
[[nodiscard]] DenoiserParams<Scalar> freeze(DenoiserParams<Scalar> p) {
  p.frozen = true;
  return p;
}

/// Activations cached by a recorded forward pass. A tape with record = false
/// is the gradient-isolation mode: nothing is cached and backward yields zero.
template <typename Scalar>
struct Tape {
  bool record = true;
  std::vector<int> classes;          // resolved embedding rows
  std::vector<Matrix<Scalar>> inputs;  // mlp: layer inputs; conv: im2col matrices
  std::vector<Matrix<Scalar>> pre;     // pre-activations per hidden layer
  Matrix<Scalar> embedding;            // conv: [time; class] per sample
  Index batch = 0;
};

namespace detail {

template <typename Scalar>
[[nodiscard]] std::vector<int> resolve_classes(const Arch& arch, std::span<const int> cls) {
  std::vector<int> rows(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (cls[i] == kNullClass) {
      rows[i] = arch.class_count;
    } else if (cls[i] >= 0 && cls[i] < arch.class_count) {
      rows[i] = cls[i];
    } else {
      throw ArgumentError("class id " + std::to_string(cls[i]) + " outside [0, class_count)");
    }
  }
  return rows;
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> condition_embedding(const DenoiserParams<Scalar>& p, std::span<const int> t,
                                                 const std::vector<int>& rows) {
  const auto table = view(p.weights, p.slot("class_embedding"));
  Matrix<Scalar> emb(p.arch.time_embed + p.arch.cond_embed, static_cast<Index>(rows.size()));
  emb.topRows(p.arch.time_embed) = layers::timestep_embedding<Scalar>(t, p.arch.time_embed);
  for (std::size_t n = 0; n < rows.size(); ++n)
    emb.col(static_cast<Index>(n)).bottomRows(p.arch.cond_embed) = table.col(rows[n]);
  return emb;
}

template <typename Scalar>
void accumulate_class_grad(const DenoiserParams<Scalar>& p, const std::vector<int>& rows,
                           const Matrix<Scalar>& d_cond, Vector<Scalar>& grad) {
  auto g = view(grad, p.slot("class_embedding"));
  for (std::size_t n = 0; n < rows.size(); ++n) g.col(rows[n]) += d_cond.col(static_cast<Index>(n));
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> forward_mlp(const DenoiserParams<Scalar>& p, const Matrix<Scalar>& x,
                                         const Matrix<Scalar>& emb, Tape<Scalar>* tape) {
  const auto& arch = p.arch;
  Matrix<Scalar> h(arch.input_dim + emb.rows(), x.cols());
  h.topRows(arch.input_dim) = x;
  h.bottomRows(emb.rows()) = emb;
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    const auto w = view(p.weights, p.slot("mlp." + std::to_string(l) + ".weight"));
    const auto b = view(p.weights, p.slot("mlp." + std::to_string(l) + ".bias"));
    Matrix<Scalar> z = w * h;
    z.colwise() += b.col(0);
    Matrix<Scalar> next = layers::silu(z);
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(std::move(z));
    }
    h = std::move(next);
  }
  const auto w = view(p.weights, p.slot("out.weight"));
  const auto b = view(p.weights, p.slot("out.bias"));
  Matrix<Scalar> out = w * h;
  out.colwise() += b.col(0);
  if (tape) tape->inputs.push_back(std::move(h));
  return out;
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> backward_mlp(const DenoiserParams<Scalar>& p, const Tape<Scalar>& tape,
                                          const Matrix<Scalar>& d_out, Vector<Scalar>& grad) {
  const auto& arch = p.arch;
  const std::size_t layers_n = arch.hidden.size();
  view(grad, p.slot("out.weight")) += d_out * tape.inputs[layers_n].transpose();
  view(grad, p.slot("out.bias")) += d_out.rowwise().sum();
  Matrix<Scalar> g = view(p.weights, p.slot("out.weight")).transpose() * d_out;
  for (std::size_t l = layers_n; l-- > 0;) {
    g = layers::silu_backward(tape.pre[l], g);
    const std::string key = "mlp." + std::to_string(l);
    view(grad, p.slot(key + ".weight")) += g * tape.inputs[l].transpose();
    view(grad, p.slot(key + ".bias")) += g.rowwise().sum();
    g = view(p.weights, p.slot(key + ".weight")).transpose() * g;
  }
  accumulate_class_grad(p, tape.classes, Matrix<Scalar>(g.bottomRows(arch.cond_embed)), grad);
  return g.topRows(arch.input_dim);
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> forward_conv(const DenoiserParams<Scalar>& p, const Matrix<Scalar>& x,
                                          const Matrix<Scalar>& emb, Tape<Scalar>* tape) {
  const auto& arch = p.arch;
  const layers::ConvGeometry geo{arch.image_side};
  const Index hw = geo.pixels();
  // Column-major (HW x N) is the pixel-major layout with one channel.
  Matrix<Scalar> h = Eigen::Map<const Matrix<Scalar>>(x.data(), 1, x.size());
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    const std::string key = "conv." + std::to_string(l);
    Matrix<Scalar> cols = layers::im2col(h, geo);
    Matrix<Scalar> z = view(p.weights, p.slot(key + ".weight")) * cols;
    z.colwise() += view(p.weights, p.slot(key + ".bias")).col(0);
    layers::add_per_sample(z, Matrix<Scalar>(view(p.weights, p.slot(key + ".embed")) * emb), hw);
    h = layers::silu(z);
    if (tape) {
      tape->inputs.push_back(std::move(cols));
      tape->pre.push_back(std::move(z));
    }
  }
  Matrix<Scalar> cols = layers::im2col(h, geo);
  Matrix<Scalar> out = view(p.weights, p.slot("out.weight")) * cols;
  out.array() += view(p.weights, p.slot("out.bias"))(0, 0);
  if (tape) {
    tape->inputs.push_back(std::move(cols));
    tape->embedding = emb;
  }
  return Eigen::Map<const Matrix<Scalar>>(out.data(), hw, x.cols());
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> backward_conv(const DenoiserParams<Scalar>& p, const Tape<Scalar>& tape,
                                           const Matrix<Scalar>& d_out, Vector<Scalar>& grad) {
  const auto& arch = p.arch;
  const layers::ConvGeometry geo{arch.image_side};
  const Index hw = geo.pixels();
  const std::size_t layers_n = arch.hidden.size();
  const Matrix<Scalar> g_out = Eigen::Map<const Matrix<Scalar>>(d_out.data(), 1, d_out.size());
  view(grad, p.slot("out.weight")) += g_out * tape.inputs[layers_n].transpose();
  view(grad, p.slot("out.bias"))(0, 0) += g_out.sum();
  Matrix<Scalar> d_cols = view(p.weights, p.slot("out.weight")).transpose() * g_out;
  Matrix<Scalar> g = layers::col2im(d_cols, arch.hidden.back(), geo);
  Matrix<Scalar> d_emb = Matrix<Scalar>::Zero(tape.embedding.rows(), tape.embedding.cols());
  for (std::size_t l = layers_n; l-- > 0;) {
    const std::string key = "conv." + std::to_string(l);
    g = layers::silu_backward(tape.pre[l], g);
    view(grad, p.slot(key + ".weight")) += g * tape.inputs[l].transpose();
    view(grad, p.slot(key + ".bias")) += g.rowwise().sum();
    const Matrix<Scalar> per_sample = layers::sum_per_sample(g, hw);
    view(grad, p.slot(key + ".embed")) += per_sample * tape.embedding.transpose();
    d_emb += view(p.weights, p.slot(key + ".embed")).transpose() * per_sample;
    d_cols = view(p.weights, p.slot(key + ".weight")).transpose() * g;
    const Index c_in = l == 0 ? 1 : arch.hidden[l - 1];
    g = layers::col2im(d_cols, c_in, geo);
  }
  accumulate_class_grad(p, tape.classes, Matrix<Scalar>(d_emb.bottomRows(arch.cond_embed)), grad);
  return Eigen::Map<const Matrix<Scalar>>(g.data(), hw, d_out.cols());
}

}  // namespace detail

/// eps_theta(x_t, t, c) for a column batch. `t` holds one model timestep per
/// column (or a single entry broadcast to all columns) and `cls` one class id
/// per column (kNullClass for unconditional).
///
/// Pass a recording tape to enable `backward_eps`; pass nullptr (or a tape
/// with record = false) to evaluate under gradient isolation.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> predict_eps(const DenoiserParams<Scalar>& p, const Matrix<Scalar>& x,
                                         std::type_identity_t<std::span<const int>> t,
                                         std::type_identity_t<std::span<const int>> cls,
                                         std::type_identity_t<Tape<Scalar>>* tape = nullptr) {
  if (x.rows() != p.arch.input_dim) throw ArgumentError("predict_eps: sample dimension does not match arch");
  if (!all_finite(x)) throw NumericError("predict_eps: non-finite input");
  const auto n = static_cast<std::size_t>(x.cols());
  std::vector<int> t_full(t.begin(), t.end());
  if (t_full.size() == 1 && n != 1) t_full.assign(n, t_full[0]);
  std::vector<int> c_full(cls.begin(), cls.end());
  if (c_full.size() == 1 && n != 1) c_full.assign(n, c_full[0]);
  if (t_full.size() != n || c_full.size() != n) throw ArgumentError("predict_eps: per-column t/class length mismatch");
  for (int ti : t_full)
    if (ti < 1) throw ArgumentError("predict_eps: timestep must be >= 1");

  Tape<Scalar>* rec = (tape && tape->record) ? tape : nullptr;
  auto rows = detail::resolve_classes<Scalar>(p.arch, c_full);
  const Matrix<Scalar> emb = detail::condition_embedding(p, t_full, rows);
  if (rec) {
    rec->inputs.clear();
    rec->pre.clear();
    rec->classes = std::move(rows);
    rec->batch = x.cols();
  }
  Matrix<Scalar> out =
      p.arch.kind == ArchKind::mlp ? detail::forward_mlp(p, x, emb, rec) : detail::forward_conv(p, x, emb, rec);
  if (!all_finite(out)) throw NumericError("predict_eps: non-finite output");
  return out;
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> predict_eps(const DenoiserParams<Scalar>& p, const Matrix<Scalar>& x, int t,
                                         std::type_identity_t<std::span<const int>> cls,
                                         std::type_identity_t<Tape<Scalar>>* tape = nullptr) {
  const int ts[1] = {t};
  return predict_eps(p, x, std::span<const int>(ts), cls, tape);
}

/// Accumulates d(loss)/d(weights) into `grad` given d(loss)/d(eps_hat) and
/// returns d(loss)/d(x_t). An isolated tape contributes nothing.
template <typename Scalar>
Matrix<Scalar> backward_eps(const DenoiserParams<Scalar>& p, const Tape<Scalar>& tape, const Matrix<Scalar>& d_eps,
                            Vector<Scalar>& grad) {
  if (grad.size() != p.size()) throw ArgumentError("backward_eps: gradient buffer has wrong size");
  if (!tape.record || tape.batch == 0) return Matrix<Scalar>::Zero(d_eps.rows(), d_eps.cols());
  if (d_eps.cols() != tape.batch) throw ArgumentError("backward_eps: batch mismatch with tape");
  return p.arch.kind == ArchKind::mlp ? detail::backward_mlp(p, tape, d_eps, grad)
                                      : detail::backward_conv(p, tape, d_eps, grad);
}

/// Tapes for one classifier-free-guided evaluation.
template <typename Scalar>
struct GuidedTape {
  bool record = true;
  double scale = 1.0;
  Tape<Scalar> cond;
  Tape<Scalar> uncond;
};

/// eps_uncond + scale (eps_cond - eps_uncond). Scales 1 and 0 short-circuit to
/// the plain conditional / unconditional prediction so they are bit-exact.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> predict_eps_cfg(const DenoiserParams<Scalar>& p, const Matrix<Scalar>& x,
                                             std::type_identity_t<std::span<const int>> t,
                                             std::type_identity_t<std::span<const int>> cls, double scale,
                                             std::type_identity_t<GuidedTape<Scalar>>* tape = nullptr) {
  if (!(scale >= 0.0)) throw ArgumentError("predict_eps_cfg: guidance scale must be >= 0");
  if (tape) {
    tape->scale = scale;
    tape->cond = {};
    tape->uncond = {};
    tape->cond.record = tape->uncond.record = tape->record;
  }
  if (scale == 1.0) return predict_eps(p, x, t, cls, tape ? &tape->cond : nullptr);
  const std::vector<int> null_cls(static_cast<std::size_t>(x.cols()), kNullClass);
  Matrix<Scalar> uncond = predict_eps(p, x, t, null_cls, tape ? &tape->uncond : nullptr);
  if (scale == 0.0) return uncond;
  const Matrix<Scalar> cond = predict_eps(p, x, t, cls, tape ? &tape->cond : nullptr);
  return uncond + static_cast<Scalar>(scale) * (cond - uncond);
}

template <typename Scalar>
[[nodiscard]] Matrix<Scalar> predict_eps_cfg(const DenoiserParams<Scalar>& p, const Matrix<Scalar>& x, int t,
                                             std::type_identity_t<std::span<const int>> cls, double scale,
                                             std::type_identity_t<GuidedTape<Scalar>>* tape = nullptr) {
  const int ts[1] = {t};
  return predict_eps_cfg(p, x, std::span<const int>(ts), cls, scale, tape);
}

template <typename Scalar>
Matrix<Scalar> backward_eps_cfg(const DenoiserParams<Scalar>& p, const GuidedTape<Scalar>& tape,
                                const Matrix<Scalar>& d_eps, Vector<Scalar>& grad) {
  if (tape.scale == 1.0) return backward_eps(p, tape.cond, d_eps, grad);
  if (tape.scale == 0.0) return backward_eps(p, tape.uncond, d_eps, grad);
  const auto s = static_cast<Scalar>(tape.scale);
  Matrix<Scalar> dx = backward_eps(p, tape.cond, Matrix<Scalar>(s * d_eps), grad);
  dx += backward_eps(p, tape.uncond, Matrix<Scalar>((Scalar(1) - s) * d_eps), grad);
  return dx;
}

template <typename Scalar>
void save_checkpoint(const std::string& path, const DenoiserParams<Scalar>& p,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json extra_doc = extra;
  extra_doc["name"] = p.name;
  write_param_archive(path, "denoiser", nlohmann::json(p.arch), p.seed, p.frozen, p.layout, p.weights, extra_doc);
}

/// Loads a denoiser archive. When `expected` is given, the stored architecture
/// must match it exactly.
template <typename Scalar>
[[nodiscard]] DenoiserParams<Scalar> load_checkpoint(const std::string& path,
                                                     const std::optional<Arch>& expected = std::nullopt,
                                                     nlohmann::json* extra = nullptr) {
  const auto doc = read_param_archive(path, "denoiser");
  DenoiserParams<Scalar> p;
  p.arch = doc.at("arch").get<Arch>();
  if (expected && !(*expected == p.arch)) throw ConfigError("checkpoint '" + path + "' architecture mismatch");
  p.layout = denoiser_layout(p.arch);
  p.weights = unpack_weights<Scalar>(doc, p.layout);
  p.seed = doc.at("seed").get<std::uint64_t>();
  p.frozen = doc.at("frozen").get<bool>();
  p.name = doc.at("extra").value("name", "theta");
  if (extra) *extra = doc.at("extra");
  return p;
}

}  // namespace rlab
