#pragma once

#include "rlab/core.hpp"
#include "rlab/extractors.hpp"
#include "rlab/layers.hpp"
#include "rlab/optim.hpp"
#include "rlab/params.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <type_traits>
#include <vector>

namespace rlab {

enum class RewardKind { region_target, prototype_similarity, classifier_margin, brightness };

[[nodiscard]] inline std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::region_target: return "region_target";
    case RewardKind::prototype_similarity: return "prototype_similarity";
    case RewardKind::classifier_margin: return "classifier_margin";
    case RewardKind::brightness: return "brightness";
  }
  return "?";
}

[[nodiscard]] inline RewardKind reward_kind_from(const std::string& s) {
  if (s == "region_target") return RewardKind::region_target;
  if (s == "prototype_similarity") return RewardKind::prototype_similarity;
  if (s == "classifier_margin") return RewardKind::classifier_margin;
  if (s == "brightness") return RewardKind::brightness;
  throw ConfigError("unknown reward kind '" + s + "'");
}

/// Reward definition plus the normalization used when it becomes a loss.
///
/// `anchors` holds one sample-space point per class: the target of
/// region_target and, mapped through `extractor`, the prototype of
/// prototype_similarity.
struct RewardSpec {
  RewardKind kind = RewardKind::region_target;
  std::vector<std::vector<double>> anchors;
  ExtractorSpec extractor;
  std::string classifier_path;
  double norm_lo = 0.0;
  double norm_hi = 1.0;
  double scale = 1e-3;

  void validate() const {
    if (!(norm_lo < norm_hi)) throw ConfigError("reward needs norm_lo < norm_hi");
    if (!(scale > 0.0)) throw ConfigError("reward scale must be positive");
    if ((kind == RewardKind::region_target || kind == RewardKind::prototype_similarity) && anchors.empty())
      throw ConfigError(to_string(kind) + " reward needs per-class anchors");
  }
};

inline void to_json(nlohmann::json& j, const RewardSpec& r) {
  j = {{"kind", to_string(r.kind)}, {"anchors", r.anchors}, {"extractor", r.extractor},
       {"classifier_path", r.classifier_path}, {"norm_lo", r.norm_lo}, {"norm_hi", r.norm_hi},
       {"scale", r.scale}};
}
inline void from_json(const nlohmann::json& j, RewardSpec& r) {
  r.kind = reward_kind_from(j.at("kind").get<std::string>());
  r.anchors = j.value("anchors", std::vector<std::vector<double>>{});
  if (j.contains("extractor")) r.extractor = j.at("extractor").get<ExtractorSpec>();
  r.classifier_path = j.value("classifier_path", "");
  r.norm_lo = j.value("norm_lo", 0.0);
  r.norm_hi = j.value("norm_hi", 1.0);
  r.scale = j.value("scale", 1e-3);
}

/// clamp((raw - lo) / (hi - lo), 0, 1) * scale.
[[nodiscard]] inline double rescale_reward(const RewardSpec& r, double raw) {
  return std::clamp((raw - r.norm_lo) / (r.norm_hi - r.norm_lo), 0.0, 1.0) * r.scale;
}

/// Derivative of rescale_reward; zero wherever the clamp is active.
[[nodiscard]] inline double rescale_slope(const RewardSpec& r, double raw) {
  return (raw > r.norm_lo && raw < r.norm_hi) ? r.scale / (r.norm_hi - r.norm_lo) : 0.0;
}

/// Linear-interpolation percentile (q in [0, 100]) of an unsorted sample.
[[nodiscard]] inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw ArgumentError("percentile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

/// 1st / 99th percentile of raw rewards on base-model samples.
[[nodiscard]] inline std::pair<double, double> calibrate_bounds(std::span<const double> raw) {
  if (raw.size() < 100) throw ConfigError("reward calibration needs at least 100 samples");
  std::vector<double> v(raw.begin(), raw.end());
  const double lo = percentile(v, 1.0), hi = percentile(v, 99.0);
  if (!(hi > lo)) throw ConfigError("reward calibration is degenerate (constant raw rewards)");
  return {lo, hi};
}

/// Small frozen MLP classifier (D -> hidden -> K logits, SiLU).
template <typename Scalar>
struct Classifier {
  int input_dim = 2;
  int hidden = 32;
  int classes = 2;
  std::uint64_t seed = 0;
  std::vector<ParamSlot> layout;
  Vector<Scalar> weights;

  [[nodiscard]] nlohmann::json arch_json() const {
    return {{"input_dim", input_dim}, {"hidden", hidden}, {"classes", classes}};
  }
};

[[nodiscard]] inline std::vector<ParamSlot> classifier_layout(int input_dim, int hidden, int classes) {
  if (input_dim <= 0 || hidden <= 0 || classes < 2) throw ConfigError("invalid classifier architecture");
  LayoutBuilder b;
  b.add("hidden.weight", {hidden, input_dim}).add("hidden.bias", {hidden});
  b.add("logits.weight", {classes, hidden}).add("logits.bias", {classes});
  return b.build();
}

template <typename Scalar>
[[nodiscard]] Classifier<Scalar> init_classifier(int input_dim, int hidden, int classes, std::uint64_t seed) {
  Classifier<Scalar> c{input_dim, hidden, classes, seed, classifier_layout(input_dim, hidden, classes), {}};
  c.weights = Vector<Scalar>::Zero(layout_size(c.layout));
  for (const auto& s : c.layout) {
    if (s.shape.size() == 1) continue;
    const CounterRng rng(seed, stream_id("classifier:" + s.name));
    const double bound = 1.0 / std::sqrt(double(s.shape[1]));
    for (Index k = 0; k < s.size; ++k) c.weights[s.offset + k] = static_cast<Scalar>((2.0 * rng.uniform(k) - 1.0) * bound);
  }
  return c;
}

namespace detail {
template <typename Scalar>
struct ClassifierPass {
  Matrix<Scalar> pre;
  Matrix<Scalar> hidden;
  Matrix<Scalar> logits;
};

template <typename Scalar>
[[nodiscard]] ClassifierPass<Scalar> classifier_forward(const Classifier<Scalar>& c, const Matrix<Scalar>& x) {
  ClassifierPass<Scalar> p;
  p.pre = view(c.weights, find_slot(c.layout, "hidden.weight")) * x;
  p.pre.colwise() += view(c.weights, find_slot(c.layout, "hidden.bias")).col(0);
  p.hidden = layers::silu(p.pre);
  p.logits = view(c.weights, find_slot(c.layout, "logits.weight")) * p.hidden;
  p.logits.colwise() += view(c.weights, find_slot(c.layout, "logits.bias")).col(0);
  return p;
}

/// Returns d/dx given d/dlogits; optionally accumulates weight gradients.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> classifier_backward(const Classifier<Scalar>& c, const Matrix<Scalar>& x,
                                                 const ClassifierPass<Scalar>& p, const Matrix<Scalar>& d_logits,
                                                 std::type_identity_t<Vector<Scalar>>* grad) {
  const auto w2 = view(c.weights, find_slot(c.layout, "logits.weight"));
  Matrix<Scalar> g = layers::silu_backward(p.pre, Matrix<Scalar>(w2.transpose() * d_logits));
  if (grad) {
    view(*grad, find_slot(c.layout, "logits.weight")) += d_logits * p.hidden.transpose();
    view(*grad, find_slot(c.layout, "logits.bias")) += d_logits.rowwise().sum();
    view(*grad, find_slot(c.layout, "hidden.weight")) += g * x.transpose();
    view(*grad, find_slot(c.layout, "hidden.bias")) += g.rowwise().sum();
  }
  return view(c.weights, find_slot(c.layout, "hidden.weight")).transpose() * g;
}
}  // namespace detail

/// Full-batch softmax cross-entropy training with AdamW; deterministic.
template <typename Scalar>
[[nodiscard]] Classifier<Scalar> train_classifier(const Matrix<Scalar>& x, std::span<const int> labels, int classes,
                                                  int hidden, int steps, std::uint64_t seed) {
  if (static_cast<Index>(labels.size()) != x.cols()) throw ArgumentError("train_classifier: label count mismatch");
  auto c = init_classifier<Scalar>(static_cast<int>(x.rows()), hidden, classes, seed);
  AdamW<Scalar> opt(c.weights.size(), {.lr = 1e-2, .weight_decay = 0.0, .clip_norm = 0.0});
  for (int step = 0; step < steps; ++step) {
    const auto pass = detail::classifier_forward(c, x);
    Matrix<Scalar> prob = (pass.logits.rowwise() - pass.logits.colwise().maxCoeff()).array().exp();
    prob.array().rowwise() /= prob.colwise().sum().array();
    for (Index j = 0; j < x.cols(); ++j) prob(labels[static_cast<std::size_t>(j)], j) -= Scalar(1);
    prob /= static_cast<Scalar>(x.cols());
    Vector<Scalar> grad = Vector<Scalar>::Zero(c.weights.size());
    (void)detail::classifier_backward(c, x, pass, prob, &grad);
    opt.step(c.weights, grad);
  }
  return c;
}

template <typename Scalar>
void save_classifier(const std::string& path, const Classifier<Scalar>& c) {
  write_param_archive(path, "classifier", c.arch_json(), c.seed, true, c.layout, c.weights);
}

template <typename Scalar>
[[nodiscard]] Classifier<Scalar> load_classifier(const std::string& path) {
  const auto doc = read_param_archive(path, "classifier");
  const auto& a = doc.at("arch");
  Classifier<Scalar> c;
  c.input_dim = a.at("input_dim").get<int>();
  c.hidden = a.at("hidden").get<int>();
  c.classes = a.at("classes").get<int>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.layout = classifier_layout(c.input_dim, c.hidden, c.classes);
  c.weights = unpack_weights<Scalar>(doc, c.layout);
  return c;
}

/// A RewardSpec with its frozen components materialized.
template <typename Scalar>
class RewardModel {
 public:
  explicit RewardModel(RewardSpec spec, std::optional<Classifier<Scalar>> classifier = std::nullopt)
      : spec_(std::move(spec)), extractor_(spec_.kind == RewardKind::prototype_similarity ? spec_.extractor
                                                                                           : ExtractorSpec{}) {
    spec_.validate();
    if (spec_.kind == RewardKind::classifier_margin) {
      if (classifier) {
        classifier_ = std::move(classifier);
      } else if (!spec_.classifier_path.empty()) {
        classifier_ = load_classifier<Scalar>(spec_.classifier_path);
      } else {
        throw ConfigError("classifier_margin reward needs a classifier");
      }
    }
    if (!spec_.anchors.empty()) {
      const auto d = static_cast<Index>(spec_.anchors.front().size());
      anchors_.resize(d, static_cast<Index>(spec_.anchors.size()));
      for (std::size_t k = 0; k < spec_.anchors.size(); ++k) {
        if (static_cast<Index>(spec_.anchors[k].size()) != d) throw ConfigError("reward anchors have ragged sizes");
        for (Index i = 0; i < d; ++i) anchors_(i, static_cast<Index>(k)) = static_cast<Scalar>(spec_.anchors[k][i]);
      }
      if (spec_.kind == RewardKind::prototype_similarity) prototypes_ = extractor_.features(anchors_);
    }
  }

  [[nodiscard]] const RewardSpec& spec() const { return spec_; }
  RewardSpec& mutable_spec() { return spec_; }

  /// Raw reward per column.
  [[nodiscard]] Vector<double> raw(const Matrix<Scalar>& x0, std::span<const int> cls) const {
    return evaluate(x0, cls, nullptr, nullptr);
  }

  /// Raw rewards plus, in `d_x0`, column j = weight[j] * dR_j / dx0_j.
  [[nodiscard]] Vector<double> raw_with_grad(const Matrix<Scalar>& x0, std::span<const int> cls,
                                             std::span<const double> weight, Matrix<Scalar>& d_x0) const {
    return evaluate(x0, cls, &weight, &d_x0);
  }

  [[nodiscard]] double rescale(double raw) const { return rescale_reward(spec_, raw); }

 private:
  [[nodiscard]] int class_at(std::span<const int> cls, Index j, Index n) const {
    if (static_cast<Index>(cls.size()) != n && cls.size() != 1) throw ArgumentError("reward: one class per column");
    const int c = cls.size() == 1 ? cls[0] : cls[static_cast<std::size_t>(j)];
    const Index limit = spec_.kind == RewardKind::classifier_margin ? classifier_->classes : anchors_.cols();
    if (spec_.kind != RewardKind::brightness && (c < 0 || c >= limit))
      throw ArgumentError("reward: class id " + std::to_string(c) + " has no anchor");
    return c;
  }

  Vector<double> evaluate(const Matrix<Scalar>& x0, std::span<const int> cls, const std::span<const double>* weight,
                          Matrix<Scalar>* d_x0) const {
    if (!all_finite(x0)) throw NumericError("reward: non-finite sample");
    const Index n = x0.cols();
    Vector<double> out(n);
    if (d_x0) {
      if (static_cast<Index>(weight->size()) != n) throw ArgumentError("reward: one weight per column");
      d_x0->setZero(x0.rows(), n);
    }
    auto w_at = [&](Index j) { return static_cast<Scalar>((*weight)[static_cast<std::size_t>(j)]); };

    switch (spec_.kind) {
      case RewardKind::region_target: {
        if (anchors_.rows() != x0.rows()) throw ArgumentError("region_target: anchor dimension mismatch");
        for (Index j = 0; j < n; ++j) {
          const auto diff = (x0.col(j) - anchors_.col(class_at(cls, j, n))).eval();
          out[j] = -static_cast<double>(diff.squaredNorm());
          if (d_x0) d_x0->col(j) = Scalar(-2) * w_at(j) * diff;
        }
        break;
      }
      case RewardKind::brightness: {
        const auto inv = Scalar(1) / static_cast<Scalar>(x0.rows());
        for (Index j = 0; j < n; ++j) {
          out[j] = static_cast<double>(x0.col(j).mean());
          if (d_x0) d_x0->col(j).setConstant(w_at(j) * inv);
        }
        break;
      }
      case RewardKind::prototype_similarity: {
        const Matrix<Scalar> f = extractor_.features(x0);
        Matrix<Scalar> d_f(f.rows(), n);
        for (Index j = 0; j < n; ++j) {
          const auto proto = prototypes_.col(class_at(cls, j, n));
          const Scalar fn = f.col(j).norm(), pn = proto.norm();
          if (!(fn > Scalar(0)) || !(pn > Scalar(0))) throw NumericError("prototype_similarity: zero-norm feature");
          const Scalar cosine = f.col(j).dot(proto) / (fn * pn);
          out[j] = static_cast<double>(cosine);
          if (d_x0) d_f.col(j) = w_at(j) * (proto / (fn * pn) - cosine * f.col(j) / (fn * fn));
        }
        if (d_x0) *d_x0 = extractor_.vjp(x0, d_f);
        break;
      }
      case RewardKind::classifier_margin: {
        const auto& c = *classifier_;
        if (c.input_dim != x0.rows()) throw ArgumentError("classifier_margin: input dimension mismatch");
        const auto pass = detail::classifier_forward(c, x0);
        Matrix<Scalar> d_logits = Matrix<Scalar>::Zero(c.classes, n);
        for (Index j = 0; j < n; ++j) {
          const int label = class_at(cls, j, n);
          Index rival = label == 0 ? 1 : 0;
          for (Index k = 0; k < c.classes; ++k)
            if (k != label && pass.logits(k, j) > pass.logits(rival, j)) rival = k;
          out[j] = static_cast<double>(pass.logits(label, j) - pass.logits(rival, j));
          d_logits(label, j) = d_x0 ? w_at(j) : Scalar(0);
          d_logits(rival, j) = d_x0 ? -w_at(j) : Scalar(0);
        }
        if (d_x0) *d_x0 = detail::classifier_backward(c, x0, pass, d_logits, nullptr);
        break;
      }
    }
    for (Index j = 0; j < n; ++j)
      if (!std::isfinite(out[j])) throw NumericError("reward: non-finite value");
    return out;
  }

  RewardSpec spec_;
  FeatureExtractor<Scalar> extractor_;
  std::optional<Classifier<Scalar>> classifier_;
  Matrix<Scalar> anchors_;
  Matrix<Scalar> prototypes_;
};

}  // namespace rlab
