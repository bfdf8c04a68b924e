#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rlab {

// Error taxonomy. The CLI maps these onto process exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Index = Eigen::Index;

/// Column-per-sample batch: D rows, N columns.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
[[nodiscard]] bool all_finite(const Eigen::DenseBase<Scalar>& m) {
  return m.derived().array().isFinite().all();
}

/// FNV-1a over raw bytes. Used for weight checksums and artifact manifests.
[[nodiscard]] inline std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

[[nodiscard]] inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::as_bytes(std::span(s.data(), s.size())));
}

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Pure function of (counter, key).
[[nodiscard]] inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                                             std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += w0;
    key[1] += w1;
  }
  return ctr;
}

/// Counter-based random stream. A stream is identified by (seed, stream id);
/// every draw is addressed by an explicit 64-bit position, so the value at a
/// given position never depends on how many other draws were made.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t stream() const { return stream_; }

  [[nodiscard]] std::array<std::uint32_t, 4> block(std::uint64_t position) const {
    return philox4x32({static_cast<std::uint32_t>(position), static_cast<std::uint32_t>(position >> 32),
                       static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                      {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  }

  /// Uniform in the open interval (0, 1).
  [[nodiscard]] double uniform(std::uint64_t position) const {
    const auto b = block(position);
    return to_open_unit(b[0], b[1]);
  }

  /// Standard normal via Box-Muller on one Philox block.
  [[nodiscard]] double normal(std::uint64_t position) const {
    const auto b = block(position);
    const double u1 = to_open_unit(b[0], b[1]);
    const double u2 = to_open_unit(b[2], b[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [lo, hi] (inclusive). Slight modulo bias is below 2^-32.
  [[nodiscard]] int uniform_int(std::uint64_t position, int lo, int hi) const {
    if (hi < lo) throw ArgumentError("uniform_int: empty range");
    const auto b = block(position);
    const std::uint64_t word = (std::uint64_t{b[0]} << 32) | b[1];
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(word % span);
  }

 private:
  static double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;  // 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Stream ids are derived from a tag and up to two indices so unrelated draws
/// (init noise, per-step noise, timestep draws...) never collide.
[[nodiscard]] inline std::uint64_t stream_id(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = fnv1a64(tag);
  h = fnv1a64(std::as_bytes(std::span(&a, 1)), h);
  h = fnv1a64(std::as_bytes(std::span(&b, 1)), h);
  return h;
}

/// Fills a D x N matrix with standard normals; column i uses its own stream so
/// sample i is identical regardless of batch size.
template <typename Scalar>
[[nodiscard]] Matrix<Scalar> normal_matrix(Index rows, Index cols, std::uint64_t seed, std::string_view tag,
                                           std::uint64_t index = 0, Index column_offset = 0) {
  Matrix<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    const CounterRng rng(seed, stream_id(tag, index, static_cast<std::uint64_t>(j + column_offset)));
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.normal(static_cast<std::uint64_t>(i)));
  }
  return m;
}

}  // namespace rlab
