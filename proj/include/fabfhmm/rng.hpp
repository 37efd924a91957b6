#pragma once

#include <cstdint>
#include <Eigen/Core>

namespace fabfhmm {

/// Counter-based random stream built on the SplitMix64 mixer.
///
/// Streams are addressed by (seed, stream): two streams with different ids
/// are statistically independent, and a stream's output depends only on
/// (seed, stream, draw index). This makes per-sequence / per-trial
/// generation reproducible regardless of scheduling.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  /// Uniform draw in [0, 1).
  double uniform();

  /// Standard normal via Box-Muller (two uniforms per draw, no cache).
  double normal();

  /// Index draw from an unnormalized nonnegative weight vector.
  int categorical(const Eigen::VectorXd& weights);

  /// Gamma(shape, 1) for shape >= 1, Marsaglia-Tsang squeeze.
  double gamma(double shape);

  /// Symmetric Dirichlet(concentration) over k components.
  Eigen::VectorXd dirichlet(double concentration, int k);

private:
  std::uint64_t counter_;
  std::uint64_t key_;
};

}  // namespace fabfhmm
