#include "fabfhmm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fabfhmm {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : counter_(0), key_(mix64(seed + kGolden) ^ mix64(stream * 0xD2B74407B1CE6E93ULL + 1)) {}

std::uint64_t RngStream::next_u64() {
  counter_ += kGolden;
  return mix64(key_ + counter_);
}

double RngStream::uniform() {
  // 53-bit mantissa, strictly below 1.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int RngStream::categorical(const Eigen::VectorXd& weights) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("categorical: nonpositive weight total");
  double u = uniform() * total;
  for (int k = 0; k < weights.size(); ++k) {
    u -= weights[k];
    if (u < 0.0) return k;
  }
  return static_cast<int>(weights.size()) - 1;
}

double RngStream::gamma(double shape) {
  if (shape < 1.0) {
    // Boost to shape+1 and scale back.
    const double u = std::max(uniform(), 1e-300);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

Eigen::VectorXd RngStream::dirichlet(double concentration, int k) {
  Eigen::VectorXd out(k);
  for (int i = 0; i < k; ++i) out[i] = gamma(concentration);
  const double total = out.sum();
  if (total <= 0.0) return Eigen::VectorXd::Constant(k, 1.0 / k);
  return out / total;
}

}  // namespace fabfhmm
