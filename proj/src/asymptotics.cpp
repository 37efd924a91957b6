#include "fabfhmm/asymptotics.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "fabfhmm/rng.hpp"

namespace fabfhmm::asymptotics {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

BernoulliSumSpec binomial_spec(int trials, double prob) {
  BernoulliSumSpec spec;
  spec.p = Eigen::VectorXd::Constant(trials, prob);
  spec.y_bar = trials * prob;
  spec.y_hat = spec.y_bar;
  return spec;
}

double approx_e_log_y_plus1(const BernoulliSumSpec& spec) {
  if (!(spec.y_hat > 0.0)) throw std::invalid_argument("approx: y_hat must be positive");
  return std::log(spec.y_hat + 1.0) + (spec.y_bar - spec.y_hat) / (spec.y_hat + 1.0);
}

double approx_e_ylogy(const BernoulliSumSpec& spec) {
  if (!(spec.y_hat > 0.0)) throw std::invalid_argument("approx: y_hat must be positive");
  return spec.y_bar * std::log(spec.y_hat) + (spec.y_bar - spec.y_hat);
}

double approx_e_loggamma(const BernoulliSumSpec& spec) {
  if (!(spec.y_hat > 0.0)) throw std::invalid_argument("approx: y_hat must be positive");
  if (spec.y_hat < 10.0)
    std::cerr << "approx_e_loggamma: y_hat = " << spec.y_hat
              << " is below the Stirling regime (>= 10 recommended)\n";
  return spec.y_bar * (std::log(spec.y_hat) - 0.5 / spec.y_hat) -
         (spec.y_hat + 0.5 * std::log(spec.y_hat)) + 0.5 * (kLog2Pi + 1.0);
}

double approx_e_loggamma_diff(const std::vector<BernoulliSumSpec>& specs) {
  const int n = static_cast<int>(specs.size());
  if (n == 0) throw std::invalid_argument("approx_e_loggamma_diff: empty spec list");
  double hat_total = 0.0;
  for (const auto& spec : specs) {
    if (!(spec.y_hat > 0.0)) throw std::invalid_argument("approx: y_hat must be positive");
    hat_total += spec.y_hat;
  }
  double value = 0.0;
  for (const auto& spec : specs) {
    value += spec.y_bar * (std::log(spec.y_hat / hat_total) + 0.5 / hat_total -
                           0.5 / spec.y_hat);
    value -= 0.5 * std::log(spec.y_hat);
  }
  value += 0.5 * std::log(hat_total);
  value += 0.5 * (n - 1) * (kLog2Pi + 1.0);
  return value;
}

namespace {

double sample_sum(const BernoulliSumSpec& spec, RngStream& rng) {
  double y = 0.0;
  for (int i = 0; i < spec.p.size(); ++i)
    if (rng.uniform() < spec.p[i]) y += 1.0;
  return y;
}

}  // namespace

McEstimate mc_oracle(const std::vector<BernoulliSumSpec>& specs, Functional functional,
                     long samples, std::uint64_t seed) {
  if (samples < 1000) throw std::invalid_argument("mc_oracle: samples must be >= 1000");
  if (specs.empty()) throw std::invalid_argument("mc_oracle: empty spec list");

  RngStream rng(seed, 0xACC0C0DEULL);
  double sum = 0.0;
  double sum_sq = 0.0;
  long used = 0;
  long discarded = 0;

  for (long i = 0; i < samples; ++i) {
    double value = 0.0;
    bool ok = true;
    switch (functional) {
      case Functional::LogYPlus1:
        value = std::log(sample_sum(specs[0], rng) + 1.0);
        break;
      case Functional::YLogY: {
        const double y = sample_sum(specs[0], rng);
        value = y > 0.0 ? y * std::log(y) : 0.0;  // y log y -> 0 as y -> 0
        break;
      }
      case Functional::LogGamma: {
        const double y = sample_sum(specs[0], rng);
        if (y <= 0.0) {
          ok = false;  // the expansions assume y_bar -> inf; discard and count
        } else {
          value = std::lgamma(y);
        }
        break;
      }
      case Functional::GammaDiff: {
        double total = 0.0;
        for (const auto& spec : specs) {
          const double y = sample_sum(spec, rng);
          if (y <= 0.0) {
            ok = false;
            break;
          }
          value += std::lgamma(y);
          total += y;
        }
        if (ok) value -= std::lgamma(total);
        break;
      }
      case Functional::NegativeMoment:
        value = 1.0 / (sample_sum(specs[0], rng) + 1.0);
        break;
    }
    if (!ok) {
      ++discarded;
      continue;
    }
    sum += value;
    sum_sq += value * value;
    ++used;
  }

  McEstimate out;
  out.samples = used;
  out.discard_rate = static_cast<double>(discarded) / static_cast<double>(samples);
  if (used > 0) {
    out.estimate = sum / used;
    const double var = std::max(0.0, sum_sq / used - out.estimate * out.estimate);
    out.standard_error = std::sqrt(var / used);
  }
  return out;
}

}  // namespace fabfhmm::asymptotics
