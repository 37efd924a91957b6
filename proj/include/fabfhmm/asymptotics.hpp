#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace fabfhmm::asymptotics {

/// A sum of independent Bernoulli variables y = sum_i z_i with means p_i,
/// plus the expansion point y_hat (close to the mean y_bar) the first-order
/// approximations are taken around.
struct BernoulliSumSpec {
  Eigen::VectorXd p;
  double y_bar = 0.0;
  double y_hat = 0.0;
};

BernoulliSumSpec binomial_spec(int trials, double prob);

/// First-order value of E[log(y + 1)]: log(y_hat + 1) + (y_bar - y_hat)/(y_hat + 1).
double approx_e_log_y_plus1(const BernoulliSumSpec& spec);

/// First-order value of E[y log y]: y_bar log y_hat + (y_bar - y_hat).
double approx_e_ylogy(const BernoulliSumSpec& spec);

/// Stirling-based value of E[log Gamma(y)]:
/// y_bar (log y_hat - 1/(2 y_hat)) - (y_hat + log(y_hat)/2) + (log 2pi + 1)/2.
double approx_e_loggamma(const BernoulliSumSpec& spec);

/// E[sum_n log Gamma(y_n) - log Gamma(sum_n y_n)] to first order.
double approx_e_loggamma_diff(const std::vector<BernoulliSumSpec>& specs);

enum class Functional { LogYPlus1, YLogY, LogGamma, GammaDiff, NegativeMoment };

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  double discard_rate = 0.0;  // fraction of y = 0 draws skipped for log Gamma
  long samples = 0;
};

/// Seeded Monte-Carlo oracle for the functionals above. GammaDiff consumes
/// the whole spec list; the others use specs[0].
McEstimate mc_oracle(const std::vector<BernoulliSumSpec>& specs, Functional functional,
                     long samples, std::uint64_t seed);

}  // namespace fabfhmm::asymptotics
