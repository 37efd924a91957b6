#pragma once

#include <string>
#include <vector>
#include <Eigen/Core>

namespace fabfhmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Layer layout of a factorial HMM: M independent chains, chain m carrying
/// K[m] states, emitting into R^D.
struct ModelStructure {
  int M = 0;
  std::vector<int> K;
  int D = 0;

  int total_states() const;        // sum of K[m]
  long joint_states() const;       // product of K[m]
  bool operator==(const ModelStructure&) const = default;
};

/// Full parameter set of a factorial HMM with diagonal-covariance Gaussian
/// emissions. Per layer m: initial distribution alpha[m] (K_m), row-stochastic
/// transition beta[m] (K_m x K_m), emission weights W[m] (D x K_m). The
/// emission mean of a joint state is bias + sum_m W[m] * z^(m); bias stays
/// zero until a layer collapse folds a weight column into it.
struct FhmmParameters {
  ModelStructure structure;
  std::vector<VectorXd> alpha;
  std::vector<MatrixXd> beta;
  std::vector<MatrixXd> W;
  VectorXd C;     // diagonal covariance, strictly positive
  VectorXd bias;  // global mean offset
};

/// Observation sequences, one D x T_n matrix per sequence (columns = time).
struct SequenceDataset {
  std::vector<MatrixXd> sequences;

  int num_sequences() const { return static_cast<int>(sequences.size()); }
  int dim() const { return sequences.empty() ? 0 : static_cast<int>(sequences[0].rows()); }
  long total_length() const;
};

/// Hidden state assignment: states[n][m][t] is the active state index of
/// layer m at time t in sequence n (index form of the one-hot indicators).
struct LatentAssignment {
  std::vector<std::vector<std::vector<int>>> states;
};

/// Uniform parameters for a given structure (alpha uniform, beta uniform
/// rows, W zero, C ones, bias zero).
FhmmParameters uniform_parameters(const ModelStructure& structure);

/// Emission mean for one time step: bias + sum_m W[m].col(z_m).
VectorXd mean_vector(const FhmmParameters& params, const std::vector<int>& z_t);

/// Log density of the diagonal Gaussian emission at x_t given z_t.
double log_emission(const FhmmParameters& params, const VectorXd& x_t,
                    const std::vector<int>& z_t);

/// Complete-data log-likelihood log p(x, z | theta) summed over sequences.
/// Zero-probability transitions taken by z give -infinity.
double complete_log_likelihood(const FhmmParameters& params, const SequenceDataset& data,
                               const LatentAssignment& z);

/// Diagnostic invariant check; empty result means the parameters are valid.
std::vector<std::string> validate(const FhmmParameters& params);

/// Throwing variant of validate() used at API boundaries.
void require_valid(const FhmmParameters& params);

}  // namespace fabfhmm
