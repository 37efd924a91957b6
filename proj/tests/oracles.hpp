// Test-only brute-force oracles. These enumerate path spaces directly and
// never touch the recursive implementations they are used to check.
#pragma once

#include <cmath>
#include <vector>

#include "fabfhmm/model.hpp"
#include "fabfhmm/rng.hpp"

namespace oracles {

using fabfhmm::MatrixXd;
using fabfhmm::VectorXd;

struct ChainMarginals {
  double log_z = 0.0;
  MatrixXd unary;                // K x T
  std::vector<MatrixXd> pairs;   // T-1 entries, K x K
  double entropy = 0.0;
};

// Enumerates all K^T paths of the unnormalized chain density
//   w(path) = alpha[k_1] h(k_1,1) * prod_t beta(k_{t-1},k_t) h(k_t,t).
inline ChainMarginals enumerate_chain(const MatrixXd& h, const VectorXd& alpha,
                                      const MatrixXd& beta) {
  const int K = static_cast<int>(h.rows());
  const int T = static_cast<int>(h.cols());
  ChainMarginals out;
  out.unary = MatrixXd::Zero(K, T);
  out.pairs.assign(T - 1, MatrixXd::Zero(K, K));

  std::vector<int> path(T, 0);
  double z = 0.0;
  std::vector<double> weights;
  std::vector<std::vector<int>> paths;
  for (;;) {
    double w = alpha[path[0]] * h(path[0], 0);
    for (int t = 1; t < T; ++t) w *= beta(path[t - 1], path[t]) * h(path[t], t);
    weights.push_back(w);
    paths.push_back(path);
    z += w;
    int t = T - 1;
    while (t >= 0 && ++path[t] == K) path[t--] = 0;
    if (t < 0) break;
  }
  out.log_z = std::log(z);
  for (size_t i = 0; i < paths.size(); ++i) {
    const double p = weights[i] / z;
    for (int t = 0; t < T; ++t) out.unary(paths[i][t], t) += p;
    for (int t = 1; t < T; ++t) out.pairs[t - 1](paths[i][t - 1], paths[i][t]) += p;
    if (p > 0.0) out.entropy -= p * std::log(p);
  }
  return out;
}

// Observed-data log-likelihood by summing the complete-data likelihood over
// every joint latent path (mixed-radix enumeration over layers and time).
inline double enumerate_fhmm_loglik(const fabfhmm::FhmmParameters& params,
                                    const MatrixXd& seq) {
  const auto& s = params.structure;
  const int T = static_cast<int>(seq.cols());
  const long J = s.joint_states();

  fabfhmm::SequenceDataset data;
  data.sequences.push_back(seq);

  std::vector<long> joint_path(T, 0);
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  for (;;) {
    fabfhmm::LatentAssignment z;
    z.states.resize(1);
    z.states[0].assign(s.M, std::vector<int>(T));
    for (int t = 0; t < T; ++t) {
      long rem = joint_path[t];
      for (int m = s.M - 1; m >= 0; --m) {
        z.states[0][m][t] = static_cast<int>(rem % s.K[m]);
        rem /= s.K[m];
      }
    }
    const double ll = fabfhmm::complete_log_likelihood(params, data, z);
    logs.push_back(ll);
    max_log = std::max(max_log, ll);
    int t = T - 1;
    while (t >= 0 && ++joint_path[t] == J) joint_path[t--] = 0;
    if (t < 0) break;
  }
  double acc = 0.0;
  for (double ll : logs) acc += std::exp(ll - max_log);
  return max_log + std::log(acc);
}

inline VectorXd random_prob_vector(fabfhmm::RngStream& rng, int k) {
  VectorXd v(k);
  for (int i = 0; i < k; ++i) v[i] = 0.05 + rng.uniform();
  return v / v.sum();
}

inline MatrixXd random_stochastic_matrix(fabfhmm::RngStream& rng, int k) {
  MatrixXd m(k, k);
  for (int j = 0; j < k; ++j) m.row(j) = random_prob_vector(rng, k).transpose();
  return m;
}

}  // namespace oracles
