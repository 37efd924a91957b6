#include "fabfhmm/flat_hmm.hpp"

#include <cmath>
#include <stdexcept>

namespace fabfhmm {

std::vector<int> decode_joint_state(const ModelStructure& structure, long joint) {
  std::vector<int> states(structure.M);
  for (int m = structure.M - 1; m >= 0; --m) {
    states[m] = static_cast<int>(joint % structure.K[m]);
    joint /= structure.K[m];
  }
  return states;
}

FlatHmm product_expand(const FhmmParameters& params, long cap) {
  require_valid(params);
  const auto& s = params.structure;
  const long J = s.joint_states();
  if (J > cap)
    throw std::length_error("product_expand: joint state space " + std::to_string(J) +
                            " exceeds cap " + std::to_string(cap));

  FlatHmm flat;
  flat.C = params.C;
  flat.initial = VectorXd::Ones(J);
  flat.means = MatrixXd::Zero(s.D, J);
  for (long j = 0; j < J; ++j) {
    const auto z = decode_joint_state(s, j);
    flat.means.col(j) = params.bias;
    for (int m = 0; m < s.M; ++m) {
      flat.initial[j] *= params.alpha[m][z[m]];
      flat.means.col(j) += params.W[m].col(z[m]);
    }
  }
  flat.trans = MatrixXd::Ones(J, J);
  for (long i = 0; i < J; ++i) {
    const auto zi = decode_joint_state(s, i);
    for (long j = 0; j < J; ++j) {
      const auto zj = decode_joint_state(s, j);
      for (int m = 0; m < s.M; ++m) flat.trans(i, j) *= params.beta[m](zi[m], zj[m]);
    }
  }
  return flat;
}

namespace {

// Column e of per-state emission densities at x (unnormalized is fine for
// the scaled recursion, but we use the true density so zeta logs sum to the
// exact log-likelihood).
VectorXd emission_density(const FlatHmm& hmm, const VectorXd& x) {
  const int J = static_cast<int>(hmm.means.cols());
  const double logdet = hmm.C.array().log().sum();
  const double base = -0.5 * (x.size() * std::log(2.0 * M_PI) + logdet);
  VectorXd dens(J);
  for (int j = 0; j < J; ++j) {
    const VectorXd r = x - hmm.means.col(j);
    dens[j] = std::exp(base - 0.5 * (r.array().square() / hmm.C.array()).sum());
  }
  return dens;
}

}  // namespace

double flat_forward_loglik(const FlatHmm& hmm, const MatrixXd& seq) {
  const int T = static_cast<int>(seq.cols());
  if (T < 1) throw std::invalid_argument("flat_forward_loglik: empty sequence");
  double loglik = 0.0;
  VectorXd f = hmm.initial.cwiseProduct(emission_density(hmm, seq.col(0)));
  double scale = f.sum();
  if (!(scale > 0.0)) return -std::numeric_limits<double>::infinity();
  loglik += std::log(scale);
  f /= scale;
  for (int t = 1; t < T; ++t) {
    f = (hmm.trans.transpose() * f).cwiseProduct(emission_density(hmm, seq.col(t)));
    scale = f.sum();
    if (!(scale > 0.0)) return -std::numeric_limits<double>::infinity();
    loglik += std::log(scale);
    f /= scale;
  }
  return loglik;
}

VectorXd stationary_distribution(const MatrixXd& trans) {
  const int k = static_cast<int>(trans.rows());
  VectorXd pi = VectorXd::Constant(k, 1.0 / k);
  for (int iter = 0; iter < 10000; ++iter) {
    VectorXd next = trans.transpose() * pi;
    next /= next.sum();
    const double delta = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (delta < 1e-14) break;
  }
  return pi;
}

}  // namespace fabfhmm
