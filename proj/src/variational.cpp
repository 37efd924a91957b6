#include "fabfhmm/variational.hpp"

#include <cmath>
#include <stdexcept>

namespace fabfhmm {

namespace {
// Exponent ceiling before per-step shifting kicks in. Scaled recursions keep
// every intermediate bounded by K * exp(kShiftThreshold), far below overflow.
constexpr double kShiftThreshold = 300.0;
}

VectorXd VariationalState::mass(int m) const {
  VectorXd total = VectorXd::Zero(chains[0][m].q_unary.rows());
  for (const auto& per_seq : chains) total += per_seq[m].q_unary.rowwise().sum();
  return total;
}

VectorXd VariationalState::initial_mass(int m) const {
  VectorXd total = VectorXd::Zero(chains[0][m].q_unary.rows());
  for (const auto& per_seq : chains) total += per_seq[m].q_unary.col(0);
  return total;
}

MatrixXd VariationalState::transition_mass(int m) const {
  const auto k = chains[0][m].q_unary.rows();
  MatrixXd total = MatrixXd::Zero(k, k);
  for (const auto& per_seq : chains)
    for (const auto& pair : per_seq[m].q_pair) total += pair;
  return total;
}

VectorXd VariationalState::source_mass(int m) const {
  VectorXd total = VectorXd::Zero(chains[0][m].q_unary.rows());
  for (const auto& per_seq : chains) {
    const auto& q = per_seq[m].q_unary;
    if (q.cols() > 1) total += q.leftCols(q.cols() - 1).rowwise().sum();
  }
  return total;
}

VariationalState init_state(const ModelStructure& structure, const SequenceDataset& data) {
  VariationalState state;
  state.chains.resize(data.num_sequences());
  for (int n = 0; n < data.num_sequences(); ++n) {
    const int T = static_cast<int>(data.sequences[n].cols());
    state.chains[n].resize(structure.M);
    for (int m = 0; m < structure.M; ++m) {
      auto& chain = state.chains[n][m];
      chain.log_h = MatrixXd::Zero(structure.K[m], T);  // h = 1
    }
  }
  return state;
}

MatrixXd residual_matrix(const FhmmParameters& params, const SequenceDataset& data,
                         const VariationalState& q_prev, int n, int m) {
  if (!q_prev.has_marginals)
    throw std::logic_error("residual: previous-iteration marginals are not available");
  const auto& s = params.structure;
  MatrixXd res = data.sequences[n];
  res.colwise() -= params.bias;
  for (int l = 0; l < s.M; ++l) {
    if (l == m) continue;
    res.noalias() -= params.W[l] * q_prev.chains[n][l].q_unary;
  }
  return res;
}

VectorXd residual(const FhmmParameters& params, const SequenceDataset& data,
                  const VariationalState& q_prev, int n, int t, int m) {
  if (!q_prev.has_marginals)
    throw std::logic_error("residual: previous-iteration marginals are not available");
  const auto& s = params.structure;
  VectorXd res = data.sequences[n].col(t) - params.bias;
  for (int l = 0; l < s.M; ++l) {
    if (l == m) continue;
    res -= params.W[l] * q_prev.chains[n][l].q_unary.col(t);
  }
  return res;
}

MatrixXd update_h(const FhmmParameters& params, int m, const VectorXd& delta,
                  const MatrixXd& residuals) {
  const VectorXd cinv = params.C.cwiseInverse();
  const MatrixXd scaled_w = cinv.asDiagonal() * params.W[m];  // C^-1 W
  const VectorXd lambda = (params.W[m].array() * scaled_w.array()).colwise().sum();
  const VectorXd log_delta = delta.array().log();
  MatrixXd log_h = scaled_w.transpose() * residuals;
  log_h.colwise() += log_delta - 0.5 * lambda;
  for (int t = 0; t < log_h.cols(); ++t) {
    const double top = log_h.col(t).maxCoeff();
    if (top > kShiftThreshold) log_h.col(t).array() -= top;
  }
  return log_h;
}

LayerChain forward_backward(const MatrixXd& log_h, const VectorXd& alpha_hat,
                            const MatrixXd& beta_hat) {
  const int K = static_cast<int>(log_h.rows());
  const int T = static_cast<int>(log_h.cols());
  LayerChain chain;
  chain.log_h = log_h;
  chain.f.resize(K, T);
  chain.b.resize(K, T);
  chain.log_zeta.resize(T);
  chain.q_unary.resize(K, T);
  chain.q_pair.assign(std::max(0, T - 1), MatrixXd(K, K));

  // Eigen's packet exp saturates near 2e-308 rather than flushing to zero,
  // so vanished forward mass shows up as a subnormal-scale sum.
  constexpr double kUnderflow = 1e-300;
  const MatrixXd h = log_h.array().exp();
  VectorXd v = h.col(0).cwiseProduct(alpha_hat);
  double zeta = v.sum();
  if (!(zeta > kUnderflow))
    throw std::runtime_error("forward_backward: zero forward mass at t=0");
  chain.f.col(0) = v / zeta;
  chain.log_zeta[0] = std::log(zeta);
  for (int t = 1; t < T; ++t) {
    v = h.col(t).cwiseProduct(beta_hat.transpose() * chain.f.col(t - 1));
    zeta = v.sum();
    if (!(zeta > kUnderflow))
      throw std::runtime_error("forward_backward: zero forward mass at t=" +
                               std::to_string(t));
    chain.f.col(t) = v / zeta;
    chain.log_zeta[t] = std::log(zeta);
  }

  chain.b.col(T - 1).setOnes();
  for (int t = T - 2; t >= 0; --t) {
    const VectorXd hb = h.col(t + 1).cwiseProduct(chain.b.col(t + 1));
    chain.b.col(t) = (beta_hat * hb) / std::exp(chain.log_zeta[t + 1]);
  }

  chain.q_unary = chain.f.cwiseProduct(chain.b);
  for (int t = 1; t < T; ++t) {
    const VectorXd hb = h.col(t).cwiseProduct(chain.b.col(t));
    chain.q_pair[t - 1] =
        (chain.f.col(t - 1) * hb.transpose()).cwiseProduct(beta_hat) /
        std::exp(chain.log_zeta[t]);
  }
  return chain;
}

VariationalState estep_sweep(const FhmmParameters& params,
                             const std::optional<std::vector<VectorXd>>& delta,
                             const CollapsedEstimates& estimates,
                             const VariationalState& state_prev,
                             const SequenceDataset& data) {
  const auto& s = params.structure;
  VariationalState next;
  next.chains.resize(data.num_sequences());

  for (int n = 0; n < data.num_sequences(); ++n) {
    next.chains[n].resize(s.M);
    for (int m = 0; m < s.M; ++m) {
      MatrixXd log_h;
      if (state_prev.has_marginals && delta) {
        // Residuals use the previous iteration's marginals for every layer.
        log_h = update_h(params, m, (*delta)[m],
                         residual_matrix(params, data, state_prev, n, m));
      } else {
        log_h = state_prev.chains[n][m].log_h;
      }
      try {
        next.chains[n][m] = forward_backward(log_h, estimates.alpha_hat[m],
                                             estimates.beta_hat[m]);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (sequence " +
                                 std::to_string(n) + ", layer " + std::to_string(m) + ")");
      }
    }
  }
  next.sweep_estimates = estimates;
  next.has_marginals = true;
  return next;
}

double state_entropy(const VariationalState& state) {
  const auto& estimates = state.sweep_estimates;
  double entropy = 0.0;
  for (const auto& per_seq : state.chains) {
    for (int m = 0; m < static_cast<int>(per_seq.size()); ++m) {
      const auto& chain = per_seq[m];
      const int T = static_cast<int>(chain.q_unary.cols());
      const VectorXd log_alpha = estimates.alpha_hat[m].array().log();
      double expected_weight = (chain.q_unary.array() * chain.log_h.array()).sum() +
                               chain.q_unary.col(0).dot(log_alpha);
      const Eigen::ArrayXXd log_beta = estimates.beta_hat[m].array().log();
      for (int t = 1; t < T; ++t)
        expected_weight += (chain.q_pair[t - 1].array() * log_beta).sum();
      entropy += chain.log_zeta.sum() - expected_weight;
    }
  }
  return entropy;
}

}  // namespace fabfhmm
