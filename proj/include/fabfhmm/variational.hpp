#pragma once

#include <optional>

#include "fabfhmm/model.hpp"

namespace fabfhmm {

/// Initial/transition point estimates used by the chain recursions.
struct CollapsedEstimates {
  std::vector<VectorXd> alpha_hat;
  std::vector<MatrixXd> beta_hat;
};

/// Forward-backward quantities of one layer chain on one sequence.
/// Matrices are K x T with columns indexed by time. q_pair[t-1] holds the
/// pairwise marginal between steps t-1 and t (K x K, source rows).
struct LayerChain {
  MatrixXd log_h;     // actual log variational biases used by the recursion
  MatrixXd f;         // scaled forward quantities, columns sum to 1
  MatrixXd b;         // backward quantities, b(:,T-1) = 1
  VectorXd log_zeta;  // per-step normalizers, log domain
  MatrixXd q_unary;   // q(z_t = k), columns sum to 1
  std::vector<MatrixXd> q_pair;
};

/// Variational state over all sequences and layers: chains[n][m].
struct VariationalState {
  std::vector<std::vector<LayerChain>> chains;
  CollapsedEstimates sweep_estimates;  // the estimates the chains were built with
  bool has_marginals = false;
  bool pruned_since_sweep = false;

  int num_layers() const { return chains.empty() ? 0 : static_cast<int>(chains[0].size()); }

  /// Total expected occupancy of state k, layer m: sum over (n, t) of q.
  VectorXd mass(int m) const;
  /// Sum over sequences of q(z_1 = k) for layer m.
  VectorXd initial_mass(int m) const;
  /// Sum over sequences and steps of pairwise marginals for layer m.
  MatrixXd transition_mass(int m) const;
  /// Occupancy restricted to t = 1..T-1 (transition source steps).
  VectorXd source_mass(int m) const;
};

/// Fresh state with every variational bias set to 1 (log_h = 0); marginals
/// stay unset until the first forward-backward pass.
VariationalState init_state(const ModelStructure& structure, const SequenceDataset& data);

/// Residual observation for layer m at step t: x_t minus the contribution of
/// every other layer under the previous-iteration marginals, minus the bias.
VectorXd residual(const FhmmParameters& params, const SequenceDataset& data,
                  const VariationalState& q_prev, int n, int t, int m);

/// All residuals of one (sequence, layer) pair as a D x T matrix.
MatrixXd residual_matrix(const FhmmParameters& params, const SequenceDataset& data,
                         const VariationalState& q_prev, int n, int m);

/// Variational bias update: log h_t = log delta + W' C^-1 x~_t - Lambda/2,
/// with Lambda the diagonal of W' C^-1 W. Columns whose exponent would
/// overflow are shifted down (q is invariant to per-step scaling of h).
MatrixXd update_h(const FhmmParameters& params, int m, const VectorXd& delta,
                  const MatrixXd& residuals);

/// Scaled forward-backward recursion for one chain given log-biases and
/// estimated initial/transition probabilities. Fills f, b, log_zeta and the
/// unary/pairwise marginals. Throws on zero forward mass, naming the step.
LayerChain forward_backward(const MatrixXd& log_h, const VectorXd& alpha_hat,
                            const MatrixXd& beta_hat);

/// One mean-field sweep: for every layer, recompute residuals from the
/// previous-iteration marginals, update h, and rerun forward-backward.
/// Residuals use q_prev for all layers uniformly, so layer order does not
/// matter. If q_prev has no marginals yet (or delta is absent), the sweep
/// keeps the stored biases: the very first sweep runs with h = 1.
VariationalState estep_sweep(const FhmmParameters& params,
                             const std::optional<std::vector<VectorXd>>& delta,
                             const CollapsedEstimates& estimates,
                             const VariationalState& state_prev,
                             const SequenceDataset& data);

/// Entropy of the chain-structured variational distribution, via the
/// normalizer identity H = sum log zeta - E_q[log weights]. Requires a state
/// fresh from forward_backward (exact there, stale after pruning).
double state_entropy(const VariationalState& state);

}  // namespace fabfhmm
