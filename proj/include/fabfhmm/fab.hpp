#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "fabfhmm/model.hpp"
#include "fabfhmm/variational.hpp"

namespace fabfhmm {

enum class Variant { RFAB, FAB, VB };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// Expected counts of the auxiliary distribution q_hat, the inputs of every
/// collapsed quantity: occupancy c_{m,.,k} over the full time range, initial
/// counts c_{m,0,k}, transition counts c_{m,j,k}, and the occupancy
/// restricted to transition source steps t <= T_n - 1.
struct SufficientStats {
  std::vector<VectorXd> occupancy;
  std::vector<VectorXd> initial;
  std::vector<MatrixXd> transitions;
  std::vector<VectorXd> source;
  int num_sequences = 0;
};

SufficientStats sufficient_stats(const VariationalState& q_hat,
                                 const ModelStructure& structure);

/// Per-state multiplicative biases delta_k = exp(-D / (2 c_k)) / Delta,
/// normalized to sum to 1 within each layer. Low-mass states get smaller
/// delta, which is what drives the automatic pruning.
struct ShrinkageFactors {
  std::vector<VectorXd> delta;
  std::vector<double> log_Delta;
  std::vector<VectorXd> masses;
};

/// Collapsed-variant shrinkage factors (exponent D / (2 c)).
ShrinkageFactors shrinkage_factors(const SufficientStats& stats,
                                   const ModelStructure& structure, int D);

/// Collapsed initial/transition estimates with the +1 / +K_m pseudocounts
/// coming from the exact Dirichlet marginalization.
CollapsedEstimates collapsed_estimates(const SufficientStats& stats,
                                       const ModelStructure& structure);

/// Non-collapsed (Laplace-on-everything) variant: pure count-normalized
/// estimates floored at 1e-12, and shrinkage exponent (D + K_m - 1) / (2 c),
/// covering each state's transition row parameters as well as its weights.
std::pair<CollapsedEstimates, ShrinkageFactors> noncollapsed_estimates(
    const SufficientStats& stats, const ModelStructure& structure, int D);

/// Dirichlet-posterior-mean estimates for the VB baseline.
CollapsedEstimates vb_estimates(const SufficientStats& stats,
                                const ModelStructure& structure, double concentration);

ShrinkageFactors uniform_shrinkage(const SufficientStats& stats,
                                   const ModelStructure& structure);

/// Additive decomposition of the objective. total is always the sum of the
/// five components. The VB baseline reports zero shrinkage and penalty.
struct FicTerms {
  double expected_loglik = 0.0;
  double shrinkage_term = 0.0;
  double markov_term = 0.0;
  double entropy = 0.0;
  double penalty_terms = 0.0;
  double total = 0.0;
};

/// Closed-form E_q[log p(x | z, W, C)] under the per-layer factorized q:
/// Gaussian log-density at the mean assignment plus the per-layer variance
/// correction trace(C^-1 W (diag(q) - q q') W').
double expected_gaussian_loglik(const FhmmParameters& params,
                                const VariationalState& state,
                                const SequenceDataset& data);

/// Chain entropy from marginals alone; equals state_entropy on a state that
/// came straight out of forward_backward, and stays well defined after
/// pruning has renormalized the marginals.
double state_entropy_marginals(const VariationalState& state);

/// The objective value for the given (q, q_hat) pair. The entropy uses the
/// normalizer identity when the state is fresh from forward_backward and the
/// marginal form after pruning.
FicTerms fic_bound(const FhmmParameters& params, const VariationalState& q_state,
                   const SufficientStats& q_hat_stats, const ShrinkageFactors& delta,
                   const CollapsedEstimates& estimates, const SequenceDataset& data,
                   Variant variant = Variant::RFAB);

/// Weighted least-squares update of the emission weights via the
/// Moore-Penrose pseudo-inverse of the expected Gram matrix, and the diagonal
/// covariance update. The bias is a fixed offset here; only layer collapse
/// changes it. Returns the number of floored covariance entries.
int mstep(const VariationalState& state, const SequenceDataset& data,
          FhmmParameters& params);

/// Pseudo-inverse of a symmetric PSD matrix, eigenvalues below
/// 1e-10 * max treated as zero.
MatrixXd pinv_psd(const MatrixXd& m);

struct PruneEvent {
  int iteration = 0;
  int layer = 0;   // original layer slot
  int state = 0;   // state index at prune time
  double mass = 0.0;
  bool layer_removed = false;
};

/// Removes every state whose occupancy under the current q falls below the
/// threshold, renormalizing everything that indexed it. A layer left with a
/// single state is folded into the bias and deleted (unless it is the last
/// layer), which preserves the emission law exactly.
std::vector<PruneEvent> prune(VariationalState& state, FhmmParameters& params,
                              CollapsedEstimates& estimates, double threshold,
                              std::vector<int>& layer_origin, int iteration);

struct FitConfig {
  Variant variant = Variant::RFAB;
  int max_iters = 1000;
  double prune_threshold = 1.0;
  double convergence_tol = 1e-6;
  int convergence_streak = 3;
  std::uint64_t seed = 0;
  long product_cap = 4096;
  double vb_concentration = 1.0;  // VB baseline only
};

struct IterationRecord {
  int iteration = 0;
  FicTerms terms;
  std::vector<int> live_counts;  // indexed by original layer slot; collapsed = 1
  int pruned_this_iter = 0;
};

struct FitReport {
  std::vector<IterationRecord> trace;
  FhmmParameters final_params;
  CollapsedEstimates final_estimates;
  VariationalState final_state;
  std::vector<PruneEvent> events;
  std::vector<int> layer_origin;  // original slot of each surviving layer
  int init_layers = 0;
  double fic_score = 0.0;
  int iterations_run = 0;
  bool converged = false;
  int covariance_floor_warnings = 0;
};

/// The EM driver shared by all three variants. The first sweep runs with all
/// variational biases at 1 and the seeded initial estimates; from the second
/// iteration on, shrinkage factors and estimates are recomputed from the
/// previous iteration's q.
FitReport fit(const SequenceDataset& data, const ModelStructure& init_structure,
              const FitConfig& config);

/// Seeded parameter initialization used by fit: weight columns at the data
/// mean split across layers plus jitter of half a data standard deviation,
/// covariance at the per-dimension data variance.
FhmmParameters initialize_parameters(const ModelStructure& structure,
                                     const SequenceDataset& data, std::uint64_t seed);

/// Near-uniform seeded initial estimates (symmetric Dirichlet(10) draws).
CollapsedEstimates initialize_estimates(const ModelStructure& structure,
                                        std::uint64_t seed);

}  // namespace fabfhmm
