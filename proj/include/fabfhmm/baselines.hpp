#pragma once

#include "fabfhmm/fab.hpp"

namespace fabfhmm {

/// VB-FHMM baseline configuration: the shared EM loop with shrinkage
/// disabled, Dirichlet-posterior-mean transitions, and the same
/// component-death pruning threshold.
struct VbConfig {
  int max_iters = 1000;
  double prune_threshold = 1.0;
  double convergence_tol = 1e-6;
  int convergence_streak = 3;
  std::uint64_t seed = 0;
  long product_cap = 4096;
  double concentration = 1.0;
};

/// Variational-Bayes fit: identical EM loop with uniform per-layer delta, so
/// the only pruning force is likelihood competition. Reported scores carry no
/// shrinkage or penalty terms.
FitReport vb_fit(const SequenceDataset& data, const ModelStructure& init_structure,
                 const VbConfig& config);

}  // namespace fabfhmm
