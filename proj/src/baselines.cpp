#include "fabfhmm/baselines.hpp"

namespace fabfhmm {

FitReport vb_fit(const SequenceDataset& data, const ModelStructure& init_structure,
                 const VbConfig& config) {
  FitConfig fit_config;
  fit_config.variant = Variant::VB;
  fit_config.max_iters = config.max_iters;
  fit_config.prune_threshold = config.prune_threshold;
  fit_config.convergence_tol = config.convergence_tol;
  fit_config.convergence_streak = config.convergence_streak;
  fit_config.seed = config.seed;
  fit_config.product_cap = config.product_cap;
  fit_config.vb_concentration = config.concentration;
  return fit(data, init_structure, fit_config);
}

}  // namespace fabfhmm
