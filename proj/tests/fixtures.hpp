// Shared test constructions for the shrinkage-dynamics suites.
#pragma once

#include <cstdint>

#include "fabfhmm/fab.hpp"
#include "fabfhmm/rng.hpp"
#include "fabfhmm/simulate.hpp"

namespace fixtures {

using namespace fabfhmm;

// Duplicated-state construction: states 0 and 1 share their emission column
// and outward row; state 0's inward probabilities and alpha are rho times
// state 1's. Data comes from a two-state truth so the pair shares one
// cluster.
struct DuplicatedSetup {
  ModelStructure structure;
  FhmmParameters params;
  CollapsedEstimates estimates;
  SequenceDataset data;
};

inline DuplicatedSetup make_duplicated_setup(double rho, std::uint64_t seed, int T,
                                             int D = 4) {
  DuplicatedSetup setup;
  setup.structure = ModelStructure{1, {3}, D};

  ModelStructure truth_s{1, {2}, D};
  FhmmParameters truth = uniform_parameters(truth_s);
  RngStream rng(seed, 42);
  for (int d = 0; d < D; ++d) {
    truth.W[0](d, 0) = -1.5 + 0.2 * rng.normal();
    truth.W[0](d, 1) = 1.5 + 0.2 * rng.normal();
  }
  truth.C = VectorXd::Constant(D, 0.4);
  truth.beta[0] << 0.85, 0.15, 0.2, 0.8;
  SimulationConfig sim{truth, 1, {T}, seed};
  setup.data = sample(sim).first;

  setup.params = uniform_parameters(setup.structure);
  setup.params.W[0].col(0) = truth.W[0].col(0);
  setup.params.W[0].col(1) = truth.W[0].col(0);  // duplicated pair
  setup.params.W[0].col(2) = truth.W[0].col(1);
  setup.params.C = truth.C;

  const double b1 = 0.30, b2 = 0.25, a = 0.30;
  MatrixXd beta(3, 3);
  beta << rho * b1, b1, 1.0 - (1.0 + rho) * b1,
          rho * b1, b1, 1.0 - (1.0 + rho) * b1,
          rho * b2, b2, 1.0 - (1.0 + rho) * b2;
  VectorXd alpha(3);
  alpha << rho * a, a, 1.0 - (1.0 + rho) * a;
  setup.estimates = CollapsedEstimates{{alpha}, {beta}};
  return setup;
}

// Plain EM iterations on a duplicated setup (no pruning), tracking the mass
// ratio rho_n = mass_0 / mass_1 and the reference mass of state 1.
struct RatioTrace {
  std::vector<double> rho;
  std::vector<double> mass_j;
  MatrixXd w_after_first_mstep;
};

inline RatioTrace run_duplicated(const DuplicatedSetup& setup, int iterations,
                                 Variant variant, double stop_rho = 0.0) {
  RatioTrace trace;
  FhmmParameters params = setup.params;
  CollapsedEstimates estimates = setup.estimates;
  VariationalState state = init_state(params.structure, setup.data);

  for (int iter = 1; iter <= iterations; ++iter) {
    std::optional<std::vector<VectorXd>> delta;
    if (state.has_marginals) {
      const SufficientStats stats = sufficient_stats(state, params.structure);
      switch (variant) {
        case Variant::RFAB:
          delta = shrinkage_factors(stats, params.structure, params.structure.D).delta;
          estimates = collapsed_estimates(stats, params.structure);
          break;
        case Variant::FAB: {
          auto [est, sf] =
              noncollapsed_estimates(stats, params.structure, params.structure.D);
          estimates = est;
          delta = sf.delta;
          break;
        }
        case Variant::VB:
          estimates = vb_estimates(stats, params.structure, 1.0);
          delta = uniform_shrinkage(stats, params.structure).delta;
          break;
      }
    }
    state = estep_sweep(params, delta, estimates, state, setup.data);
    mstep(state, setup.data, params);
    if (iter == 1) trace.w_after_first_mstep = params.W[0];
    const VectorXd mass = state.mass(0);
    trace.rho.push_back(mass[0] / mass[1]);
    trace.mass_j.push_back(mass[1]);
    if (trace.rho.back() < stop_rho) break;  // state 0 effectively dead
  }
  return trace;
}

}  // namespace fixtures
