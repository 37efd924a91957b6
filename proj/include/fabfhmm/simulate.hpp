#pragma once

#include <cstdint>
#include <utility>

#include "fabfhmm/model.hpp"

namespace fabfhmm {

struct SimulationConfig {
  FhmmParameters params;
  int n_sequences = 1;
  std::vector<int> lengths;
  std::uint64_t seed = 0;
};

/// Ancestral sampling of the factorial HMM: per-layer chains from alpha/beta,
/// Gaussian emissions around the combined mean. Sequence n draws from its own
/// RNG stream, so output is bit-identical for a given (config, seed) no
/// matter how sequences are scheduled.
std::pair<SequenceDataset, LatentAssignment> sample(const SimulationConfig& config);

/// Seeded random ground truth for a given layout: weight entries uniform on
/// [-2, 2], transition rows symmetric Dirichlet(5), initial distributions
/// uniform Dirichlet, C = diag(0.4).
FhmmParameters random_ground_truth(const ModelStructure& structure, std::uint64_t seed);

/// Ground-truth generator for the synthetic benchmark preset: 3 layers with
/// state counts (2,2,3) and 3-dimensional emissions.
FhmmParameters benchmark_ground_truth(std::uint64_t seed);

}  // namespace fabfhmm
