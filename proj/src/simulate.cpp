#include "fabfhmm/simulate.hpp"

#include <cmath>
#include <stdexcept>

#include "fabfhmm/rng.hpp"

namespace fabfhmm {

std::pair<SequenceDataset, LatentAssignment> sample(const SimulationConfig& config) {
  require_valid(config.params);
  if (static_cast<int>(config.lengths.size()) != config.n_sequences)
    throw std::invalid_argument("sample: lengths must have n_sequences entries");
  for (int t : config.lengths)
    if (t < 1) throw std::invalid_argument("sample: sequence lengths must be >= 1");

  const auto& params = config.params;
  const auto& s = params.structure;
  SequenceDataset data;
  LatentAssignment assignment;
  data.sequences.resize(config.n_sequences);
  assignment.states.resize(config.n_sequences);

  for (int n = 0; n < config.n_sequences; ++n) {
    RngStream rng(config.seed, static_cast<std::uint64_t>(n));
    const int T = config.lengths[n];
    auto& zn = assignment.states[n];
    zn.assign(s.M, std::vector<int>(T));
    for (int m = 0; m < s.M; ++m) {
      zn[m][0] = rng.categorical(params.alpha[m]);
      for (int t = 1; t < T; ++t)
        zn[m][t] = rng.categorical(params.beta[m].row(zn[m][t - 1]).transpose());
    }
    MatrixXd seq(s.D, T);
    const VectorXd sd = params.C.array().sqrt();
    std::vector<int> z_t(s.M);
    for (int t = 0; t < T; ++t) {
      for (int m = 0; m < s.M; ++m) z_t[m] = zn[m][t];
      VectorXd mu = mean_vector(params, z_t);
      for (int d = 0; d < s.D; ++d) seq(d, t) = mu[d] + sd[d] * rng.normal();
    }
    data.sequences[n] = std::move(seq);
  }
  return {std::move(data), std::move(assignment)};
}

FhmmParameters random_ground_truth(const ModelStructure& structure, std::uint64_t seed) {
  RngStream rng(seed, 0xF0E1D2C3B4A59687ULL);
  FhmmParameters params;
  params.structure = structure;
  for (int m = 0; m < structure.M; ++m) {
    const int k = structure.K[m];
    params.alpha.push_back(rng.dirichlet(0.5, k));
    MatrixXd beta(k, k);
    for (int j = 0; j < k; ++j)
      beta.row(j) = (0.9 * VectorXd::Unit(k, j) + 0.1 * rng.dirichlet(0.3, k)).transpose();
    params.beta.push_back(beta);
    MatrixXd W(structure.D, k);
    for (int c = 0; c < k; ++c)
      for (int d = 0; d < structure.D; ++d) W(d, c) = -1.0 + 2.0 * rng.uniform();
    params.W.push_back(W);
  }
  params.C = VectorXd::Constant(structure.D, 0.4);
  params.bias = VectorXd::Zero(structure.D);
  return params;
}

FhmmParameters benchmark_ground_truth(std::uint64_t seed) {
  ModelStructure structure;
  structure.M = 3;
  structure.K = {2, 2, 3};
  structure.D = 3;
  return random_ground_truth(structure, seed);
}

}  // namespace fabfhmm
