#include "fabfhmm/fab.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "fabfhmm/rng.hpp"

namespace fabfhmm {

namespace {
constexpr double kCountFloor = 1e-12;
constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::RFAB: return "rfab";
    case Variant::FAB: return "fab";
    case Variant::VB: return "vb";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "rfab" || name == "RFAB") return Variant::RFAB;
  if (name == "fab" || name == "FAB") return Variant::FAB;
  if (name == "vb" || name == "VB") return Variant::VB;
  throw std::invalid_argument("unknown variant: " + name);
}

SufficientStats sufficient_stats(const VariationalState& q_hat,
                                 const ModelStructure& structure) {
  SufficientStats stats;
  stats.num_sequences = static_cast<int>(q_hat.chains.size());
  for (int m = 0; m < structure.M; ++m) {
    if (stats.num_sequences == 0) {
      stats.occupancy.push_back(VectorXd::Zero(structure.K[m]));
      stats.initial.push_back(VectorXd::Zero(structure.K[m]));
      stats.transitions.push_back(MatrixXd::Zero(structure.K[m], structure.K[m]));
      stats.source.push_back(VectorXd::Zero(structure.K[m]));
    } else {
      stats.occupancy.push_back(q_hat.mass(m));
      stats.initial.push_back(q_hat.initial_mass(m));
      stats.transitions.push_back(q_hat.transition_mass(m));
      stats.source.push_back(q_hat.source_mass(m));
    }
  }
  return stats;
}

ShrinkageFactors shrinkage_factors(const SufficientStats& stats,
                                   const ModelStructure& structure, int D) {
  ShrinkageFactors sf;
  for (int m = 0; m < structure.M; ++m) {
    const VectorXd& mass = stats.occupancy[m];
    if ((mass.array() <= 0.0).any())
      throw std::domain_error("shrinkage_factors: zero-mass state in layer " +
                              std::to_string(m) + " must be pruned first");
    const VectorXd raw = (-0.5 * D * mass.cwiseInverse()).array().exp();
    const double norm = raw.sum();
    sf.delta.push_back(raw / norm);
    sf.log_Delta.push_back(std::log(norm));
    sf.masses.push_back(mass);
  }
  return sf;
}

CollapsedEstimates collapsed_estimates(const SufficientStats& stats,
                                       const ModelStructure& structure) {
  CollapsedEstimates est;
  const int N = stats.num_sequences;
  for (int m = 0; m < structure.M; ++m) {
    const int K = structure.K[m];
    est.alpha_hat.push_back((stats.initial[m].array() + 1.0) / (K + N));
    MatrixXd beta(K, K);
    for (int j = 0; j < K; ++j)
      beta.row(j) = (stats.transitions[m].row(j).array() + 1.0) /
                    (K + stats.source[m][j]);
    est.beta_hat.push_back(beta);
  }
  return est;
}

std::pair<CollapsedEstimates, ShrinkageFactors> noncollapsed_estimates(
    const SufficientStats& stats, const ModelStructure& structure, int D) {
  CollapsedEstimates est;
  ShrinkageFactors sf;
  for (int m = 0; m < structure.M; ++m) {
    const int K = structure.K[m];
    VectorXd alpha = stats.initial[m].cwiseMax(kCountFloor);
    est.alpha_hat.push_back(alpha / alpha.sum());
    MatrixXd beta(K, K);
    for (int j = 0; j < K; ++j) {
      const double row_total = stats.transitions[m].row(j).sum();
      if (row_total <= 0.0) {
        std::cerr << "noncollapsed_estimates: zero-count transition row " << j
                  << " in layer " << m << ", falling back to uniform\n";
        beta.row(j).setConstant(1.0 / K);
      } else {
        VectorXd row = stats.transitions[m].row(j).transpose().cwiseMax(kCountFloor);
        beta.row(j) = row.transpose() / row.sum();
      }
    }
    est.beta_hat.push_back(beta);

    const VectorXd& mass = stats.occupancy[m];
    if ((mass.array() <= 0.0).any())
      throw std::domain_error("noncollapsed_estimates: zero-mass state in layer " +
                              std::to_string(m) + " must be pruned first");
    const VectorXd raw = (-0.5 * (D + K - 1) * mass.cwiseInverse()).array().exp();
    const double norm = raw.sum();
    sf.delta.push_back(raw / norm);
    sf.log_Delta.push_back(std::log(norm));
    sf.masses.push_back(mass);
  }
  return {std::move(est), std::move(sf)};
}

CollapsedEstimates vb_estimates(const SufficientStats& stats,
                                const ModelStructure& structure, double concentration) {
  if (!(concentration > 0.0))
    throw std::invalid_argument("vb_estimates: concentration must be positive");
  CollapsedEstimates est;
  const int N = stats.num_sequences;
  for (int m = 0; m < structure.M; ++m) {
    const int K = structure.K[m];
    est.alpha_hat.push_back((stats.initial[m].array() + concentration) /
                            (K * concentration + N));
    MatrixXd beta(K, K);
    for (int j = 0; j < K; ++j) {
      const double row_total = stats.transitions[m].row(j).sum();
      beta.row(j) = (stats.transitions[m].row(j).array() + concentration) /
                    (K * concentration + row_total);
    }
    est.beta_hat.push_back(beta);
  }
  return est;
}

ShrinkageFactors uniform_shrinkage(const SufficientStats& stats,
                                   const ModelStructure& structure) {
  ShrinkageFactors sf;
  for (int m = 0; m < structure.M; ++m) {
    const int K = structure.K[m];
    sf.delta.push_back(VectorXd::Constant(K, 1.0 / K));
    sf.log_Delta.push_back(0.0);
    sf.masses.push_back(stats.occupancy[m]);
  }
  return sf;
}

double expected_gaussian_loglik(const FhmmParameters& params,
                                const VariationalState& state,
                                const SequenceDataset& data) {
  const auto& s = params.structure;
  const VectorXd cinv = params.C.cwiseInverse();
  const double logdet = params.C.array().log().sum();
  double quad = 0.0;
  double var_correction = 0.0;
  long total_steps = 0;

  for (int n = 0; n < data.num_sequences(); ++n) {
    const MatrixXd& x = data.sequences[n];
    total_steps += x.cols();
    MatrixXd resid = x;
    resid.colwise() -= params.bias;
    for (int m = 0; m < s.M; ++m)
      resid.noalias() -= params.W[m] * state.chains[n][m].q_unary;
    quad += (resid.array().square().colwise() * cinv.array()).sum();

    for (int m = 0; m < s.M; ++m) {
      const MatrixXd& q = state.chains[n][m].q_unary;
      const MatrixXd scaled_w = cinv.asDiagonal() * params.W[m];
      const VectorXd lambda = (params.W[m].array() * scaled_w.array()).colwise().sum();
      // sum_t [ lambda . q_t - || C^-1/2 W q_t ||^2 ]
      const MatrixXd wq = params.W[m] * q;
      var_correction += lambda.dot(q.rowwise().sum()) -
                        (wq.array().square().colwise() * cinv.array()).sum();
    }
  }
  return -0.5 * (total_steps * (s.D * kLog2Pi + logdet) + quad + var_correction);
}

double state_entropy_marginals(const VariationalState& state) {
  auto xlogx = [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; };
  double entropy = 0.0;
  for (const auto& per_seq : state.chains) {
    for (const auto& chain : per_seq) {
      const int T = static_cast<int>(chain.q_unary.cols());
      double h1 = 0.0;
      for (int k = 0; k < chain.q_unary.rows(); ++k) h1 -= xlogx(chain.q_unary(k, 0));
      entropy += h1;
      for (int t = 1; t < T; ++t) {
        const MatrixXd& pair = chain.q_pair[t - 1];
        double cond = 0.0;
        for (int j = 0; j < pair.rows(); ++j)
          for (int k = 0; k < pair.cols(); ++k) cond -= xlogx(pair(j, k));
        for (int j = 0; j < pair.rows(); ++j) cond += xlogx(chain.q_unary(j, t - 1));
        entropy += cond;
      }
    }
  }
  return entropy;
}

namespace {

double rfab_penalty(const SufficientStats& stats, const ShrinkageFactors& delta,
                    const ModelStructure& structure, int D, long total_steps) {
  double penalty = 0.0;
  const int N = stats.num_sequences;
  for (int m = 0; m < structure.M; ++m) {
    const int K = structure.K[m];
    penalty += static_cast<double>(total_steps) * delta.log_Delta[m];
    for (int k = 0; k < K; ++k) {
      penalty -= 0.5 * D * std::log(stats.occupancy[m][k]);
      penalty -= 0.5 * std::log(stats.initial[m][k] + 1.0);
    }
    for (int j = 0; j < K; ++j) {
      for (int k = 0; k < K; ++k) penalty -= 0.5 * std::log(stats.transitions[m](j, k) + 1.0);
      penalty += 0.5 * std::log(stats.transitions[m].row(j).sum() + K);
    }
    penalty += 0.5 * std::log(static_cast<double>(N + K));
    penalty += 0.5 * D * K;
    penalty += (static_cast<double>(K) * K - 1.0) * kLog2Pi;
  }
  return penalty;
}

double fab_penalty(const SufficientStats& stats, const ShrinkageFactors& delta,
                   const ModelStructure& structure, int D, long total_steps) {
  // Reconstructed Laplace-on-everything penalty: per-state count terms carry
  // (D + K_m - 1)/2 and each layer's initial distribution contributes a
  // (K_m - 1)/2 log N term.
  double penalty = 0.0;
  const int N = std::max(1, stats.num_sequences);
  for (int m = 0; m < structure.M; ++m) {
    const int K = structure.K[m];
    penalty += static_cast<double>(total_steps) * delta.log_Delta[m];
    for (int k = 0; k < K; ++k)
      penalty -= 0.5 * (D + K - 1) * std::log(stats.occupancy[m][k]);
    penalty -= 0.5 * (K - 1) * std::log(static_cast<double>(N));
  }
  return penalty;
}

}  // namespace

FicTerms fic_bound(const FhmmParameters& params, const VariationalState& q_state,
                   const SufficientStats& q_hat_stats, const ShrinkageFactors& delta,
                   const CollapsedEstimates& estimates, const SequenceDataset& data,
                   Variant variant) {
  const auto& s = params.structure;
  FicTerms terms;
  terms.expected_loglik = expected_gaussian_loglik(params, q_state, data);

  long total_steps = data.total_length();
  if (variant != Variant::VB) {
    for (int m = 0; m < s.M; ++m) {
      const VectorXd log_delta = delta.delta[m].array().log();
      terms.shrinkage_term += q_state.mass(m).dot(log_delta);
    }
  }

  for (int m = 0; m < s.M; ++m) {
    const VectorXd log_alpha = estimates.alpha_hat[m].array().log();
    terms.markov_term += q_state.initial_mass(m).dot(log_alpha);
    terms.markov_term +=
        (q_state.transition_mass(m).array() * estimates.beta_hat[m].array().log()).sum();
  }

  terms.entropy = q_state.pruned_since_sweep ? state_entropy_marginals(q_state)
                                             : state_entropy(q_state);

  switch (variant) {
    case Variant::RFAB:
      terms.penalty_terms = rfab_penalty(q_hat_stats, delta, s, s.D, total_steps);
      break;
    case Variant::FAB:
      terms.penalty_terms = fab_penalty(q_hat_stats, delta, s, s.D, total_steps);
      break;
    case Variant::VB:
      terms.penalty_terms = 0.0;
      break;
  }
  terms.total = terms.expected_loglik + terms.shrinkage_term + terms.markov_term +
                terms.entropy + terms.penalty_terms;
  return terms;
}

MatrixXd pinv_psd(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(m);
  const VectorXd& eval = solver.eigenvalues();
  const double cutoff = 1e-10 * std::max(eval.cwiseAbs().maxCoeff(), 0.0);
  VectorXd inv = VectorXd::Zero(eval.size());
  for (int i = 0; i < eval.size(); ++i)
    if (eval[i] > cutoff) inv[i] = 1.0 / eval[i];
  return solver.eigenvectors() * inv.asDiagonal() * solver.eigenvectors().transpose();
}

int mstep(const VariationalState& state, const SequenceDataset& data,
          FhmmParameters& params) {
  const auto& s = params.structure;
  const int K0 = s.total_states();
  const long total_steps = data.total_length();

  MatrixXd cross = MatrixXd::Zero(s.D, K0);  // sum_t x~_t q_t'
  MatrixXd gram = MatrixXd::Zero(K0, K0);    // sum_t E[z_t z_t']
  VectorXd stacked(K0);

  std::vector<int> offset(s.M, 0);
  for (int m = 1; m < s.M; ++m) offset[m] = offset[m - 1] + s.K[m - 1];

  for (int n = 0; n < data.num_sequences(); ++n) {
    const MatrixXd& x = data.sequences[n];
    const int T = static_cast<int>(x.cols());
    for (int t = 0; t < T; ++t) {
      for (int m = 0; m < s.M; ++m)
        stacked.segment(offset[m], s.K[m]) = state.chains[n][m].q_unary.col(t);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(stacked);
      cross.noalias() += (x.col(t) - params.bias) * stacked.transpose();
    }
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  // Within-layer blocks of E[z z'] are diag(occupancy), not q q'.
  for (int m = 0; m < s.M; ++m) {
    VectorXd mass = VectorXd::Zero(s.K[m]);
    for (int n = 0; n < data.num_sequences(); ++n)
      mass += state.chains[n][m].q_unary.rowwise().sum();
    gram.block(offset[m], offset[m], s.K[m], s.K[m]) = MatrixXd(mass.asDiagonal());
  }

  const MatrixXd w_full = cross * pinv_psd(gram);
  for (int m = 0; m < s.M; ++m) params.W[m] = w_full.middleCols(offset[m], s.K[m]);

  // C = mdiag{ (1/sum T_n) sum_t (x~ x~' - sum_m W^m q x~') }
  VectorXd c_new = VectorXd::Zero(s.D);
  for (int n = 0; n < data.num_sequences(); ++n) {
    MatrixXd resid = data.sequences[n];
    resid.colwise() -= params.bias;
    MatrixXd predicted = MatrixXd::Zero(s.D, resid.cols());
    for (int m = 0; m < s.M; ++m)
      predicted.noalias() += params.W[m] * state.chains[n][m].q_unary;
    c_new += (resid.array() * (resid - predicted).array()).rowwise().sum().matrix();
  }
  c_new /= static_cast<double>(total_steps);

  int floored = 0;
  for (int d = 0; d < s.D; ++d) {
    if (!(c_new[d] > 1e-8)) {
      c_new[d] = 1e-8;  // transient pseudo-inverse truncation can undershoot
      ++floored;
    }
  }
  params.C = c_new;
  return floored;
}

std::vector<PruneEvent> prune(VariationalState& state, FhmmParameters& params,
                              CollapsedEstimates& estimates, double threshold,
                              std::vector<int>& layer_origin, int iteration) {
  auto& s = params.structure;
  std::vector<PruneEvent> events;

  // Pass 1: drop below-threshold states layer by layer.
  for (int m = 0; m < s.M; ++m) {
    const VectorXd mass = state.mass(m);
    std::vector<int> keep;
    for (int k = 0; k < s.K[m]; ++k)
      if (mass[k] >= threshold) keep.push_back(k);
    if (keep.empty()) {
      int best = 0;
      mass.maxCoeff(&best);
      keep.push_back(best);  // a layer is never emptied outright
    }
    if (static_cast<int>(keep.size()) == s.K[m]) continue;

    for (int k = 0; k < s.K[m]; ++k)
      if (std::find(keep.begin(), keep.end(), k) == keep.end())
        events.push_back({iteration, layer_origin[m], k, mass[k], false});

    const int K_new = static_cast<int>(keep.size());
    auto select = [&](const VectorXd& v) {
      VectorXd out(K_new);
      for (int i = 0; i < K_new; ++i) out[i] = v[keep[i]];
      return out;
    };
    auto select_cols = [&](const MatrixXd& mat) {
      MatrixXd out(mat.rows(), K_new);
      for (int i = 0; i < K_new; ++i) out.col(i) = mat.col(keep[i]);
      return out;
    };
    auto select_both = [&](const MatrixXd& mat) {
      MatrixXd out(K_new, K_new);
      for (int i = 0; i < K_new; ++i)
        for (int j = 0; j < K_new; ++j) out(i, j) = mat(keep[i], keep[j]);
      return out;
    };

    params.W[m] = select_cols(params.W[m]);
    VectorXd alpha = select(params.alpha[m]);
    params.alpha[m] = alpha / alpha.sum();
    MatrixXd beta = select_both(params.beta[m]);
    for (int j = 0; j < K_new; ++j) beta.row(j) /= beta.row(j).sum();
    params.beta[m] = beta;

    VectorXd ahat = select(estimates.alpha_hat[m]);
    estimates.alpha_hat[m] = ahat / ahat.sum();
    MatrixXd bhat = select_both(estimates.beta_hat[m]);
    for (int j = 0; j < K_new; ++j) bhat.row(j) /= bhat.row(j).sum();
    estimates.beta_hat[m] = bhat;

    VectorXd sweep_a = select(state.sweep_estimates.alpha_hat[m]);
    state.sweep_estimates.alpha_hat[m] = sweep_a / sweep_a.sum();
    MatrixXd sweep_b = select_both(state.sweep_estimates.beta_hat[m]);
    for (int j = 0; j < K_new; ++j) sweep_b.row(j) /= sweep_b.row(j).sum();
    state.sweep_estimates.beta_hat[m] = sweep_b;

    for (auto& per_seq : state.chains) {
      auto& chain = per_seq[m];
      chain.log_h = select_cols(chain.log_h.transpose()).transpose();
      chain.f = select_cols(chain.f.transpose()).transpose();
      for (int t = 0; t < chain.f.cols(); ++t) {
        const double total = chain.f.col(t).sum();
        if (total > 0.0) chain.f.col(t) /= total;
      }
      chain.b = select_cols(chain.b.transpose()).transpose();
      chain.q_unary = select_cols(chain.q_unary.transpose()).transpose();
      for (int t = 0; t < chain.q_unary.cols(); ++t) {
        const double total = chain.q_unary.col(t).sum();
        if (total > 0.0) chain.q_unary.col(t) /= total;
      }
      for (auto& pair : chain.q_pair) {
        pair = select_both(pair);
        const double total = pair.sum();
        if (total > 0.0) pair /= total;
      }
    }
    s.K[m] = K_new;
    state.pruned_since_sweep = true;
  }

  // Pass 2: fold single-state layers into the bias (keep at least one layer).
  for (int m = s.M - 1; m >= 0 && s.M > 1; --m) {
    if (s.K[m] != 1) continue;
    bool shrunk_here = false;
    for (const auto& ev : events)
      if (ev.layer == layer_origin[m]) shrunk_here = true;
    if (!shrunk_here) continue;  // layers configured with one state stay

    events.push_back({iteration, layer_origin[m], 0, state.mass(m)[0], true});
    params.bias += params.W[m].col(0);
    params.W.erase(params.W.begin() + m);
    params.alpha.erase(params.alpha.begin() + m);
    params.beta.erase(params.beta.begin() + m);
    estimates.alpha_hat.erase(estimates.alpha_hat.begin() + m);
    estimates.beta_hat.erase(estimates.beta_hat.begin() + m);
    state.sweep_estimates.alpha_hat.erase(state.sweep_estimates.alpha_hat.begin() + m);
    state.sweep_estimates.beta_hat.erase(state.sweep_estimates.beta_hat.begin() + m);
    for (auto& per_seq : state.chains) per_seq.erase(per_seq.begin() + m);
    s.K.erase(s.K.begin() + m);
    layer_origin.erase(layer_origin.begin() + m);
    s.M -= 1;
    state.pruned_since_sweep = true;
  }
  return events;
}

FhmmParameters initialize_parameters(const ModelStructure& structure,
                                     const SequenceDataset& data, std::uint64_t seed) {
  RngStream rng(seed, 0x57A7E1117ULL);
  const long total = data.total_length();
  VectorXd mean = VectorXd::Zero(structure.D);
  for (const auto& seq : data.sequences) mean += seq.rowwise().sum();
  mean /= static_cast<double>(total);
  VectorXd var = VectorXd::Zero(structure.D);
  for (const auto& seq : data.sequences)
    var += (seq.colwise() - mean).array().square().rowwise().sum().matrix();
  var /= static_cast<double>(total);
  const VectorXd sd = var.array().sqrt();

  // Weight columns seeded on observed points (scaled down by the layer count
  // since layers add up) plus jitter: columns start spread over the data
  // rather than stacked on the mean, so states compete for distinct regions
  // from the first data-coupled sweep. The exploration radius grows with the
  // candidate surplus: oversized layers need their extra states pushed out
  // where losers starve quickly, while truth-sized layers must keep every
  // state close enough to claim its cluster.
  FhmmParameters params = uniform_parameters(structure);
  for (int m = 0; m < structure.M; ++m) {
    const double spread = 0.632 * std::sqrt(static_cast<double>(structure.K[m]));
    for (int k = 0; k < structure.K[m]; ++k) {
      const auto& seq = data.sequences[rng.next_u64() % data.sequences.size()];
      const VectorXd anchor = seq.col(rng.next_u64() % seq.cols());
      for (int d = 0; d < structure.D; ++d)
        params.W[m](d, k) =
            anchor[d] / structure.M + spread * sd[d] * rng.normal();
    }
  }
  params.C = var.cwiseMax(1e-8);
  return params;
}

CollapsedEstimates initialize_estimates(const ModelStructure& structure,
                                        std::uint64_t seed) {
  RngStream rng(seed, 0xE571A7E5ULL);
  CollapsedEstimates est;
  for (int m = 0; m < structure.M; ++m) {
    const int K = structure.K[m];
    est.alpha_hat.push_back(rng.dirichlet(10.0, K));
    // Sticky rows: persistent chains concentrate each state's inward flow on
    // itself, which keeps the collapsed pseudocount smoothing from washing
    // out the shrinkage ordering across near-duplicate states.
    MatrixXd beta(K, K);
    for (int j = 0; j < K; ++j)
      beta.row(j) = (0.5 * rng.dirichlet(10.0, K) +
                     0.5 * VectorXd::Unit(K, j))
                        .transpose();
    est.beta_hat.push_back(beta);
  }
  return est;
}

FitReport fit(const SequenceDataset& data, const ModelStructure& init_structure,
              const FitConfig& config) {
  if (config.max_iters < 1) throw std::invalid_argument("fit: max_iters must be >= 1");
  if (!(config.prune_threshold > 0.0))
    throw std::invalid_argument("fit: prune threshold must be positive");
  if (data.num_sequences() == 0) throw std::invalid_argument("fit: empty dataset");

  FhmmParameters params = initialize_parameters(init_structure, data, config.seed);
  CollapsedEstimates estimates = initialize_estimates(init_structure, config.seed);
  VariationalState state = init_state(init_structure, data);

  FitReport report;
  report.init_layers = init_structure.M;
  std::vector<int> layer_origin(init_structure.M);
  for (int m = 0; m < init_structure.M; ++m) layer_origin[m] = m;

  auto live_counts = [&]() {
    std::vector<int> counts(init_structure.M, 1);  // collapsed layers count as one state
    for (int m = 0; m < params.structure.M; ++m)
      counts[layer_origin[m]] = params.structure.K[m];
    return counts;
  };

  double prev_total = 0.0;
  int streak = 0;

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    std::optional<std::vector<VectorXd>> delta;
    if (state.has_marginals) {
      const SufficientStats stats = sufficient_stats(state, params.structure);
      switch (config.variant) {
        case Variant::RFAB: {
          ShrinkageFactors sf = shrinkage_factors(stats, params.structure,
                                                  params.structure.D);
          estimates = collapsed_estimates(stats, params.structure);
          delta = sf.delta;
          break;
        }
        case Variant::FAB: {
          auto [est, sf] = noncollapsed_estimates(stats, params.structure,
                                                  params.structure.D);
          estimates = std::move(est);
          delta = sf.delta;
          break;
        }
        case Variant::VB: {
          estimates = vb_estimates(stats, params.structure, config.vb_concentration);
          delta = uniform_shrinkage(stats, params.structure).delta;
          break;
        }
      }
    }
    // First iteration: sweep with h = 1 and the seeded estimates. Its
    // marginals are data-blind (near uniform), so running the M-step on them
    // would collapse every jittered weight column onto the data mean and
    // erase the symmetry breaking the seeded initialization provides; W and C
    // are first refit from the data-coupled marginals of iteration 2.
    try {
      state = estep_sweep(params, delta, estimates, state, data);
      if (iter > 1) report.covariance_floor_warnings += mstep(state, data, params);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("fit: iteration " + std::to_string(iter) + ": " +
                               e.what());
    }

    auto events = prune(state, params, estimates, config.prune_threshold,
                        layer_origin, iter);
    const int pruned = static_cast<int>(events.size());
    report.events.insert(report.events.end(), events.begin(), events.end());

    // Self-consistent score of the post-iteration state (q_hat = q).
    const SufficientStats now = sufficient_stats(state, params.structure);
    ShrinkageFactors sf_now;
    CollapsedEstimates est_now;
    switch (config.variant) {
      case Variant::RFAB:
        sf_now = shrinkage_factors(now, params.structure, params.structure.D);
        est_now = collapsed_estimates(now, params.structure);
        break;
      case Variant::FAB: {
        auto [est, sf] = noncollapsed_estimates(now, params.structure, params.structure.D);
        est_now = std::move(est);
        sf_now = std::move(sf);
        break;
      }
      case Variant::VB:
        sf_now = uniform_shrinkage(now, params.structure);
        est_now = vb_estimates(now, params.structure, config.vb_concentration);
        break;
    }
    const FicTerms terms =
        fic_bound(params, state, now, sf_now, est_now, data, config.variant);

    IterationRecord record;
    record.iteration = iter;
    record.terms = terms;
    record.live_counts = live_counts();
    record.pruned_this_iter = pruned;
    report.trace.push_back(record);
    report.iterations_run = iter;

    if (iter > 1 && pruned == 0 && report.trace[iter - 2].pruned_this_iter == 0) {
      const double rel = std::abs(terms.total - prev_total) /
                         std::max(1.0, std::abs(prev_total));
      streak = (rel < config.convergence_tol) ? streak + 1 : 0;
      if (streak >= config.convergence_streak) {
        report.converged = true;
        prev_total = terms.total;
        break;
      }
    } else {
      streak = 0;
    }
    prev_total = terms.total;
  }

  // Final point estimates from the final state.
  const SufficientStats final_stats = sufficient_stats(state, params.structure);
  switch (config.variant) {
    case Variant::RFAB:
      report.final_estimates = collapsed_estimates(final_stats, params.structure);
      break;
    case Variant::FAB:
      report.final_estimates =
          noncollapsed_estimates(final_stats, params.structure, params.structure.D).first;
      break;
    case Variant::VB:
      report.final_estimates =
          vb_estimates(final_stats, params.structure, config.vb_concentration);
      break;
  }
  params.alpha = report.final_estimates.alpha_hat;
  params.beta = report.final_estimates.beta_hat;

  report.final_params = std::move(params);
  report.final_state = std::move(state);
  report.layer_origin = layer_origin;
  report.fic_score = report.trace.empty() ? 0.0 : report.trace.back().terms.total;
  return report;
}

}  // namespace fabfhmm
