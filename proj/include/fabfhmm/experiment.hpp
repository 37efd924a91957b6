#pragma once

#include <filesystem>
#include <string>

#include "fabfhmm/baselines.hpp"
#include "fabfhmm/fab.hpp"
#include "fabfhmm/model.hpp"

namespace fabfhmm {

struct EvalResult {
  double loglik = 0.0;
  std::string method;  // "exact" or "bound"
};

/// Held-out log-likelihood of a fitted model. Uses the exact product-space
/// forward algorithm when the joint state count fits under the cap, otherwise
/// the mean-field variational lower bound from a frozen-parameter E-step.
EvalResult eval_heldout(const FhmmParameters& params, const CollapsedEstimates& estimates,
                        const SequenceDataset& data, long cap = 4096);

/// Mean-field lower bound on log p(x | params, estimates): frozen-parameter
/// sweeps iterated to stability, value = E_q[log emission] + Markov terms
/// + entropy (the sum-log-zeta route).
double variational_bound(const FhmmParameters& params, const CollapsedEstimates& estimates,
                         const SequenceDataset& data, int max_sweeps = 50,
                         double tol = 1e-9);

/// Markov chain expected log-probability sum_m E_q[log alpha_hat] + E_q[log beta_hat].
double markov_term(const VariationalState& state, const CollapsedEstimates& estimates);

/// Objective breakdown of a saved model on a dataset (frozen parameters,
/// self-consistent q_hat = q). Used by the `score` subcommand.
FicTerms score_model(const FhmmParameters& params, const CollapsedEstimates& estimates,
                     const SequenceDataset& data, Variant variant, int max_sweeps = 50);

struct ExperimentConfig {
  bool paper_preset = true;
  ModelStructure custom_truth;  // used when paper_preset is false
  std::vector<Variant> variants = {Variant::RFAB, Variant::FAB, Variant::VB};
  int trials = 10;
  std::uint64_t base_seed = 0;
  int train_len = 2000;
  int test_len = 2000;
  int init_layers = 3;
  int init_states = 10;
  int max_iters = 1000;
  double prune_threshold = 1.0;
  double convergence_tol = 1e-6;
  long product_cap = 4096;
  double vb_concentration = 1.0;
  std::filesystem::path out_dir;
  int threads = 0;  // 0 = hardware concurrency
};

struct TrialResult {
  int trial = 0;
  Variant variant = Variant::RFAB;
  bool ok = false;
  std::string error;
  std::vector<int> sorted_counts;  // ascending, collapsed layers count as 1
  double train_exact = 0.0, test_exact = 0.0;
  double train_bound = 0.0, test_bound = 0.0;
  std::string train_method, test_method;
  int iterations_run = 0;
  int iters_to_final_structure = 0;
  bool converged = false;
  double fic_score = 0.0;
};

struct VariantSummary {
  Variant variant = Variant::RFAB;
  int trials_used = 0;
  std::vector<double> count_mean, count_sd;  // sorted state counts
  double total_states_mean = 0.0;
  double train_mean = 0.0, train_sd = 0.0;
  double test_mean = 0.0, test_sd = 0.0;
  double train_bound_mean = 0.0, test_bound_mean = 0.0;
};

struct ResultTable {
  std::vector<TrialResult> rows;
  std::vector<VariantSummary> summaries;
};

/// Full synthetic benchmark: per trial, a fresh seeded ground truth and
/// train/test pair, every requested variant fitted and evaluated, artifacts
/// under out_dir/trial_<i>/<variant>/, aggregate CSVs at the top level.
/// Trials run in parallel; outputs depend only on (config, seeds).
ResultTable run_experiment(const ExperimentConfig& config);

/// First iteration after which the per-layer live counts never change again.
int iterations_to_final_structure(const FitReport& report);

}  // namespace fabfhmm
