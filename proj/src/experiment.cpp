#include "fabfhmm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "fabfhmm/flat_hmm.hpp"
#include "fabfhmm/serialize.hpp"
#include "fabfhmm/simulate.hpp"

namespace fabfhmm {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

FhmmParameters with_estimates(const FhmmParameters& params,
                              const CollapsedEstimates& estimates) {
  FhmmParameters out = params;
  out.alpha = estimates.alpha_hat;
  out.beta = estimates.beta_hat;
  return out;
}

}  // namespace

double markov_term(const VariationalState& state, const CollapsedEstimates& estimates) {
  double total = 0.0;
  for (int m = 0; m < state.num_layers(); ++m) {
    const VectorXd log_alpha = estimates.alpha_hat[m].array().log();
    total += state.initial_mass(m).dot(log_alpha);
    total += (state.transition_mass(m).array() * estimates.beta_hat[m].array().log()).sum();
  }
  return total;
}

double variational_bound(const FhmmParameters& params, const CollapsedEstimates& estimates,
                         const SequenceDataset& data, int max_sweeps, double tol) {
  require_valid(params);
  VariationalState state = init_state(params.structure, data);
  // Uniform biases only rescale h per step; the bound is invariant to that.
  std::vector<VectorXd> uniform;
  for (int m = 0; m < params.structure.M; ++m)
    uniform.push_back(VectorXd::Constant(params.structure.K[m], 1.0 / params.structure.K[m]));

  state = estep_sweep(params, std::nullopt, estimates, state, data);  // h = 1
  double bound = expected_gaussian_loglik(params, state, data) +
                 markov_term(state, estimates) + state_entropy(state);
  for (int sweep = 1; sweep < max_sweeps; ++sweep) {
    state = estep_sweep(params, uniform, estimates, state, data);
    const double next = expected_gaussian_loglik(params, state, data) +
                        markov_term(state, estimates) + state_entropy(state);
    const double rel = std::abs(next - bound) / std::max(1.0, std::abs(bound));
    bound = next;
    if (rel < tol) break;
  }
  return bound;
}

EvalResult eval_heldout(const FhmmParameters& params, const CollapsedEstimates& estimates,
                        const SequenceDataset& data, long cap) {
  const FhmmParameters eval_params = with_estimates(params, estimates);
  EvalResult result;
  if (eval_params.structure.joint_states() <= cap) {
    const FlatHmm flat = product_expand(eval_params, cap);
    double total = 0.0;
    for (const auto& seq : data.sequences) total += flat_forward_loglik(flat, seq);
    result.loglik = total;
    result.method = "exact";
  } else {
    result.loglik = variational_bound(eval_params, estimates, data);
    result.method = "bound";
  }
  return result;
}

FicTerms score_model(const FhmmParameters& params, const CollapsedEstimates& estimates,
                     const SequenceDataset& data, Variant variant, int max_sweeps) {
  require_valid(params);
  VariationalState state = init_state(params.structure, data);
  state = estep_sweep(params, std::nullopt, estimates, state, data);
  std::optional<std::vector<VectorXd>> delta;
  double prev = 0.0;
  FicTerms terms;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const SufficientStats stats = sufficient_stats(state, params.structure);
    ShrinkageFactors sf;
    switch (variant) {
      case Variant::RFAB:
        sf = shrinkage_factors(stats, params.structure, params.structure.D);
        break;
      case Variant::FAB:
        sf = noncollapsed_estimates(stats, params.structure, params.structure.D).second;
        break;
      case Variant::VB:
        sf = uniform_shrinkage(stats, params.structure);
        break;
    }
    terms = fic_bound(params, state, stats, sf, estimates, data, variant);
    if (sweep > 0 &&
        std::abs(terms.total - prev) / std::max(1.0, std::abs(prev)) < 1e-9)
      break;
    prev = terms.total;
    delta = sf.delta;
    state = estep_sweep(params, delta, estimates, state, data);
  }
  return terms;
}

int iterations_to_final_structure(const FitReport& report) {
  if (report.trace.empty()) return 0;
  const auto& final_counts = report.trace.back().live_counts;
  int first = static_cast<int>(report.trace.size());
  for (int i = static_cast<int>(report.trace.size()) - 1; i >= 0; --i) {
    if (report.trace[i].live_counts != final_counts) break;
    first = i;
  }
  return report.trace[first].iteration;
}

namespace {

TrialResult run_one(const ExperimentConfig& config, int trial, Variant variant,
                    const SequenceDataset& train, const SequenceDataset& test) {
  TrialResult row;
  row.trial = trial;
  row.variant = variant;
  try {
    ModelStructure init;
    init.M = config.init_layers;
    init.K.assign(config.init_layers, config.init_states);
    init.D = train.dim();

    FitConfig fit_config;
    fit_config.variant = variant;
    fit_config.max_iters = config.max_iters;
    fit_config.prune_threshold = config.prune_threshold;
    fit_config.convergence_tol = config.convergence_tol;
    fit_config.seed = config.base_seed + 7919ULL * static_cast<std::uint64_t>(trial) + 13;
    fit_config.product_cap = config.product_cap;
    fit_config.vb_concentration = config.vb_concentration;

    FitReport report = fit(train, init, fit_config);

    std::vector<int> counts = report.trace.back().live_counts;
    std::sort(counts.begin(), counts.end());
    row.sorted_counts = counts;
    row.iterations_run = report.iterations_run;
    row.iters_to_final_structure = iterations_to_final_structure(report);
    row.converged = report.converged;
    row.fic_score = report.fic_score;

    const auto train_eval = eval_heldout(report.final_params, report.final_estimates,
                                         train, config.product_cap);
    const auto test_eval = eval_heldout(report.final_params, report.final_estimates,
                                        test, config.product_cap);
    row.train_exact = train_eval.loglik;
    row.train_method = train_eval.method;
    row.test_exact = test_eval.loglik;
    row.test_method = test_eval.method;
    row.train_bound = variational_bound(report.final_params, report.final_estimates, train);
    row.test_bound = variational_bound(report.final_params, report.final_estimates, test);

    if (!config.out_dir.empty()) {
      const auto dir = config.out_dir / ("trial_" + std::to_string(trial)) /
                       variant_name(variant);
      std::filesystem::create_directories(dir);
      save_model(report.final_params, dir / "model.json");
      write_trace_csv(report, dir / "trace.csv");
      write_fit_report_json(report, variant, dir / "report.json");
    }
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

VariantSummary summarize(Variant variant, const std::vector<TrialResult>& rows,
                         int init_layers) {
  VariantSummary summary;
  summary.variant = variant;
  std::vector<const TrialResult*> used;
  for (const auto& row : rows)
    if (row.variant == variant && row.ok) used.push_back(&row);
  summary.trials_used = static_cast<int>(used.size());
  if (used.empty()) return summary;

  summary.count_mean.assign(init_layers, 0.0);
  summary.count_sd.assign(init_layers, 0.0);
  for (const auto* row : used)
    for (int i = 0; i < init_layers; ++i) summary.count_mean[i] += row->sorted_counts[i];
  for (auto& v : summary.count_mean) v /= used.size();
  if (used.size() > 1) {
    for (const auto* row : used)
      for (int i = 0; i < init_layers; ++i) {
        const double d = row->sorted_counts[i] - summary.count_mean[i];
        summary.count_sd[i] += d * d;
      }
    for (auto& v : summary.count_sd) v = std::sqrt(v / (used.size() - 1));
  }
  for (int i = 0; i < init_layers; ++i) summary.total_states_mean += summary.count_mean[i];

  auto mean_sd = [&](auto getter, double& mean, double& sd) {
    mean = 0.0;
    for (const auto* row : used) mean += getter(*row);
    mean /= used.size();
    sd = 0.0;
    if (used.size() > 1) {
      for (const auto* row : used) {
        const double d = getter(*row) - mean;
        sd += d * d;
      }
      sd = std::sqrt(sd / (used.size() - 1));
    }
  };
  mean_sd([](const TrialResult& r) { return r.train_exact; }, summary.train_mean,
          summary.train_sd);
  mean_sd([](const TrialResult& r) { return r.test_exact; }, summary.test_mean,
          summary.test_sd);
  double dummy;
  mean_sd([](const TrialResult& r) { return r.train_bound; }, summary.train_bound_mean,
          dummy);
  mean_sd([](const TrialResult& r) { return r.test_bound; }, summary.test_bound_mean,
          dummy);
  return summary;
}

void write_tables(const ExperimentConfig& config, const ResultTable& table) {
  if (config.out_dir.empty()) return;
  std::filesystem::create_directories(config.out_dir);

  {
    std::ofstream out(config.out_dir / "table1.csv");
    out << "variant,trials";
    for (int i = 0; i < config.init_layers; ++i)
      out << ",K" << (i + 1) << "_mean,K" << (i + 1) << "_sd";
    out << ",total_mean\n";
    for (const auto& s : table.summaries) {
      out << variant_name(s.variant) << "," << s.trials_used;
      for (int i = 0; i < config.init_layers; ++i)
        out << "," << format_double(s.count_mean.empty() ? 0.0 : s.count_mean[i]) << ","
            << format_double(s.count_sd.empty() ? 0.0 : s.count_sd[i]);
      out << "," << format_double(s.total_states_mean) << "\n";
    }
  }
  {
    std::ofstream out(config.out_dir / "table2.csv");
    out << "variant,trials,train_mean,train_sd,test_mean,test_sd,"
           "train_bound_mean,test_bound_mean\n";
    for (const auto& s : table.summaries)
      out << variant_name(s.variant) << "," << s.trials_used << ","
          << format_double(s.train_mean) << "," << format_double(s.train_sd) << ","
          << format_double(s.test_mean) << "," << format_double(s.test_sd) << ","
          << format_double(s.train_bound_mean) << ","
          << format_double(s.test_bound_mean) << "\n";
  }
  {
    std::ofstream out(config.out_dir / "results.csv");
    out << "trial,variant,ok,sorted_counts,train_loglik,train_method,test_loglik,"
           "test_method,train_bound,test_bound,iterations,iters_to_final_structure,"
           "converged,fic_score,error\n";
    for (const auto& row : table.rows) {
      out << row.trial << "," << variant_name(row.variant) << "," << (row.ok ? 1 : 0)
          << ",\"";
      for (size_t i = 0; i < row.sorted_counts.size(); ++i)
        out << (i ? " " : "") << row.sorted_counts[i];
      out << "\"," << format_double(row.train_exact) << "," << row.train_method << ","
          << format_double(row.test_exact) << "," << row.test_method << ","
          << format_double(row.train_bound) << "," << format_double(row.test_bound) << ","
          << row.iterations_run << "," << row.iters_to_final_structure << ","
          << (row.converged ? 1 : 0) << "," << format_double(row.fic_score) << ","
          << row.error << "\n";
    }
  }
}

void write_figure_traces(const ExperimentConfig& config) {
  // Plot-ready traces of the first trial: per-iteration live counts and the
  // train-likelihood bound component (expected + markov + entropy).
  if (config.out_dir.empty()) return;
  struct Trace {
    Variant variant;
    std::vector<std::vector<int>> counts;
    std::vector<double> bound;
  };
  std::vector<Trace> traces;
  size_t longest = 0;
  for (Variant variant : config.variants) {
    const auto path = config.out_dir / "trial_0" / variant_name(variant) / "trace.csv";
    std::ifstream in(path);
    if (!in) continue;
    Trace trace;
    trace.variant = variant;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < static_cast<size_t>(7 + config.init_layers + 1)) continue;
      std::vector<int> counts(config.init_layers);
      for (int m = 0; m < config.init_layers; ++m) counts[m] = std::stoi(cells[7 + m]);
      trace.counts.push_back(counts);
      trace.bound.push_back(std::stod(cells[2]) + std::stod(cells[4]) +
                            std::stod(cells[5]));
    }
    longest = std::max(longest, trace.counts.size());
    traces.push_back(std::move(trace));
  }
  {
    std::ofstream out(config.out_dir / "fig2_states.csv");
    out << "iter";
    for (const auto& trace : traces)
      for (int m = 0; m < config.init_layers; ++m)
        out << "," << variant_name(trace.variant) << "_K" << (m + 1);
    out << "\n";
    for (size_t i = 0; i < longest; ++i) {
      out << (i + 1);
      for (const auto& trace : traces) {
        const auto& counts = i < trace.counts.size() ? trace.counts[i] : trace.counts.back();
        for (int m = 0; m < config.init_layers; ++m) out << "," << counts[m];
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(config.out_dir / "fig3_trainll.csv");
    out << "iter";
    for (const auto& trace : traces) out << "," << variant_name(trace.variant);
    out << "\n";
    for (size_t i = 0; i < longest; ++i) {
      out << (i + 1);
      for (const auto& trace : traces)
        out << ","
            << format_double(i < trace.bound.size() ? trace.bound[i] : trace.bound.back());
      out << "\n";
    }
  }
}

}  // namespace

ResultTable run_experiment(const ExperimentConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("run_experiment: trials must be >= 1");

  struct TrialData {
    SequenceDataset train, test;
    FhmmParameters truth;
  };

  auto prepare_trial = [&](int trial) {
    TrialData td;
    const std::uint64_t truth_seed =
        config.base_seed + 1000003ULL * static_cast<std::uint64_t>(trial);
    td.truth = config.paper_preset ? benchmark_ground_truth(truth_seed)
                                   : random_ground_truth(config.custom_truth, truth_seed);
    SimulationConfig sim;
    sim.params = td.truth;
    sim.n_sequences = 2;
    sim.lengths = {config.train_len, config.test_len};
    sim.seed = truth_seed + 1;
    auto [data, assignment] = sample(sim);
    td.train.sequences.push_back(data.sequences[0]);
    td.test.sequences.push_back(data.sequences[1]);
    return td;
  };

  auto run_trial = [&](int trial) {
    std::vector<TrialResult> rows;
    try {
      const TrialData td = prepare_trial(trial);
      if (!config.out_dir.empty()) {
        const auto dir = config.out_dir / ("trial_" + std::to_string(trial));
        std::filesystem::create_directories(dir);
        save_model(td.truth, dir / "ground_truth.json");
      }
      for (Variant variant : config.variants)
        rows.push_back(run_one(config, trial, variant, td.train, td.test));
    } catch (const std::exception& e) {
      for (Variant variant : config.variants) {
        TrialResult row;
        row.trial = trial;
        row.variant = variant;
        row.ok = false;
        row.error = e.what();
        rows.push_back(row);
      }
    }
    return rows;
  };

  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int workers =
      std::max(1, std::min(config.trials, config.threads > 0 ? config.threads
                                                             : std::max(1, hw)));
  std::vector<std::vector<TrialResult>> per_trial(config.trials);
  if (workers == 1) {
    for (int trial = 0; trial < config.trials; ++trial) per_trial[trial] = run_trial(trial);
  } else {
    std::atomic<int> next{0};
    auto drain = [&]() {
      for (;;) {
        const int trial = next.fetch_add(1);
        if (trial >= config.trials) break;
        per_trial[trial] = run_trial(trial);
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(drain);
    for (auto& worker : pool) worker.join();
  }
  ResultTable table;
  for (auto& rows : per_trial)
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());

  for (Variant variant : config.variants)
    table.summaries.push_back(summarize(variant, table.rows, config.init_layers));

  write_tables(config, table);
  write_figure_traces(config);
  return table;
}

}  // namespace fabfhmm
