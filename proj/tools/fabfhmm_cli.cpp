// Command-line front end: generate / fit / eval / score / experiment /
// verify-asymptotics. Errors leave a machine-readable JSON object on stderr
// and a nonzero exit code.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fabfhmm/asymptotics.hpp"
#include "fabfhmm/experiment.hpp"
#include "fabfhmm/fab.hpp"
#include "fabfhmm/flat_hmm.hpp"
#include "fabfhmm/serialize.hpp"
#include "fabfhmm/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fabfhmm;

namespace {

// Resolve a dataset argument: either a manifest file or a directory holding
// <split>_manifest.json.
SequenceDataset load_dataset_arg(const std::string& path, const std::string& split) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= split + "_manifest.json";
  return load_dataset(p);
}

json load_config_file(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) throw std::runtime_error(std::string("cannot read config file ") + argv[i + 1]);
      json doc;
      in >> doc;
      return doc;
    }
  return json::object();
}

template <typename T>
void maybe(const json& cfg, const char* key, T& value) {
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

std::vector<Variant> parse_variants(const std::string& csv) {
  std::vector<Variant> variants;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) variants.push_back(variant_from_name(item));
  if (variants.empty()) throw std::invalid_argument("no variants given");
  return variants;
}

int cmd_generate(const std::string& preset, std::uint64_t seed, int train_len,
                 int test_len, int layers, int states, int dim,
                 const std::string& out_dir) {
  FhmmParameters truth;
  if (preset == "paper") {
    truth = benchmark_ground_truth(seed);
  } else if (preset == "custom") {
    ModelStructure s;
    s.M = layers;
    s.K.assign(layers, states);
    s.D = dim;
    truth = random_ground_truth(s, seed);
  } else {
    throw std::invalid_argument("unknown preset: " + preset);
  }

  SimulationConfig sim;
  sim.params = truth;
  sim.n_sequences = 2;
  sim.lengths = {train_len, test_len};
  sim.seed = seed;
  auto [data, assignment] = sample(sim);

  fs::path dir(out_dir);
  fs::create_directories(dir);
  SequenceDataset train, test;
  train.sequences.push_back(data.sequences[0]);
  test.sequences.push_back(data.sequences[1]);
  save_dataset(train, dir, "train");
  save_dataset(test, dir, "test");
  save_model(truth, dir / "ground_truth.json");
  std::cout << json{{"out", out_dir},
                    {"train_len", train_len},
                    {"test_len", test_len},
                    {"K", truth.structure.K}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_fit(const json& cfg, const std::string& data_path, const std::string& split,
            const std::string& variant_name_in, int layers, int states, int max_iters,
            double prune_threshold, double tol, std::uint64_t seed,
            double vb_concentration, const std::string& out_model,
            const std::string& out_trace, const std::string& out_report) {
  (void)cfg;
  const SequenceDataset data = load_dataset_arg(data_path, split);
  ModelStructure init;
  init.M = layers;
  init.K.assign(layers, states);
  init.D = data.dim();

  FitConfig config;
  config.variant = variant_from_name(variant_name_in);
  config.max_iters = max_iters;
  config.prune_threshold = prune_threshold;
  config.convergence_tol = tol;
  config.seed = seed;
  config.vb_concentration = vb_concentration;

  const FitReport report = fit(data, init, config);
  if (!out_model.empty()) save_model(report.final_params, out_model);
  if (!out_trace.empty()) write_trace_csv(report, out_trace);
  if (!out_report.empty()) write_fit_report_json(report, config.variant, out_report);

  std::cout << json{{"variant", variant_name(config.variant)},
                    {"fic_score", report.fic_score},
                    {"iterations", report.iterations_run},
                    {"converged", report.converged},
                    {"final_K", report.final_params.structure.K}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& split, long cap) {
  const FhmmParameters params = load_model(model_path);
  const SequenceDataset data = load_dataset_arg(data_path, split);
  CollapsedEstimates estimates{params.alpha, params.beta};
  const EvalResult result = eval_heldout(params, estimates, data, cap);
  std::cout << json{{"loglik", result.loglik}, {"method", result.method}}.dump() << "\n";
  return 0;
}

int cmd_score(const std::string& model_path, const std::string& data_path,
              const std::string& split, const std::string& variant_name_in) {
  const FhmmParameters params = load_model(model_path);
  const SequenceDataset data = load_dataset_arg(data_path, split);
  CollapsedEstimates estimates{params.alpha, params.beta};
  const FicTerms terms =
      score_model(params, estimates, data, variant_from_name(variant_name_in));
  std::cout << json{{"G", terms.total},
                    {"expected_loglik", terms.expected_loglik},
                    {"shrinkage", terms.shrinkage_term},
                    {"markov", terms.markov_term},
                    {"entropy", terms.entropy},
                    {"penalty", terms.penalty_terms}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_experiment(const ExperimentConfig& config) {
  const ResultTable table = run_experiment(config);
  json summary = json::array();
  for (const auto& s : table.summaries) {
    summary.push_back({{"variant", variant_name(s.variant)},
                       {"trials", s.trials_used},
                       {"sorted_counts_mean", s.count_mean},
                       {"total_states_mean", s.total_states_mean},
                       {"train_loglik_mean", s.train_mean},
                       {"test_loglik_mean", s.test_mean}});
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_verify_asymptotics(const std::string& regime, long samples, std::uint64_t seed,
                           double y_hat_override) {
  if (regime.rfind("binomial:", 0) != 0)
    throw std::invalid_argument("regime must look like binomial:N,P");
  const auto spec_text = regime.substr(9);
  const auto comma = spec_text.find(',');
  if (comma == std::string::npos)
    throw std::invalid_argument("regime must look like binomial:N,P");
  const int trials = std::stoi(spec_text.substr(0, comma));
  const double prob = std::stod(spec_text.substr(comma + 1));

  namespace asy = fabfhmm::asymptotics;
  asy::BernoulliSumSpec spec = asy::binomial_spec(trials, prob);
  if (y_hat_override > 0.0) spec.y_hat = y_hat_override;

  // Reference gaps: the first two and the negative moment carry proved
  // bounds (1/y_bar, sum p^2 / sum p, 1/y_bar); the first-order log-Gamma
  // form misses the curvature term Var/(2 y_hat), which is its expected gap.
  const double variance = (spec.p.array() * (1.0 - spec.p.array())).sum();
  struct Row {
    const char* name;
    double approx;
    asy::McEstimate mc;
    double reference;
  };
  std::vector<Row> rows;
  rows.push_back({"E[log(y+1)]", asy::approx_e_log_y_plus1(spec),
                  asy::mc_oracle({spec}, asy::Functional::LogYPlus1, samples, seed),
                  1.0 / spec.y_bar});
  rows.push_back({"E[y log y]", asy::approx_e_ylogy(spec),
                  asy::mc_oracle({spec}, asy::Functional::YLogY, samples, seed + 1),
                  variance / spec.y_bar});
  rows.push_back({"E[log Gamma(y)]", asy::approx_e_loggamma(spec),
                  asy::mc_oracle({spec}, asy::Functional::LogGamma, samples, seed + 2),
                  variance / (2.0 * spec.y_hat) + 1.0 / spec.y_bar});
  rows.push_back({"E[1/(y+1)]", 1.0 / spec.y_bar,
                  asy::mc_oracle({spec}, asy::Functional::NegativeMoment, samples, seed + 3),
                  1.0 / spec.y_bar});

  std::printf("regime=%s y_bar=%.6g y_hat=%.6g samples=%ld\n", regime.c_str(), spec.y_bar,
              spec.y_hat, samples);
  std::printf("%-18s %14s %14s %10s %12s %10s\n", "functional", "approx", "mc", "mc_se",
              "|approx-mc|", "ref_gap");
  for (const auto& row : rows)
    std::printf("%-18s %14.6f %14.6f %10.2e %12.6f %10.4g\n", row.name, row.approx,
                row.mc.estimate, row.mc.standard_error,
                std::abs(row.approx - row.mc.estimate), row.reference);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorial HMM learning with FAB inference"};
  app.require_subcommand(1);

  try {
    const json cfg = load_config_file(argc, argv);
    std::string config_path;

    // generate
    auto* gen = app.add_subcommand("generate", "Sample a synthetic dataset");
    std::string gen_preset = "paper", gen_out = "data";
    std::uint64_t gen_seed = 0;
    int gen_train = 2000, gen_test = 2000, gen_layers = 3, gen_states = 2, gen_dim = 3;
    gen->add_option("--preset", gen_preset, "paper | custom");
    gen->add_option("--seed", gen_seed);
    gen->add_option("--train-len", gen_train);
    gen->add_option("--test-len", gen_test);
    gen->add_option("--layers", gen_layers, "custom preset: truth layers");
    gen->add_option("--states", gen_states, "custom preset: states per truth layer");
    gen->add_option("--dim", gen_dim, "custom preset: observation dimension");
    gen->add_option("--out", gen_out)->required();

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a dataset");
    std::string fit_data, fit_split = "train", fit_variant = "rfab";
    std::string fit_out, fit_trace, fit_report;
    int fit_layers = 3, fit_states = 10, fit_max_iters = 1000;
    double fit_prune = 1.0, fit_tol = 1e-6, fit_vbconc = 1.0;
    std::uint64_t fit_seed = 0;
    maybe(cfg, "variant", fit_variant);
    maybe(cfg, "layers", fit_layers);
    maybe(cfg, "states", fit_states);
    maybe(cfg, "max_iters", fit_max_iters);
    maybe(cfg, "prune_threshold", fit_prune);
    maybe(cfg, "convergence_tol", fit_tol);
    maybe(cfg, "data", fit_data);
    maybe(cfg, "out", fit_out);
    maybe(cfg, "trace", fit_trace);
    fit_cmd->add_option("--config", config_path, "JSON config file (flags override)");
    fit_cmd->add_option("--data", fit_data);
    fit_cmd->add_option("--split", fit_split, "manifest stem inside a data dir");
    fit_cmd->add_option("--variant", fit_variant, "rfab | fab | vb");
    fit_cmd->add_option("--layers", fit_layers);
    fit_cmd->add_option("--states", fit_states);
    fit_cmd->add_option("--max-iters", fit_max_iters);
    fit_cmd->add_option("--prune-threshold", fit_prune);
    fit_cmd->add_option("--tol", fit_tol);
    fit_cmd->add_option("--seed", fit_seed);
    fit_cmd->add_option("--vb-concentration", fit_vbconc);
    fit_cmd->add_option("--out", fit_out, "output model JSON");
    fit_cmd->add_option("--trace", fit_trace, "per-iteration trace CSV");
    fit_cmd->add_option("--report", fit_report, "fit report JSON");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Held-out log-likelihood of a model");
    std::string eval_model, eval_data, eval_split = "test";
    long eval_cap = 4096;
    eval_cmd->add_option("--model", eval_model)->required();
    eval_cmd->add_option("--data", eval_data)->required();
    eval_cmd->add_option("--split", eval_split);
    eval_cmd->add_option("--cap", eval_cap, "joint-state cap for the exact path");

    // score
    auto* score_cmd = app.add_subcommand("score", "Objective breakdown of a model");
    std::string score_model_path, score_data, score_split = "train",
                score_variant = "rfab";
    score_cmd->add_option("--model", score_model_path)->required();
    score_cmd->add_option("--data", score_data)->required();
    score_cmd->add_option("--split", score_split);
    score_cmd->add_option("--variant", score_variant);

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "Multi-trial benchmark");
    ExperimentConfig exp;
    std::string exp_preset = "paper", exp_variants = "rfab,fab,vb", exp_out;
    int exp_truth_layers = 3, exp_truth_states = 2, exp_truth_dim = 3;
    maybe(cfg, "preset", exp_preset);
    maybe(cfg, "variants", exp_variants);
    maybe(cfg, "trials", exp.trials);
    maybe(cfg, "seed", exp.base_seed);
    maybe(cfg, "train_len", exp.train_len);
    maybe(cfg, "test_len", exp.test_len);
    maybe(cfg, "init_layers", exp.init_layers);
    maybe(cfg, "init_states", exp.init_states);
    maybe(cfg, "max_iters", exp.max_iters);
    maybe(cfg, "prune_threshold", exp.prune_threshold);
    maybe(cfg, "threads", exp.threads);
    maybe(cfg, "out", exp_out);
    exp_cmd->add_option("--config", config_path, "JSON config file (flags override)");
    exp_cmd->add_option("--preset", exp_preset, "paper | custom");
    exp_cmd->add_option("--variants", exp_variants, "comma-separated subset of rfab,fab,vb");
    exp_cmd->add_option("--trials", exp.trials);
    exp_cmd->add_option("--seed", exp.base_seed);
    exp_cmd->add_option("--train-len", exp.train_len);
    exp_cmd->add_option("--test-len", exp.test_len);
    exp_cmd->add_option("--layers", exp.init_layers, "initial layers for fitting");
    exp_cmd->add_option("--states", exp.init_states, "initial states per layer");
    exp_cmd->add_option("--max-iters", exp.max_iters);
    exp_cmd->add_option("--prune-threshold", exp.prune_threshold);
    exp_cmd->add_option("--threads", exp.threads);
    exp_cmd->add_option("--truth-layers", exp_truth_layers, "custom preset");
    exp_cmd->add_option("--truth-states", exp_truth_states, "custom preset");
    exp_cmd->add_option("--truth-dim", exp_truth_dim, "custom preset");
    exp_cmd->add_option("--out", exp_out);

    // verify-asymptotics
    auto* verify = app.add_subcommand("verify-asymptotics",
                                      "Monte-Carlo check of the approximation toolbox");
    std::string verify_regime = "binomial:1000,0.1";
    long verify_samples = 100000;
    std::uint64_t verify_seed = 0;
    double verify_yhat = -1.0;
    verify->add_option("--regime", verify_regime, "binomial:N,P");
    verify->add_option("--samples", verify_samples);
    verify->add_option("--seed", verify_seed);
    verify->add_option("--yhat", verify_yhat, "override the expansion point");

    app.parse(argc, argv);

    if (gen->parsed())
      return cmd_generate(gen_preset, gen_seed, gen_train, gen_test, gen_layers,
                          gen_states, gen_dim, gen_out);
    if (fit_cmd->parsed()) {
      if (fit_data.empty())
        throw std::invalid_argument("fit: --data is required (flag or config file)");
      return cmd_fit(cfg, fit_data, fit_split, fit_variant, fit_layers, fit_states,
                     fit_max_iters, fit_prune, fit_tol, fit_seed, fit_vbconc, fit_out,
                     fit_trace, fit_report);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_data, eval_split, eval_cap);
    if (score_cmd->parsed())
      return cmd_score(score_model_path, score_data, score_split, score_variant);
    if (exp_cmd->parsed()) {
      if (exp_out.empty())
        throw std::invalid_argument("experiment: --out is required (flag or config file)");
      exp.paper_preset = exp_preset == "paper";
      if (!exp.paper_preset) {
        exp.custom_truth.M = exp_truth_layers;
        exp.custom_truth.K.assign(exp_truth_layers, exp_truth_states);
        exp.custom_truth.D = exp_truth_dim;
      }
      exp.variants = parse_variants(exp_variants);
      exp.out_dir = exp_out;
      return cmd_experiment(exp);
    }
    if (verify->parsed())
      return cmd_verify_asymptotics(verify_regime, verify_samples, verify_seed,
                                    verify_yhat);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << json{{"error", e.what()}, {"type", "cli"}}.dump() << "\n";
    return e.get_exit_code();
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"type", "runtime"}}.dump() << "\n";
    return 1;
  }
}
