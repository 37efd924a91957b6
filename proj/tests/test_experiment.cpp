#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fabfhmm/experiment.hpp"
#include "fabfhmm/flat_hmm.hpp"
#include "fabfhmm/serialize.hpp"
#include "fabfhmm/simulate.hpp"

using namespace fabfhmm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("fabfhmm_exp_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("eval_heldout: single layer equals the plain forward log-likelihood") {
  const FhmmParameters truth = benchmark_ground_truth(3);
  SimulationConfig sim{truth, 1, {60}, 5};
  const SequenceDataset data = sample(sim).first;

  ModelStructure s{1, {3}, 3};
  FhmmParameters model = uniform_parameters(s);
  model.W[0].setRandom();
  model.C = VectorXd::Constant(3, 0.5);
  CollapsedEstimates est{model.alpha, model.beta};

  const EvalResult result = eval_heldout(model, est, data);
  CHECK(result.method == "exact");
  const double direct = flat_forward_loglik(product_expand(model), data.sequences[0]);
  CHECK(result.loglik == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("exact likelihood dominates the variational bound") {
  const FhmmParameters truth = benchmark_ground_truth(8);
  SimulationConfig sim{truth, 1, {120}, 9};
  const SequenceDataset data = sample(sim).first;
  CollapsedEstimates est{truth.alpha, truth.beta};

  const EvalResult exact = eval_heldout(truth, est, data);
  REQUIRE(exact.method == "exact");
  const double bound = variational_bound(truth, est, data);
  CHECK(exact.loglik >= bound - 1e-8);
}

TEST_CASE("eval_heldout falls back to the bound above the cap") {
  const FhmmParameters truth = benchmark_ground_truth(8);
  SimulationConfig sim{truth, 1, {50}, 2};
  const SequenceDataset data = sample(sim).first;
  CollapsedEstimates est{truth.alpha, truth.beta};
  const EvalResult bound = eval_heldout(truth, est, data, /*cap=*/2);
  CHECK(bound.method == "bound");
  const EvalResult exact = eval_heldout(truth, est, data);
  CHECK(exact.method == "exact");
  CHECK(exact.loglik >= bound.loglik - 1e-8);
}

TEST_CASE("pruned benchmark-scale models stay on the exact path") {
  ModelStructure s{3, {2, 3, 5}, 3};  // 30 joint states, far below 4096
  FhmmParameters model = uniform_parameters(s);
  CHECK(model.structure.joint_states() <= 4096);
  SimulationConfig sim{benchmark_ground_truth(0), 1, {30}, 1};
  const SequenceDataset data = sample(sim).first;
  CollapsedEstimates est{model.alpha, model.beta};
  CHECK(eval_heldout(model, est, data).method == "exact");
}

TEST_CASE("score_model reports a coherent breakdown") {
  const FhmmParameters truth = benchmark_ground_truth(10);
  SimulationConfig sim{truth, 1, {80}, 4};
  const SequenceDataset data = sample(sim).first;
  CollapsedEstimates est{truth.alpha, truth.beta};
  const FicTerms terms = score_model(truth, est, data, Variant::RFAB);
  CHECK(terms.total == doctest::Approx(terms.expected_loglik + terms.shrinkage_term +
                                       terms.markov_term + terms.entropy +
                                       terms.penalty_terms)
                           .epsilon(1e-12));
  CHECK(terms.entropy >= -1e-9);
}

TEST_CASE("experiment smoke run produces all artifacts") {
  TempDir dir("smoke");
  ExperimentConfig config;
  config.trials = 1;
  config.base_seed = 5;
  config.train_len = 200;
  config.test_len = 200;
  config.init_layers = 3;
  config.init_states = 4;
  config.max_iters = 30;
  config.out_dir = dir.path;
  config.threads = 1;

  const ResultTable table = run_experiment(config);
  REQUIRE(table.rows.size() == 3);
  for (const auto& row : table.rows) {
    CHECK(row.ok);
    // Reported per-trial counts are sorted smallest to largest.
    for (size_t i = 1; i < row.sorted_counts.size(); ++i)
      CHECK(row.sorted_counts[i - 1] <= row.sorted_counts[i]);
  }

  for (const char* name :
       {"table1.csv", "table2.csv", "results.csv", "fig2_states.csv", "fig3_trainll.csv"})
    CHECK(fs::exists(dir.path / name));
  for (const char* variant : {"rfab", "fab", "vb"}) {
    const fs::path vdir = dir.path / "trial_0" / variant;
    CHECK(fs::exists(vdir / "model.json"));
    CHECK(fs::exists(vdir / "trace.csv"));
    CHECK(fs::exists(vdir / "report.json"));
  }
  CHECK(fs::exists(dir.path / "trial_0" / "ground_truth.json"));
}

TEST_CASE("experiment outputs are byte-identical across reruns") {
  TempDir dir_a("det_a"), dir_b("det_b");
  ExperimentConfig config;
  config.trials = 2;
  config.base_seed = 42;
  config.train_len = 150;
  config.test_len = 150;
  config.init_states = 3;
  config.max_iters = 15;
  config.threads = 2;

  config.out_dir = dir_a.path;
  run_experiment(config);
  config.out_dir = dir_b.path;
  run_experiment(config);

  for (const char* name : {"table1.csv", "table2.csv", "results.csv"})
    CHECK(slurp(dir_a.path / name) == slurp(dir_b.path / name));
  CHECK(slurp(dir_a.path / "trial_1" / "rfab" / "trace.csv") ==
        slurp(dir_b.path / "trial_1" / "rfab" / "trace.csv"));
}

TEST_CASE("iterations_to_final_structure finds the stabilization point") {
  FitReport report;
  report.init_layers = 2;
  for (int i = 1; i <= 5; ++i) {
    IterationRecord rec;
    rec.iteration = i;
    rec.live_counts = i < 3 ? std::vector<int>{4, 4} : std::vector<int>{3, 4};
    report.trace.push_back(rec);
  }
  CHECK(iterations_to_final_structure(report) == 3);
}
