#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fabfhmm/serialize.hpp"
#include "fabfhmm/simulate.hpp"

using namespace fabfhmm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fabfhmm_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("model JSON round trip is bit exact") {
  TempDir dir;
  const FhmmParameters truth = benchmark_ground_truth(31);
  save_model(truth, dir.path / "model.json");
  const FhmmParameters loaded = load_model(dir.path / "model.json");

  CHECK(loaded.structure == truth.structure);
  for (int m = 0; m < truth.structure.M; ++m) {
    CHECK(loaded.alpha[m] == truth.alpha[m]);
    CHECK(loaded.beta[m] == truth.beta[m]);
    CHECK(loaded.W[m] == truth.W[m]);
  }
  CHECK(loaded.C == truth.C);
  CHECK(loaded.bias == truth.bias);
  for (int d = 0; d < 3; ++d) CHECK(loaded.C[d] == 0.4);
}

TEST_CASE("model JSON reports missing fields by name") {
  const FhmmParameters truth = benchmark_ground_truth(1);
  std::string text = model_to_json(truth);
  const auto pos = text.find("\"beta\"");
  REQUIRE(pos != std::string::npos);
  std::string broken = text;
  broken.replace(pos, 6, "\"beat\"");
  CHECK_THROWS_WITH_AS(model_from_json(broken), doctest::Contains("beta"), ParseError);
  CHECK_THROWS_AS(model_from_json("{not json"), ParseError);
}

TEST_CASE("model JSON rejects invalid parameter values") {
  FhmmParameters bad = benchmark_ground_truth(2);
  bad.C[0] = -0.5;
  CHECK_THROWS_AS(model_from_json(model_to_json(bad)), ParseError);
}

TEST_CASE("dataset round trip preserves values bit exactly") {
  TempDir dir;
  const FhmmParameters truth = benchmark_ground_truth(5);
  SimulationConfig sim{truth, 2, {40, 25}, 3};
  const SequenceDataset data = sample(sim).first;
  save_dataset(data, dir.path, "train");
  const SequenceDataset loaded = load_dataset(dir.path / "train_manifest.json");
  REQUIRE(loaded.num_sequences() == 2);
  for (int n = 0; n < 2; ++n) CHECK(loaded.sequences[n] == data.sequences[n]);
}

TEST_CASE("dataset csv has the documented header") {
  TempDir dir;
  const FhmmParameters truth = benchmark_ground_truth(5);
  SimulationConfig sim{truth, 1, {5}, 3};
  save_dataset(sample(sim).first, dir.path, "x");
  std::ifstream in(dir.path / "x_seq0.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x1,x2,x3");
}

TEST_CASE("trace csv carries the objective breakdown and state counts") {
  TempDir dir;
  const FhmmParameters truth = benchmark_ground_truth(7);
  SimulationConfig sim{truth, 1, {200}, 3};
  const SequenceDataset data = sample(sim).first;
  ModelStructure init{3, {4, 4, 4}, 3};
  FitConfig config;
  config.max_iters = 10;
  config.seed = 1;
  const FitReport report = fit(data, init, config);
  write_trace_csv(report, dir.path / "trace.csv");

  std::ifstream in(dir.path / "trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "iter,G,expected_loglik,shrinkage,markov,entropy,penalty,K_1,K_2,K_3,"
        "pruned_this_iter");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == report.iterations_run);
}
