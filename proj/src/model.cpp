#include "fabfhmm/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fabfhmm {

namespace {
constexpr double kProbTol = 1e-12;
}

int ModelStructure::total_states() const {
  int total = 0;
  for (int k : K) total += k;
  return total;
}

long ModelStructure::joint_states() const {
  long total = 1;
  for (int k : K) total *= k;
  return total;
}

long SequenceDataset::total_length() const {
  long total = 0;
  for (const auto& seq : sequences) total += seq.cols();
  return total;
}

FhmmParameters uniform_parameters(const ModelStructure& structure) {
  FhmmParameters params;
  params.structure = structure;
  for (int m = 0; m < structure.M; ++m) {
    const int k = structure.K[m];
    params.alpha.push_back(VectorXd::Constant(k, 1.0 / k));
    params.beta.push_back(MatrixXd::Constant(k, k, 1.0 / k));
    params.W.push_back(MatrixXd::Zero(structure.D, k));
  }
  params.C = VectorXd::Ones(structure.D);
  params.bias = VectorXd::Zero(structure.D);
  return params;
}

VectorXd mean_vector(const FhmmParameters& params, const std::vector<int>& z_t) {
  const auto& s = params.structure;
  if (static_cast<int>(z_t.size()) != s.M)
    throw std::invalid_argument("mean_vector: layer count mismatch");
  VectorXd mu = params.bias;
  for (int m = 0; m < s.M; ++m) {
    if (z_t[m] < 0 || z_t[m] >= s.K[m])
      throw std::invalid_argument("mean_vector: state index out of range");
    mu += params.W[m].col(z_t[m]);
  }
  return mu;
}

double log_emission(const FhmmParameters& params, const VectorXd& x_t,
                    const std::vector<int>& z_t) {
  const int d = params.structure.D;
  if (x_t.size() != d) throw std::invalid_argument("log_emission: dimension mismatch");
  if ((params.C.array() <= 0.0).any())
    throw std::invalid_argument("log_emission: covariance entries must be positive");
  const VectorXd mu = mean_vector(params, z_t);
  const VectorXd r = x_t - mu;
  double quad = (r.array().square() / params.C.array()).sum();
  double logdet = params.C.array().log().sum();
  return -0.5 * (d * std::log(2.0 * M_PI) + logdet + quad);
}

double complete_log_likelihood(const FhmmParameters& params, const SequenceDataset& data,
                               const LatentAssignment& z) {
  const auto& s = params.structure;
  if (static_cast<int>(z.states.size()) != data.num_sequences())
    throw std::invalid_argument("complete_log_likelihood: sequence count mismatch");

  double total = 0.0;
  std::vector<int> z_t(s.M);
  for (int n = 0; n < data.num_sequences(); ++n) {
    const auto& seq = data.sequences[n];
    const auto& zn = z.states[n];
    if (static_cast<int>(zn.size()) != s.M)
      throw std::invalid_argument("complete_log_likelihood: layer count mismatch");
    const int T = static_cast<int>(seq.cols());
    for (int m = 0; m < s.M; ++m) {
      if (static_cast<int>(zn[m].size()) != T)
        throw std::invalid_argument("complete_log_likelihood: length mismatch");
      total += std::log(params.alpha[m][zn[m][0]]);
      for (int t = 1; t < T; ++t)
        total += std::log(params.beta[m](zn[m][t - 1], zn[m][t]));
    }
    for (int t = 0; t < T; ++t) {
      for (int m = 0; m < s.M; ++m) z_t[m] = zn[m][t];
      total += log_emission(params, seq.col(t), z_t);
    }
  }
  return total;  // log(0) transitions legitimately yield -inf
}

std::vector<std::string> validate(const FhmmParameters& params) {
  std::vector<std::string> violations;
  const auto& s = params.structure;
  auto complain = [&](const std::string& msg) { violations.push_back(msg); };

  if (s.M < 1) complain("structure: M must be >= 1");
  if (s.D < 1) complain("structure: D must be >= 1");
  if (static_cast<int>(s.K.size()) != s.M) complain("structure: K list length != M");
  for (int m = 0; m < static_cast<int>(s.K.size()); ++m)
    if (s.K[m] < 1) complain("structure: K[" + std::to_string(m) + "] must be >= 1");
  if (!violations.empty()) return violations;

  if (static_cast<int>(params.alpha.size()) != s.M ||
      static_cast<int>(params.beta.size()) != s.M ||
      static_cast<int>(params.W.size()) != s.M) {
    complain("parameters: per-layer containers must have M entries");
    return violations;
  }
  for (int m = 0; m < s.M; ++m) {
    const int k = s.K[m];
    if (params.alpha[m].size() != k)
      complain("alpha[" + std::to_string(m) + "]: wrong length");
    else {
      if ((params.alpha[m].array() < 0).any())
        complain("alpha[" + std::to_string(m) + "]: negative entry");
      if (std::abs(params.alpha[m].sum() - 1.0) > kProbTol)
        complain("alpha[" + std::to_string(m) + "]: does not sum to 1");
    }
    if (params.beta[m].rows() != k || params.beta[m].cols() != k)
      complain("beta[" + std::to_string(m) + "]: wrong shape");
    else {
      for (int j = 0; j < k; ++j) {
        if ((params.beta[m].row(j).array() < 0).any())
          complain("beta[" + std::to_string(m) + "] row " + std::to_string(j) +
                   ": negative entry");
        if (std::abs(params.beta[m].row(j).sum() - 1.0) > kProbTol)
          complain("beta[" + std::to_string(m) + "] row " + std::to_string(j) +
                   ": does not sum to 1");
      }
    }
    if (params.W[m].rows() != s.D || params.W[m].cols() != k)
      complain("W[" + std::to_string(m) + "]: wrong shape");
  }
  if (params.C.size() != s.D)
    complain("C: wrong length");
  else
    for (int d = 0; d < s.D; ++d)
      if (!(params.C[d] > 0.0)) complain("C[" + std::to_string(d) + "]: must be positive");
  if (params.bias.size() != s.D) complain("bias: wrong length");
  return violations;
}

void require_valid(const FhmmParameters& params) {
  const auto violations = validate(params);
  if (!violations.empty())
    throw std::invalid_argument("invalid parameters: " + violations.front());
}

}  // namespace fabfhmm
