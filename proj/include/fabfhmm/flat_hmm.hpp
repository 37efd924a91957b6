#pragma once

#include "fabfhmm/model.hpp"

namespace fabfhmm {

/// Dense HMM on the joint state space prod_m K_m, equivalent in law to the
/// factorial model it was expanded from. Joint index j decodes to per-layer
/// states with the last layer varying fastest.
struct FlatHmm {
  VectorXd initial;  // prod of per-layer alpha
  MatrixXd trans;    // Kronecker product of per-layer beta
  MatrixXd means;    // D x joint, column j = bias + sum_m W[m].col(state_m(j))
  VectorXd C;
};

/// Decode a joint state index into per-layer state indices.
std::vector<int> decode_joint_state(const ModelStructure& structure, long joint);

/// Expand a factorial HMM into the equivalent flat HMM. Throws a capacity
/// error when prod_m K_m exceeds the cap.
FlatHmm product_expand(const FhmmParameters& params, long cap = 4096);

/// Scaled forward pass; exact observed-data log-likelihood of one sequence.
double flat_forward_loglik(const FlatHmm& hmm, const MatrixXd& seq);

/// Stationary distribution of a row-stochastic matrix (power iteration).
VectorXd stationary_distribution(const MatrixXd& trans);

}  // namespace fabfhmm
