#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpcn/types.hpp"

namespace dpcn {

struct SimSpec {
  Index K = 100;              // state dimension
  Index active = 10;          // nonzero components
  Index P = 100;              // observation dimension
  int T = 80;                 // sequence length
  Real obs_noise_var = 0.01;  // observation noise variance
  Real switch_mean = 2.0;     // Poisson mean of support switches per step
  std::uint64_t seed = 0;

  void validate() const;
};

// transitions[t] is the permutation that maps x_{t-1} to x_t
// (transitions[0] is identity). observation_matrix is the known fixed
// P x K map: a diagonal scaling, composed with a column-normalised
// Gaussian projection when P < K.
struct SimData {
  Matrix states;        // K x T
  Matrix observations;  // P x T
  std::vector<Matrix> transitions;
  Matrix observation_matrix;
};

SimData simulate_sparse_dynamics(const SimSpec& spec);

// Relative error ||x_est - x_true|| / ||x_true||.
Real rmse(const Vector& x_est, const Vector& x_true);

// Linear-Gaussian filter with known per-step transitions, isotropic
// process noise and observation noise. No sparsity mechanism.
Matrix kalman_baseline(const Matrix& observations,
                       const std::vector<Matrix>& transitions, const Matrix& H,
                       Real process_var, Real obs_var);

// Per-timestep l1-regularised decoding, no temporal term.
Matrix sparse_coding_baseline(const Matrix& observations, const Matrix& H,
                              Real gamma, const HyperParams& hyper);

// Sequential state inference with the true transitions and constant
// sparsity weight hyper.gamma0; temporal weight hyper.lambda.
Matrix dpcn_estimator(const Matrix& observations,
                      const std::vector<Matrix>& transitions, const Matrix& H,
                      const HyperParams& hyper);

// Steady-state rMSE statistics of one method at one observation size.
struct BenchCell {
  std::string method;
  Index P = 0;
  std::vector<Real> run_rmse;  // one steady-state rMSE per run
  Real seconds = 0;            // wall time summed over runs

  Real rmse_mean() const;
  Real rmse_std() const;  // sample standard deviation
};

struct BenchResult {
  std::vector<BenchCell> cells;
  Real kalman_process_var = 0;  // value picked by the grid search

  const BenchCell& cell(const std::string& method, Index P) const;
};

// Runs kalman / sparse_coding / dpcn on shared simulations for every P
// in the grid. All methods of a run see identical data, so per-run
// errors are paired. threads > 1 splits runs across worker threads
// without changing any result.
BenchResult benchmark_state_estimation(const SimSpec& base,
                                       const std::vector<Index>& P_grid, int runs,
                                       const HyperParams& hyper, int threads = 1);

// CSV with header method,P,runs,rmse_mean,rmse_std,seconds. With
// include_timings=false the seconds column is written as 0.000 so the
// file depends only on the master seed.
void write_benchmark_csv(const BenchResult& result, const std::string& path,
                         bool include_timings = true);

struct SeparabilityResult {
  Real accuracy = 0;
  bool degenerate = false;
};

// k-means (k = number of distinct labels, seeded restarts) on the rows
// of `features`, scored by the best label-permutation accuracy.
// All-identical rows return chance level with the degenerate flag set.
SeparabilityResult cluster_separability(const Matrix& features,
                                        const std::vector<std::uint32_t>& labels,
                                        int restarts = 10, std::uint64_t seed = 0);

// One-sided paired t-test: p-value for the alternative mean(a) < mean(b).
Real paired_t_pvalue(const std::vector<Real>& a, const std::vector<Real>& b);

}  // namespace dpcn
