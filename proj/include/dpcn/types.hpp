#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dpcn/errors.hpp"

namespace dpcn {

using Real = double;
using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<Real>;
using Vector = VectorX<Real>;

// One timestep of grouped inputs: member -> vector.
using GroupFrame = std::vector<Vector>;
// A sequence of grouped inputs: time -> member -> vector.
using GroupSequence = std::vector<GroupFrame>;

// Sizes of one layer. K states, P observation dims, D causes,
// N group members sharing a cause.
struct LayerDims {
  Index K = 0;
  Index P = 0;
  Index D = 0;
  Index N = 1;
};

// Parameters of one layer. C and B keep unit-norm columns; B is
// nonnegative. Shared by all replicated blocks of the layer.
struct LayerParams {
  Matrix A;  // K x K state transition
  Matrix C;  // P x K observation dictionary
  Matrix B;  // K x D cause-to-sparsity weights
  Index K = 0;
  Index P = 0;
  Index D = 0;
  Index N = 1;

  LayerDims dims() const { return {K, P, D, N}; }
  void validate() const;
};

// Randomly initialised layer: A = identity, C and B Gaussian with
// unit-norm columns, B made nonnegative.
LayerParams new_layer(const LayerDims& dims, std::uint64_t seed);

struct HyperParams {
  Real lambda = 0.5;       // weight of the temporal innovation term
  Real gamma0 = 0.1;       // base sparsity scale
  Real beta = 0.1;         // cause l1 weight
  Real mu = 0.05;          // smoothing knee of the l1 surrogates
  Real eta = 1.5;          // line-search backtracking factor
  Real L0_x = 1.0;         // initial step bound, state updates
  Real L0_u = 1.0;         // initial step bound, cause updates
  int max_iters = 200;     // outer iteration cap for inference
  Real tol = 1e-6;         // relative-change stopping threshold
  Real learn_rate = 0.05;  // gradient step size
  int batch_size = 50;     // tuples per parameter update
  Real param_smooth = 0.9;  // smoothing of parameter updates
  int epochs = 10;          // training passes over the stream

  void validate() const;
};

// Inference result for one block: N state vectors and their causes,
// along with the previous states the inference conditioned on.
struct LayerState {
  std::vector<Vector> x;
  std::vector<Vector> x_prev;
  Vector u;
};

}  // namespace dpcn
