#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "dpcn/types.hpp"

namespace dpcn {

// One inference outcome retained for a parameter update.
struct BatchTuple {
  std::vector<Vector> y;       // member inputs
  std::vector<Vector> x;       // inferred states
  std::vector<Vector> x_prev;  // states the inference conditioned on
  Vector u;                    // inferred causes
};

// Fixed-capacity accumulator of inference tuples.
class BatchBuffer {
 public:
  explicit BatchBuffer(std::size_t capacity);

  void push(BatchTuple t);  // throws StateError when full
  void clear() { tuples_.clear(); }
  bool full() const { return tuples_.size() == capacity_; }
  bool empty() const { return tuples_.empty(); }
  std::size_t size() const { return tuples_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<BatchTuple>& tuples() const { return tuples_; }

 private:
  std::size_t capacity_;
  std::vector<BatchTuple> tuples_;
};

struct ParamGradients {
  Matrix dA;
  Matrix dC;
  Matrix dB;
};

// Mean over the batch of the unified-energy gradients with respect to
// A, C and B, with the l1 terms replaced by their smoothed surrogates.
ParamGradients param_gradients(const BatchBuffer& batch, const LayerParams& params,
                               const HyperParams& hyper);

// Smoothed parameter step followed by the structural projections:
// C columns renormalised, B clamped nonnegative then renormalised.
LayerParams apply_update(const LayerParams& params, const ParamGradients& grads,
                         const HyperParams& hyper);

// Layer-local training loop: infer, buffer, update per batch; epochs
// end early when the relative parameter change falls below 1e-3.
// Each stream chains x_prev through time, starting from zero.
// When log is non-null a tab-separated line is written per batch:
// epoch, batch index, mean unified energy, parameter-change norm.
LayerParams train_layer(const std::vector<GroupSequence>& streams,
                        const LayerDims& dims, const HyperParams& hyper,
                        std::uint64_t seed, std::ostream* log = nullptr);

LayerParams train_layer(const GroupSequence& stream, const LayerDims& dims,
                        const HyperParams& hyper, std::uint64_t seed,
                        std::ostream* log = nullptr);

}  // namespace dpcn
