#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpcn {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid hyperparameter or argument value.
struct ParameterError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Line search or iteration failed to make progress.
struct DivergenceError : Error {
  using Error::Error;
};

// Operation attempted in an invalid state (e.g. untrained network).
struct StateError : Error {
  using Error::Error;
};

// Index outside its valid range.
struct IndexError : Error {
  using Error::Error;
};

// Patch or block geometry does not fit the frame.
struct GeometryError : Error {
  using Error::Error;
};

// Inconsistent layer wiring.
struct TopologyError : Error {
  using Error::Error;
};

// Metric preconditions violated (e.g. fewer than two classes).
struct MetricError : Error {
  using Error::Error;
};

// File could not be read or written.
struct IoError : Error {
  using Error::Error;
};

// Malformed file content; carries the byte offset of the failure.
struct ParseError : Error {
  std::size_t byte_offset;
  ParseError(const std::string& msg, std::size_t offset)
      : Error(msg + " at byte " + std::to_string(offset)), byte_offset(offset) {}
};

// File has an unsupported format version.
struct VersionError : Error {
  using Error::Error;
};

// Inference failure tagged with where it happened. layer < 0 means
// "not layered"; member < 0 means the cause update rather than a state.
struct InferenceError : Error {
  int layer;
  int member;
  InferenceError(const std::string& msg, int layer_ = -1, int member_ = -1)
      : Error(msg), layer(layer_), member(member_) {}
};

// Training failure tagged with the offending timestep.
struct TrainingError : Error {
  long timestep;
  TrainingError(const std::string& msg, long timestep_ = -1)
      : Error(msg), timestep(timestep_) {}
};

}  // namespace dpcn
