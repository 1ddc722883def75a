#pragma once

#include <stdexcept>

namespace disentangle {

// Invalid configuration, preset, or precondition on user-supplied input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched vector/matrix dimensions.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing values when evaluating a composed event graph.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient; training cannot continue.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal contract, e.g. a backward pass fed a stale cache.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace disentangle
