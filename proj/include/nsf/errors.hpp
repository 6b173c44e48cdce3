#ifndef NSF_ERRORS_HPP_
#define NSF_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace nsf {

/// Kernel hyperparameter or likelihood argument outside its domain.
struct ParameterDomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Incompatible matrix or vector dimensions.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Generic bad argument (counts, indices, sizes).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Cholesky factorization failed even at the largest jitter.
struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input is degenerate for the requested statistic (zero variance, empty rows, ...).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Model configuration that is not part of the supported family.
struct UnsupportedModelError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Optimization produced a non-finite objective or gradient.
struct DivergedFitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nsf

#endif  // NSF_ERRORS_HPP_
